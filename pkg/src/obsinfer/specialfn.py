"""Special functions and quadrature used by the numeric modules.

``bessel_k`` evaluates the modified Bessel function of the second kind for
real order.  Half-integer orders use the terminating closed form; other
orders use Temme's series for ``x < 2`` and Steed's continued fraction
otherwise, followed by upward recurrence in the order.

``integrate`` wraps QUADPACK (via :func:`scipy.integrate.quad`) behind a
:class:`QuadratureSpec`, adds Fourier-weighted integration on half-lines for
oscillatory integrands with slowly decaying envelopes, and a Gauss-Hermite
scheme for Gaussian-weighted integrands.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _integrate

from .errors import DomainError, QuadratureError

__all__ = [
    "QuadratureSpec",
    "DEFAULT_SPEC",
    "TIGHT_SPEC",
    "bessel_k",
    "radial_generator",
    "integrate",
]

_EPS = 1e-16
_MAX_TERMS = 10_000

# Coefficients of 1/Gamma(z) = sum_k c_k z^k (k = 1..26).
_RGAMMA = (
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
)


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and scheme for one-dimensional integration.

    ``scheme`` is one of ``"adaptive-interval"`` (finite domains),
    ``"half-line-transformed"`` (unbounded domains, split at ``center`` and
    mapped to finite intervals) or ``"hermite-weighted"`` (Gauss-Hermite
    nodes; the integrand must carry its own Gaussian decay).  Infinite
    domains given to ``"adaptive-interval"`` are promoted to
    ``"half-line-transformed"``.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 200
    scheme: str = "adaptive-interval"

    def __post_init__(self):
        if not self.abs_tol > 0 or not self.rel_tol > 0:
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if self.scheme not in ("adaptive-interval", "half-line-transformed", "hermite-weighted"):
            raise DomainError(f"unknown quadrature scheme {self.scheme!r}")

    def halved(self) -> "QuadratureSpec":
        return QuadratureSpec(self.abs_tol / 2, self.rel_tol / 2, self.max_subdivisions * 2, self.scheme)

    def bound(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


DEFAULT_SPEC = QuadratureSpec()
# Used where finite differences of integrals are taken.
TIGHT_SPEC = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-11, max_subdivisions=500)


# ---------------------------------------------------------------------------
# Bessel K
# ---------------------------------------------------------------------------


def _gamma_helpers(mu: float) -> tuple[float, float, float, float]:
    """Return (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)) for |mu| <= 1/2."""
    mu2 = mu * mu
    # 1/Gamma(1+z) = sum_j c_{j+1} z^j; split into even and odd parts in z.
    gam1 = 0.0
    gam2 = 0.0
    p = 1.0
    for j in range(0, len(_RGAMMA) - 1, 2):
        gam2 += _RGAMMA[j] * p
        gam1 -= _RGAMMA[j + 1] * p
        p *= mu2
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return gam1, gam2, gampl, gammi


_LOG_1E250 = 250.0 * math.log(10.0)


def _k_half_integer(n: int, x: float) -> float:
    # K_{n+1/2}(x) = sqrt(pi/(2x)) e^{-x} sum_k (n+k)! / (k! (n-k)! (2x)^k)
    total = 0.0
    for k in range(n + 1):
        total += math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k) * (2.0 * x) ** k)
    return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * total


def _k_temme_steed(nu: float, x: float) -> float:
    log_k = _log_k_temme_steed(nu, x)
    return math.exp(log_k) if log_k < 709.0 else math.inf


def _log_k_temme_steed(nu: float, x: float) -> float:
    # log K_nu(x); the upward recurrence is rescaled so large orders cannot overflow
    nl = int(nu + 0.5)
    xmu = nu - nl
    xmu2 = xmu * xmu
    xi = 1.0 / x
    xi2 = 2.0 * xi
    log_scale = 0.0
    if x < 2.0:
        x2 = 0.5 * x
        pimu = math.pi * xmu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = xmu * d
        fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _gamma_helpers(xmu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, _MAX_TERMS):
            ff = (i * ff + p + q) / (i * i - xmu2)
            c *= d / i
            p /= i - xmu
            q /= i + xmu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        else:  # pragma: no cover - series always converges for x < 2
            raise DomainError("Temme series failed to converge")
        rkmu = total
        rk1 = total1 * xi2
    else:
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = delh = d
        q1 = 0.0
        q2 = 1.0
        a1 = 0.25 - xmu2
        q = c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAX_TERMS):
            a -= 2 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _EPS:
                break
        else:  # pragma: no cover
            raise DomainError("Steed continued fraction failed to converge")
        h = a1 * h
        rkmu = math.sqrt(math.pi / (2.0 * x)) / s
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi
        log_scale -= x
    for i in range(1, nl + 1):
        rkmu, rk1 = rk1, (xmu + i) * xi2 * rk1 + rkmu
        if rk1 > 1e250:
            rkmu /= 1e250
            rk1 /= 1e250
            log_scale += _LOG_1E250
    return math.log(rkmu) + log_scale


def bessel_k(order: float, x: float) -> float:
    """Modified Bessel function of the second kind, ``K_order(x)``.

    Parameters
    ----------
    order : float
        Real order, ``order >= 0`` (``K`` is even in the order, so negative
        orders are folded).
    x : float
        Argument, ``x > 0``.

    Raises
    ------
    DomainError
        For ``x <= 0`` or non-finite input.
    """
    order = float(order)
    x = float(x)
    if not (math.isfinite(order) and math.isfinite(x)):
        raise DomainError("bessel_k requires finite inputs")
    if x <= 0.0:
        raise DomainError("bessel_k requires x > 0")
    order = abs(order)
    twice = 2.0 * order
    if abs(twice - round(twice)) < 1e-14 and int(round(twice)) % 2 == 1:
        return _k_half_integer(int(round(order - 0.5)), x)
    return _k_temme_steed(order, x)


def radial_generator(nu: float, s):
    """Characteristic-function generator of the Student t family.

    ``g_nu(s) = (sqrt(nu s))^{nu/2} K_{nu/2}(sqrt(nu s)) / (2^{nu/2-1} Gamma(nu/2))``
    so that the standard ``t_nu`` characteristic function is ``g_nu(u**2)``.
    ``g_nu(0) = 1`` by continuity.  Accepts scalars or arrays of ``s >= 0``.
    """
    nu = float(nu)
    if not nu > 0 or not math.isfinite(nu):
        raise DomainError("radial_generator requires nu > 0")
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("radial_generator requires finite s >= 0")
    half = 0.5 * nu
    log_norm = (half - 1.0) * math.log(2.0) + math.lgamma(half)

    def one(si: float) -> float:
        if si == 0.0:
            return 1.0
        z = math.sqrt(nu * si)
        return math.exp(half * math.log(z) + _log_k_temme_steed(half, z) - log_norm)

    if arr.ndim == 0:
        return one(float(arr))
    return np.array([one(float(v)) for v in arr.ravel()]).reshape(arr.shape)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def _quad(f, a, b, spec: QuadratureSpec, **kw) -> tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _integrate.IntegrationWarning)
        value, err = _integrate.quad(
            f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=spec.max_subdivisions, **kw
        )
    return float(value), float(err)


def _hermite(f, center: float, scale: float, spec: QuadratureSpec) -> tuple[float, float]:
    # Integrates f over the real line with nodes x = center + sqrt(2) scale t.
    prev = None
    order = 16
    while order <= 4096:
        t, w = np.polynomial.hermite.hermgauss(order)
        x = center + math.sqrt(2.0) * scale * t
        vals = np.asarray([f(xi) for xi in x], dtype=float) * np.exp(t * t)
        value = math.sqrt(2.0) * scale * float(np.dot(w, vals))
        if prev is not None:
            err = abs(value - prev)
            if err <= spec.bound(value):
                return value, err
        prev = value
        order *= 2
    raise QuadratureError("Gauss-Hermite did not converge", prev, float("inf"))


def _fourier_halfline(f, a: float, omega: float, kind: str, spec) -> tuple[float, float]:
    """int_a^inf f(x) trig(omega x) dx by QUADPACK QAWF (finite a) ."""
    return _quad(f, a, np.inf, spec, weight=kind, wvar=omega)


def _integrate_oscillatory(f, lo, hi, kind, omega, shift, spec):
    # integrand f(x) * trig(omega (x - shift)); substitute y = x - shift.
    # Returns (value, error, error budget).
    g = lambda y: f(y + shift)  # noqa: E731
    a, b = lo - shift, hi - shift
    if omega == 0.0:
        if kind == "sin":
            return 0.0, 0.0, spec.abs_tol
        v, e = integrate(g, (a, b), spec)
        return v, e, spec.bound(v)
    if math.isinf(a) and math.isinf(b):
        v1, e1 = _fourier_halfline(g, 0.0, omega, kind, spec)
        v2, e2 = _fourier_halfline(lambda y: g(-y), 0.0, omega, kind, spec)
        sign = -1.0 if kind == "sin" else 1.0
        return v1 + sign * v2, e1 + e2, spec.bound(v1) + spec.bound(v2)
    if math.isinf(b):
        v, e = _fourier_halfline(g, a, omega, kind, spec)
    elif math.isinf(a):
        v, e = _fourier_halfline(lambda y: g(-y), -b, omega, kind, spec)
        v = -v if kind == "sin" else v
    else:
        v, e = _quad(g, a, b, spec, weight=kind, wvar=omega)
    return v, e, spec.bound(v)


def integrate(
    f: Callable[[float], float],
    domain: Sequence[float] = (-np.inf, np.inf),
    spec: QuadratureSpec = DEFAULT_SPEC,
    *,
    center: float = 0.0,
    scale: float = 1.0,
    oscillation: tuple[str, float, float] | None = None,
    points: Sequence[float] | None = None,
) -> tuple[float, float]:
    """Integrate ``f`` over ``domain`` and return ``(value, error_bound)``.

    Parameters
    ----------
    f : callable
        Real-valued integrand of one real variable.
    domain : (lo, hi)
        Limits; either may be infinite.
    spec : QuadratureSpec
        Tolerances and scheme.
    center, scale : float
        Split point for unbounded domains, and node placement for the
        Gauss-Hermite scheme.
    oscillation : ("sin" | "cos", omega, shift), optional
        When given, the integrand is ``f(x) * trig(omega * (x - shift))``
        and Fourier-weighted rules are used, which handle slowly decaying
        envelopes that defeat the plain adaptive rule.
    points : sequence of float, optional
        Interior breakpoints (also honoured on unbounded domains).

    Raises
    ------
    QuadratureError
        If the reported error exceeds the summed per-piece tolerances
        ``max(abs_tol, rel_tol * |piece|)``; the exception carries the best
        estimate and its error bound.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if lo > hi:
        v, e = integrate(f, (hi, lo), spec, center=center, scale=scale, oscillation=oscillation, points=points)
        return -v, e
    if lo == hi:
        return 0.0, 0.0
    if oscillation is not None:
        kind, omega, shift = oscillation
        if kind not in ("sin", "cos"):
            raise DomainError("oscillation kind must be 'sin' or 'cos'")
        value, err, budget = _integrate_oscillatory(f, lo, hi, kind, float(omega), float(shift), spec)
    elif spec.scheme == "hermite-weighted":
        if not (math.isinf(lo) and math.isinf(hi)):
            raise DomainError("hermite-weighted scheme integrates over the full line")
        value, err = _hermite(f, center, scale, spec)
        budget = spec.bound(value)
    else:
        # Break the domain at the split point and any interior points; each
        # piece is integrated to the spec and contributes its own tolerance
        # to the budget, so cancelling pieces are not held to an absolute
        # tolerance on a near-zero total.
        cuts = sorted({p for p in (points or ()) if lo < p < hi})
        if math.isinf(lo) or math.isinf(hi):
            c = min(max(center, lo), hi)
            if lo < c < hi:
                cuts = sorted(set(cuts) | {c})
        nodes = [lo, *cuts, hi]
        value, err, budget = 0.0, 0.0, 0.0
        for a, b in zip(nodes[:-1], nodes[1:]):
            if a == b:
                continue
            v, e = _quad(f, a, b, spec)
            value += v
            err += e
            budget += spec.bound(v)
    if not math.isfinite(value) or err > max(budget, spec.abs_tol):
        raise QuadratureError(
            f"quadrature did not reach tolerance (error {err:.3g}, value {value:.6g})", value, err
        )
    return value, err
