"""Kernel profiles and the kernel-weighted pairing.

The pairing of a model with a test function ``psi`` under kernel ``phi`` is
``<T_theta, psi phi> = int psi(x) phi(x) f_theta(x) dx``.  Weak moments,
the weak characteristic function and weak cumulants are all pairings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from math import comb
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateError, DomainError, UnsupportedPairingError
from .models import ModelFamily
from .specialfn import DEFAULT_SPEC, QuadratureSpec, integrate

__all__ = [
    "KernelProfile",
    "Exponential",
    "WeakSummary",
    "Cumulants",
    "expect",
    "pairing",
    "weak_moment",
    "weak_cf",
    "weak_cumulants",
    "cumulants_from_moments",
    "weak_summary",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelProfile:
    """Kernel ``phi``: a Gaussian bump with peak 1, or the classical limit ``phi = 1``.

    The classical limit is not a Schwartz function; it is accepted everywhere
    but pairings under it need the corresponding classical moments to exist.
    """

    shape: str = "gaussian"
    sigma_phi: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.shape not in ("gaussian", "classical_limit"):
            raise DomainError(f"unknown kernel shape {self.shape!r}")
        if self.shape == "gaussian" and not self.sigma_phi > 0:
            raise DomainError("gaussian kernel requires sigma_phi > 0")

    @classmethod
    def gaussian(cls, sigma_phi: float, center: float = 0.0) -> "KernelProfile":
        return cls("gaussian", float(sigma_phi), float(center))

    @classmethod
    def classical_limit(cls) -> "KernelProfile":
        return cls("classical_limit", 1.0, 0.0)

    @property
    def is_classical(self) -> bool:
        return self.shape == "classical_limit"

    @property
    def is_schwartz(self) -> bool:
        return not self.is_classical

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_classical:
            return np.ones_like(x)
        z = (x - self.center) / self.sigma_phi
        return np.exp(-0.5 * z * z)

    def label(self) -> str:
        if self.is_classical:
            return "classical_limit"
        return f"gaussian(sigma_phi={self.sigma_phi:g})"


CLASSICAL = KernelProfile.classical_limit()


@dataclass(frozen=True)
class Exponential:
    """The test function ``x -> exp(i u x)``."""

    u: float

    def __call__(self, x):
        return np.exp(1j * self.u * np.asarray(x, dtype=float))


def expect(
    model: ModelFamily,
    theta,
    g: Callable,
    spec: QuadratureSpec = DEFAULT_SPEC,
    *,
    kernel: KernelProfile | None = None,
    oscillation: tuple[str, float, float] | None = None,
    domain: Sequence[float] = (-math.inf, math.inf),
) -> float:
    """``int_domain g(x) phi(x) f_theta(x) [trig(omega (x - shift))] dx`` for a real ``g``."""
    if not model.has_density:
        raise UnsupportedPairingError(f"{model.name} exposes no density")
    theta = np.asarray(theta, dtype=float)
    density = model.density
    if kernel is None or kernel.is_classical:

        def integrand(x):
            return float(g(x)) * float(density(x, theta))

    else:

        def integrand(x):
            return float(g(x)) * float(kernel(x)) * float(density(x, theta))

    points = None
    if kernel is not None and kernel.is_schwartz:
        points = [kernel.center + k * kernel.sigma_phi for k in (-8, -4, 0, 4, 8)]
        # phi underflows beyond 40 kernel widths
        lo = max(domain[0], kernel.center - 40.0 * kernel.sigma_phi)
        hi = min(domain[1], kernel.center + 40.0 * kernel.sigma_phi)
        domain = (lo, hi) if lo < hi else (lo, lo)
    value, _ = integrate(
        integrand, domain, spec, center=model.center(theta), oscillation=oscillation, points=points
    )
    return value


def pairing(
    model: ModelFamily,
    theta,
    psi: Callable,
    kernel: KernelProfile = CLASSICAL,
    spec: QuadratureSpec = DEFAULT_SPEC,
):
    """Weak expectation ``<T_theta, psi phi>``.

    ``psi`` may be real or complex valued.  For ``psi = Exponential(u)`` with
    the classical-limit kernel the model's characteristic function is used
    directly; otherwise the density route by quadrature.  Non-exponential
    test functions under the classical limit need their integrals to
    converge absolutely.
    """
    theta = model.check_theta(theta)
    if isinstance(psi, Exponential):
        if kernel.is_classical:
            return complex(model.cf(psi.u, theta))
        if not model.has_density:
            raise UnsupportedPairingError(f"{model.name}: no density and kernel is not the classical limit")
        # The kernel supplies Gaussian decay, so plain adaptive quadrature
        # suffices; Fourier-weighted rules lose accuracy for small u.
        u = psi.u
        re = expect(model, theta, lambda x: math.cos(u * x), spec, kernel=kernel)
        im = expect(model, theta, lambda x: math.sin(u * x), spec, kernel=kernel)
        return complex(re, im)
    if not model.has_density:
        raise UnsupportedPairingError(f"{model.name}: pairing needs a density or an exponential test function")
    probe = psi(model.center(theta))
    if np.iscomplexobj(probe):
        re = expect(model, theta, lambda x: np.real(psi(x)), spec, kernel=kernel)
        im = expect(model, theta, lambda x: np.imag(psi(x)), spec, kernel=kernel)
        return complex(re, im)
    return expect(model, theta, psi, spec, kernel=kernel)


def weak_moment(model, theta, n: int, kernel: KernelProfile = CLASSICAL, spec=DEFAULT_SPEC) -> float:
    """``m_n = <T_theta, x^n phi>``."""
    if int(n) != n or n < 0:
        raise DomainError("moment order must be a non-negative integer")
    n = int(n)
    if n == 0:
        return float(pairing(model, theta, lambda x: 1.0, kernel, spec))
    return float(pairing(model, theta, lambda x: x**n, kernel, spec))


def weak_cf(model, theta, t: float, kernel: KernelProfile = CLASSICAL, spec=DEFAULT_SPEC) -> complex:
    """``<T_theta, exp(i t .) phi>``."""
    if float(t) == 0.0:
        return complex(weak_moment(model, theta, 0, kernel, spec))
    return pairing(model, theta, Exponential(float(t)), kernel, spec)


class Cumulants(NamedTuple):
    values: np.ndarray
    imag_residue: float


def cumulants_from_moments(moments: Sequence[float]) -> np.ndarray:
    """Cumulants ``kappa_1..kappa_N`` of the normalised law from raw moments ``m_0..m_N``."""
    m = np.asarray(moments, dtype=float)
    if m[0] == 0:
        raise DegenerateError("zeroth moment vanishes")
    mu = m / m[0]
    n_max = len(m) - 1
    kappa = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        kappa[n] = mu[n] - sum(comb(n - 1, k - 1) * kappa[k] * mu[n - k] for k in range(1, n))
    return kappa[1:]


def _fd_derivative(fun, order: int, h: float) -> complex:
    if order == 1:
        return (fun(h) - fun(-h)) / (2 * h)
    if order == 2:
        return (fun(h) - 2 * fun(0.0) + fun(-h)) / h**2
    if order == 3:
        return (fun(2 * h) - 2 * fun(h) + 2 * fun(-h) - fun(-2 * h)) / (2 * h**3)
    return (fun(2 * h) - 4 * fun(h) + 6 * fun(0.0) - 4 * fun(-h) + fun(-2 * h)) / h**4


def weak_cumulants(
    model,
    theta,
    max_order: int = 2,
    kernel: KernelProfile = CLASSICAL,
    spec: QuadratureSpec = DEFAULT_SPEC,
    step: float = 1e-3,
) -> Cumulants:
    """Weak cumulants by central differences of ``t -> log weak_cf(t)`` at zero.

    Order ``n`` uses step ``step * 10**((n - 1) / 2)`` and one Richardson
    extrapolation (steps ``h`` and ``h/2``).  The imaginary parts, which
    vanish in exact arithmetic, are discarded; their largest magnitude is
    returned as ``imag_residue`` and logged when it exceeds 1e-6.
    """
    if not 1 <= max_order <= 4:
        raise DomainError("max_order must be between 1 and 4")
    theta = model.check_theta(theta)
    cf0 = weak_cf(model, theta, 0.0, kernel, spec)
    if abs(cf0) < 1e-12:
        raise DegenerateError("weak characteristic function vanishes at the origin")
    cache: dict[float, complex] = {}

    def log_cf(t: float) -> complex:
        if t not in cache:
            cache[t] = np.log(weak_cf(model, theta, t, kernel, spec))
        return cache[t]

    values = np.zeros(max_order)
    residue = 0.0
    for n in range(1, max_order + 1):
        h = step * 10 ** ((n - 1) / 2)
        coarse = _fd_derivative(log_cf, n, h)
        fine = _fd_derivative(log_cf, n, h / 2)
        deriv = (4 * fine - coarse) / 3
        kappa = deriv / (1j**n)
        values[n - 1] = kappa.real
        residue = max(residue, abs(kappa.imag))
    if residue > 1e-6:
        log.warning("weak cumulants: discarded imaginary residue %.3g", residue)
    return Cumulants(values, residue)


@dataclass(frozen=True)
class WeakSummary:
    moments: tuple
    cf_grid: tuple
    cumulants: tuple


def weak_summary(
    model,
    theta,
    kernel: KernelProfile,
    max_moment: int = 4,
    t_grid: Sequence[float] = (0.0, 0.5, 1.0, 2.0),
    max_cumulant: int = 2,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> WeakSummary:
    moments = tuple(weak_moment(model, theta, n, kernel, spec) for n in range(max_moment + 1))
    if moments[0] <= 0:
        raise DegenerateError("zeroth weak moment must be positive")
    grid = tuple((float(t), weak_cf(model, theta, t, kernel, spec)) for t in t_grid)
    cum = weak_cumulants(model, theta, max_cumulant, kernel, spec).values
    return WeakSummary(moments, grid, tuple(cum))
