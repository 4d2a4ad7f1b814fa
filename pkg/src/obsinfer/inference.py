"""Inference functionals ``Psi(y, theta)`` and their population moments.

A functional is evaluated on a batch of observations: ``eval(y, theta)``
returns an ``(n, q)`` array and ``d_theta(y, theta)`` an ``(n, q, p)``
array.  Observations are floats for point and kernel-weighted data, bin
indices for interval data and ``(n, d)`` arrays for multivariate data.

:func:`population_moments` computes ``E[Psi]``, ``S = -E[d Psi]`` and
``V = E[Psi Psi^T]`` under the pushforward law of an observation operator,
by quadrature where a density is available, by exact summation over bins
for interval data, and by Monte Carlo otherwise.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, UnsupportedPairingError, VariantMismatchError
from .kernels import CLASSICAL, Exponential, KernelProfile, expect, pairing, weak_moment
from .models import ModelFamily
from .observation import (
    BinGrid,
    ObservationOperator,
    bin_probabilities,
    observe_many,
    sample_pushforward,
)
from .specialfn import DEFAULT_SPEC, TIGHT_SPEC, QuadratureSpec, integrate

__all__ = [
    "InferenceFunctional",
    "PopulationMoments",
    "RegularityReport",
    "sinusoidal",
    "weak_moment_if",
    "weak_cf_if",
    "score_if",
    "interval_sinusoidal",
    "interval_score_if",
    "pushforward_score_if",
    "stack",
    "recenter",
    "population_moments",
    "regularity_report",
]

POINT = ObservationOperator.point()
_FD_REL = 1e-5
_EMPTY_BIN = 1e-12


def _fd_steps(theta: np.ndarray, rel: float = _FD_REL) -> np.ndarray:
    return rel * (1.0 + np.abs(theta))


class _ThetaCache:
    """Small LRU keyed by the exact parameter vector."""

    def __init__(self, size: int = 64):
        self.size = size
        self.data: OrderedDict = OrderedDict()

    def get(self, theta, compute):
        key = tuple(float(t) for t in np.atleast_1d(theta))
        if key in self.data:
            self.data.move_to_end(key)
            return self.data[key]
        value = compute(np.asarray(key))
        self.data[key] = value
        if len(self.data) > self.size:
            self.data.popitem(last=False)
        return value


@dataclass(frozen=True, eq=False)
class InferenceFunctional:
    """An estimating function with derivative access and regularity metadata.

    Attributes
    ----------
    name : str
    fn : callable ``(y, theta) -> (n, q)``
    output_dim, param_dim : int
    d_theta_fn : callable ``(y, theta) -> (n, q, p)``, optional
        Analytic parameter derivative; central differences with step
        ``1e-5 (1 + |theta_j|)`` are used when absent.
    bounded : bool
    lipschitz_const : float, optional
        Global Lipschitz constant in ``theta``.
    requires : str
        Observation variant the functional consumes.
    trig : tuple, optional
        ``(c, index)`` when ``Psi = sin(c (x - theta[index]))``; enables
        Fourier-weighted quadrature of population moments.
    """

    name: str
    fn: Callable
    output_dim: int
    param_dim: int
    d_theta_fn: Optional[Callable] = None
    bounded: bool = False
    lipschitz_const: Optional[float] = None
    requires: str = "point"
    trig: Optional[tuple] = None
    info: dict = field(default_factory=dict)

    def _prep(self, y, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.param_dim,):
            raise DomainError(f"{self.name}: expected {self.param_dim} parameters, got {theta.shape}")
        y = np.asarray(y)
        if y.ndim == 0:
            y = y.reshape(1)
        return y, theta

    def eval(self, y, theta) -> np.ndarray:
        y, theta = self._prep(y, theta)
        out = np.asarray(self.fn(y, theta), dtype=float)
        return out.reshape(y.shape[0], self.output_dim)

    __call__ = eval

    def d_theta(self, y, theta) -> np.ndarray:
        y, theta = self._prep(y, theta)
        if self.d_theta_fn is not None:
            out = np.asarray(self.d_theta_fn(y, theta), dtype=float)
            return out.reshape(y.shape[0], self.output_dim, self.param_dim)
        steps = _fd_steps(theta)
        cols = []
        for j in range(self.param_dim):
            e = np.zeros(self.param_dim)
            e[j] = steps[j]
            cols.append((self.eval(y, theta + e) - self.eval(y, theta - e)) / (2.0 * steps[j]))
        return np.stack(cols, axis=-1)

    def mean(self, y, theta) -> np.ndarray:
        return self.eval(y, theta).mean(axis=0)


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def sinusoidal(c: float, param_dim: int = 1, index: int = 0) -> InferenceFunctional:
    """``psi_c(x, theta) = sin(c (x - theta[index]))`` for point observations.

    ``param_dim > 1`` embeds the location equation in a larger parameter
    (for instance location-scale), with zero derivative in the other
    coordinates.
    """
    c = float(c)
    if not c > 0:
        raise DomainError("c must be positive")
    if not 0 <= index < param_dim:
        raise DomainError("index out of range")

    def fn(y, theta):
        return np.sin(c * (np.asarray(y, dtype=float) - theta[index]))[:, None]

    def d_theta(y, theta):
        out = np.zeros((y.shape[0], 1, param_dim))
        out[:, 0, index] = -c * np.cos(c * (np.asarray(y, dtype=float) - theta[index]))
        return out

    return InferenceFunctional(
        name=f"sinusoidal(c={c:g})",
        fn=fn,
        output_dim=1,
        param_dim=param_dim,
        d_theta_fn=d_theta,
        bounded=True,
        lipschitz_const=c,
        requires="point",
        trig=(c, index),
        info={"c": c},
    )


def _centering_gradient(center: Callable, theta: np.ndarray, rel: float) -> np.ndarray:
    # Central differences of a vector-valued centering term; returns (q, p).
    steps = _fd_steps(theta, rel)
    cols = []
    for j in range(theta.size):
        e = np.zeros(theta.size)
        e[j] = steps[j]
        cols.append((np.asarray(center(theta + e)) - np.asarray(center(theta - e))) / (2.0 * steps[j]))
    return np.stack(cols, axis=-1)


def weak_moment_if(
    k: int, kernel: KernelProfile, model: ModelFamily, spec: QuadratureSpec = TIGHT_SPEC
) -> InferenceFunctional:
    """``psi_k(x, theta) = x^k phi(x) - m_k(theta)`` with ``m_k = <T_theta, x^k phi>``.

    Consumes raw draws; the kernel enters through the functional, so the
    population mean under ``P_theta`` is zero by construction.
    """
    if int(k) != k or k < 1:
        raise DomainError("moment order must be a positive integer")
    k = int(k)
    p = model.param_dim
    centers = _ThetaCache()
    grads = _ThetaCache()

    def m(theta):
        return centers.get(theta, lambda t: np.array([weak_moment(model, t, k, kernel, spec)]))

    def fn(y, theta):
        x = np.asarray(y, dtype=float)
        return (x**k * kernel(x))[:, None] - m(theta)[None, :]

    def d_theta(y, theta):
        g = grads.get(theta, lambda t: _centering_gradient(m, t, 1e-4))
        return np.broadcast_to(-g, (y.shape[0], 1, p)).copy()

    return InferenceFunctional(
        name=f"weak_moment(k={k},{kernel.label()})",
        fn=fn,
        output_dim=1,
        param_dim=p,
        d_theta_fn=d_theta,
        bounded=kernel.is_schwartz,
        requires="point",
        info={"k": k, "kernel": kernel},
    )


def weak_cf_if(u, kernel: KernelProfile, model: ModelFamily, spec: QuadratureSpec = TIGHT_SPEC) -> InferenceFunctional:
    """Real and imaginary parts of ``exp(i u.x) phi(x) - <T_theta, exp(i u.) phi>``.

    ``u`` is a scalar for univariate data or a length-``d`` vector for
    ``d``-variate data (classical-limit kernel only).
    """
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    multivariate = model.data_dim > 1
    if multivariate:
        if u_arr.shape != (model.data_dim,):
            raise DomainError(f"frequency must have length {model.data_dim}")
        if not kernel.is_classical:
            raise UnsupportedPairingError("multivariate weak CF supports the classical-limit kernel only")
    elif u_arr.size != 1:
        raise DomainError("univariate model needs a scalar frequency")
    if np.all(u_arr == 0.0):
        raise DomainError("frequency must be non-zero")
    p = model.param_dim
    uval = u_arr if multivariate else float(u_arr[0])
    centers = _ThetaCache()
    grads = _ThetaCache()

    def compute_center(theta):
        if kernel.is_classical:
            z = complex(np.asarray(model.cf(uval, theta)))
        else:
            z = complex(pairing(model, theta, Exponential(uval), kernel, spec))
        return np.array([z.real, z.imag])

    def m(theta):
        return centers.get(theta, compute_center)

    def fn(y, theta):
        y = np.asarray(y, dtype=float)
        arg = y @ u_arr if multivariate else uval * y
        w = np.ones(arg.shape) if kernel.is_classical else kernel(y)
        out = np.stack([np.cos(arg) * w, np.sin(arg) * w], axis=-1)
        return out - m(theta)[None, :]

    def d_theta(y, theta):
        rel = 1e-6 if kernel.is_classical else 1e-4
        g = grads.get(theta, lambda t: _centering_gradient(m, t, rel))
        return np.broadcast_to(-g, (y.shape[0], 2, p)).copy()

    label = np.array2string(u_arr, separator=",") if multivariate else f"{uval:g}"
    return InferenceFunctional(
        name=f"weak_cf(u={label},{kernel.label()})",
        fn=fn,
        output_dim=2,
        param_dim=p,
        d_theta_fn=d_theta,
        bounded=True,
        requires="point",
        info={"u": uval, "kernel": kernel},
    )


def score_if(model: ModelFamily) -> InferenceFunctional:
    """The model score ``d/dtheta log f_theta(x)``."""
    if not model.has_score:
        raise UnsupportedPairingError(f"{model.name} exposes no score")
    p = model.param_dim

    def fn(y, theta):
        return np.asarray(model.score(np.asarray(y, dtype=float), theta)).reshape(-1, p)

    return InferenceFunctional(
        name=f"score({model.name})", fn=fn, output_dim=p, param_dim=p, requires="point", info={"model": model}
    )


def _bin_integral(f: Callable, lo: float, hi: float, spec, *, center: float, oscillation=None) -> float:
    if oscillation is not None and not (math.isinf(lo) or math.isinf(hi)):
        # finite bins are short enough for the plain adaptive rule
        kind, omega, shift = oscillation
        trig = math.sin if kind == "sin" else math.cos
        return integrate(lambda x: f(x) * trig(omega * (x - shift)), (lo, hi), spec)[0]
    return integrate(f, (lo, hi), spec, center=center, oscillation=oscillation)[0]


def interval_sinusoidal(
    c: float,
    model: ModelFamily,
    grid: BinGrid,
    form: str = "conditional",
    kernel: KernelProfile = CLASSICAL,
    spec: QuadratureSpec = TIGHT_SPEC,
) -> InferenceFunctional:
    """Sinusoidal location functional for bin-index observations.

    ``form="conditional"`` gives ``E_mu[sin(c (X - mu)) | X in b]``, which
    has mean zero under the bin law at the true ``mu`` for symmetric
    families.  ``form="kernel_weighted"`` gives the unnormalised
    ``int_b sin(c (x - mu)) f_mu(x) phi(x) dx``.  Bin tables are cached per
    parameter value.
    """
    c = float(c)
    if not c > 0:
        raise DomainError("c must be positive")
    if form not in ("conditional", "kernel_weighted"):
        raise DomainError(f"unknown form {form!r}")
    if not model.has_density:
        raise UnsupportedPairingError(f"{model.name} exposes no density")
    bounds = grid.all_bounds()
    tables = _ThetaCache()

    def table(theta):
        mu = theta[0]
        if form == "kernel_weighted" and kernel.is_schwartz:

            def f(x):
                return float(model.density(x, theta)) * float(kernel(x))

        else:

            def f(x):
                return float(model.density(x, theta))

        num = np.array(
            [_bin_integral(f, lo, hi, spec, center=mu, oscillation=("sin", c, mu)) for lo, hi in bounds]
        )
        if form == "kernel_weighted":
            return num
        probs = bin_probabilities(model, theta, grid, spec)
        # empty bins are marked and only rejected when observed
        return np.where(probs >= _EMPTY_BIN, num / np.maximum(probs, _EMPTY_BIN), np.nan)

    def fn(y, theta):
        idx = np.asarray(y).astype(int)
        out = tables.get(theta, table)[idx]
        if np.any(np.isnan(out)):
            bad = int(idx[np.isnan(out)][0])
            raise DomainError(f"bin {bad} has probability below {_EMPTY_BIN:g} at theta={theta}")
        return out[:, None]

    return InferenceFunctional(
        name=f"interval_sinusoidal(c={c:g},{form})",
        fn=fn,
        output_dim=1,
        param_dim=model.param_dim,
        bounded=True,
        requires="interval",
        info={"c": c, "form": form, "grid": grid, "kernel": kernel},
    )


def _bin_prob_gradient(model: ModelFamily, theta: np.ndarray, grid: BinGrid, spec) -> np.ndarray:
    """``d p_b / d theta`` for all bins, shape ``(n_bins, p)``."""
    if model.cdf is not None:
        steps = _fd_steps(theta)
        cols = []
        for j in range(theta.size):
            e = np.zeros(theta.size)
            e[j] = steps[j]
            hi = bin_probabilities(model, theta + e, grid)
            lo = bin_probabilities(model, theta - e, grid)
            cols.append((hi - lo) / (2.0 * steps[j]))
        return np.stack(cols, axis=-1)
    if not model.has_score:
        raise UnsupportedPairingError(f"{model.name} needs a distribution function or a score")
    out = np.zeros((grid.n_bins, theta.size))
    for b, (lo, hi) in enumerate(grid.all_bounds()):
        for j in range(theta.size):
            out[b, j] = integrate(
                lambda x: float(model.score(np.array([x]), theta)[0, j]) * float(model.density(x, theta)),
                (lo, hi),
                spec,
                center=model.center(theta),
            )[0]
    return out


def interval_score_if(model: ModelFamily, grid: BinGrid, spec: QuadratureSpec = TIGHT_SPEC) -> InferenceFunctional:
    """Score of the bin-index pushforward model, ``(d p_b / d theta) / p_b``."""
    tables = _ThetaCache()

    def table(theta):
        probs = bin_probabilities(model, theta, grid, spec)
        grad = _bin_prob_gradient(model, theta, grid, spec)
        out = grad / np.maximum(probs, _EMPTY_BIN)[:, None]
        out[probs < _EMPTY_BIN] = np.nan
        return out

    def fn(y, theta):
        idx = np.asarray(y).astype(int)
        out = tables.get(theta, table)[idx]
        if np.any(np.isnan(out)):
            raise DomainError(f"observed bin has probability below {_EMPTY_BIN:g} at theta={theta}")
        return out

    return InferenceFunctional(
        name=f"interval_score({model.name})",
        fn=fn,
        output_dim=model.param_dim,
        param_dim=model.param_dim,
        requires="interval",
        info={"grid": grid},
    )


def stack(psis: Sequence[InferenceFunctional]) -> InferenceFunctional:
    """Concatenate the outputs of several functionals sharing a parameter."""
    psis = list(psis)
    if not psis:
        raise DomainError("nothing to stack")
    p = psis[0].param_dim
    req = psis[0].requires
    if any(ps.param_dim != p for ps in psis) or any(ps.requires != req for ps in psis):
        raise VariantMismatchError("stacked functionals must share parameter dimension and observation variant")

    def fn(y, theta):
        return np.concatenate([ps.eval(y, theta) for ps in psis], axis=1)

    def d_theta(y, theta):
        return np.concatenate([ps.d_theta(y, theta) for ps in psis], axis=1)

    return InferenceFunctional(
        name="stack[" + ",".join(ps.name for ps in psis) + "]",
        fn=fn,
        output_dim=sum(ps.output_dim for ps in psis),
        param_dim=p,
        d_theta_fn=d_theta,
        bounded=all(ps.bounded for ps in psis),
        requires=req,
        info={"parts": psis},
    )


# ---------------------------------------------------------------------------
# Population moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopulationMoments:
    """``mean = E[Psi]``, ``S = -E[d Psi]`` and ``V = E[Psi Psi^T]`` at one point."""

    mean: np.ndarray
    S: np.ndarray
    V: np.ndarray
    route: str


def _kernel_window(kernel: KernelProfile) -> tuple[float, float]:
    # phi < exp(-800) outside, below double-precision underflow
    return kernel.center - 40.0 * kernel.sigma_phi, kernel.center + 40.0 * kernel.sigma_phi


def _pushforward_weight(model: ModelFamily, op: ObservationOperator, theta0, spec):
    """Density of the observation under ``theta0`` (point or kernel-weighted)."""
    if op.variant == "point" or op.kernel.is_classical:
        return lambda x: float(model.density(x, theta0))
    kernel = op.kernel
    c = expect(model, theta0, lambda x: 1.0, spec, kernel=kernel)
    return lambda x: float(model.density(x, theta0)) * float(kernel(x)) / c


def _trig_moments(psi, model, theta0, theta, spec) -> PopulationMoments:
    c, idx = psi.trig
    shift = float(theta[idx])
    f = lambda x: float(model.density(x, theta0))  # noqa: E731
    center = model.center(theta0)
    e_sin = integrate(f, spec=spec, center=center, oscillation=("sin", c, shift))[0]
    e_cos = integrate(f, spec=spec, center=center, oscillation=("cos", c, shift))[0]
    e_cos2 = integrate(f, spec=spec, center=center, oscillation=("cos", 2.0 * c, shift))[0]
    S = np.zeros((1, psi.param_dim))
    S[0, idx] = c * e_cos
    return PopulationMoments(np.array([e_sin]), S, np.array([[0.5 * (1.0 - e_cos2)]]), "oscillatory")


def _quadrature_moments(psi, model, op, theta0, theta, spec) -> PopulationMoments:
    weight = _pushforward_weight(model, op, theta0, spec)
    q, p = psi.output_dim, psi.param_dim
    memo: dict[float, tuple] = {}

    def values(x):
        if x not in memo:
            memo[x] = (psi.eval(np.array([x]), theta)[0], psi.d_theta(np.array([x]), theta)[0], weight(x))
        return memo[x]

    mid, s = model.center(theta0), model.scale(theta0)
    points = [mid + j * s for j in (-50.0, -10.0, -2.0, 2.0, 10.0, 50.0)]
    domain = (-math.inf, math.inf)
    if op.variant == "kernel_weighted" and op.kernel.is_schwartz:
        k = op.kernel
        points = [k.center + j * k.sigma_phi for j in (-8, -4, 0, 4, 8)]
        domain = _kernel_window(k)

    def integral(extract):
        return integrate(
            lambda x: extract(x) * values(x)[2], domain, spec, center=model.center(theta0), points=points
        )[0]

    mean = np.array([integral(lambda x, i=i: values(x)[0][i]) for i in range(q)])
    S = np.array([[-integral(lambda x, i=i, j=j: values(x)[1][i, j]) for j in range(p)] for i in range(q)])
    V = np.zeros((q, q))
    for i in range(q):
        for j in range(i, q):
            V[i, j] = V[j, i] = integral(lambda x, i=i, j=j: values(x)[0][i] * values(x)[0][j])
    return PopulationMoments(mean, S, V, "quadrature")


def _interval_moments(psi, model, op, theta0, theta, spec) -> PopulationMoments:
    probs = bin_probabilities(model, theta0, op.grid, spec)
    bins = np.arange(op.grid.n_bins)
    # bins below the empty-bin threshold contribute less than 1e-12
    keep = probs >= _EMPTY_BIN
    vals = psi.eval(bins[keep], theta)
    ders = psi.d_theta(bins[keep], theta)
    w = probs[keep]
    mean = np.einsum("b,bi->i", w, vals)
    S = -np.einsum("b,bij->ij", w, ders)
    V = np.einsum("b,bi,bj->ij", w, vals, vals)
    return PopulationMoments(mean, S, V, "bin-sum")


def _mc_moments(psi, model, op, theta0, theta, draws, rng) -> PopulationMoments:
    if op.variant == "kernel_weighted":
        y = sample_pushforward(op, model, theta0, draws, rng)
    else:
        latent = model.sample(theta0, rng, draws)
        y = latent if op.variant == "point" else observe_many(op, latent)
    vals = psi.eval(y, theta)
    ders = psi.d_theta(y, theta)
    return PopulationMoments(vals.mean(axis=0), -ders.mean(axis=0), vals.T @ vals / vals.shape[0], "monte-carlo")


def population_moments(
    psi: InferenceFunctional,
    model: ModelFamily,
    op: ObservationOperator = POINT,
    theta0=None,
    theta=None,
    spec: QuadratureSpec = DEFAULT_SPEC,
    *,
    route: str = "auto",
    draws: int = 1_000_000,
    rng: np.random.Generator | None = None,
) -> PopulationMoments:
    """Moments of ``Psi(Y, theta)`` with ``Y`` drawn from the pushforward of ``P_theta0``.

    ``theta`` defaults to ``theta0``.  ``route`` is ``"auto"``,
    ``"quadrature"``, ``"oscillatory"``, ``"bin-sum"`` or
    ``"monte-carlo"``; the automatic choice prefers exact routes.
    """
    theta0 = model.check_theta(theta0)
    theta = theta0 if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    accepted = {"point": ("point", "kernel_weighted"), "interval": ("interval",)}.get(psi.requires, ())
    if op.variant not in accepted:
        raise VariantMismatchError(f"{psi.name} consumes {psi.requires} data, operator is {op.variant}")
    if route == "auto":
        if op.variant == "interval":
            route = "bin-sum"
        elif op.variant in ("point", "kernel_weighted") and model.has_density and model.data_dim == 1:
            is_point = op.variant == "point" or op.kernel.is_classical
            route = "oscillatory" if (psi.trig is not None and is_point) else "quadrature"
        else:
            route = "monte-carlo"
    if route == "oscillatory":
        return _trig_moments(psi, model, theta0, theta, spec)
    if route == "quadrature":
        return _quadrature_moments(psi, model, op, theta0, theta, spec)
    if route == "bin-sum":
        return _interval_moments(psi, model, op, theta0, theta, spec)
    if route == "monte-carlo":
        rng = np.random.default_rng(0) if rng is None else rng
        return _mc_moments(psi, model, op, theta0, theta, int(draws), rng)
    raise DomainError(f"unknown route {route!r}")


def recenter(
    psi: InferenceFunctional, model: ModelFamily, op: ObservationOperator, spec: QuadratureSpec = TIGHT_SPEC
) -> InferenceFunctional:
    """``Psi(y, theta) - E^O_theta[Psi(Y, theta)]``: unbiased under the pushforward law.

    The centering term is computed by quadrature at each ``theta`` and its
    gradient by central differences (relative step 1e-4).
    """
    centers = _ThetaCache()
    grads = _ThetaCache()

    def m(theta):
        return centers.get(theta, lambda t: population_moments(psi, model, op, t, spec=spec).mean)

    def fn(y, theta):
        return psi.eval(y, theta) - m(theta)[None, :]

    def d_theta(y, theta):
        g = grads.get(theta, lambda t: _centering_gradient(m, t, 1e-4))
        return psi.d_theta(y, theta) - g[None, :, :]

    return replace(
        psi,
        name=f"recentred[{psi.name}|{op.label()}]",
        fn=fn,
        d_theta_fn=d_theta,
        trig=None,
        info={**psi.info, "base": psi, "operator": op},
    )


def pushforward_score_if(
    model: ModelFamily, op: ObservationOperator, spec: QuadratureSpec = TIGHT_SPEC
) -> InferenceFunctional:
    """Score of the pushforward model for point, kernel-weighted or interval data."""
    if op.variant == "interval":
        return interval_score_if(model, op.grid, spec)
    if op.variant == "point" or op.kernel.is_classical:
        return score_if(model)
    if op.variant != "kernel_weighted":
        raise VariantMismatchError(f"no pushforward score for {op.variant} operators")
    # log(f phi / c) has score l_dot - c_dot / c, the recentred model score
    return recenter(score_if(model), model, op, spec)


# ---------------------------------------------------------------------------
# Regularity diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityEntry:
    theta: tuple
    unbiasedness: float
    root_count: int
    variability_finite: bool
    interchange_gap: float
    passed: dict


@dataclass(frozen=True)
class RegularityReport:
    functional: str
    operator: str
    entries: tuple
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(all(e.passed.values()) for e in self.entries)

    def flags(self) -> list[str]:
        out = []
        for e in self.entries:
            out.extend(f"{k} at theta={e.theta}" for k, ok in e.passed.items() if not ok)
        return out


def regularity_report(
    psi: InferenceFunctional,
    model: ModelFamily,
    op: ObservationOperator = POINT,
    theta_grid: Sequence = (0.0,),
    spec: QuadratureSpec = TIGHT_SPEC,
    *,
    scan_halfwidth: float = 3.0,
    scan_points: int = 241,
    tol: float = 1e-6,
) -> RegularityReport:
    """Numerical checks of unbiasedness (R2), root uniqueness (R3), finite
    variability (C4) and derivative interchange (C5) on a parameter grid.

    The root scan moves the first parameter over ``theta0 +- scan_halfwidth``
    and counts sign changes of the first component of
    ``theta -> E_theta0[Psi(Y, theta)]``.  Failures are flagged, never raised.
    """
    grid = [np.atleast_1d(np.asarray(t, dtype=float)) for t in theta_grid]
    if not grid:
        raise DomainError("theta_grid must be non-empty")
    entries = []
    for theta0 in grid:
        theta0 = model.check_theta(theta0)
        passed = {}
        try:
            pm = population_moments(psi, model, op, theta0, spec=spec)
            bias = float(np.max(np.abs(pm.mean)))
            finite = bool(np.all(np.isfinite(pm.V)))
        except Exception:  # report, never raise
            bias, finite, pm = float("inf"), False, None
        passed["R2"] = bias <= tol
        passed["C4"] = finite

        offsets = np.linspace(-scan_halfwidth, scan_halfwidth, scan_points)
        vals = []
        for d in offsets:
            th = theta0.copy()
            th[0] += d
            try:
                vals.append(float(population_moments(psi, model, op, theta0, th, spec=spec).mean[0]))
            except Exception:
                vals.append(float("nan"))
        vals = np.asarray(vals)
        good = np.isfinite(vals)
        signs = np.sign(vals[good])
        roots = int(np.sum(signs[:-1] * signs[1:] < 0) + np.sum(signs == 0))
        passed["R3"] = roots == 1

        gap = float("inf")
        if pm is not None:
            h = _fd_steps(theta0, 1e-4)
            deriv = np.zeros_like(pm.S)
            try:
                for j in range(theta0.size):
                    e = np.zeros(theta0.size)
                    e[j] = h[j]
                    up = population_moments(psi, model, op, theta0, theta0 + e, spec=spec).mean
                    dn = population_moments(psi, model, op, theta0, theta0 - e, spec=spec).mean
                    deriv[:, j] = (up - dn) / (2.0 * h[j])
                gap = float(np.max(np.abs(deriv + pm.S)))
            except Exception:
                gap = float("inf")
        passed["C5"] = gap <= max(1e-5, 1e3 * tol)
        entries.append(RegularityEntry(tuple(theta0.tolist()), bias, roots, finite, gap, passed))
    return RegularityReport(psi.name, op.label(), tuple(entries), tol)
