"""Observation operators and the pushforward model.

An operator maps a latent draw ``X ~ P_theta`` to what is actually recorded:
the draw itself (point), a draw from the kernel-tilted law ``f phi / c``
(kernel-weighted), the index of the bin containing the draw (interval),
the vector ``exp(i u_j X) phi(X)`` (transform), or, at the level of
densities only, the smoothed density ``K * f`` on a grid (convolutional).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, UnsupportedPairingError, VariantMismatchError
from .kernels import CLASSICAL, KernelProfile, expect
from .models import ModelFamily
from .specialfn import DEFAULT_SPEC, QuadratureSpec, integrate

__all__ = [
    "BinGrid",
    "ObservationOperator",
    "Observation",
    "observe",
    "observe_many",
    "pushforward_density",
    "sample_pushforward",
    "interval_probability",
    "bin_probabilities",
    "convolve_density",
]

log = logging.getLogger(__name__)

VARIANTS = ("point", "kernel_weighted", "interval", "transform", "convolutional")


@dataclass(frozen=True)
class BinGrid:
    """Equal-width bins ``[left_edge + k w, left_edge + (k+1) w)``, ``k = 0..n_bins-1``.

    With ``tail_policy="open_tails"`` the first bin extends to ``-inf`` and
    the last to ``+inf``, so every real draw falls in some bin.  With
    ``"truncate"`` draws outside ``[left_edge, left_edge + n_bins w)`` are not
    observed.
    """

    left_edge: float
    bin_width: float
    n_bins: int
    tail_policy: str = "open_tails"

    def __post_init__(self):
        if not (math.isfinite(self.left_edge) and self.bin_width > 0 and math.isfinite(self.bin_width)):
            raise DomainError("bin grid needs a finite left edge and a positive width")
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise DomainError("bin grid needs at least two bins")
        if self.tail_policy not in ("open_tails", "truncate"):
            raise DomainError(f"unknown tail policy {self.tail_policy!r}")

    @classmethod
    def symmetric(cls, half_width: float, bin_width: float, tail_policy: str = "open_tails") -> "BinGrid":
        """Grid whose interior edges run ``-half_width, ..., half_width``.

        With open tails one extra bin sits on each side, so the two unbounded
        bins are ``(-inf, -half_width)`` and ``[half_width, inf)``.
        """
        steps = 2.0 * half_width / bin_width
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise DomainError("half_width must be a positive multiple of bin_width / 2")
        n_inner = int(round(steps))
        if tail_policy == "open_tails":
            return cls(-half_width - bin_width, bin_width, n_inner + 2, tail_policy)
        return cls(-half_width, bin_width, max(n_inner, 2), tail_policy)

    @property
    def open_tails(self) -> bool:
        return self.tail_policy == "open_tails"

    def edges(self) -> np.ndarray:
        """The ``n_bins + 1`` finite edges of the underlying equal-width grid."""
        return self.left_edge + self.bin_width * np.arange(self.n_bins + 1)

    def bounds(self, b: int) -> tuple[float, float]:
        """``(lo, hi)`` of bin ``b``, with infinite ends under open tails."""
        if not 0 <= b < self.n_bins:
            raise DomainError(f"bin index {b} out of range")
        lo = self.left_edge + b * self.bin_width
        hi = lo + self.bin_width
        if self.open_tails:
            if b == 0:
                lo = -math.inf
            if b == self.n_bins - 1:
                hi = math.inf
        return lo, hi

    def all_bounds(self) -> list[tuple[float, float]]:
        return [self.bounds(b) for b in range(self.n_bins)]

    def index(self, x):
        """Bin index of each draw; ``-1`` marks draws outside a truncated window."""
        arr = np.asarray(x, dtype=float)
        k = np.floor((arr - self.left_edge) / self.bin_width)
        if self.open_tails:
            idx = np.clip(k, 0, self.n_bins - 1).astype(int)
        else:
            idx = np.where((k >= 0) & (k < self.n_bins), k, -1).astype(int)
        return int(idx) if idx.ndim == 0 else idx


@dataclass(frozen=True)
class ObservationOperator:
    """Tagged operator.  Build with the classmethod constructors."""

    variant: str
    kernel: KernelProfile = CLASSICAL
    grid: Optional[BinGrid] = None
    frequencies: tuple = ()
    conv_grid: tuple = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown observation variant {self.variant!r}")
        if self.variant == "interval" and self.grid is None:
            raise DomainError("interval operator needs a bin grid")
        if self.variant == "transform":
            if len(self.frequencies) == 0:
                raise DomainError("transform operator needs at least one frequency")
            if len(set(self.frequencies)) != len(self.frequencies):
                raise DomainError("transform frequencies must be distinct")
        if self.variant == "convolutional":
            if len(self.conv_grid) == 0 or not all(math.isfinite(g) for g in self.conv_grid):
                raise DomainError("convolutional operator needs a finite, non-empty grid")
            if self.kernel.is_classical:
                raise DomainError("convolutional operator needs a gaussian kernel")

    @classmethod
    def point(cls) -> "ObservationOperator":
        return cls("point")

    @classmethod
    def kernel_weighted(cls, kernel: KernelProfile) -> "ObservationOperator":
        return cls("kernel_weighted", kernel=kernel)

    @classmethod
    def interval(cls, grid: BinGrid) -> "ObservationOperator":
        return cls("interval", grid=grid)

    @classmethod
    def transform(cls, frequencies: Sequence[float], kernel: KernelProfile = CLASSICAL) -> "ObservationOperator":
        return cls("transform", kernel=kernel, frequencies=tuple(float(u) for u in frequencies))

    @classmethod
    def convolutional(cls, kernel: KernelProfile, grid: Sequence[float]) -> "ObservationOperator":
        return cls("convolutional", kernel=kernel, conv_grid=tuple(float(g) for g in grid))

    def label(self) -> str:
        if self.variant == "point":
            return "point"
        if self.variant == "kernel_weighted":
            return f"kernel_weighted[{self.kernel.label()}]"
        if self.variant == "interval":
            g = self.grid
            return f"interval[w={g.bin_width:g},n={g.n_bins},{g.tail_policy}]"
        if self.variant == "transform":
            return f"transform[u={list(self.frequencies)}]"
        return f"convolutional[{self.kernel.label()}]"


@dataclass(frozen=True)
class Observation:
    """One observed datum; ``weight`` carries ``phi(x)`` for kernel-weighted draws."""

    variant: str
    value: object
    weight: Optional[float] = None


def observe(op: ObservationOperator, latent_draw) -> Observation:
    """Apply ``op`` to a single latent draw."""
    x = np.asarray(latent_draw, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("latent draw must be finite")
    if op.variant == "convolutional":
        raise VariantMismatchError("convolutional operators act on densities; use convolve_density")
    if op.variant == "point":
        return Observation("point", float(x) if x.ndim == 0 else x)
    if op.variant == "kernel_weighted":
        return Observation("kernel_weighted", float(x), float(op.kernel(x)))
    if op.variant == "interval":
        b = op.grid.index(float(x))
        return Observation("interval", None if b < 0 else b)
    u = np.asarray(op.frequencies)
    return Observation("transform", np.exp(1j * u * float(x)) * float(op.kernel(x)))


def observe_many(op: ObservationOperator, latent_draws) -> np.ndarray:
    """Vectorised :func:`observe` returning bare payloads.

    Interval draws outside a truncated window are dropped; transform payloads
    have shape ``(n, len(frequencies))``.
    """
    x = np.asarray(latent_draws, dtype=float)
    if op.variant == "convolutional":
        raise VariantMismatchError("convolutional operators act on densities; use convolve_density")
    if not np.all(np.isfinite(x)):
        raise DomainError("latent draws must be finite")
    if op.variant in ("point", "kernel_weighted"):
        return x
    if op.variant == "interval":
        idx = np.atleast_1d(op.grid.index(x))
        return idx[idx >= 0]
    u = np.asarray(op.frequencies)
    return np.exp(1j * np.outer(x, u)) * op.kernel(x)[:, None]


def _require_kernel_weighted(op: ObservationOperator):
    if op.variant != "kernel_weighted":
        raise VariantMismatchError(f"expected a kernel_weighted operator, got {op.variant}")


def pushforward_density(
    op: ObservationOperator, model: ModelFamily, theta, spec: QuadratureSpec = DEFAULT_SPEC
):
    """Density ``f_theta phi / c(theta)`` of a kernel-weighted observation, and ``c(theta)``."""
    _require_kernel_weighted(op)
    theta = model.check_theta(theta)
    if not model.has_density:
        raise UnsupportedPairingError(f"{model.name} exposes no density")
    kernel = op.kernel
    if kernel.is_classical:
        return (lambda x: model.density(x, theta)), 1.0
    c = expect(model, theta, lambda x: 1.0, spec, kernel=kernel)

    def density(x):
        return model.density(x, theta) * kernel(x) / c

    return density, c


def sample_pushforward(
    op: ObservationOperator, model: ModelFamily, theta, n: int, rng: np.random.Generator
) -> np.ndarray:
    """``n`` draws from the kernel-weighted pushforward law by rejection.

    Proposals come from ``P_theta`` and are accepted with probability
    ``phi(x)`` (the kernel peaks at 1).
    """
    _require_kernel_weighted(op)
    theta = model.check_theta(theta)
    n = int(n)
    if n < 0:
        raise DomainError("sample size must be non-negative")
    if op.kernel.is_classical:
        return model.sample(theta, rng, n)
    out = np.empty(n)
    filled = 0
    proposed = 0
    accepted = 0
    batch = max(64, n)
    while filled < n:
        x = model.sample(theta, rng, batch)
        keep = x[rng.random(batch) < op.kernel(x)]
        proposed += batch
        accepted += keep.size
        take = min(keep.size, n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
        rate = accepted / proposed
        # size the next batch from the observed acceptance rate
        batch = int(min(10_000_000, max(64, 1.2 * (n - filled) / max(rate, 1e-4))))
    rate = accepted / proposed if proposed else 1.0
    if rate < 0.01:
        log.warning("sample_pushforward: acceptance rate %.3g below 1%%", rate)
    return out


def interval_probability(
    model: ModelFamily, theta, bin: tuple[float, float], spec: QuadratureSpec = DEFAULT_SPEC
) -> float:
    """``P_theta(X in [lo, hi))`` by quadrature of the density."""
    theta = model.check_theta(theta)
    if not model.has_density:
        raise UnsupportedPairingError(f"{model.name} exposes no density")
    lo, hi = float(bin[0]), float(bin[1])
    if lo > hi:
        raise DomainError("interval lower bound exceeds upper bound")
    value, _ = integrate(
        lambda x: float(model.density(x, theta)), (lo, hi), spec, center=model.center(theta)
    )
    return min(max(value, 0.0), 1.0)


def bin_probabilities(
    model: ModelFamily, theta, grid: BinGrid, spec: QuadratureSpec = DEFAULT_SPEC, *, exact: bool = True
) -> np.ndarray:
    """Probabilities of every bin of ``grid``.

    Uses the model's distribution function when ``exact`` and available,
    otherwise quadrature bin by bin.
    """
    theta = model.check_theta(theta)
    if exact and model.cdf is not None:
        edges = grid.edges().astype(float)
        if grid.open_tails:
            edges[0], edges[-1] = -math.inf, math.inf
        cdf = np.asarray(model.cdf(edges, theta), dtype=float)
        if grid.open_tails:
            cdf[0], cdf[-1] = 0.0, 1.0
        return np.clip(np.diff(cdf), 0.0, 1.0)
    return np.array([interval_probability(model, theta, b, spec) for b in grid.all_bounds()])


def convolve_density(
    op: ObservationOperator, model: ModelFamily, theta, spec: QuadratureSpec = DEFAULT_SPEC
) -> list[tuple[float, float]]:
    """``(K * f_theta)(g)`` at each grid point, ``K`` the normalised Gaussian kernel."""
    if op.variant != "convolutional":
        raise VariantMismatchError(f"expected a convolutional operator, got {op.variant}")
    theta = model.check_theta(theta)
    if not model.has_density:
        raise UnsupportedPairingError(f"{model.name} exposes no density")
    s = op.kernel.sigma_phi
    norm = 1.0 / (s * math.sqrt(2.0 * math.pi))
    out = []
    for g in op.conv_grid:

        def integrand(x, g=g):
            z = (g - x) / s
            return norm * math.exp(-0.5 * z * z) * float(model.density(x, theta))

        # the kernel confines the mass to g +- 40 sigma
        lo, hi = g - 40.0 * s, g + 40.0 * s
        pts = [g + k * s for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)]
        value, _ = integrate(integrand, (lo, hi), spec, points=pts)
        out.append((float(g), value))
    return out
