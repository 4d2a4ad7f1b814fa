"""Parametric model families.

Every family exposes a characteristic function and an exact sampler; most
also expose a density and the score ``d/dtheta log f``.  Arrays follow one
convention throughout: ``density(x, theta)`` and ``score(x, theta)`` are
vectorised over ``x`` and the score returns shape ``x.shape + (p,)``
(univariate data) or ``(n, p)`` (multivariate data).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special as _sp

from .errors import DomainError
from .specialfn import radial_generator

__all__ = [
    "ModelFamily",
    "gaussian_location",
    "cauchy_location",
    "student_t_location",
    "location_scale",
    "two_component_mixture",
    "elliptical",
    "unpack_elliptical",
    "pack_elliptical",
    "family_from_config",
]

_INF = math.inf


@dataclass(frozen=True)
class ModelFamily:
    """A parametric family ``theta -> P_theta``.

    Attributes
    ----------
    name : str
    param_dim : int
    cf : callable ``(u, theta) -> complex array``
    sampler : callable ``(theta, rng, size) -> array``
    density : callable ``(x, theta) -> array``, optional
    score : callable ``(x, theta) -> array``, optional
    cdf : callable ``(x, theta) -> array``, optional
        Distribution function (univariate families only).
    scale : callable ``theta -> float``
        Spread of the bulk; quadrature places breakpoints on this scale.
    param_domain : tuple of (lo, hi)
        Open box constraints per parameter.
    center : callable ``theta -> float``
        A point near the bulk of the distribution; quadrature splits there.
    data_dim : int
        Dimension of one observation.
    symmetric : bool
        True when ``X - center(theta)`` is symmetric about zero.
    """

    name: str
    param_dim: int
    cf: Callable
    sampler: Callable
    density: Optional[Callable] = None
    score: Optional[Callable] = None
    param_domain: tuple = ()
    center: Callable = field(default=lambda theta: 0.0)
    data_dim: int = 1
    symmetric: bool = False
    info: dict = field(default_factory=dict)
    cdf: Optional[Callable] = None
    scale: Callable = field(default=lambda theta: 1.0)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.param_dim,):
            raise DomainError(f"{self.name}: expected {self.param_dim} parameters, got shape {theta.shape}")
        for value, (lo, hi) in zip(theta, self.param_domain):
            if not (lo < value < hi):
                raise DomainError(f"{self.name}: parameter {value} outside ({lo}, {hi})")
        return theta

    def sample(self, theta, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.sampler(self.check_theta(theta), rng, int(size))

    @property
    def has_density(self) -> bool:
        return self.density is not None

    @property
    def has_score(self) -> bool:
        return self.score is not None


def _col(values) -> np.ndarray:
    return np.asarray(values, dtype=float)[..., None]


def gaussian_location(sigma: float = 1.0) -> ModelFamily:
    """N(theta, sigma^2) with sigma known."""
    sigma = float(sigma)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def density(x, theta):
        z = (np.asarray(x, dtype=float) - theta[0]) / sigma
        return norm * np.exp(-0.5 * z * z)

    def cf(u, theta):
        u = np.asarray(u, dtype=float)
        return np.exp(1j * u * theta[0] - 0.5 * sigma**2 * u * u)

    def sampler(theta, rng, size):
        return theta[0] + sigma * rng.standard_normal(size)

    def score(x, theta):
        return _col((np.asarray(x, dtype=float) - theta[0]) / sigma**2)

    def cdf(x, theta):
        return _sp.ndtr((np.asarray(x, dtype=float) - theta[0]) / sigma)

    return ModelFamily(
        name=f"gaussian(sigma={sigma:g})",
        param_dim=1,
        cf=cf,
        sampler=sampler,
        density=density,
        score=score,
        param_domain=((-_INF, _INF),),
        center=lambda theta: float(theta[0]),
        symmetric=True,
        info={"kind": "gaussian", "sigma": sigma},
        cdf=cdf,
        scale=lambda theta: sigma,
    )


def cauchy_location() -> ModelFamily:
    """Cauchy(theta, 1)."""

    def density(x, theta):
        y = np.asarray(x, dtype=float) - theta[0]
        return 1.0 / (math.pi * (1.0 + y * y))

    def cf(u, theta):
        u = np.asarray(u, dtype=float)
        return np.exp(1j * u * theta[0] - np.abs(u))

    def sampler(theta, rng, size):
        # tangent transform of a uniform
        return theta[0] + np.tan(math.pi * (rng.random(size) - 0.5))

    def score(x, theta):
        y = np.asarray(x, dtype=float) - theta[0]
        return _col(2.0 * y / (1.0 + y * y))

    def cdf(x, theta):
        return 0.5 + np.arctan(np.asarray(x, dtype=float) - theta[0]) / math.pi

    return ModelFamily(
        name="cauchy",
        param_dim=1,
        cf=cf,
        sampler=sampler,
        density=density,
        score=score,
        param_domain=((-_INF, _INF),),
        center=lambda theta: float(theta[0]),
        symmetric=True,
        info={"kind": "cauchy"},
        cdf=cdf,
    )


def _t_log_norm(nu: float) -> float:
    return math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)


def _t_standard_sample(nu: float, rng, size):
    # normal / sqrt(chi2_nu / nu)
    z = rng.standard_normal(size)
    w = rng.chisquare(nu, size)
    return z / np.sqrt(w / nu)


def student_t_location(nu: float) -> ModelFamily:
    """theta + t_nu with unit scale."""
    nu = float(nu)
    if not nu > 0:
        raise DomainError("nu must be positive")
    log_norm = _t_log_norm(nu)

    def density(x, theta):
        y = np.asarray(x, dtype=float) - theta[0]
        return np.exp(log_norm - 0.5 * (nu + 1.0) * np.log1p(y * y / nu))

    def cf(u, theta):
        u = np.asarray(u, dtype=float)
        return np.exp(1j * u * theta[0]) * radial_generator(nu, u * u)

    def sampler(theta, rng, size):
        return theta[0] + _t_standard_sample(nu, rng, size)

    def score(x, theta):
        y = np.asarray(x, dtype=float) - theta[0]
        return _col((nu + 1.0) * y / (nu + y * y))

    def cdf(x, theta):
        return _sp.stdtr(nu, np.asarray(x, dtype=float) - theta[0])

    return ModelFamily(
        name=f"student(nu={nu:g})",
        param_dim=1,
        cf=cf,
        sampler=sampler,
        density=density,
        score=score,
        param_domain=((-_INF, _INF),),
        center=lambda theta: float(theta[0]),
        symmetric=True,
        info={"kind": "student", "nu": nu},
        cdf=cdf,
    )


def location_scale(base: str = "normal", nu: float | None = None) -> ModelFamily:
    """X = mu + sigma Z with Z standard normal or standard t_nu; theta = (mu, sigma)."""
    if base == "normal":
        log_norm = -0.5 * math.log(2.0 * math.pi)

        def log_f0(z):
            return log_norm - 0.5 * z * z

        def base_cf(t):
            t = np.asarray(t, dtype=float)
            return np.exp(-0.5 * t * t)

        def draw(rng, size):
            return rng.standard_normal(size)

        def dlog_f0(z):
            return -z

        cdf0 = _sp.ndtr

        label = "normal"
    elif base == "student":
        if nu is None or not nu > 0:
            raise DomainError("student base requires nu > 0")
        nu = float(nu)
        log_norm = _t_log_norm(nu)

        def log_f0(z):
            return log_norm - 0.5 * (nu + 1.0) * np.log1p(z * z / nu)

        def base_cf(t):
            t = np.asarray(t, dtype=float)
            return radial_generator(nu, t * t)

        def draw(rng, size):
            return _t_standard_sample(nu, rng, size)

        def dlog_f0(z):
            return -(nu + 1.0) * z / (nu + z * z)

        def cdf0(z):
            return _sp.stdtr(nu, z)

        label = f"student(nu={nu:g})"
    else:
        raise DomainError(f"unknown base {base!r}")

    def density(x, theta):
        mu, sigma = theta
        z = (np.asarray(x, dtype=float) - mu) / sigma
        return np.exp(log_f0(z)) / sigma

    def cf(u, theta):
        mu, sigma = theta
        u = np.asarray(u, dtype=float)
        return np.exp(1j * u * mu) * base_cf(sigma * u)

    def sampler(theta, rng, size):
        mu, sigma = theta
        return mu + sigma * draw(rng, size)

    def score(x, theta):
        mu, sigma = theta
        z = (np.asarray(x, dtype=float) - mu) / sigma
        g = dlog_f0(z)
        return np.stack([-g / sigma, -(1.0 + z * g) / sigma], axis=-1)

    def cdf(x, theta):
        mu, sigma = theta
        return cdf0((np.asarray(x, dtype=float) - mu) / sigma)

    return ModelFamily(
        name=f"locscale({label})",
        param_dim=2,
        cf=cf,
        sampler=sampler,
        density=density,
        score=score,
        param_domain=((-_INF, _INF), (0.0, _INF)),
        center=lambda theta: float(theta[0]),
        symmetric=True,
        info={"kind": "locscale", "base": base, "nu": nu, "base_cf": base_cf},
        cdf=cdf,
        scale=lambda theta: float(theta[1]),
    )


def two_component_mixture(p1: tuple, p2: tuple) -> ModelFamily:
    """pi P1 + (1 - pi) P2 with fixed components; theta = (pi,).

    ``p1`` and ``p2`` are ``(family, theta)`` pairs.
    """
    fam1, th1 = p1
    fam2, th2 = p2
    th1 = fam1.check_theta(th1)
    th2 = fam2.check_theta(th2)
    has_density = fam1.has_density and fam2.has_density

    def cf(u, theta):
        w = theta[0]
        return w * fam1.cf(u, th1) + (1.0 - w) * fam2.cf(u, th2)

    def sampler(theta, rng, size):
        w = theta[0]
        first = rng.random(size) < w
        out = np.empty(size)
        n1 = int(first.sum())
        out[first] = fam1.sampler(th1, rng, n1)
        out[~first] = fam2.sampler(th2, rng, size - n1)
        return out

    density = score = None
    if has_density:

        def density(x, theta):
            w = theta[0]
            return w * fam1.density(x, th1) + (1.0 - w) * fam2.density(x, th2)

        def score(x, theta):
            f1 = fam1.density(x, th1)
            f2 = fam2.density(x, th2)
            return _col((f1 - f2) / (theta[0] * f1 + (1.0 - theta[0]) * f2))

    cdf = None
    if fam1.cdf is not None and fam2.cdf is not None:

        def cdf(x, theta):
            w = theta[0]
            return w * fam1.cdf(x, th1) + (1.0 - w) * fam2.cdf(x, th2)

    mid = 0.5 * (fam1.center(th1) + fam2.center(th2))
    return ModelFamily(
        name=f"mixture({fam1.name},{fam2.name})",
        param_dim=1,
        cf=cf,
        sampler=sampler,
        density=density,
        score=score,
        param_domain=((0.0, 1.0),),
        center=lambda theta: mid,
        info={"kind": "mixture"},
        cdf=cdf,
    )


def unpack_elliptical(theta, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``theta = (mu, lower-triangular entries of Sigma row by row)``."""
    theta = np.asarray(theta, dtype=float)
    mu = theta[:dim]
    sigma = np.zeros((dim, dim))
    rows, cols = np.tril_indices(dim)
    sigma[rows, cols] = theta[dim:]
    sigma[cols, rows] = theta[dim:]
    return mu, sigma


def pack_elliptical(mu, sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    rows, cols = np.tril_indices(sigma.shape[0])
    return np.concatenate([np.asarray(mu, dtype=float), sigma[rows, cols]])


def _chol(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise DomainError("scatter matrix is not positive definite") from exc


def elliptical(kind: str = "gaussian", dim: int = 2, nu: float | None = None) -> ModelFamily:
    """Elliptically contoured family with characteristic function
    ``exp(i u'mu) gen(u' Sigma u)``; gen is ``exp(-s/2)`` (gaussian) or
    ``g_nu`` (student)."""
    dim = int(dim)
    if dim < 1:
        raise DomainError("dim must be >= 1")
    if kind == "gaussian":
        gen = lambda s: np.exp(-0.5 * np.asarray(s, dtype=float))  # noqa: E731
    elif kind == "student":
        if nu is None or not nu > 0:
            raise DomainError("student kind requires nu > 0")
        nu = float(nu)
        gen = lambda s: radial_generator(nu, s)  # noqa: E731
    else:
        raise DomainError(f"unknown elliptical kind {kind!r}")

    def cf(u, theta):
        mu, sigma = unpack_elliptical(theta, dim)
        _chol(sigma)
        u = np.asarray(u, dtype=float)
        u2 = u.reshape(-1, dim)
        quad = np.einsum("ij,jk,ik->i", u2, sigma, u2)
        out = np.exp(1j * (u2 @ mu)) * gen(np.maximum(quad, 0.0))
        return out.reshape(u.shape[:-1]) if u.ndim > 1 else out.reshape(())

    def sampler(theta, rng, size):
        mu, sigma = unpack_elliptical(theta, dim)
        chol = _chol(sigma)
        z = rng.standard_normal((size, dim)) @ chol.T
        if kind == "student":
            w = rng.chisquare(nu, size)
            z = z / np.sqrt(w / nu)[:, None]
        return mu + z

    def density(x, theta):
        mu, sigma = unpack_elliptical(theta, dim)
        chol = _chol(sigma)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        sol = np.linalg.solve(chol, (x - mu).T)
        delta = np.sum(sol * sol, axis=0)
        log_det = 2.0 * np.sum(np.log(np.diag(chol)))
        if kind == "gaussian":
            logf = -0.5 * (dim * math.log(2 * math.pi) + log_det + delta)
        else:
            logf = (
                math.lgamma(0.5 * (nu + dim))
                - math.lgamma(0.5 * nu)
                - 0.5 * dim * math.log(nu * math.pi)
                - 0.5 * log_det
                - 0.5 * (nu + dim) * np.log1p(delta / nu)
            )
        return np.exp(logf)

    n_par = dim + dim * (dim + 1) // 2
    domain = tuple([(-_INF, _INF)] * n_par)
    return ModelFamily(
        name=f"elliptical({kind},{dim})" + (f"[nu={nu:g}]" if kind == "student" else ""),
        param_dim=n_par,
        cf=cf,
        sampler=sampler,
        density=density,
        param_domain=domain,
        data_dim=dim,
        symmetric=True,
        info={"kind": "elliptical", "generator": kind, "nu": nu, "dim": dim, "gen": gen},
    )


def family_from_config(cfg: dict) -> ModelFamily:
    """Build a family from a mapping such as ``{"family": "student", "nu": 3}``."""
    name = str(cfg.get("family", "")).lower()
    if name in ("gaussian", "normal"):
        return gaussian_location(float(cfg.get("sigma", 1.0)))
    if name == "cauchy":
        return cauchy_location()
    if name in ("student", "t"):
        return student_t_location(float(cfg["nu"]))
    if name == "locscale":
        return location_scale(str(cfg.get("base", "normal")), cfg.get("nu"))
    raise DomainError(f"unknown model family {name!r}")
