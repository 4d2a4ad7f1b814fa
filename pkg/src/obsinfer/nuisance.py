"""Nuisance parameters: Bhapkar-Godambe projection and orthogonality checks.

With ``theta = (alpha, beta)`` split into interest and nuisance coordinates,
a candidate functional ``Phi`` is replaced by
``psi* = Phi - E[Phi U_beta^T] E[U_beta U_beta^T]^-1 U_beta``, the residual of
its regression on the nuisance score.  Expectations are taken under
``P_theta`` for point observations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, SingularMatrixError, UnsupportedPairingError
from .inference import POINT, InferenceFunctional, population_moments
from .models import ModelFamily
from .specialfn import TIGHT_SPEC, QuadratureSpec, integrate

__all__ = [
    "PartitionedModel",
    "OrthogonalityReport",
    "bhapkar_godambe_project",
    "projection_coefficients",
    "orthogonality_check",
    "nuisance_godambe",
]


@dataclass(frozen=True)
class PartitionedModel:
    """A model with its parameter split into interest and nuisance indices."""

    model: ModelFamily
    interest: tuple
    nuisance: tuple

    def __post_init__(self):
        a, b = set(self.interest), set(self.nuisance)
        if a & b:
            raise DomainError("interest and nuisance indices overlap")
        if a | b != set(range(self.model.param_dim)):
            raise DomainError("interest and nuisance indices must cover every parameter")
        if not self.model.has_score:
            raise UnsupportedPairingError(f"{self.model.name} exposes no score")

    def nuisance_score(self, y, theta) -> np.ndarray:
        s = np.asarray(self.model.score(np.asarray(y, dtype=float), theta)).reshape(-1, self.model.param_dim)
        return s[:, list(self.nuisance)]


def _cross_moment(f: Callable, g: Callable, model: ModelFamily, theta, spec) -> np.ndarray:
    """``E_theta[f(X) g(X)^T]`` by quadrature; ``f`` and ``g`` map a float to a vector."""
    memo: dict[float, tuple] = {}

    def vals(x):
        if x not in memo:
            memo[x] = (f(x), g(x), float(model.density(x, theta)))
        return memo[x]

    fa, ga, _ = vals(model.center(theta))
    mid, s = model.center(theta), model.scale(theta)
    points = [mid + k * s for k in (-50.0, -10.0, -2.0, 2.0, 10.0, 50.0)]
    out = np.zeros((fa.size, ga.size))
    for i in range(fa.size):
        for j in range(ga.size):
            out[i, j] = integrate(lambda x: vals(x)[0][i] * vals(x)[1][j] * vals(x)[2], spec=spec, center=mid, points=points)[0]
    return out


def projection_coefficients(
    phi: InferenceFunctional, pm: PartitionedModel, theta, spec: QuadratureSpec = TIGHT_SPEC
) -> np.ndarray:
    """``E[Phi U_beta^T] E[U_beta U_beta^T]^-1`` at ``theta``.

    Raises
    ------
    SingularMatrixError
        If the nuisance information ``E[U_beta U_beta^T]`` is singular.
    """
    model = pm.model
    theta = model.check_theta(theta)
    u_beta = lambda x: pm.nuisance_score(np.array([x]), theta)[0]  # noqa: E731
    B = _cross_moment(u_beta, u_beta, model, theta, spec)
    if not np.all(np.isfinite(B)) or np.linalg.cond(B) > 1e12:
        raise SingularMatrixError("nuisance information is singular")
    A = _cross_moment(lambda x: phi.eval(np.array([x]), theta)[0], u_beta, model, theta, spec)
    return np.linalg.solve(B.T, A.T).T


def bhapkar_godambe_project(
    phi: InferenceFunctional,
    pm: PartitionedModel,
    theta,
    spec: QuadratureSpec = TIGHT_SPEC,
    *,
    local: bool = True,
) -> InferenceFunctional:
    """Project ``phi`` onto the orthogonal complement of the nuisance scores.

    With ``local=True`` the coefficients are computed at ``theta`` and frozen;
    the returned functional's ``info["refresh"]`` recomputes them at a new
    point (pass it to :func:`~obsinfer.estimation.solve_z` as ``refresh``).
    With ``local=False`` they are recomputed (and cached) at every
    evaluation point.
    """
    theta = pm.model.check_theta(theta)
    state = {"theta": theta.copy(), "C": projection_coefficients(phi, pm, theta, spec)}
    cache: dict[tuple, np.ndarray] = {}

    def coeffs(t):
        if local:
            return state["C"]
        key = tuple(np.asarray(t, dtype=float).tolist())
        if key not in cache:
            cache[key] = projection_coefficients(phi, pm, t, spec)
        return cache[key]

    def refresh(t):
        t = pm.model.check_theta(t)
        state["theta"] = t.copy()
        state["C"] = projection_coefficients(phi, pm, t, spec)

    def fn(y, t):
        return phi.eval(y, t) - pm.nuisance_score(y, t) @ coeffs(t).T

    nb = list(pm.nuisance)
    p = pm.model.param_dim

    def score_beta_derivative(y, t):
        # central differences of the nuisance score, shape (n, |beta|, p)
        steps = 1e-5 * (1.0 + np.abs(t))
        cols = []
        for j in range(p):
            e = np.zeros(p)
            e[j] = steps[j]
            cols.append((pm.nuisance_score(y, t + e) - pm.nuisance_score(y, t - e)) / (2.0 * steps[j]))
        return np.stack(cols, axis=-1)

    def d_theta(y, t):
        C = coeffs(t)
        return phi.d_theta(y, t) - np.einsum("qb,nbp->nqp", C, score_beta_derivative(y, t))

    return InferenceFunctional(
        name=f"projected[{phi.name}]",
        fn=fn,
        output_dim=phi.output_dim,
        param_dim=phi.param_dim,
        d_theta_fn=d_theta,
        requires=phi.requires,
        info={"base": phi, "state": state, "refresh": refresh, "nuisance": tuple(nb), "local": local},
    )


@dataclass(frozen=True)
class OrthogonalityReport:
    """``max_theta |E_theta[psi_i U_beta_j]|`` and the per-point matrices."""

    residuals: np.ndarray
    per_theta: tuple

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def orthogonality_check(
    psi: InferenceFunctional, pm: PartitionedModel, theta_grid: Sequence, spec: QuadratureSpec = TIGHT_SPEC
) -> OrthogonalityReport:
    """Cross moments of ``psi`` with the nuisance scores over a parameter grid."""
    mats = []
    for th in theta_grid:
        th = pm.model.check_theta(th)
        u_beta = lambda x, th=th: pm.nuisance_score(np.array([x]), th)[0]  # noqa: E731
        mats.append((tuple(th.tolist()), _cross_moment(lambda x, th=th: psi.eval(np.array([x]), th)[0], u_beta, pm.model, th, spec)))
    if not mats:
        raise DomainError("theta_grid must be non-empty")
    stacked = np.stack([m for _, m in mats])
    return OrthogonalityReport(np.max(np.abs(stacked), axis=0), tuple(mats))


def nuisance_godambe(
    psi: InferenceFunctional, pm: PartitionedModel, theta, spec: QuadratureSpec = TIGHT_SPEC
) -> np.ndarray:
    """``J = S_a^T V^-1 S_a`` over the interest block, ``S_a = -E[d psi / d alpha]``."""
    theta = pm.model.check_theta(theta)
    mom = population_moments(psi, pm.model, POINT, theta, spec=spec)
    V = 0.5 * (mom.V + mom.V.T)
    if not np.all(np.isfinite(V)) or np.linalg.cond(V) > 1e14:
        raise SingularMatrixError("variability matrix is singular")
    S = mom.S[:, list(pm.interest)]
    J = S.T @ np.linalg.solve(V, S)
    return 0.5 * (J + J.T)
