"""Estimators: Z-estimation, ECF phase estimation, GMM and the interval MLE.

Every estimator returns an :class:`EstimationResult` carrying the empirical
sensitivity ``S_hat = -mean d Psi``, variability ``V_hat = mean Psi Psi^T``
(divisor ``n``), the sandwich covariance and the Godambe information.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import BoundaryError, DegenerateError, DomainError, NoRootError, SingularMatrixError
from .inference import _EMPTY_BIN, InferenceFunctional, interval_score_if, sinusoidal
from .models import ModelFamily
from .observation import BinGrid, bin_probabilities

__all__ = [
    "EstimationResult",
    "sandwich_parts",
    "solve_z",
    "ecf_phase_estimator",
    "gmm",
    "interval_mle_benchmark",
]

log = logging.getLogger(__name__)

_DET_RTOL = 1e-12
_COND_MAX = 1e12
_STEP_TOL = 1e-9


@dataclass
class EstimationResult:
    """Point estimate with its sandwich covariance.

    ``sandwich`` is ``S^-1 V S^-T / n`` for exactly identified equations and
    the general GMM form ``(S'WS)^-1 S'WVWS (S'WS)^-1 / n`` otherwise.
    ``residual_norm`` is ``||mean Psi(theta_hat)||`` (exactly identified) or
    the norm of the GMM first-order condition ``S'W mean Psi``.
    """

    theta_hat: np.ndarray
    S_hat: np.ndarray
    V_hat: np.ndarray
    sandwich: np.ndarray
    G_hat: np.ndarray
    n: int
    iterations: int
    residual_norm: float
    method: str
    info: dict = field(default_factory=dict)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.sandwich), 0.0, None))


def _check_sensitivity(S: np.ndarray) -> None:
    if S.shape[0] != S.shape[1]:
        return
    scale = float(np.prod(np.maximum(np.linalg.norm(S, axis=1), 1e-300)))
    if not np.all(np.isfinite(S)) or abs(np.linalg.det(S)) < _DET_RTOL * max(scale, 1.0):
        raise SingularMatrixError(f"sensitivity matrix is singular (det {np.linalg.det(S):.3g})")


def sandwich_parts(psi: InferenceFunctional, y, theta, W: Optional[np.ndarray] = None):
    """Empirical ``(S_hat, V_hat, sandwich, G_hat)`` at ``theta``."""
    vals = psi.eval(y, theta)
    n = vals.shape[0]
    S = -psi.d_theta(y, theta).mean(axis=0)
    V = vals.T @ vals / n
    q, p = S.shape
    if q == p and W is None:
        _check_sensitivity(S)
        S_inv = np.linalg.inv(S)
        cov = S_inv @ V @ S_inv.T / n
    else:
        W = np.linalg.pinv(V) if W is None else W
        bread = S.T @ W @ S
        _check_sensitivity(bread)
        bread_inv = np.linalg.inv(bread)
        cov = bread_inv @ S.T @ W @ V @ W @ S @ bread_inv / n
    cov = 0.5 * (cov + cov.T)
    if np.linalg.cond(V) > _COND_MAX:
        G = S.T @ np.linalg.pinv(V) @ S
    else:
        G = S.T @ np.linalg.solve(V, S)
    return S, V, cov, 0.5 * (G + G.T)


def _default_pilot(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DomainError("a pilot is required for multivariate data")
    return np.array([float(np.median(y))])


def _in_domain(model: Optional[ModelFamily], theta) -> bool:
    if model is None:
        return bool(np.all(np.isfinite(theta)))
    return all(lo < t < hi for t, (lo, hi) in zip(theta, model.param_domain))


def solve_z(
    psi: InferenceFunctional,
    data,
    pilot=None,
    tol: float = 1e-10,
    max_iter: int = 100,
    *,
    model: Optional[ModelFamily] = None,
    bracket_step: Optional[float] = None,
    bracket_steps: int = 400,
    refresh=None,
) -> EstimationResult:
    """Root of ``mean_i Psi(Y_i, theta) = 0`` nearest the pilot.

    Damped Newton with the empirical Jacobian: each step is halved up to 20
    times until the residual norm decreases.  For a scalar parameter a
    stalled Newton run falls back to a scan outwards from the pilot for the
    nearest sign change, refined by Brent's method.

    Parameters
    ----------
    psi : InferenceFunctional
        Exactly identified (``output_dim == param_dim``).
    data : array
        Observations in the variant ``psi`` consumes.
    pilot : array, optional
        Starting value; the sample median for scalar data.
    tol : float
        Required residual norm.
    model : ModelFamily, optional
        Used only to keep iterates inside the parameter domain.
    bracket_step : float, optional
        Grid spacing for the fallback scan; defaults to a fifth of the
        interquartile range of the data (or 0.05).
    refresh : callable, optional
        ``refresh(theta)`` is called before each Newton step, for
        functionals whose coefficients are re-estimated at the iterate.

    Raises
    ------
    NoRootError
        If the residual stays above ``tol``.
    SingularMatrixError
        If the sensitivity at the root is singular.
    """
    y = np.asarray(data)
    if y.shape[0] == 0:
        raise DomainError("no data")
    if psi.output_dim != psi.param_dim:
        raise DomainError("solve_z needs an exactly identified functional; use gmm")
    theta = _default_pilot(y) if pilot is None else np.atleast_1d(np.asarray(pilot, dtype=float)).copy()
    start = theta.copy()

    def resid(t):
        return psi.mean(y, t)

    r = resid(theta)
    norm = float(np.linalg.norm(r))
    it = 0
    stalled = False
    while norm > tol and it < max_iter:
        it += 1
        if refresh is not None:
            refresh(theta)
            r = resid(theta)
            norm = float(np.linalg.norm(r))
        J = psi.d_theta(y, theta).mean(axis=0)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            stalled = True
            break
        if not np.all(np.isfinite(step)):
            stalled = True
            break
        lam = 1.0
        improved = False
        for _ in range(21):
            cand = theta + lam * step
            if _in_domain(model, cand):
                rc = resid(cand)
                nc = float(np.linalg.norm(rc))
                if nc < norm:
                    theta, r, norm = cand, rc, nc
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            stalled = True
            break
    method = "newton"
    if norm > tol and theta.size == 1:
        theta, norm, extra = _bracket_root(psi, y, start, tol, bracket_step, bracket_steps, model)
        it += extra
        method = "bisection"
    if norm > tol or not np.all(np.isfinite(theta)):
        raise NoRootError(f"no root found: residual {norm:.3g} after {it} iterations (stalled={stalled})")
    S, V, cov, G = sandwich_parts(psi, y, theta)
    return EstimationResult(theta, S, V, cov, G, int(y.shape[0]), it, norm, method, {"functional": psi.name})


def _bracket_root(psi, y, start, tol, step, n_steps, model):
    if step is None:
        yy = np.asarray(y, dtype=float)
        if yy.ndim == 1 and yy.size > 1:
            q75, q25 = np.percentile(yy, [75, 25])
            step = (q75 - q25) / 5.0
        step = step if step and step > 0 else 0.05

    def g(t):
        return float(psi.mean(y, np.array([t]))[0])

    x0 = float(start[0])
    g0 = g(x0)
    if abs(g0) <= tol:
        return np.array([x0]), abs(g0), 0
    evals = 1
    prev = {1: (x0, g0), -1: (x0, g0)}
    for k in range(1, n_steps + 1):
        for sgn in (1, -1):
            x = x0 + sgn * k * step
            if not _in_domain(model, [x]):
                continue
            gx = g(x)
            evals += 1
            xp, gp = prev[sgn]
            if gx == 0.0:
                return np.array([x]), 0.0, evals
            if np.sign(gx) != np.sign(gp):
                a, b = sorted((xp, x))
                root = optimize.brentq(g, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
                return np.array([root]), abs(g(root)), evals
            prev[sgn] = (x, gx)
    raise NoRootError(f"no sign change within {n_steps} steps of {step:g} around the pilot")


def ecf_phase_estimator(data, u: float = 1.0, pilot: Optional[float] = None) -> EstimationResult:
    """Location from the phase of the empirical characteristic function.

    With ``z_n(u) = mean exp(i u X_j) = |z| exp(i alpha)`` the candidates are
    ``(alpha + 2 k pi) / u``; the one closest to the pilot is returned (ties
    go to the smaller ``|k|`` distance, then the smaller ``k``).  The result
    solves ``mean sin(u (X_j - theta)) = 0``; ``S_hat`` and ``V_hat`` are
    those of ``sinusoidal(c=u)`` at the estimate.

    Raises
    ------
    DegenerateError
        If ``|z_n(u)| < 3 / sqrt(n)``: the phase is indeterminate at noise level.
    """
    x = np.asarray(data, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise DomainError("no data")
    u = float(u)
    if not u > 0:
        raise DomainError("u must be positive")
    z = np.mean(np.exp(1j * u * x))
    if abs(z) < 3.0 / math.sqrt(n):
        raise DegenerateError(f"|z_n(u)| = {abs(z):.3g} below 3/sqrt(n) = {3.0 / math.sqrt(n):.3g}")
    alpha = float(np.angle(z))
    p = float(np.median(x)) if pilot is None else float(pilot)
    period = 2.0 * math.pi / u
    k_lo = math.floor((u * (p - period) - alpha) / (2.0 * math.pi))
    k_hi = math.ceil((u * (p + period) - alpha) / (2.0 * math.pi))
    ks = np.arange(k_lo, k_hi + 1)
    cands = (alpha + 2.0 * math.pi * ks) / u
    order = np.lexsort((ks, np.abs(cands - p)))
    theta = np.array([cands[order[0]]])
    psi = sinusoidal(u)
    S, V, cov, G = sandwich_parts(psi, x, theta)
    resid = float(abs(psi.mean(x, theta)[0]))
    return EstimationResult(
        theta, S, V, cov, G, n, 0, resid, "ecf-phase", {"u": u, "pilot": p, "modulus": abs(z), "k": int(ks[order[0]])}
    )


def gmm(
    psi: InferenceFunctional,
    data,
    pilot=None,
    steps: int = 2,
    *,
    tol: float = 1e-12,
    max_nfev: int = 2000,
) -> EstimationResult:
    """Generalised method of moments, ``min mean(Psi)' W mean(Psi)``.

    Step 1 uses ``W = I``; step 2 re-weights with ``W = V_hat^-1`` at the
    step-1 estimate.  The objective is minimised as a least-squares problem
    in the whitened moments ``L' mean(Psi)`` with ``W = L L'``.

    Raises
    ------
    SingularMatrixError
        If ``V_hat`` has condition number above 1e12.
    """
    if steps not in (1, 2):
        raise DomainError("steps must be 1 or 2")
    if psi.output_dim < psi.param_dim:
        raise DomainError("GMM needs at least as many moments as parameters")
    y = np.asarray(data)
    theta = _default_pilot(y) if pilot is None else np.atleast_1d(np.asarray(pilot, dtype=float)).copy()
    q = psi.output_dim
    W = np.eye(q)
    nfev = 0
    for stage in range(steps):
        if stage == 1:
            V = psi.eval(y, theta)
            V = V.T @ V / V.shape[0]
            cond = np.linalg.cond(V)
            if not np.isfinite(cond) or cond > _COND_MAX:
                raise SingularMatrixError(f"weight matrix is ill-conditioned (cond {cond:.3g})")
            W = np.linalg.inv(V)
            W = 0.5 * (W + W.T)
        L = np.linalg.cholesky(W)
        theta, fev = _gmm_stage(psi, y, theta, L, tol, max_nfev)
        nfev += fev
    S, V, cov, G = sandwich_parts(psi, y, theta, W=W if q > psi.param_dim else None)
    gbar = psi.mean(y, theta)
    foc = S.T @ W @ gbar
    resid = float(np.linalg.norm(gbar if q == psi.param_dim else foc))
    return EstimationResult(
        theta, S, V, cov, G, int(y.shape[0]), nfev, resid, f"gmm-{steps}step", {"W": W, "objective": float(gbar @ W @ gbar)}
    )


def _gmm_stage(psi, y, theta0, L, tol, max_nfev):
    penalty = 1e3

    def fun(t):
        try:
            return L.T @ psi.mean(y, t)
        except (DomainError, np.linalg.LinAlgError):
            return np.full(L.shape[0], penalty)

    def jac(t):
        try:
            return L.T @ psi.d_theta(y, t).mean(axis=0)
        except (DomainError, np.linalg.LinAlgError):
            return np.zeros((L.shape[0], t.size))

    sol = optimize.least_squares(
        fun, theta0, jac=jac, method="lm" if L.shape[0] >= theta0.size else "trf",
        xtol=tol, ftol=tol, gtol=tol, max_nfev=max_nfev,
    )
    return sol.x, int(sol.nfev)


def interval_mle_benchmark(
    model: ModelFamily,
    grid: BinGrid,
    counts,
    pilot=None,
    *,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> EstimationResult:
    """Grouped-data maximum likelihood, ``max sum_b n_b log p_b(theta)``.

    Fisher scoring with step halving on the log-likelihood.  The Godambe
    quantities are those of the pushforward score.

    Raises
    ------
    BoundaryError
        If fewer than two bins are occupied (the likelihood has no interior
        maximum) or the iterates leave the parameter domain.
    """
    counts = np.asarray(counts)
    if counts.shape != (grid.n_bins,) or np.any(counts < 0):
        raise DomainError("counts must be non-negative, one per bin")
    counts = counts.astype(float)
    N = counts.sum()
    if np.count_nonzero(counts) < 2:
        raise BoundaryError("fewer than two occupied bins: the maximum lies on the parameter boundary")
    occupied = np.flatnonzero(counts)
    if pilot is None:
        # bin-midpoint median as the pilot
        mids = grid.edges()[:-1] + 0.5 * grid.bin_width
        cum = np.cumsum(counts) / N
        theta = np.array([mids[int(np.searchsorted(cum, 0.5))]] + [1.0] * (model.param_dim - 1))
    else:
        theta = np.atleast_1d(np.asarray(pilot, dtype=float)).copy()
    psi = interval_score_if(model, grid)

    def loglik(t):
        p = bin_probabilities(model, t, grid)[occupied]
        if np.any(p <= 0):
            return -math.inf
        return float(counts[occupied] @ np.log(p))

    bins = np.arange(grid.n_bins)
    ll = loglik(theta)
    norm = math.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        probs = bin_probabilities(model, theta, grid)
        if np.any(probs[occupied] < _EMPTY_BIN):
            raise BoundaryError(f"an occupied bin has negligible probability at theta={theta}")
        score = counts[occupied] @ psi.eval(occupied, theta) / N
        norm = float(np.linalg.norm(score))
        if norm <= tol:
            converged = True
            break
        # bins with negligible mass carry no information
        live = bins[probs >= _EMPTY_BIN]
        table = psi.eval(live, theta)
        info = np.einsum("b,bi,bj->ij", probs[live], table, table)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise BoundaryError("information matrix singular during scoring") from exc
        # the bin score is a finite difference, so its norm bottoms out near 1e-10
        if float(np.linalg.norm(step)) <= _STEP_TOL * (1.0 + float(np.linalg.norm(theta))):
            converged = True
            break
        lam = 1.0
        for _ in range(30):
            cand = theta + lam * step
            if _in_domain(model, cand):
                lc = loglik(cand)
                # near the optimum the gain is below rounding in the log-likelihood
                if lc >= ll - 64.0 * np.finfo(float).eps * abs(ll):
                    break
            lam *= 0.5
        else:
            break
        theta, ll = cand, lc
        if np.any(np.abs(theta) > 1e6):
            raise BoundaryError("iterates diverged toward the parameter boundary")
    if not converged:
        raise BoundaryError(f"scoring did not converge (score norm {norm:.3g})")
    y = np.repeat(bins, counts.astype(int))
    S, V, cov, G = sandwich_parts(psi, y, theta)
    return EstimationResult(theta, S, V, cov, G, int(N), it, norm, "interval-mle", {"grid": grid})
