import math

import numpy as np
import pytest
from scipy import integrate as sci_integrate

from obsinfer.errors import DomainError, SingularMatrixError
from obsinfer.estimation import solve_z
from obsinfer.inference import InferenceFunctional, sinusoidal
from obsinfer.information import locscale_godambe, loewner_geq
from obsinfer.models import location_scale
from obsinfer.nuisance import (
    PartitionedModel,
    bhapkar_godambe_project,
    nuisance_godambe,
    orthogonality_check,
    projection_coefficients,
)

NORMAL = location_scale("normal")
T3 = location_scale("student", 3.0)


def score_component(model, j):
    return InferenceFunctional(
        f"U[{j}]", lambda y, t: np.asarray(model.score(np.asarray(y, dtype=float), t)).reshape(-1, model.param_dim)[:, [j]],
        1, model.param_dim,
    )


def t3_oracle_moment(fn, mu, sigma):
    # independent quadrature of E[fn(x)] under the t3 location-scale law
    dens = lambda x: 6 * math.sqrt(3) / (math.pi * sigma * (3 + ((x - mu) / sigma) ** 2) ** 2)  # noqa: E731
    return sci_integrate.quad(lambda x: fn(x) * dens(x), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13, limit=500)[0]


class TestPartitionedModel:
    def test_valid(self):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        assert pm.nuisance_score(np.array([1.0, 2.0]), [0.0, 1.0]).shape == (2, 1)

    @pytest.mark.parametrize("a,b", [((0,), (0, 1)), ((0,), ()), ((0, 1, 2), ())])
    def test_invalid_indices(self, a, b):
        with pytest.raises(DomainError):
            PartitionedModel(NORMAL, a, b)


class TestProjection:
    def test_orthogonal_phi_unchanged(self):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        psi = sinusoidal(1.0, param_dim=2)
        proj = bhapkar_godambe_project(psi, pm, [0.3, 1.4])
        y = np.linspace(-5, 5, 21)
        assert np.allclose(proj.eval(y, [0.3, 1.4]), psi.eval(y, [0.3, 1.4]), atol=1e-10)

    def test_gaussian_location_score_unchanged(self):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        u_mu = score_component(NORMAL, 0)
        proj = bhapkar_godambe_project(u_mu, pm, [0.0, 2.0])
        y = np.linspace(-6, 6, 25)
        assert np.allclose(proj.eval(y, [0.0, 2.0]), u_mu.eval(y, [0.0, 2.0]), atol=1e-10)

    def test_t3_projected_score_orthogonal(self):
        pm = PartitionedModel(T3, (0,), (1,))
        theta = np.array([0.4, 1.7])
        # a skewed interest functional so the projection is not trivially zero
        phi = InferenceFunctional("skew", lambda y, t: (np.tanh(np.asarray(y, float) - t[0]) + 0.3 * np.tanh(np.asarray(y, float) - t[0]) ** 2)[:, None], 1, 2)
        proj = bhapkar_godambe_project(phi, pm, theta)
        u_sigma = lambda x: pm.nuisance_score(np.array([x]), theta)[0, 0]  # noqa: E731
        before = t3_oracle_moment(lambda x: phi.eval(np.array([x]), theta)[0, 0] * u_sigma(x), *theta)
        after = t3_oracle_moment(lambda x: proj.eval(np.array([x]), theta)[0, 0] * u_sigma(x), *theta)
        assert abs(before) > 1e-2
        assert abs(after) < 1e-8

    def test_idempotent(self):
        pm = PartitionedModel(T3, (0,), (1,))
        theta = np.array([0.0, 1.0])
        phi = InferenceFunctional("sq", lambda y, t: ((np.asarray(y, float) - t[0]) ** 2 / (1 + (np.asarray(y, float) - t[0]) ** 2))[:, None], 1, 2)
        once = bhapkar_godambe_project(phi, pm, theta)
        C = projection_coefficients(once, pm, theta)
        assert np.max(np.abs(C)) < 1e-10
        twice = bhapkar_godambe_project(once, pm, theta)
        y = np.linspace(-4, 4, 17)
        assert np.allclose(twice.eval(y, theta), once.eval(y, theta), atol=1e-10)

    def test_norm_reduction(self):
        pm = PartitionedModel(T3, (0,), (1,))
        theta = np.array([0.0, 1.0])
        phi = InferenceFunctional("sq", lambda y, t: np.column_stack([np.tanh(np.asarray(y, float) - t[0]), (np.asarray(y, float) - t[0]) ** 2 / (1 + (np.asarray(y, float) - t[0]) ** 2)]), 2, 2)
        proj = bhapkar_godambe_project(phi, pm, theta)
        def second(f):
            return np.array([[t3_oracle_moment(lambda x: f(x)[i] * f(x)[j], *theta) for j in range(2)] for i in range(2)])
        A = second(lambda x: phi.eval(np.array([x]), theta)[0])
        B = second(lambda x: proj.eval(np.array([x]), theta)[0])
        assert loewner_geq(A, B, 1e-9)[0]

    def test_singular_nuisance_information(self):
        # a nuisance coordinate the density ignores has zero score
        degenerate = location_scale("normal")
        from dataclasses import replace

        flat = replace(degenerate, score=lambda x, t: np.column_stack([np.asarray(x, float) - t[0], np.zeros(np.size(x))]))
        pm = PartitionedModel(flat, (0,), (1,))
        with pytest.raises(SingularMatrixError):
            bhapkar_godambe_project(sinusoidal(1.0, param_dim=2), pm, [0.0, 1.0])

    def test_refresh_hook_in_solver(self):
        pm = PartitionedModel(T3, (0,), (1,))
        phi = InferenceFunctional("skew", lambda y, t: (np.tanh(np.asarray(y, float) - t[0]) + 0.2)[:, None], 1, 2)
        proj = bhapkar_godambe_project(phi, pm, [0.0, 1.0])
        assert proj.info["local"] and callable(proj.info["refresh"])
        proj.info["refresh"](np.array([0.5, 2.0]))
        assert np.allclose(proj.info["state"]["theta"], [0.5, 2.0])
        assert np.allclose(proj.info["state"]["C"], projection_coefficients(phi, pm, [0.5, 2.0]))

    def test_nonlocal_recomputes(self):
        pm = PartitionedModel(T3, (0,), (1,))
        phi = InferenceFunctional("skew", lambda y, t: (np.tanh(np.asarray(y, float) - t[0]) + 0.2)[:, None], 1, 2)
        proj = bhapkar_godambe_project(phi, pm, [0.0, 1.0], local=False)
        v = proj.eval(np.array([0.3]), [0.0, 2.0])[0, 0]
        C = projection_coefficients(phi, pm, [0.0, 2.0])
        expected = phi.eval(np.array([0.3]), [0.0, 2.0])[0, 0] - C[0, 0] * pm.nuisance_score(np.array([0.3]), [0.0, 2.0])[0, 0]
        assert v == pytest.approx(expected, abs=1e-14)


class TestOrthogonality:
    def test_sinusoidal_normal_locscale(self):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        rep = orthogonality_check(sinusoidal(1.0, param_dim=2), pm, [[0.0, s] for s in (0.5, 1.0, 2.0, 4.0)])
        assert rep.max_residual < 1e-8

    def test_biased_functional_detected(self):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        psi = InferenceFunctional("biased", lambda y, t: ((np.asarray(y, float) - t[0]) + 0.1 * (np.asarray(y, float) - t[0]) ** 2)[:, None], 1, 2)
        rep = orthogonality_check(psi, pm, [[0.0, 1.0]])
        # E[(x - mu)^2 U_sigma] = E[(x-mu)^2 ((x-mu)^2 - s^2) / s^3] = 2 s for the normal law
        assert rep.max_residual == pytest.approx(0.1 * 2.0, rel=1e-8)

    def test_self_product(self):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        rep = orthogonality_check(score_component(NORMAL, 1), pm, [[0.0, 2.0]])
        assert rep.max_residual == pytest.approx(2.0 / 4.0, rel=1e-8)

    def test_empty_grid(self):
        with pytest.raises(DomainError):
            orthogonality_check(sinusoidal(1.0, param_dim=2), PartitionedModel(NORMAL, (0,), (1,)), [])


class TestNuisanceGodambe:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("c", [0.5, 1.0])
    def test_sinusoidal_matches_closed_form(self, c, sigma):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        J = nuisance_godambe(sinusoidal(c, param_dim=2), pm, [0.0, sigma])[0, 0]
        assert J == pytest.approx(locscale_godambe(c, sigma, lambda t: math.exp(-t * t / 2)), rel=1e-8)

    def test_efficient_score(self):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        for sigma in (0.5, 2.0):
            proj = bhapkar_godambe_project(score_component(NORMAL, 0), pm, [0.0, sigma])
            assert nuisance_godambe(proj, pm, [0.0, sigma])[0, 0] == pytest.approx(1 / sigma**2, rel=1e-8)

    def test_depends_on_sigma(self):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        psi = sinusoidal(1.0, param_dim=2)
        assert nuisance_godambe(psi, pm, [0.0, 1.0])[0, 0] != pytest.approx(nuisance_godambe(psi, pm, [0.0, 2.0])[0, 0], rel=1e-3)

    @pytest.mark.parametrize("c", [0.1, 0.5, 1.0, 2.0, 3.0])
    def test_projected_score_is_optimal(self, c):
        pm = PartitionedModel(NORMAL, (0,), (1,))
        theta = [0.0, 1.3]
        eff = nuisance_godambe(bhapkar_godambe_project(score_component(NORMAL, 0), pm, theta), pm, theta)[0, 0]
        assert nuisance_godambe(sinusoidal(c, param_dim=2), pm, theta)[0, 0] <= eff + 1e-9


def test_projected_estimator_solves():
    pm = PartitionedModel(T3, (0,), (1,))
    rng = np.random.default_rng(21)
    y = 1.0 + 1.5 * rng.standard_t(3, 4000)
    u_mu = score_component(T3, 0)
    # sigma known for the solve: a one-parameter slice of the projected score
    proj = bhapkar_godambe_project(u_mu, pm, [1.0, 1.5])
    sliced = InferenceFunctional("slice", lambda yy, t: proj.eval(yy, [t[0], 1.5]), 1, 1)
    r = solve_z(sliced, y)
    assert abs(r.theta_hat[0] - 1.0) < 4 * r.standard_errors[0]
