import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sci_integrate
from scipy import stats

from obsinfer.errors import DegenerateError, DomainError
from obsinfer.inference import POINT, interval_score_if, interval_sinusoidal, score_if, sinusoidal
from obsinfer.information import (
    are_curve,
    elliptical_are,
    elliptical_are_direction,
    fisher_binned,
    fisher_classical,
    fisher_interval,
    fisher_kernel_weighted,
    godambe_numeric,
    godambe_sinusoidal_closed,
    hierarchy_report,
    locscale_are,
    locscale_godambe,
    loewner_geq,
    pushforward_information,
)
from obsinfer.kernels import CLASSICAL, KernelProfile
from obsinfer.models import cauchy_location, gaussian_location, location_scale, student_t_location
from obsinfer.observation import BinGrid, ObservationOperator
from obsinfer.specialfn import TIGHT_SPEC, radial_generator

Z = np.zeros(1)


def gauss_kernel_info(s2):
    # f phi / c for N(theta, 1) and a peak-1 N(0, s2) kernel is N(theta s2/(1+s2), s2/(1+s2))
    slope = s2 / (1 + s2)
    return slope**2 / (s2 / (1 + s2))


class TestFisherClassical:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0])
    def test_gaussian(self, sigma):
        assert fisher_classical(gaussian_location(sigma), Z)[0, 0] == pytest.approx(1 / sigma**2, rel=1e-9)

    @pytest.mark.parametrize("nu", [1.0, 2.0, 5.0, 30.0])
    def test_student_closed_form(self, nu):
        # I = (nu + 1) / (nu + 3) for the unit-scale t location family
        assert fisher_classical(student_t_location(nu), [0.3])[0, 0] == pytest.approx((nu + 1) / (nu + 3), rel=1e-8)

    def test_cauchy(self):
        assert fisher_classical(cauchy_location(), [2.0])[0, 0] == pytest.approx(0.5, rel=1e-9)

    def test_location_scale_matrix(self):
        # normal location-scale: diag(1/s^2, 2/s^2)
        I = fisher_classical(location_scale("normal"), [0.0, 2.0])
        assert I == pytest.approx(np.diag([0.25, 0.5]), abs=1e-8)


class TestFisherKernelWeighted:
    def test_classical_limit(self):
        m = cauchy_location()
        assert fisher_kernel_weighted(m, CLASSICAL, Z) == pytest.approx(fisher_classical(m, Z)[0, 0])

    def test_cauchy_two_tolerances(self):
        i1 = fisher_kernel_weighted(cauchy_location(), KernelProfile.gaussian(1.0), Z)
        i2 = fisher_kernel_weighted(cauchy_location(), KernelProfile.gaussian(1.0), Z, spec=TIGHT_SPEC)
        assert i1 == pytest.approx(i2, rel=1e-7)
        assert i1 == pytest.approx(0.525135276, rel=1e-8)

    @pytest.mark.xfail(strict=True, reason="the tilted Cauchy law carries more location information than 1/2 at unit kernel width")
    def test_cauchy_published_claim_below_classical(self):
        assert fisher_kernel_weighted(cauchy_location(), KernelProfile.gaussian(1.0), Z) < 0.5

    def test_cauchy_narrow_kernel_below_classical(self):
        assert fisher_kernel_weighted(cauchy_location(), KernelProfile.gaussian(0.5), Z) < 0.5

    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0, 5.0])
    @pytest.mark.parametrize("theta", [0.0, 1.3])
    def test_gaussian_pair_closed_form(self, s, theta):
        got = fisher_kernel_weighted(gaussian_location(), KernelProfile.gaussian(s), [theta])
        assert got == pytest.approx(gauss_kernel_info(s * s), rel=1e-6)

    def test_monotone_approach(self):
        vals = [fisher_kernel_weighted(gaussian_location(), KernelProfile.gaussian(s), Z) for s in (1, 4, 16, 64)]
        assert all(a < b for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(1.0, abs=1e-3)
        assert all(v <= 1.0 + 1e-9 for v in vals)

    def test_continuous_in_width(self):
        m = gaussian_location()
        a = fisher_kernel_weighted(m, KernelProfile.gaussian(1.0), Z)
        b = fisher_kernel_weighted(m, KernelProfile.gaussian(1.0 + 1e-6), Z)
        assert abs(a - b) < 1e-5

    def test_score_variance_oracle(self):
        # independent oracle: variance of the pushforward score by direct quadrature
        s2 = 4.0
        k = KernelProfile.gaussian(2.0)
        cauchy = cauchy_location()

        def f(x, t):
            return 1.0 / (math.pi * (1 + (x - t) ** 2))

        def c_of(t):
            return sci_integrate.quad(lambda x: f(x, t) * math.exp(-x * x / (2 * s2)), -np.inf, np.inf, epsabs=1e-13)[0]

        h = 1e-4
        c0 = c_of(0.0)
        cdot = (c_of(h) - c_of(-h)) / (2 * h)

        def integrand(x):
            s = 2 * x / (1 + x * x) - cdot / c0
            return s * s * f(x, 0.0) * math.exp(-x * x / (2 * s2)) / c0

        oracle = sci_integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13)[0]
        assert fisher_kernel_weighted(cauchy, k, Z) == pytest.approx(oracle, rel=1e-6)


class TestFisherInterval:
    def test_half_line(self):
        assert fisher_interval(gaussian_location(), (0.0, math.inf), Z) == pytest.approx(2 / math.pi, rel=1e-8)

    def test_full_line(self):
        with pytest.raises(DegenerateError):
            fisher_interval(gaussian_location(), (-math.inf, math.inf), Z)

    def test_two_bin_grid_equals_single_interval(self):
        g = BinGrid(-1.0, 1.5, 2)
        m = student_t_location(3.0)
        a = fisher_binned(m, g, [0.2])[0, 0]
        b = fisher_interval(m, (0.5, math.inf), [0.2])
        assert a == pytest.approx(b, rel=1e-6)

    def test_binned_refinement_monotone(self):
        vals = [fisher_binned(gaussian_location(), BinGrid.symmetric(10.0, w), [0.3])[0, 0] for w in (2.0, 1.0, 0.5, 0.25)]
        assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
        assert vals[-1] >= 0.95
        assert vals[-1] < 1.0

    def test_binned_oracle(self):
        # multinomial information from scipy's normal cdf and pdf
        g = BinGrid.symmetric(6.0, 1.0)
        e = g.edges()
        lo = np.concatenate([[-np.inf], e[1:-1]])
        hi = np.concatenate([e[1:-1], [np.inf]])
        p = stats.norm.cdf(hi - 0.4) - stats.norm.cdf(lo - 0.4)
        dp = stats.norm.pdf(lo - 0.4) - stats.norm.pdf(hi - 0.4)
        assert fisher_binned(gaussian_location(), g, [0.4])[0, 0] == pytest.approx(np.sum(dp**2 / p), rel=1e-7)


GRID_C = [0.25, 0.5, 1.0, 2.0]
FAMILIES = [("cauchy", None, cauchy_location()), ("student", 3.0, student_t_location(3.0)), ("gaussian", None, gaussian_location())]


class TestGodambe:
    @pytest.mark.parametrize("c", GRID_C)
    @pytest.mark.parametrize("fam,nu,model", FAMILIES)
    def test_closed_vs_numeric(self, fam, nu, model, c):
        closed = godambe_sinusoidal_closed(fam, c, nu)
        numeric = godambe_numeric(sinusoidal(c), model, POINT, Z).G[0, 0]
        assert numeric == pytest.approx(closed, rel=1e-6)

    def test_cauchy_closed_form(self):
        # S = c e^{-c}, V = (1 - e^{-2c}) / 2 for the standard Cauchy
        for c in (0.3, 1.0, 2.5):
            expected = (c * math.exp(-c)) ** 2 / ((1 - math.exp(-2 * c)) / 2)
            assert godambe_sinusoidal_closed("cauchy", c) == pytest.approx(expected, rel=1e-14)

    def test_cauchy_c1_against_monte_carlo(self):
        res = godambe_numeric(sinusoidal(1.0), cauchy_location(), POINT, Z, route="monte-carlo",
                              draws=1_000_000, rng=np.random.default_rng(0))
        closed = godambe_sinusoidal_closed("cauchy", 1.0)
        # delta-method spread of G from 1e6 draws is about 0.3 %
        assert res.G[0, 0] == pytest.approx(closed, rel=0.01)

    def test_student_c1(self):
        g1, g4 = radial_generator(3.0, 1.0), radial_generator(3.0, 4.0)
        assert godambe_sinusoidal_closed("student", 1.0, 3.0) == pytest.approx(2 * g1**2 / (1 - g4), rel=1e-14)

    def test_gaussian_small_c(self):
        assert godambe_sinusoidal_closed("gaussian", 1e-4) == pytest.approx(1.0, rel=1e-7)

    @pytest.mark.parametrize("fam,nu,model", FAMILIES)
    def test_score_is_optimal(self, fam, nu, model):
        i_c = fisher_classical(model, Z)[0, 0]
        assert godambe_numeric(score_if(model), model, POINT, Z).G[0, 0] == pytest.approx(i_c, rel=1e-6)
        for c in np.linspace(0.05, 3.0, 15):
            assert godambe_sinusoidal_closed(fam, c, nu) <= i_c + 1e-12

    def test_interval_sinusoidal_below_binned_information(self):
        g = BinGrid.symmetric(8.0, 1.0)
        m = gaussian_location()
        op = ObservationOperator.interval(g)
        G = godambe_numeric(interval_sinusoidal(1.0, m, g), m, op, [0.2]).G[0, 0]
        assert G <= fisher_binned(m, g, [0.2])[0, 0] + 1e-10

    def test_invalid_c(self):
        with pytest.raises(DomainError):
            godambe_sinusoidal_closed("cauchy", 0.0)


class TestLocationScale:
    def test_unit_u(self):
        assert locscale_are(1.0, 1.0) == pytest.approx(1 / math.sinh(1.0), abs=1e-10)

    @given(st.floats(0.05, 3.0), st.floats(0.1, 4.0))
    def test_u_over_sinh(self, c, sigma):
        u = (c * sigma) ** 2
        assert locscale_are(c, sigma) == pytest.approx(u / math.sinh(u), rel=1e-10)

    def test_small_u(self):
        assert locscale_are(1e-4, 1.0) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("nu", [3.0, 7.0])
    def test_scale_one_reduces(self, nu):
        base_cf = lambda t: float(radial_generator(nu, t * t))  # noqa: E731
        assert locscale_godambe(0.8, 1.0, base_cf) == pytest.approx(godambe_sinusoidal_closed("student", 0.8, nu), rel=1e-14)

    def test_monotone_decreasing(self):
        vals = [locscale_are(c, 1.0) for c in np.linspace(0.1, 3, 30)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestElliptical:
    def test_small_c(self):
        assert elliptical_are([1.0], [[1.0]], 0.05) > 0.99

    def test_optimal_direction_identity(self):
        rng = np.random.default_rng(6)
        for _ in range(3):
            A = rng.normal(size=(3, 3))
            Sigma = A @ A.T + 0.5 * np.eye(3)
            a = rng.normal(size=3)
            c = 0.7
            v = c * np.linalg.solve(Sigma, a)
            assert elliptical_are_direction(a, Sigma, v) == pytest.approx(elliptical_are(a, Sigma, c), abs=1e-12)

    @given(st.floats(0.1, 3.0), st.floats(0.2, 3.0))
    def test_dim_one_matches_locscale(self, c, sigma):
        # the one-dimensional gaussian case of the sinusoidal ARE, with v = c / sigma^2 * a
        a = elliptical_are([1.0], [[sigma**2]], c)
        u = c * c / sigma**2
        assert a == pytest.approx(locscale_are(c / sigma, 1.0), rel=1e-10)
        assert a == pytest.approx(u / math.sinh(u), rel=1e-10)

    def test_non_spd(self):
        with pytest.raises(DomainError):
            elliptical_are([1.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], 0.5)


class TestHierarchy:
    def test_gaussian_classical_score_equal(self):
        r = hierarchy_report(gaussian_location(), ObservationOperator.kernel_weighted(CLASSICAL), score_if(gaussian_location()), Z)
        assert r.ok
        for name in ("I_classical", "I_O", "G_psi"):
            assert r.scalar(name) == pytest.approx(1.0, abs=1e-6)

    def test_cauchy_kernel_sinusoidal(self):
        m = cauchy_location()
        r = hierarchy_report(m, ObservationOperator.kernel_weighted(KernelProfile.gaussian(1.0)), sinusoidal(1.0), Z)
        assert r.scalar("I_classical") == pytest.approx(0.5, rel=1e-8)
        assert r.scalar("G_psi") < r.scalar("I_O") - 1e-3
        # the observation gap is negative here and must be reported
        assert r.flags["observation_gap_negative"] and not r.ok

    def test_cauchy_narrow_kernel_strict(self):
        m = cauchy_location()
        r = hierarchy_report(m, ObservationOperator.kernel_weighted(KernelProfile.gaussian(0.5)), sinusoidal(1.0), Z)
        assert r.ok
        assert r.scalar("I_O") < 0.5 - 1e-3
        assert r.scalar("G_psi") < r.scalar("I_O") - 1e-3

    def test_interval_mle_score_attains_pushforward(self):
        g = BinGrid.symmetric(8.0, 1.0)
        m = gaussian_location()
        r = hierarchy_report(m, ObservationOperator.interval(g), interval_score_if(m, g), Z)
        assert r.ok
        assert r.scalar("I_classical") > r.scalar("I_O") + 1e-3
        assert r.scalar("I_O") == pytest.approx(r.scalar("G_psi"), rel=1e-6)

    @pytest.mark.parametrize("model", [gaussian_location(), student_t_location(3.0), cauchy_location()])
    @pytest.mark.parametrize("op", [POINT, ObservationOperator.kernel_weighted(KernelProfile.gaussian(0.5)),
                                    ObservationOperator.interval(BinGrid.symmetric(8.0, 2.0))])
    def test_costs_are_differences(self, model, op):
        psi = interval_sinusoidal(1.0, model, op.grid) if op.variant == "interval" else sinusoidal(1.0)
        r = hierarchy_report(model, op, psi, Z)
        assert not r.flags["error"]
        assert r.observation_cost == pytest.approx(r.I_classical - r.I_O)
        assert r.estimation_cost == pytest.approx(r.I_O - r.G_psi)
        assert r.scalar("estimation_cost") >= -1e-6

    def test_errors_reported_not_raised(self):
        g = BinGrid.symmetric(8.0, 1.0)
        # a point functional on interval data cannot be evaluated
        r = hierarchy_report(gaussian_location(), ObservationOperator.interval(g), sinusoidal(1.0), Z)
        assert r.flags["error"] and not r.ok

    def test_location_scale_matrix_order(self):
        m = location_scale("normal")
        r = hierarchy_report(m, POINT, score_if(m), [0.0, 1.5])
        assert r.ok


def test_loewner_geq():
    assert loewner_geq(1.0, 1.0 + 1e-8)[0]
    assert not loewner_geq(1.0, 1.1)[0]
    ok, m = loewner_geq(np.diag([2.0, 1.0]), np.diag([1.0, 1.5]))
    assert not ok and m == pytest.approx(-0.5)


def test_pushforward_information_dispatch():
    m = gaussian_location()
    assert pushforward_information(m, POINT, Z)[0, 0] == pytest.approx(1.0)
    k = ObservationOperator.kernel_weighted(KernelProfile.gaussian(1.0))
    assert pushforward_information(m, k, Z)[0, 0] == pytest.approx(0.5, rel=1e-6)


class TestAreCurve:
    def test_cauchy_values_and_note(self):
        curve = are_curve("cauchy", [0.2, 0.56, 0.8, 1.5])
        row = curve.rows[1]
        c = 0.56
        assert row[3] == pytest.approx(4 * c * c * math.exp(-2 * c) / (1 - math.exp(-2 * c)), rel=1e-12)
        assert curve.argmax[0] == 0.8
        assert "0.56" in curve.note and "discrepancy" in curve.note
        assert "ARE -> 0" in curve.limit_note

    def test_gaussian_monotone(self):
        grid = np.linspace(0.05, 3, 40)
        curve = are_curve("gaussian", grid)
        ares = [r[3] for r in curve.rows]
        assert all(a > b for a, b in zip(ares, ares[1:]))
        assert curve.argmax[0] == pytest.approx(0.05)
        assert curve.note == ""

    @pytest.mark.parametrize("fam,nu,limit", [("gaussian", None, 1.0), ("student", 3.0, 0.5), ("student", 7.0, 50 / 56), ("cauchy", None, 0.0)])
    def test_small_c_limit(self, fam, nu, limit):
        # series oracle: g(s) = 1 - Var s / 2 + o(s) when the variance is finite, so ARE -> 1 / (Var I)
        c = 1e-3
        curve = are_curve(fam, [c], nu)
        assert curve.rows[0][3] == pytest.approx(limit, abs=3 * c)
        assert f"ARE -> {limit:.6g}" in curve.limit_note or (limit in (0.0, 1.0) and f"ARE -> {limit:g}" in curve.limit_note)

    def test_invalid_grid(self):
        with pytest.raises(DomainError):
            are_curve("cauchy", [])
        with pytest.raises(DomainError):
            are_curve("cauchy", [0.0, 1.0])
