import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from stochbal.entropy import (M1, M2, EntropyApprox, LinearEntropy, QuadraticEntropy, QuadratureError,
                              entropy_flux_q, entropy_from_dict, entropy_residual, entropy_residuals,
                              eta_bar, eta_rho, flux_difference_bound, flux_difference_derivative,
                              kruzkov_flux)
from stochbal.model import FluxModel, Grid, InitialData, ModelError, NoiseModel
from stochbal.noise import uniform_path
from stochbal.solver import SolverConfig, solve

from conftest import make_problem

CUBIC = FluxModel.polynomial([0.0, 0.3, -1.0, 0.5])


class TestProfile:
    def test_zero(self):
        for rho in (1e-3, 0.5, 7.0):
            assert float(eta_rho(0.0, rho)[0]) == 0.0

    def test_value_at_one_by_quadrature(self):
        # integrate eta'' twice from 0 with zero data
        def d1(s):
            return integrate.quad(lambda x: 15 / 8 * (1 - x * x) ** 2, 0, s, epsabs=1e-14)[0]
        val = integrate.quad(d1, 0, 1, epsabs=1e-14)[0]
        assert val == pytest.approx(11 / 16, abs=1e-12)
        assert float(eta_bar(1.0)[0]) == pytest.approx(11 / 16, abs=1e-15)

    def test_outer_branch(self):
        rho = 0.3
        r = np.array([-2.0, -0.3, 0.3, 1.0, 5.0])
        np.testing.assert_allclose(eta_rho(r, rho)[0], np.abs(r) - 5 / 16 * rho, atol=1e-15)

    def test_constants(self):
        assert M1 == 5 / 16 and M2 == 15 / 8
        s = np.linspace(-1, 1, 100_001)
        v, _, d2 = eta_bar(s)
        assert np.max(np.abs(np.abs(s) - v)) == pytest.approx(5 / 16, abs=1e-12)
        assert np.max(d2) == pytest.approx(15 / 8)

    def test_c2_at_support_edge(self):
        for rho in (0.01, 1.0):
            for edge in (-rho, rho):
                lo = eta_rho(np.nextafter(edge, -np.inf), rho)
                hi = eta_rho(np.nextafter(edge, np.inf), rho)
                for a, b in zip(lo, hi):
                    assert abs(float(a) - float(b)) < 1e-8

    def test_derivatives_by_differences(self):
        rho, h = 0.7, 1e-6
        r = np.linspace(-1.5, 1.5, 31)
        v, d1, d2 = eta_rho(r, rho)
        fd1 = (eta_rho(r + h, rho)[0] - eta_rho(r - h, rho)[0]) / (2 * h)
        fd2 = (eta_rho(r + h, rho)[1] - eta_rho(r - h, rho)[1]) / (2 * h)
        np.testing.assert_allclose(d1, fd1, atol=1e-8)
        np.testing.assert_allclose(d2, fd2, atol=1e-6)

    def test_rho_positive(self):
        with pytest.raises(ModelError):
            eta_rho(0.1, 0.0)
        with pytest.raises(ModelError):
            EntropyApprox(-1.0)

    def test_sandwich_random(self):
        rng = np.random.default_rng(0)
        rho = 10 ** rng.uniform(-3, 1, 100_000)
        r = rng.uniform(-5, 5, 100_000) * rho
        v = eta_rho(r, rho)[0]
        tol = 1e-14 * (np.abs(r) + rho)  # the lower bound is attained for |r| >= rho
        assert np.all(v <= np.abs(r) + tol)
        assert np.all(v >= np.abs(r) - M1 * rho - tol)

    @given(st.floats(-50, 50), st.floats(1e-4, 10.0))
    def test_sandwich_and_convexity(self, r, rho):
        v, d1, d2 = (float(x) for x in eta_rho(r, rho))
        assert abs(r) - M1 * rho - 1e-12 <= v <= abs(r) + 1e-12
        assert abs(d1) <= 1.0 + 1e-15
        assert 0.0 <= d2 <= M2 / rho * (1 + 1e-12)
        if abs(r) >= rho:
            assert d2 == 0.0


class TestKruzkov:
    def test_examples(self):
        f = FluxModel.burgers()
        assert float(kruzkov_flux(1.3, 1.3, f)) == 0.0
        assert float(kruzkov_flux(1.0, 0.0, f)) == 0.5

    def test_symmetry(self, rng):
        u, v = rng.uniform(-3, 3, (2, 10_000))
        np.testing.assert_array_equal(kruzkov_flux(u, v, CUBIC), kruzkov_flux(v, u, CUBIC))

    def test_components(self):
        q = kruzkov_flux(np.array([1.0]), np.array([0.0]), FluxModel.burgers(), dim=2)
        assert q.shape == (1, 2) and np.all(q == 0.5)


class TestEntropyFlux:
    def test_equal_arguments(self):
        assert entropy_flux_q(0.4, 0.4, CUBIC, EntropyApprox(0.1)) == 0.0

    def test_kruzkov_limit(self):
        q = entropy_flux_q(1.0, 0.0, FluxModel.burgers(), EntropyApprox(1e-4))
        assert q == pytest.approx(0.5, abs=1e-3)

    @pytest.mark.parametrize("rho,k", [(0.5, 0.0), (0.05, 0.3), (2.0, -1.0)])
    def test_gauss_flux_matches_adaptive(self, rho, k):
        e = EntropyApprox(rho, k)
        u = np.linspace(-2.5, 2.5, 41)
        fast = e.flux(u, CUBIC)
        slow = np.array([entropy_flux_q(x, k, CUBIC, e) for x in u])
        np.testing.assert_allclose(fast, slow, atol=1e-10)

    def test_quadratic_and_linear_flux(self):
        u = np.linspace(-2, 2, 9)
        f = FluxModel.burgers()
        # q' = 2u * u  =>  q = 2u^3/3
        np.testing.assert_allclose(QuadraticEntropy().flux(u, f), 2 * u**3 / 3, atol=1e-14)
        np.testing.assert_allclose(LinearEntropy().flux(u, f), 0.5 * u**2)

    def test_quadrature_failure_reported(self):
        with pytest.raises(QuadratureError):
            entropy_flux_q(3.0, -3.0, CUBIC, EntropyApprox(0.5), tol=1e-300)

    def test_from_dict(self):
        e = entropy_from_dict({"kind": "eta_rho", "rho": 0.2, "k": 0.5})
        assert e == EntropyApprox(0.2, 0.5)
        assert entropy_from_dict(e.to_dict()) == e
        with pytest.raises(ModelError):
            entropy_from_dict({"kind": "cubic"})


class TestFluxDifferenceBound:
    @pytest.mark.parametrize("f", [FluxModel.burgers(), CUBIC])
    def test_bound_on_grid(self, f):
        g = np.linspace(-2, 2, 41)
        u, v = np.meshgrid(g, g, indexing="ij")
        for rho in (1.0, 0.1, 0.01):
            der = flux_difference_derivative(u, v, f, EntropyApprox(rho))
            assert np.max(np.abs(der)) <= flux_difference_bound(f, rho, (-2 - rho, 2 + rho)) * (1 + 1e-8)

    def test_closed_form_against_quadrature(self):
        h = 1e-4
        for rho in (0.5, 0.05):
            e = EntropyApprox(rho)
            for u, v in [(0.3, -0.2), (1.7, 1.69), (-1.0, 0.5), (0.05, 0.0)]:
                def qd(x):
                    return entropy_flux_q(x, v, CUBIC, e) - entropy_flux_q(v, x, CUBIC, e)
                fd = (qd(u + h) - qd(u - h)) / (2 * h)
                assert float(flux_difference_derivative(np.array(u), np.array(v), CUBIC, e)) == \
                    pytest.approx(fd, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(1e-3, 1.0))
    def test_bound_property(self, u, v, rho):
        der = float(flux_difference_derivative(np.array(u), np.array(v), CUBIC, EntropyApprox(rho)))
        assert abs(der) <= flux_difference_bound(CUBIC, rho, (-2 - rho, 2 + rho)) * (1 + 1e-8)


def _bump(center, width):
    def phi(x, *rest):
        d = np.abs(x - center)
        return np.where(d < width, np.cos(0.5 * np.pi * d / width) ** 2, 0.0)
    return phi


class TestResidual:
    def test_smooth_advection_vanishes_with_h(self):
        res = []
        for n in (128, 256, 512):
            g = Grid.uniform(n)
            p = make_problem(flux=FluxModel.linear(1.0), initial=InitialData.make("sine"), T=0.5)
            tr = solve(p, g, uniform_path(0, 0.5, 4), SolverConfig(record_steps=True))
            res.append(abs(entropy_residual(tr, tr.path, QuadraticEntropy(), _bump(math.pi, 1.0), 0.0, 0.5)))
        assert res[2] < res[1] < res[0] < 0.05
        assert res[0] / res[2] > 3.0

    def test_shock_production(self):
        g = Grid.uniform(512)
        p = make_problem(initial=InitialData.make("riemann", left=1.0, right=0.0))
        tr = solve(p, g, uniform_path(0, 0.5, 8), SolverConfig(record_steps=True))
        shock = 0.75 * 2 * math.pi + 0.15
        val = entropy_residual(tr, tr.path, EntropyApprox(0.05, 0.5), _bump(shock, 0.8), 0.1, 0.5)
        assert val > 0.05

    def test_linear_entropy_is_conserved(self):
        g = Grid.uniform(256)
        p = make_problem(initial=InitialData.make("riemann", left=1.0, right=0.0))
        tr = solve(p, g, uniform_path(0, 0.5, 8), SolverConfig(record_steps=True))
        val = entropy_residual(tr, tr.path, LinearEntropy(), np.ones(256), 0.0, 0.5)
        assert abs(val) < 1e-12

    def test_vectorised_matches_single(self):
        g = Grid.uniform(128)
        p = make_problem(noise=NoiseModel.linear(0.3), eps=2e-3)
        tr = solve(p, g, uniform_path(4, 0.5, 8), SolverConfig(record_steps=True))
        phis = [_bump(2.0, 0.8), _bump(4.0, 1.0)]
        e = EntropyApprox(0.1, 0.5)
        many = entropy_residuals(tr, tr.path, e, phis, 0.1, 0.5)
        assert many == [entropy_residual(tr, tr.path, e, phi, 0.1, 0.5) for phi in phis]

    def test_preconditions(self):
        g = Grid.uniform(64)
        p = make_problem()
        tr = solve(p, g, uniform_path(0, 0.5, 4))
        with pytest.raises(ModelError):
            entropy_residual(tr, tr.path, LinearEntropy(), np.ones(64), 0.0, 0.5)
        tr = solve(p, g, uniform_path(0, 0.5, 4), SolverConfig(record_steps=True))
        with pytest.raises(ModelError):
            entropy_residual(tr, tr.path, LinearEntropy(), -np.ones(64), 0.0, 0.5)
        with pytest.raises(ModelError):
            entropy_residual(tr, uniform_path(1, 0.5, 4), LinearEntropy(), np.ones(64), 0.0, 0.5)
        with pytest.raises(ModelError):
            entropy_residual(tr, tr.path, LinearEntropy(), np.ones(64), 0.3, 0.2)
