import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from stochbal.estimators import (EstimateError, EstimateReport, Mollifier, append_csv, besov_dual_modulus,
                                 bv_seminorm, fit_rate, l1_distance, lattice_shifts, lp_norm, mc_expectation,
                                 mc_vector, symmetric_translation_modulus, temporal_l1_modulus,
                                 translation_modulus)
from stochbal.model import Field, FluxModel, Grid, InitialData, ModelError, NoiseModel
from stochbal.noise import uniform_path
from stochbal.solver import BlowUpError, SolverConfig, solve

from conftest import make_problem


def naive_tv(v, h):
    total = 0.0
    if v.ndim == 1:
        for j in range(v.size):
            total += abs(v[(j + 1) % v.size] - v[j])
        return total
    n0, n1 = v.shape
    for i in range(n0):
        for j in range(n1):
            total += (abs(v[(i + 1) % n0, j] - v[i, j]) + abs(v[i, (j + 1) % n1] - v[i, j])) * h
    return total


class TestNorms:
    def test_tv_examples(self):
        g = Grid.uniform(4, 4.0)
        assert bv_seminorm(Field(g, np.full(4, 2.5))) == 0.0
        assert bv_seminorm(Field(g, [0.0, 1.0, 0.0, 0.0])) == 2.0

    @pytest.mark.parametrize("dim", [1, 2])
    def test_tv_naive(self, dim, rng):
        g = Grid.uniform(24, 3.0, dim=dim)
        v = rng.standard_normal(g.shape)
        assert bv_seminorm(Field(g, v)) == pytest.approx(naive_tv(v, g.spacing[0]), abs=1e-12)

    def test_lp_examples(self):
        g = Grid.uniform(10, 1.0)
        for p in (1, 2, 3.5):
            assert lp_norm(Field(g, np.full(10, -1.7)), p) == pytest.approx(1.7)
        half = (g.centers() < 0.5).astype(float)
        assert lp_norm(Field(g, half), 1) == pytest.approx(0.5)

    def test_lp_naive(self, rng):
        g = Grid.uniform(37, 2.0)
        v = rng.standard_normal(37)
        for p in (1, 2, 3):
            naive = sum(abs(x) ** p * g.spacing[0] for x in v) ** (1 / p)
            assert lp_norm(Field(g, v), p) == pytest.approx(naive, abs=1e-12)

    def test_l1_distance(self, rng):
        g = Grid.uniform(16, 2.0)
        a, b = rng.standard_normal((2, 16))
        assert l1_distance(Field(g, a), Field(g, b)) == pytest.approx(np.abs(a - b).sum() / 8)


class TestTemporal:
    def _traj(self, p, n=256, divs=32):
        g = Grid.uniform(n)
        times = tuple(p.T * i / divs for i in range(divs + 1))
        return solve(p, g, uniform_path(0, p.T, divs), SolverConfig(snapshot_times=times))

    def test_zero_dt(self):
        tr = self._traj(make_problem())
        assert temporal_l1_modulus(tr, 0.0) == 0.0

    def test_frozen(self):
        tr = self._traj(make_problem(flux=FluxModel.zero()))
        for k in (1, 2, 4):
            assert temporal_l1_modulus(tr, k * 0.5 / 32) == 0.0

    def test_advection(self):
        p = make_problem(flux=FluxModel.linear(1.0), initial=InitialData.make("sine"), T=0.5)
        tr = self._traj(p, n=2048)
        u0 = p.initial.sample(tr.grid)
        dt = 0.5 / 32
        # translation identity: int |sin(x - a) - sin x| dx = 8 |sin(a / 2)| over one period
        expected = 8 * abs(math.sin(dt / 2))
        assert temporal_l1_modulus(tr, dt, (0.0, 0.0)) == pytest.approx(expected, rel=0.02)
        assert expected == pytest.approx(dt * bv_seminorm(u0), rel=1e-3)

    def test_non_multiple(self):
        tr = self._traj(make_problem())
        with pytest.raises(EstimateError):
            temporal_l1_modulus(tr, 0.01)


class TestTranslation:
    def test_small_delta(self):
        g = Grid.uniform(32, 1.0)
        u = Field(g, np.arange(32.0))
        assert translation_modulus(u, 0.5 * g.spacing[0]) == 0.0
        assert lattice_shifts(g, 0.9 / 32) == []

    def test_indicator_one_cell(self):
        g = Grid.uniform(64, 2 * math.pi)
        u = Field(g, (g.centers() < math.pi).astype(float))
        assert translation_modulus(u, g.spacing[0]) == pytest.approx(2 * g.spacing[0])

    def test_lipschitz_bound(self):
        g = Grid.uniform(256, 2 * math.pi)
        u = Field(g, 3.0 * np.sin(g.centers()))
        for d in (0.05, 0.2, 0.7):
            assert translation_modulus(u, d) <= 3.0 * d * 2 * math.pi

    def test_two_dimensional_shifts(self):
        g = Grid.uniform(8, 8.0, dim=2)
        shifts = lattice_shifts(g, 1.5)
        assert set(shifts) == {(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)}

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=16, max_size=16), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
    def test_monotone_in_delta(self, vals, d1, d2):
        g = Grid.uniform(16, 1.0)
        u = Field(g, vals)
        lo, hi = sorted((d1, d2))
        assert translation_modulus(u, lo) <= translation_modulus(u, hi)
        assert symmetric_translation_modulus(u, lo) <= symmetric_translation_modulus(u, hi)


class TestMollifier:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_unit_mass(self, dim):
        J = Mollifier(dim)
        if dim == 1:
            m = integrate.quad(lambda z: float(J(z)), -1, 1, epsabs=1e-13)[0]
        else:
            m = integrate.dblquad(lambda y, x: float(J(np.array([x, y]))), -1, 1, -1, 1, epsabs=1e-11)[0]
        assert m == pytest.approx(1.0, abs=1e-9)

    def test_kernel(self):
        g = Grid.uniform(64, 1.0)
        k = Mollifier(1).kernel(g, 8 / 64)
        assert sum(a for _, a in k) == pytest.approx(1.0, abs=1e-14)
        w = dict(k)
        for (n,), a in k:
            assert w[(-n,)] == pytest.approx(a, rel=1e-12)
        with pytest.raises(ModelError):
            Mollifier(1).kernel(g, 1 / 64)

    def test_constant(self):
        g = Grid.uniform(64, 1.0)
        assert besov_dual_modulus(Field(g, np.full(64, 2.0)), 0.1) == 0.0

    def test_reflection_invariance(self, rng):
        g = Grid.uniform(64, 1.0)
        v = rng.standard_normal(64)
        a = besov_dual_modulus(Field(g, v), 0.1)
        b = besov_dual_modulus(Field(g, np.roll(v[::-1], 1)), 0.1)  # u(-x) on cell centres
        assert a == pytest.approx(b, rel=1e-12)

    def test_step_against_one_jump_integral(self):
        # periodic indicator: two jumps, each contributing 2 int |z| J_delta(z) dz
        J = Mollifier(1)
        mean_abs = 2 * integrate.quad(lambda z: z * float(J(z)), 0, 1, epsabs=1e-13)[0]
        n = 4096
        g = Grid.uniform(n, 1.0)
        u = Field(g, (g.centers() < 0.5).astype(float))
        delta = 32 / n
        assert besov_dual_modulus(u, delta) == pytest.approx(4 * mean_abs * delta, rel=0.01)


class TestMonteCarlo:
    def test_constant(self):
        rep = mc_expectation(lambda s: 2.5, 10, name="c")
        assert rep.mean == 2.5 and rep.stderr == 0.0 and rep.paths == 10

    def test_brownian_mean(self):
        rep = mc_expectation(lambda s: uniform_path(s, 1.0, 1).increments[0, 0], 10_000)
        assert abs(rep.mean) <= 3 * rep.stderr

    def test_repeat_identical(self):
        def stat(s):
            return float(np.sum(uniform_path(s, 1.0, 8).increments ** 2))
        a = mc_expectation(stat, 50, seed_base=7)
        b = mc_expectation(stat, 50, seed_base=7)
        assert a.to_json() == b.to_json()

    def test_parallel_equals_sequential(self):
        g = Grid.uniform(64)
        p = make_problem(noise=NoiseModel.linear(0.3), eps=5e-3)

        def stat(s):
            u = solve(p, g, uniform_path(s, p.T, 8)).terminal
            return [bv_seminorm(u), lp_norm(u, 1)]
        a = mc_vector(stat, 12, 100, ["tv", "l1"], n_jobs=1)
        b = mc_vector(stat, 12, 100, ["tv", "l1"], n_jobs=2)
        for x, y in zip(a, b):
            assert x.per_path.tobytes() == y.per_path.tobytes()

    def test_failures(self):
        def stat(s):
            if s % 20 == 0:
                raise BlowUpError(0.1, (0,))
            return 1.0
        rep = mc_expectation(stat, 40)
        assert rep.failures == [0, 20] and rep.paths == 38
        with pytest.raises(EstimateError):
            mc_expectation(lambda s: (_ for _ in ()).throw(BlowUpError(0.0, (0,))), 10)

    def test_small_M(self):
        with pytest.raises(EstimateError):
            mc_expectation(lambda s: 1.0, 1)


class TestFit:
    def test_power_laws(self):
        f = fit_rate([(1, 2), (2, 4), (4, 8)])
        assert f.slope == pytest.approx(1.0) and f.r_squared == pytest.approx(1.0)
        assert fit_rate([(1, 1), (4, 2), (16, 4)]).slope == pytest.approx(0.5)

    def test_noisy_cube_root(self):
        rng = np.random.default_rng(4)
        s = np.logspace(-3, 0, 8)
        v = s ** (1 / 3) * (1 + 0.01 * rng.standard_normal(8))
        assert 0.31 <= fit_rate(zip(s, v)).slope <= 0.36

    def test_errors(self):
        with pytest.raises(EstimateError):
            fit_rate([(1, 1), (2, 2)])
        with pytest.raises(EstimateError):
            fit_rate([(1, 1), (2, 0), (3, 3)])

    def test_predict(self):
        f = fit_rate([(1, 3), (2, 6), (4, 12)])
        assert float(f.predict(8)) == pytest.approx(24.0)

    @given(st.floats(-2, 2), st.floats(0.1, 10))
    def test_exact_recovery(self, slope, c):
        pts = [(s, c * s**slope) for s in (0.1, 0.2, 0.4, 0.8)]
        assert fit_rate(pts).slope == pytest.approx(slope, abs=1e-9)


def test_append_csv(tmp_path):
    path = tmp_path / "est.csv"
    rep = EstimateReport.from_values("x", [1.0, 2.0, 3.0])
    append_csv(path, [rep])
    append_csv(path, [fit_rate([(1, 2), (2, 4), (4, 8)], "fit")])
    rows = list(csv.DictReader(open(path)))
    assert [r["name"] for r in rows] == ["x", "fit"]
    assert float(rows[0]["mean"]) == 2.0 and float(rows[1]["slope"]) == pytest.approx(1.0)
