import copy
import json
import math

import pytest

from stochbal.experiments import (ConfigError, ExperimentConfig, Row, common_dt, default_suite, evaluate,
                                  read_rows, reevaluate, result_dirs, run_experiment, write_rows)
from stochbal.model import FluxModel, Grid, NoiseModel

from conftest import make_problem

L = 2 * math.pi
BUMP = {"kind": "bump", "center": math.pi, "width": 0.6}
RIEMANN = {"kind": "riemann", "left": 1.0, "right": 0.0}


def cfg(experiment, flux=None, noise=None, eps=5e-3, initial=None, T=0.5, cells=128, paths=8, seed=1,
        scales=(), **options):
    d = {"experiment": experiment,
         "problem": {"flux": flux or {"kind": "burgers"}, "noise": noise or {"kind": "linear", "lam": 0.3},
                     "epsilon": eps, "initial": initial or BUMP, "T": T},
         "grid": {"dim": 1, "cells": cells, "length": L},
         "mc": {"paths": paths, "seed": seed}, "scales": list(scales), "options": options}
    return ExperimentConfig.from_dict(d)


class TestValidation:
    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            cfg("nonsense").validate()

    def test_single_scale(self):
        with pytest.raises(ConfigError, match="need ≥ 3 scales"):
            cfg("visc_rate", scales=[1e-2]).validate()

    def test_non_dyadic_epsilon(self):
        with pytest.raises(ConfigError, match="dyadic"):
            cfg("visc_rate", scales=[1e-2, 2e-2, 3e-2]).validate()

    def test_sup_needs_bounded_noise(self):
        with pytest.raises(ConfigError):
            cfg("cont_dep_sigma", scales=[0.01, 0.02, 0.04]).validate()
        cfg("cont_dep_sigma", noise={"kind": "sine", "lam": 0.3}, scales=[0.01, 0.02, 0.04]).validate()

    def test_relative_needs_linear_noise(self):
        with pytest.raises(ConfigError):
            cfg("cont_dep_sigma", noise={"kind": "sine", "lam": 0.3}, scales=[0.01, 0.02, 0.04],
                semantics="relative").validate()

    def test_fractional_grid(self):
        h = L / 128
        with pytest.raises(ConfigError, match="4h"):
            cfg("fractional_bv", scales=[2 * h, 4 * h, 8 * h]).validate()
        w = cfg("fractional_bv", scales=[4 * h, 8 * h, 16 * h]).validate()
        assert any("does not depend on x" in s for s in w)

    def test_time_continuity_multiple(self):
        with pytest.raises(ConfigError):
            cfg("time_continuity", scales=[0.001, 0.01, 0.1]).validate()

    def test_scales_sorted(self):
        with pytest.raises(ConfigError):
            cfg("cont_dep_flux", scales=[0.04, 0.02, 0.01]).validate()

    def test_assumption_violation(self):
        c = cfg("bv_decay")
        c.problem = c.problem.replace(flux=FluxModel("polynomial", (0, 0, 0, 1.0), growth_exponent=1))
        with pytest.raises(ConfigError, match="standing assumptions"):
            c.validate()

    def test_missing_problem(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"experiment": "bv_decay"}).validate()

    def test_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "c.json")

    def test_roundtrip_and_digest(self):
        c = cfg("cont_dep_flux", scales=[0.01, 0.02, 0.04], n_jobs=1)
        d = ExperimentConfig.from_dict(json.loads(json.dumps(c.to_dict())))
        assert d.to_dict() == c.to_dict()
        e = copy.deepcopy(c)
        e.options["n_jobs"] = 4
        assert e.digest() == c.digest()
        e.seed = 2
        assert e.digest() != c.digest()

    def test_default_suite_valid(self):
        for crit, d in default_suite():
            ExperimentConfig.from_dict(d).validate()


class TestEvaluate:
    def test_fit_failure(self):
        rows = [Row("distance", s, 0.1 * s**0.5, 0.0, 10) for s in (0.01, 0.02, 0.04)]
        checks, fits = evaluate("cont_dep_flux", {"slope_range": [0.9, 1.1], "T": 0.5}, rows)
        assert fits[0].slope == pytest.approx(0.5)
        assert not next(c for c in checks if c.name == "slope").passed

    def test_bv_tolerance(self):
        rule = {"h": 0.01, "h_factor": 2.0, "k_stderr": 3.0}
        rows = [Row("tv", 0.0, 2.0, 0.0, 10), Row("tv_increment", 0.1, 0.03, 0.001, 10),
                Row("tv_change", 0.1, 0.03, 0.001, 10)]
        checks, _ = evaluate("bv_decay", rule, rows)
        assert all(c.passed for c in checks)
        rows[1] = Row("tv_increment", 0.1, 0.05, 0.001, 10)
        checks, _ = evaluate("bv_decay", rule, rows)
        assert not all(c.passed for c in checks)

    def test_empty_rows_fail(self):
        checks, _ = evaluate("entropy_residual", {"c_h": 5.0, "h": 0.01}, [])
        assert not any(c.passed for c in checks)

    def test_rows_roundtrip(self, tmp_path):
        rows = [Row("a", 0.1, 1 / 3, 1e-17, 5), Row("b", 1e-300, -2.5, 0.0, 1)]
        write_rows(tmp_path / "s.csv", rows)
        assert read_rows(tmp_path / "s.csv") == rows


class TestRuns:
    def test_gbm_exact(self, tmp_path):
        c = cfg("bv_decay", flux={"kind": "zero"}, noise={"kind": "linear", "lam": 0.5}, eps=0.0, T=1.0,
                paths=40, snapshots=4, path_steps=16)
        rec = run_experiment(c, tmp_path / "gbm")
        assert rec.rule["exact"] and rec.passed
        names = {p.name for p in (tmp_path / "gbm").iterdir()}
        assert names == {"scales.csv", "fit.csv", "estimates.csv", "summary.json"}

    def test_deterministic_tvd(self):
        c = cfg("bv_decay", noise={"kind": "zero"}, eps=0.0, paths=2, snapshots=4)
        rec = run_experiment(c)
        assert rec.passed
        assert all(r.mean <= 1e-12 for r in rec.table("tv_increment"))

    def test_frozen_time_continuity(self):
        T = 0.5
        c = cfg("time_continuity", flux={"kind": "zero"}, noise={"kind": "zero"}, eps=0.0, paths=2,
                scales=[T / 32, T / 16, T / 8], snapshot_divisions=32)
        rec = run_experiment(c)
        assert rec.passed and not rec.fits
        assert rec.checks[0].name == "modulus_zero"

    def test_pure_noise_time_continuity(self):
        T = 0.5
        c = cfg("time_continuity", flux={"kind": "zero"}, eps=0.0, paths=60, cells=64,
                scales=[T / 64, T / 32, T / 16, T / 8], snapshot_divisions=64)
        rec = run_experiment(c)
        assert rec.fits[0].slope >= 0.33 and rec.passed

    def test_contraction_identical_data(self):
        c = cfg("contraction", paths=4, initial_v=BUMP)
        rec = run_experiment(c)
        assert all(r.mean == 0.0 for r in rec.table("distance"))

    def test_contraction_comparison(self):
        c = cfg("contraction", paths=8, initial_v={**BUMP, "center": 4.0},
                comparison={"initial_u": BUMP, "initial_v": {**BUMP, "amplitude": 1.5, "offset": 0.1}})
        rec = run_experiment(c)
        assert rec.passed and not rec.notes
        assert all(r.mean == 0.0 for r in rec.table("positive_part"))

    def test_deterministic_visc_rate(self):
        c = cfg("visc_rate", noise={"kind": "zero"}, initial=RIEMANN, cells=256, paths=2,
                scales=[1e-2, 2e-2, 4e-2, 8e-2], reference_epsilon=2.5e-3, path_steps=4)
        rec = run_experiment(c)
        assert 0.4 <= rec.fits[0].slope <= 1.0 and rec.passed

    def test_cont_dep_flux(self):
        c = cfg("cont_dep_flux", noise={"kind": "sine", "lam": 0.3}, paths=6, scales=[0.01, 0.02, 0.04])
        rec = run_experiment(c)
        assert rec.fits[0].slope == pytest.approx(1.0, abs=0.1)

    def test_cont_dep_relative(self):
        c = cfg("cont_dep_sigma", paths=6, scales=[0.01, 0.02, 0.04], semantics="relative")
        rec = run_experiment(c)
        assert rec.passed and rec.rule["semantics"] == "relative"

    def test_fractional_with_control(self):
        h = L / 128
        c = cfg("fractional_bv", noise={"kind": "x_modulated", "lam": 0.3, "mu": 0.5},
                initial={"kind": "sine"}, paths=6, scales=[4 * h, 8 * h, 16 * h, 32 * h])
        rec = run_experiment(c)
        assert rec.table("modulus_control") and rec.table("tv_control")
        assert all(ch.passed for ch in rec.checks if ch.name.startswith("control_bv_bound"))

    def test_entropy_residual(self):
        c = cfg("entropy_residual", initial=RIEMANN, eps=2e-3, cells=128, paths=4,
                entropies=[{"kind": "eta_rho", "rho": 0.1, "k": 0.5}, {"kind": "linear"}])
        rec = run_experiment(c)
        assert len([r for r in rec.rows if r.table.startswith("residual:")]) == 4
        ctrl = [r for r in rec.rows if r.table.startswith("control:")]
        assert ctrl and ctrl[0].mean > 0

    def test_reevaluate(self, tmp_path):
        c = cfg("cont_dep_flux", noise={"kind": "sine", "lam": 0.3}, paths=4, scales=[0.01, 0.02, 0.04])
        run_experiment(c, tmp_path / "a")
        passed, agrees, _ = reevaluate(tmp_path / "a")
        assert passed and agrees
        assert result_dirs(tmp_path) == [tmp_path / "a"]
        # tampering with the recorded table changes the recomputed verdict
        rows = read_rows(tmp_path / "a" / "scales.csv")
        write_rows(tmp_path / "a" / "scales.csv", [Row(r.table, r.scale, 1.0, r.stderr, r.M) for r in rows])
        passed2, agrees2, _ = reevaluate(tmp_path / "a")
        assert not passed2 and not agrees2

    def test_csv_bytes_reproducible(self, tmp_path):
        c = cfg("cont_dep_flux", noise={"kind": "sine", "lam": 0.3}, paths=4, scales=[0.01, 0.02, 0.04])
        run_experiment(c, tmp_path / "a")
        run_experiment(c, tmp_path / "b")
        for name in ("scales.csv", "fit.csv", "estimates.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_common_dt_is_dyadic():
    g = Grid.uniform(128)
    p = make_problem(noise=NoiseModel.linear(0.3), eps=5e-3)
    dt = common_dt([p, p.replace(flux=FluxModel.burgers().perturbed(0.04))], g, 0.5 / 16, 0.45)
    k = math.log2((0.5 / 16) / dt)
    assert k == int(k) and k >= 0
