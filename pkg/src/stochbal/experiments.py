"""Config-driven Monte Carlo experiments, their acceptance rules and result files.

Every runner returns a ``ResultRecord`` whose verdict is computed by
``evaluate`` from the recorded table rows and the rule parameters alone, so
``sbl report`` can re-check a results directory offline.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import besov
from .entropy import (M1, M2, EntropyApprox, entropy_flux_q, entropy_from_dict, entropy_residual,
                      entropy_residuals, eta_bar, eta_rho, flux_difference_bound, flux_difference_derivative)
from .estimators import (EstimateReport, RateFit, append_csv, bv_seminorm, fit_rate,
                         lp_norm, mc_vector, temporal_l1_modulus, translation_modulus)
from .model import (FluxModel, Grid, InitialData, ModelError, NoiseModel, Problem,
                    WeightFunction, validate_problem)
from .noise import uniform_path
from .solver import SolverConfig, cfl_dt, solve

log = logging.getLogger(__name__)

EXPERIMENTS = ("bv_decay", "time_continuity", "contraction", "visc_rate", "cont_dep_sigma",
               "cont_dep_flux", "fractional_bv", "entropy_residual", "lemma_checks")


class ConfigError(ModelError):
    pass


# {{{ config


@dataclass
class ExperimentConfig:
    """One experiment: problem, grid, Monte Carlo size, scale grid and options."""

    experiment: str
    problem: Problem | None = None
    grid: Grid | None = None
    paths: int = 100
    seed: int = 0
    scales: tuple[float, ...] = ()
    output: str | None = None
    options: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.name = self.name or self.experiment

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        try:
            exp = d["experiment"]
            problem = Problem.from_dict(d["problem"]) if "problem" in d else None
            grid = Grid.from_dict(d["grid"]) if "grid" in d else None
            mc = d.get("mc", {})
            return cls(exp, problem, grid, int(mc.get("paths", 100)), int(mc.get("seed", 0)),
                       tuple(float(s) for s in d.get("scales", ())), d.get("output"),
                       dict(d.get("options", {})), d.get("name", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "name": self.name,
             "mc": {"paths": self.paths, "seed": self.seed},
             "scales": list(self.scales), "options": copy.deepcopy(self.options)}
        if self.problem is not None:
            d["problem"] = self.problem.to_dict()
        if self.grid is not None:
            d["grid"] = self.grid.to_dict()
        if self.output is not None:
            d["output"] = self.output
        return d

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output", None)
        d["options"].pop("n_jobs", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> list[str]:
        """Raise ``ConfigError`` on any problem; returns non-fatal warnings."""
        warnings = []
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.experiment == "lemma_checks":
            return warnings
        if self.problem is None or self.grid is None:
            raise ConfigError(f"{self.experiment} needs a problem and a grid")
        if self.paths < 2:
            raise ConfigError("mc.paths must be at least 2")
        rep = validate_problem(self.problem, grid=self.grid)
        if not rep.ok:
            bad = [c.name + ": " + c.detail for c in rep.checks if not c.satisfied]
            raise ConfigError("problem violates the standing assumptions: " + "; ".join(bad))
        sc = list(self.scales)
        if any(not (s > 0 and math.isfinite(s)) for s in sc):
            raise ConfigError("scales must be positive")
        if sc != sorted(sc) or len(set(sc)) != len(sc):
            raise ConfigError("scales must be strictly increasing")
        exp, h = self.experiment, min(self.grid.spacing)
        if exp in ("time_continuity", "visc_rate", "cont_dep_sigma", "cont_dep_flux", "fractional_bv") \
                and len(sc) < 3:
            raise ConfigError(f"{exp}: need ≥ 3 scales for a rate fit")
        if exp == "visc_rate":
            ratios = [b / a for a, b in zip(sc[:-1], sc[1:])]
            if not all(math.isclose(r, 2.0, rel_tol=1e-9) for r in ratios):
                raise ConfigError("visc_rate: the epsilon grid must be dyadic")
        if exp == "cont_dep_sigma":
            sem = self.options.get("semantics", "sup")
            if sem not in ("sup", "relative"):
                raise ConfigError(f"unknown semantics {sem!r}")
            noise = self.problem.noise
            if sem == "sup" and not noise.bounded:
                raise ConfigError(f"sup semantics needs bounded noise, got {noise.kind!r}; "
                                  "use semantics 'relative' for sigma(u) = lam u")
            if sem == "relative" and noise.kind != "linear":
                raise ConfigError("relative semantics needs linear noise sigma(u) = lam u")
        if exp == "fractional_bv":
            if sc[0] < 4 * h * (1 - 1e-9):
                raise ConfigError(f"fractional_bv: delta grid must start at ≥ 4h = {4 * h}")
            if not self.problem.noise.x_dependent:
                warnings.append("noise does not depend on x: the plain BV estimate applies")
        if exp == "time_continuity":
            spacing = self.problem.T / int(self.options.get("snapshot_divisions", 256))
            for s in sc:
                if abs(s / spacing - round(s / spacing)) > 1e-6:
                    raise ConfigError(f"time_continuity: dt = {s} is not a multiple of {spacing}")
        return warnings

# }}}


# {{{ records


@dataclass(frozen=True)
class Row:
    table: str
    scale: float
    mean: float
    stderr: float
    M: int


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ResultRecord:
    experiment: str
    name: str
    digest: str
    rule: dict
    rows: list[Row]
    fits: list[RateFit]
    checks: list[Check]
    wall_time: float = 0.0
    notes: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    extra_csv: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self, name: str) -> list[Row]:
        return sorted((r for r in self.rows if r.table == name), key=lambda r: r.scale)

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "scales.csv", self.rows)
        with open(out / "fit.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["table", "slope", "intercept", "r_squared", "points"])
            for f in self.fits:
                w.writerow([f.name, repr(f.slope), repr(f.intercept), repr(f.r_squared), len(f.points)])
        est = out / "estimates.csv"
        if est.exists():
            est.unlink()
        append_csv(est, [EstimateReport(r.table + "@" + repr(r.scale), np.zeros(0), r.mean, r.stderr, r.M, 0)
                         for r in self.rows] + list(self.fits))
        for fname, (header, rows) in self.extra_csv.items():
            with open(out / fname, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
        summary = {"experiment": self.experiment, "name": self.name, "digest": self.digest,
                   "rule": self.rule, "passed": self.passed,
                   "checks": [c.__dict__ for c in self.checks], "notes": self.notes,
                   "wall_time_seconds": self.wall_time, "config": self.config}
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        return out


def write_rows(path, rows: list[Row]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["table", "scale", "mean", "stderr", "M"])
        for r in rows:
            w.writerow([r.table, repr(float(r.scale)), repr(float(r.mean)), repr(float(r.stderr)), r.M])


def read_rows(path) -> list[Row]:
    with open(path, newline="") as fh:
        return [Row(d["table"], float(d["scale"]), float(d["mean"]), float(d["stderr"]), int(d["M"]))
                for d in csv.DictReader(fh)]


def _rows_from_reports(table: str, scales, reports: list[EstimateReport]) -> list[Row]:
    return [Row(table, float(s), r.mean, r.stderr, r.paths) for s, r in zip(scales, reports)]

# }}}


# {{{ evaluation


def _get(rows: list[Row], table: str) -> list[Row]:
    return sorted((r for r in rows if r.table == table), key=lambda r: r.scale)


def _fit_table(rows: list[Row], table: str) -> RateFit:
    tr = _get(rows, table)
    return fit_rate([(r.scale, r.mean) for r in tr], name=table)


def _monotone(rows: list[Row], table: str) -> tuple[bool, str]:
    m = [r.mean for r in _get(rows, table)]
    ok = all(b >= a for a, b in zip(m[:-1], m[1:]))
    return ok, f"{table} means {['%.4g' % v for v in m]}"


def evaluate(experiment: str, rule: dict, rows: list[Row]) -> tuple[list[Check], list[RateFit]]:
    """Acceptance checks computed from table rows and rule parameters only."""
    k = float(rule.get("k_stderr", 3.0))
    checks: list[Check] = []
    fits: list[RateFit] = []

    if experiment == "bv_decay":
        tol = float(rule["h"]) * float(rule.get("h_factor", 2.0)) * _get(rows, "tv")[0].mean
        for table in ("tv_increment", "tv_change"):
            for r in _get(rows, table):
                ok = r.mean <= k * r.stderr + tol
                checks.append(Check(f"{table}@{r.scale:.6g}", ok,
                                    f"mean {r.mean:.4g} <= {k:g}*{r.stderr:.3g} + {tol:.3g}"))
        if rule.get("exact"):
            for table in ("tv_change", "l1_change"):
                r = _get(rows, table)[-1]
                ok = abs(r.mean) <= k * r.stderr
                checks.append(Check(f"exact:{table}@T", ok, f"|{r.mean:.4g}| <= {k:g}*{r.stderr:.3g}"))

    elif experiment == "time_continuity":
        tr = _get(rows, "modulus")
        if all(r.mean == 0 for r in tr):
            checks.append(Check("modulus_zero", True, "frozen trajectory: fit skipped"))
        else:
            fit = _fit_table(rows, "modulus")
            fits.append(fit)
            checks.append(Check("slope", fit.slope >= rule["min_slope"],
                                f"slope {fit.slope:.4f} >= {rule['min_slope']}"))
            ok, d = _monotone(rows, "modulus")
            checks.append(Check("monotone", ok, d))

    elif experiment == "contraction":
        slack = float(rule.get("slack", 0.05))
        for table in ("distance", "positive_part"):
            tr = _get(rows, table)
            if not tr:
                continue
            d0 = tr[0].mean
            for r in tr:
                ok = r.mean <= d0 * (1 + slack) + k * r.stderr
                checks.append(Check(f"{table}@{r.scale:.6g}", ok,
                                    f"{r.mean:.4g} <= {d0:.4g}*(1+{slack:g}) + {k:g}*{r.stderr:.3g}"))

    elif experiment == "visc_rate":
        fit = _fit_table(rows, "error")
        fits.append(fit)
        checks.append(Check("slope", fit.slope >= rule["min_slope"], f"slope {fit.slope:.4f} >= {rule['min_slope']}"))
        checks.append(Check("r_squared", fit.r_squared >= rule["min_r2"],
                            f"r^2 {fit.r_squared:.4f} >= {rule['min_r2']}"))

    elif experiment in ("cont_dep_sigma", "cont_dep_flux"):
        fit = _fit_table(rows, "distance")
        fits.append(fit)
        lo, hi = rule["slope_range"]
        checks.append(Check("slope", lo <= fit.slope <= hi, f"slope {fit.slope:.4f} in [{lo}, {hi}]"))
        T = float(rule["T"])
        c = max(r.mean / ((math.sqrt(T) + T) * r.scale) for r in _get(rows, "distance"))
        checks.append(Check("constant", math.isfinite(c) and c > 0, f"C_fit = {c:.4g}"))

    elif experiment == "fractional_bv":
        fit = _fit_table(rows, "modulus")
        fits.append(fit)
        checks.append(Check("slope", fit.slope >= rule["min_slope"], f"slope {fit.slope:.4f} >= {rule['min_slope']}"))
        ok, d = _monotone(rows, "modulus")
        checks.append(Check("monotone", ok, d))
        if _get(rows, "modulus_control"):
            cf = _fit_table(rows, "modulus_control")
            fits.append(cf)
            tol = float(rule["control_slope_tol"])
            checks.append(Check("control_slope", abs(cf.slope - 1.0) <= tol,
                                f"|{cf.slope:.4f} - 1| <= {tol}"))
            tv = _get(rows, "tv_control")[-1].mean
            for r in _get(rows, "modulus_control"):
                ok = r.mean <= r.scale * tv * (1 + 1e-12)
                checks.append(Check(f"control_bv_bound@{r.scale:.6g}", ok,
                                    f"{r.mean:.4g} <= delta*E[TV] = {r.scale * tv:.4g}"))

    elif experiment == "entropy_residual":
        ch = float(rule["c_h"]) * float(rule["h"])
        for r in rows:
            if r.table.startswith("residual:"):
                ok = r.mean >= -k * r.stderr - ch
                checks.append(Check(r.table, ok, f"{r.mean:.4g} >= -{k:g}*{r.stderr:.3g} - {ch:.3g}"))
            elif r.table.startswith("control:"):
                checks.append(Check(r.table, r.mean > 0, f"{r.mean:.4g} > 0"))

    elif experiment == "lemma_checks":
        tol = float(rule.get("entropy_tol", 1e-8))
        for r in rows:
            t = r.table
            if t.startswith("entropy.") and t.endswith("violation"):
                checks.append(Check(t, r.mean <= tol, f"{r.mean:.3g} <= {tol:g}"))
            elif t == "entropy.M1":
                checks.append(Check(t, abs(r.mean - 5 / 16) <= tol, f"{r.mean!r} vs 5/16"))
            elif t == "entropy.M2":
                checks.append(Check(t, abs(r.mean - 15 / 8) <= tol, f"{r.mean!r} vs 15/8"))
            elif t == "entropy.flux_bound_ratio":
                checks.append(Check(t, r.mean <= 1 + tol, f"max |d(q-q)| / bound = {r.mean:.6g} <= 1"))
            elif t == "entropy.flux_derivative_crosscheck":
                checks.append(Check(t, r.mean <= rule.get("crosscheck_tol", 1e-5),
                                    f"closed form vs quadrature FD: {r.mean:.3g}"))
            elif t.startswith("besov.integral:"):
                checks.append(Check(t + f"@{r.scale:.6g}", r.mean <= 1 + 1e-12, f"ratio {r.mean:.4g} <= 1"))
        consts: dict[str, list[Row]] = {}
        for r in rows:
            if r.table.startswith("besov.constant:"):
                consts.setdefault(r.table, []).append(r)
        factor = float(rule.get("stability_factor", 2.0))
        for t, rs in sorted(consts.items()):
            vals = [r.mean for r in sorted(rs, key=lambda r: r.scale)]
            finite = all(math.isfinite(v) for v in vals)
            if finite and min(vals) > 0:
                ratio = max(vals) / min(vals)
            else:
                ratio = 1.0 if finite and max(vals) == 0 else math.inf
            checks.append(Check(t, finite and ratio < factor, f"constants {vals}, change {ratio:.4g}x < {factor:g}x"))
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    if not checks:
        checks.append(Check("nonempty", False, "no rows to evaluate"))
    return checks, fits


def finish(cfg: ExperimentConfig, rule: dict, rows: list[Row], t0: float, notes=(), extra_csv=None) -> ResultRecord:
    checks, fits = evaluate(cfg.experiment, rule, rows)
    rec = ResultRecord(cfg.experiment, cfg.name, cfg.digest(), rule, rows, fits, checks,
                       time.perf_counter() - t0, list(notes), cfg.to_dict(), extra_csv or {})
    return rec

# }}}


# {{{ helpers


def _opt(cfg: ExperimentConfig, key: str, default):
    return cfg.options.get(key, default)


def _solver_config(cfg: ExperimentConfig, **kw) -> SolverConfig:
    return SolverConfig(flux_scheme=_opt(cfg, "flux_scheme", "local_lax_friedrichs"),
                        cfl_number=float(_opt(cfg, "cfl", 0.45)), **kw)


def _path(cfg: ExperimentConfig, seed: int, steps: int):
    return uniform_path(seed, cfg.problem.T, steps, cfg.problem.noise.modes)


def _snapshot_times(T: float, n: int) -> tuple[float, ...]:
    return tuple(T * i / n for i in range(n + 1))


def common_dt(problems: list[Problem], grid: Grid, path_dt: float, cfl: float, growth: float = 2.0) -> float:
    """Largest dyadic refinement of ``path_dt`` satisfying the CFL bound of every problem.

    The bound is evaluated on ``[-growth R, growth R]`` with ``R`` the largest
    initial amplitude, leaving room for noise-driven growth.  Used when two
    solutions must see exactly the same time grid.
    """
    bound = math.inf
    for p in problems:
        u0 = p.initial.sample(grid).values
        R = growth * max(abs(float(u0.min())), abs(float(u0.max())), 1e-12)
        bound = min(bound, cfl_dt(grid, p.flux, p.epsilon, (-R, R), cfl))
    dt = path_dt
    while dt > bound * (1 + 1e-12):
        dt *= 0.5
    return dt


def _mc(cfg: ExperimentConfig, stat, names) -> list[EstimateReport]:
    return mc_vector(stat, cfg.paths, cfg.seed, names, n_jobs=int(_opt(cfg, "n_jobs", 1)))


def _restrict(v: np.ndarray, factor: int) -> np.ndarray:
    """Average groups of ``factor`` fine cells (1-D)."""
    return v.reshape(-1, factor).mean(axis=1)

# }}}


# {{{ runners


def run_bv_decay(cfg: ExperimentConfig) -> ResultRecord:
    t0 = time.perf_counter()
    p, g = cfg.problem, cfg.grid
    n = int(_opt(cfg, "snapshots", 8))
    steps = int(_opt(cfg, "path_steps", 16 * n))
    if steps % n:
        raise ConfigError("path_steps must be a multiple of snapshots")
    times = _snapshot_times(p.T, n)
    sc = _solver_config(cfg, snapshot_times=times)

    def stat(seed):
        tr = solve(p, g, _path(cfg, seed, steps), sc)
        tv = [bv_seminorm(tr.field(i)) for i in range(n + 1)]
        l1 = [lp_norm(tr.field(i), 1) for i in range(n + 1)]
        return (tv + l1 + [tv[i] - tv[i - 1] for i in range(1, n + 1)]
                + [v - tv[0] for v in tv[1:]] + [v - l1[0] for v in l1[1:]])

    names = ([f"tv@{t}" for t in times] + [f"l1@{t}" for t in times] + [f"dtv@{t}" for t in times[1:]]
             + [f"tvchg@{t}" for t in times[1:]] + [f"l1chg@{t}" for t in times[1:]])
    reps = _mc(cfg, stat, names)
    m = n + 1
    rows = (_rows_from_reports("tv", times, reps[:m]) + _rows_from_reports("l1", times, reps[m:2 * m])
            + _rows_from_reports("tv_increment", times[1:], reps[2 * m:2 * m + n])
            + _rows_from_reports("tv_change", times[1:], reps[2 * m + n:2 * m + 2 * n])
            + _rows_from_reports("l1_change", times[1:], reps[2 * m + 2 * n:]))
    exact = p.flux.kind == "zero" and p.noise.kind == "linear" and p.epsilon == 0
    rule = {"k_stderr": 3.0, "h": min(g.spacing), "h_factor": 2.0, "exact": exact}
    return finish(cfg, rule, rows, t0)


def run_time_continuity(cfg: ExperimentConfig) -> ResultRecord:
    t0 = time.perf_counter()
    p, g = cfg.problem, cfg.grid
    n = int(_opt(cfg, "snapshot_divisions", 256))
    steps = int(_opt(cfg, "path_steps", n))
    times = _snapshot_times(p.T, n)
    sc = _solver_config(cfg, snapshot_times=times)
    window = (0.0, p.T - max(cfg.scales))

    def stat(seed):
        tr = solve(p, g, _path(cfg, seed, steps), sc)
        return [temporal_l1_modulus(tr, dt, window) for dt in cfg.scales]

    reps = _mc(cfg, stat, [f"modulus@{d}" for d in cfg.scales])
    rows = _rows_from_reports("modulus", cfg.scales, reps)
    rule = {"min_slope": float(_opt(cfg, "min_slope", 0.30)), "window": list(window)}
    return finish(cfg, rule, rows, t0)


def run_contraction(cfg: ExperimentConfig) -> ResultRecord:
    t0 = time.perf_counter()
    p, g = cfg.problem, cfg.grid
    n = int(_opt(cfg, "snapshots", 8))
    steps = int(_opt(cfg, "path_steps", 16 * n))
    times = _snapshot_times(p.T, n)
    pv = p.replace(initial=InitialData.from_dict(cfg.options["initial_v"]))
    pairs = [("distance", p, pv)]
    if "comparison" in cfg.options:
        c = cfg.options["comparison"]
        pairs.append(("positive_part", p.replace(initial=InitialData.from_dict(c["initial_u"])),
                      p.replace(initial=InitialData.from_dict(c["initial_v"]))))
    notes = []
    for label, pu, pw in pairs[1:]:
        if np.any(pu.initial.sample(g).values > pw.initial.sample(g).values):
            notes.append(f"{label}: initial data are not ordered (v0 >= u0 fails)")
    cfl = float(_opt(cfg, "cfl", 0.45))
    dts = [common_dt([a, b], g, p.T / steps, cfl) for _, a, b in pairs]

    def stat(seed):
        path = _path(cfg, seed, steps)
        out = []
        for (label, pu, pw), dt in zip(pairs, dts):
            sc = _solver_config(cfg, snapshot_times=times, dt_override=dt)
            a = solve(pu, g, path, sc).states
            b = solve(pw, g, path, sc).states
            if label == "distance":
                out += [float(np.sum(np.abs(x - y))) * g.cell_volume for x, y in zip(a, b)]
            else:
                out += [float(np.sum(np.maximum(x - y, 0.0))) * g.cell_volume for x, y in zip(a, b)]
        return out

    names = [f"{lab}@{t}" for lab, _, _ in pairs for t in times]
    reps = _mc(cfg, stat, names)
    rows = []
    for i, (label, _, _) in enumerate(pairs):
        rows += _rows_from_reports(label, times, reps[i * (n + 1):(i + 1) * (n + 1)])
    rule = {"k_stderr": 3.0, "slack": 0.05, "dt": dts}
    return finish(cfg, rule, rows, t0, notes)


def run_visc_rate(cfg: ExperimentConfig) -> ResultRecord:
    t0 = time.perf_counter()
    p, g = cfg.problem, cfg.grid
    if len(cfg.scales) < 3:
        raise ConfigError("visc_rate: need ≥ 3 scales")
    if g.dim != 1:
        raise ConfigError("visc_rate runs in one dimension")
    factor = int(_opt(cfg, "reference_factor", 4))
    eps_ref = float(_opt(cfg, "reference_epsilon", min(cfg.scales) / 4))
    steps = int(_opt(cfg, "path_steps", 10))
    fine = Grid(1, (g.cells[0] * factor,), g.length)
    sc = _solver_config(cfg)

    def stat(seed):
        path = _path(cfg, seed, steps)
        ref = _restrict(solve(p.replace(epsilon=eps_ref), fine, path, sc).states[-1], factor)
        return [float(np.sum(np.abs(solve(p.replace(epsilon=e), g, path, sc).states[-1] - ref))) * g.cell_volume
                for e in cfg.scales]

    reps = _mc(cfg, stat, [f"error@{e}" for e in cfg.scales])
    rows = _rows_from_reports("error", cfg.scales, reps)
    rule = {"min_slope": float(_opt(cfg, "min_slope", 0.4)), "min_r2": float(_opt(cfg, "min_r2", 0.9)),
            "reference_epsilon": eps_ref, "reference_cells": fine.cells[0]}
    return finish(cfg, rule, rows, t0)


def run_cont_dep(cfg: ExperimentConfig, vary: str | None = None) -> ResultRecord:
    t0 = time.perf_counter()
    p, g = cfg.problem, cfg.grid
    vary = vary or cfg.experiment.removeprefix("cont_dep_")
    semantics = _opt(cfg, "semantics", "sup")
    steps = int(_opt(cfg, "path_steps", 16))
    perturbed = []
    for eta in cfg.scales:
        if vary == "sigma":
            q = p.replace(noise=p.noise.with_lam(p.noise.lam + eta))
            size = p.noise.sup_distance(q.noise) if semantics == "sup" else p.noise.relative_distance(q.noise)
        elif vary == "flux":
            q = p.replace(flux=p.flux.perturbed(eta))
            size = eta  # ||f' - f_hat'||_inf = eta
        else:
            raise ConfigError(f"unknown perturbation {vary!r}")
        if not math.isclose(size, eta, rel_tol=1e-6):
            raise ConfigError(f"perturbation size {size} differs from the requested {eta}")
        perturbed.append(q)
    dt = common_dt([p] + perturbed, g, p.T / steps, float(_opt(cfg, "cfl", 0.45)))
    sc = _solver_config(cfg, dt_override=dt)

    def stat(seed):
        path = _path(cfg, seed, steps)
        u = solve(p, g, path, sc).states[-1]
        return [float(np.sum(np.abs(u - solve(q, g, path, sc).states[-1]))) * g.cell_volume for q in perturbed]

    reps = _mc(cfg, stat, [f"distance@{e}" for e in cfg.scales])
    rows = _rows_from_reports("distance", cfg.scales, reps)
    rule = {"slope_range": [0.9, 1.1], "T": p.T, "vary": vary, "semantics": semantics, "dt": dt}
    return finish(cfg, rule, rows, t0)


def run_fractional_bv(cfg: ExperimentConfig) -> ResultRecord:
    t0 = time.perf_counter()
    p, g = cfg.problem, cfg.grid
    notes = []
    if not p.noise.x_dependent:
        notes.append("noise does not depend on x: the plain BV estimate applies")
        log.warning(notes[-1])
    steps = int(_opt(cfg, "path_steps", 16))
    psi = WeightFunction.from_dict(_opt(cfg, "psi", {"kind": "section6", "radius": 0.0}))
    control = bool(_opt(cfg, "control", True)) and p.noise.kind == "x_modulated"
    pc = p.replace(noise=NoiseModel.x_modulated(p.noise.lam, 0.0, p.noise.modes)) if control else None
    sc = _solver_config(cfg)

    def stat(seed):
        path = _path(cfg, seed, steps)
        u = solve(p, g, path, sc).terminal
        out = [translation_modulus(u, d, psi) for d in cfg.scales]
        if control:
            v = solve(pc, g, path, sc).terminal
            out += [translation_modulus(v, d, psi) for d in cfg.scales] + [bv_seminorm(v)]
        return out

    names = [f"modulus@{d}" for d in cfg.scales]
    if control:
        names += [f"control@{d}" for d in cfg.scales] + ["tv_control"]
    reps = _mc(cfg, stat, names)
    k = len(cfg.scales)
    rows = _rows_from_reports("modulus", cfg.scales, reps[:k])
    if control:
        rows += _rows_from_reports("modulus_control", cfg.scales, reps[k:2 * k])
        rows += _rows_from_reports("tv_control", [p.T], reps[2 * k:])
    rule = {"min_slope": float(_opt(cfg, "min_slope", 0.3)),
            "control_slope_tol": float(_opt(cfg, "control_slope_tol", 0.15)), "psi": psi.to_dict()}
    return finish(cfg, rule, rows, t0, notes)


def cos2_bump(center: float, width: float):
    """``cos^2(pi (x - c) / (2 w))`` on ``|x - c| < w``, zero elsewhere."""
    def phi(x, *rest):
        d = np.abs(np.asarray(x, float) - center)
        return np.where(d < width, np.cos(0.5 * np.pi * d / width) ** 2, 0.0)
    return phi


DEFAULT_ENTROPIES = [{"kind": "eta_rho", "rho": r, "k": k} for r in (0.5, 0.1) for k in (0.0, 0.5)] \
    + [{"kind": "quadratic"}, {"kind": "linear"}]


def _entropy_label(d: dict) -> str:
    if d["kind"] == "eta_rho":
        return f"eta_rho(rho={d['rho']:g},k={d.get('k', 0.0):g})"
    return d["kind"]


def run_entropy_residual(cfg: ExperimentConfig) -> ResultRecord:
    t0 = time.perf_counter()
    p, g = cfg.problem, cfg.grid
    L = g.length[0]
    ents = _opt(cfg, "entropies", DEFAULT_ENTROPIES)
    tests = _opt(cfg, "test_functions", [{"center": 0.25 * L + 0.25, "width": 0.8},
                                          {"center": 0.75 * L + 0.15, "width": 0.8}])
    s, t = float(_opt(cfg, "s", 0.1)), float(_opt(cfg, "t", p.T))
    steps = int(_opt(cfg, "path_steps", 16))
    sc = _solver_config(cfg, record_steps=True)
    ent_objs = [entropy_from_dict(e) for e in ents]
    phis = [cos2_bump(float(d["center"]), float(d["width"])) for d in tests]
    labels = [f"residual:{_entropy_label(e)}:phi{j}" for e in ents for j in range(len(tests))]

    def stat(seed):
        tr = solve(p, g, _path(cfg, seed, steps), sc)
        return [r for e in ent_objs for r in entropy_residuals(tr, tr.path, e, phis, s, t)]

    reps = _mc(cfg, stat, labels)
    rows = [Row(lab, t, r.mean, r.stderr, r.paths) for lab, r in zip(labels, reps)]
    ctrl = _opt(cfg, "control", {"rho": 0.05, "k": 0.5, "center": 0.75 * L + 0.15, "width": 0.8})
    if ctrl:
        pd = p.replace(noise=NoiseModel.zero(), epsilon=0.0,
                       initial=InitialData.make("riemann", left=1.0, right=0.0))
        tr = solve(pd, g, uniform_path(cfg.seed, p.T, steps, 1), sc)
        e = EntropyApprox(float(ctrl["rho"]), float(ctrl["k"]))
        val = entropy_residual(tr, tr.path, e, cos2_bump(float(ctrl["center"]), float(ctrl["width"])), s, t)
        rows.append(Row(f"control:{_entropy_label(e.to_dict())}", t, val, 0.0, 1))
    rule = {"k_stderr": 3.0, "c_h": float(_opt(cfg, "c_h", 5.0)), "h": min(g.spacing), "s": s, "t": t}
    return finish(cfg, rule, rows, t0)


def entropy_property_rows(samples: int = 100_000, seed: int = 0) -> list[Row]:
    """Sandwich, C^2 continuity, support bound, M1, M2 and the flux-difference bound."""
    rng = np.random.default_rng(seed)
    rho = 10.0 ** rng.uniform(-3, 0.5, samples)
    r = rng.uniform(-3, 3, samples) * rho
    v, d1, d2 = eta_rho(r, rho)
    a = np.abs(r)
    sandwich = float(np.max(np.maximum(a - M1 * rho - v, v - a)))
    support = float(np.max(np.where(a < rho, np.abs(d2) - M2 / rho, np.abs(d2))))
    jumps = []
    for rh in (1e-3, 0.1, 1.0, 3.0):
        for edge in (-rh, rh):
            lo = eta_rho(np.nextafter(edge, -np.inf), rh)
            hi = eta_rho(np.nextafter(edge, np.inf), rh)
            jumps.append(max(abs(float(x) - float(y)) * (rh if i == 2 else 1.0)
                             for i, (x, y) in enumerate(zip(lo, hi))))
    s = np.linspace(-1, 1, 200_001)
    vb, _, d2b = eta_bar(s)
    m1 = float(np.max(np.abs(np.abs(s) - vb)))
    m2 = float(np.max(np.abs(d2b)))
    rows = [Row("entropy.sandwich_violation", 0.0, max(sandwich, 0.0), 0.0, samples),
            Row("entropy.support_violation", 0.0, max(support, 0.0), 0.0, samples),
            Row("entropy.c2_jump_violation", 0.0, max(jumps), 0.0, len(jumps)),
            Row("entropy.M1", 0.0, m1, 0.0, s.size),
            Row("entropy.M2", 0.0, m2, 0.0, s.size)]
    ratio, cross = 0.0, 0.0
    fluxes = [FluxModel.burgers(), FluxModel.polynomial([0.0, 0.3, -1.0, 0.5])]
    grid = np.linspace(-2, 2, 41)
    uu, vv = np.meshgrid(grid, grid, indexing="ij")
    for f in fluxes:
        for rh in (1.0, 0.3, 0.1, 0.03, 0.01):
            e = EntropyApprox(rh)
            der = flux_difference_derivative(uu, vv, f, e)
            ratio = max(ratio, float(np.max(np.abs(der))) / flux_difference_bound(f, rh, (-2.0 - rh, 2.0 + rh)))
    # independent cross-check against adaptive quadrature on a subset
    f = fluxes[1]
    hh = 1e-4
    for rh in (0.5, 0.05):
        e = EntropyApprox(rh)
        for u, w in [(0.3, -0.2), (1.7, 1.69), (-1.0, 0.5), (0.05, 0.0), (2.0, -2.0)]:
            def qd(x):
                return entropy_flux_q(x, w, f, e) - entropy_flux_q(w, x, f, e)
            fd = (qd(u + hh) - qd(u - hh)) / (2 * hh)
            cross = max(cross, abs(fd - float(flux_difference_derivative(np.array(u), np.array(w), f, e))))
    rows.append(Row("entropy.flux_bound_ratio", 0.0, ratio, 0.0, uu.size))
    rows.append(Row("entropy.flux_derivative_crosscheck", 0.0, cross, 0.0, 10))
    return rows


def run_lemma_checks(cfg: ExperimentConfig) -> ResultRecord:
    t0 = time.perf_counter()
    n = int(_opt(cfg, "cells", 512))
    psi = _opt(cfg, "psi", None)
    psi = WeightFunction.from_dict(psi) if psi else None
    rows = entropy_property_rows(int(_opt(cfg, "samples", 100_000)), cfg.seed)
    reports, results = besov.lemma_stability(n, psi)
    for res in results:
        t = f"besov.constant:{res.label}:{res.direction}"
        rows.append(Row(t, float(n), res.constant_h, 0.0, 1))
        rows.append(Row(t, float(2 * n), res.constant_h2, 0.0, 1))
    for f in besov.corpus(n):
        cfg_t = besov.TRANS_TO_SOB
        for d, om, bound in besov.modulus_integral_check(f, cfg_t["r"], cfg_t["deltas"], psi):
            rows.append(Row(f"besov.integral:{f.label}", d, om / bound if bound > 0 else 0.0, 0.0, 1))
    ratio_rows = [[rep.label, repr(d), repr(lhs), repr(rhs), repr(ratio)]
                  for rep in reports for d, lhs, rhs, ratio in rep.rows]
    rule = {"entropy_tol": 1e-8, "crosscheck_tol": 1e-5, "stability_factor": 2.0,
            "sob_to_trans": {k: v for k, v in besov.SOB_TO_TRANS.items()},
            "trans_to_sob": {k: v for k, v in besov.TRANS_TO_SOB.items()}}
    return finish(cfg, rule, rows, t0,
                  extra_csv={"ratios.csv": (["label", "delta", "lhs", "rhs", "ratio"], ratio_rows)})


RUNNERS = {
    "bv_decay": run_bv_decay,
    "time_continuity": run_time_continuity,
    "contraction": run_contraction,
    "visc_rate": run_visc_rate,
    "cont_dep_sigma": run_cont_dep,
    "cont_dep_flux": run_cont_dep,
    "fractional_bv": run_fractional_bv,
    "entropy_residual": run_entropy_residual,
    "lemma_checks": run_lemma_checks,
}


def run_experiment(cfg: ExperimentConfig, output=None) -> ResultRecord:
    for w in cfg.validate():
        log.warning("%s: %s", cfg.name, w)
    log.info("running %s (%s)", cfg.name, cfg.experiment)
    rec = RUNNERS[cfg.experiment](cfg)
    out = output or cfg.output
    if out:
        rec.save(out)
    log.info("%s: %s in %.1f s", cfg.name, "PASS" if rec.passed else "FAIL", rec.wall_time)
    return rec

# }}}


# {{{ suite


def _problem(flux, noise, eps, initial, T) -> dict:
    return {"flux": flux, "noise": noise, "epsilon": eps, "initial": initial, "T": T}


def default_suite() -> list[tuple[tuple[int, ...], dict]]:
    """``(criteria, config)`` pairs of the default acceptance suite."""
    L = 2 * math.pi
    burgers = {"kind": "burgers"}
    bump = {"kind": "bump", "center": math.pi, "width": 0.6}
    riemann = {"kind": "riemann", "left": 1.0, "right": 0.0}
    g512 = {"dim": 1, "cells": 512, "length": L}
    h512 = L / 512
    return [
        ((1,), {"experiment": "bv_decay", "name": "gbm_exact",
                "problem": _problem({"kind": "zero"}, {"kind": "linear", "lam": 0.5}, 0.0, bump, 1.0),
                "grid": g512, "mc": {"paths": 400, "seed": 1000}, "options": {"snapshots": 8, "path_steps": 64}}),
        ((2,), {"experiment": "bv_decay", "name": "bv_decay",
                "problem": _problem(burgers, {"kind": "linear", "lam": 0.3}, 5e-3, bump, 0.5),
                "grid": g512, "mc": {"paths": 200, "seed": 2000}, "options": {"snapshots": 8}}),
        ((3,), {"experiment": "time_continuity", "name": "time_continuity",
                "problem": _problem(burgers, {"kind": "linear", "lam": 0.3}, 5e-3, bump, 0.5),
                "grid": g512, "mc": {"paths": 200, "seed": 3000},
                "scales": [0.5 / 256, 0.5 / 128, 0.5 / 64, 0.5 / 32, 0.5 / 16],
                "options": {"snapshot_divisions": 256}}),
        ((4,), {"experiment": "contraction", "name": "contraction",
                "problem": _problem(burgers, {"kind": "linear", "lam": 0.3}, 5e-3,
                                    {"kind": "bump", "center": 2.6, "width": 0.6}, 0.5),
                "grid": g512, "mc": {"paths": 200, "seed": 4000},
                "options": {"initial_v": {"kind": "bump", "center": 3.9, "width": 0.6, "amplitude": 0.8},
                            "comparison": {"initial_u": bump,
                                           "initial_v": {**bump, "amplitude": 1.5, "offset": 0.1}}}}),
        ((5,), {"experiment": "visc_rate", "name": "visc_rate",
                "problem": _problem(burgers, {"kind": "linear", "lam": 0.3}, 5e-3, riemann, 0.5),
                "grid": {"dim": 1, "cells": 2048, "length": L}, "mc": {"paths": 100, "seed": 5000},
                "scales": [5e-3, 1e-2, 2e-2, 4e-2],
                "options": {"reference_epsilon": 1.25e-3, "reference_factor": 4, "path_steps": 10}}),
        ((6,), {"experiment": "cont_dep_sigma", "name": "cont_dep_sigma",
                "problem": _problem(burgers, {"kind": "sine", "lam": 0.3}, 5e-3, bump, 0.5),
                "grid": g512, "mc": {"paths": 100, "seed": 6000}, "scales": [0.01, 0.02, 0.04],
                "options": {"semantics": "sup"}}),
        ((6,), {"experiment": "cont_dep_flux", "name": "cont_dep_flux",
                "problem": _problem(burgers, {"kind": "sine", "lam": 0.3}, 5e-3, bump, 0.5),
                "grid": g512, "mc": {"paths": 100, "seed": 6100}, "scales": [0.01, 0.02, 0.04]}),
        ((6,), {"experiment": "cont_dep_sigma", "name": "cont_dep_sigma_relative",
                "problem": _problem(burgers, {"kind": "linear", "lam": 0.3}, 5e-3, bump, 0.5),
                "grid": g512, "mc": {"paths": 100, "seed": 6200}, "scales": [0.01, 0.02, 0.04],
                "options": {"semantics": "relative"}}),
        ((7,), {"experiment": "fractional_bv", "name": "fractional_bv",
                "problem": _problem(burgers, {"kind": "x_modulated", "lam": 0.3, "mu": 0.5}, 5e-3,
                                    {"kind": "sine", "amplitude": 1.0}, 0.5),
                "grid": g512, "mc": {"paths": 100, "seed": 7000},
                "scales": [k * h512 for k in (4, 8, 16, 32, 64)]}),
        ((8,), {"experiment": "entropy_residual", "name": "entropy_residual",
                "problem": _problem(burgers, {"kind": "linear", "lam": 0.3}, 2e-3, riemann, 0.5),
                "grid": g512, "mc": {"paths": 200, "seed": 8000}, "options": {"s": 0.1, "t": 0.5}}),
        ((9, 10), {"experiment": "lemma_checks", "name": "lemma_checks", "mc": {"paths": 2, "seed": 0},
                   "options": {"cells": 512}}),
    ]


def run_suite(output, only=None) -> list[tuple[tuple[int, ...], ResultRecord]]:
    out = []
    for crit, d in default_suite():
        if only is not None and d["name"] not in only:
            continue
        cfg = ExperimentConfig.from_dict(d)
        out.append((crit, run_experiment(cfg, os.path.join(output, cfg.name))))
    return out


def reevaluate(directory) -> tuple[bool, bool, list[Check]]:
    """Recompute the verdict of a saved result from ``scales.csv`` and the rule.

    Returns ``(passed, agrees_with_saved_verdict, checks)``.
    """
    d = Path(directory)
    with open(d / "summary.json") as fh:
        summary = json.load(fh)
    checks, _ = evaluate(summary["experiment"], summary["rule"], read_rows(d / "scales.csv"))
    passed = all(c.passed for c in checks)
    return passed, passed == summary["passed"], checks


def result_dirs(root) -> list[Path]:
    root = Path(root)
    if (root / "summary.json").exists():
        return [root]
    return sorted(p.parent for p in root.glob("*/summary.json"))

# }}}
