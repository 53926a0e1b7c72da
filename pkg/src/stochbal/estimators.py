"""Discrete functionals, Monte Carlo aggregation and log-log rate fits."""

from __future__ import annotations

import csv
import functools
import itertools
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate

from .model import Field, Grid, ModelError, WeightFunction
from .solver import BlowUpError, Trajectory

CSV_COLUMNS = ("name", "M", "mean", "stderr", "slope", "r_squared")


class EstimateError(RuntimeError):
    pass


# {{{ reports


@dataclass
class EstimateReport:
    """Monte Carlo estimate of one expectation.

    ``per_path`` holds the successful paths only; ``failures`` lists the
    seeds whose solve blew up.
    """

    name: str
    per_path: np.ndarray
    mean: float
    stderr: float
    paths: int
    seed_base: int
    failures: list[int] = field(default_factory=list)

    @classmethod
    def from_values(cls, name: str, values, seed_base: int = 0, failures=()) -> "EstimateReport":
        v = np.asarray(values, float)
        if v.size == 0:
            raise EstimateError(f"{name}: no successful paths")
        se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        return cls(name, v, float(np.mean(v)), se, int(v.size), int(seed_base), list(failures))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_path"] = [float(x) for x in self.per_path]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_row(self) -> dict:
        return {"name": self.name, "M": self.paths, "mean": repr(self.mean),
                "stderr": repr(self.stderr), "slope": "", "r_squared": ""}


@dataclass
class RateFit:
    """Least-squares line through ``(log scale, log value)``."""

    points: list[tuple[float, float]]
    slope: float
    intercept: float
    r_squared: float
    name: str = ""

    def predict(self, scale):
        return np.exp(self.intercept) * np.asarray(scale, float) ** self.slope

    def to_dict(self) -> dict:
        return {"name": self.name, "points": [list(map(float, p)) for p in self.points],
                "slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_row(self) -> dict:
        return {"name": self.name, "M": "", "mean": "", "stderr": "",
                "slope": repr(self.slope), "r_squared": repr(self.r_squared)}


def append_csv(path, items: Sequence[EstimateReport | RateFit]) -> None:
    """Append rows to ``path``, writing the header when the file is new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if new:
            w.writeheader()
        for it in items:
            w.writerow(it.csv_row())


def fit_rate(points, name: str = "") -> RateFit:
    """Fit ``value ~ C scale^slope``; needs at least three positive points."""
    pts = [(float(s), float(v)) for s, v in points]
    if len(pts) < 3:
        raise EstimateError("fit_rate needs at least 3 points")
    s, v = np.array(pts).T
    if np.any(s <= 0) or np.any(v <= 0) or not np.isfinite(v).all():
        raise EstimateError(f"fit_rate needs positive finite scales and values, got {pts}")
    x, y = np.log(s), np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if sst == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / sst)
    return RateFit(pts, float(slope), float(intercept), r2, name)

# }}}


# {{{ norms


def _values(u) -> np.ndarray:
    return np.asarray(u.values if isinstance(u, Field) else u, float)


def bv_seminorm(u: Field) -> float:
    """Periodic discrete total variation ``sum_axes sum |u_{j+1} - u_j| h^{d-1}``."""
    v = _values(u)
    g = u.grid
    total = 0.0
    for ax in range(g.dim):
        face = g.cell_volume / g.spacing[ax]
        total += float(np.sum(np.abs(np.roll(v, -1, axis=ax) - v))) * face
    return total


def lp_norm(u: Field, p=1) -> float:
    v = np.abs(_values(u))
    if p == np.inf or p == "inf":
        return float(v.max())
    p = float(p)
    if p < 1:
        raise ModelError("p must be >= 1")
    return float((np.sum(v**p) * u.grid.cell_volume) ** (1.0 / p))


def l1_distance(u: Field, v: Field) -> float:
    return float(np.sum(np.abs(_values(u) - _values(v))) * u.grid.cell_volume)


def temporal_l1_modulus(traj: Trajectory, dt: float, window=None) -> float:
    """Window average of ``int |u(t + dt) - u(t)| dx`` over snapshot pairs."""
    if dt == 0:
        return 0.0
    times = np.asarray(traj.times)
    gaps = np.diff(times)
    if gaps.size == 0 or not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
        raise EstimateError("temporal modulus needs uniformly spaced snapshots")
    ratio = dt / gaps[0]
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-6:
        raise EstimateError(f"dt = {dt} is not a multiple of the snapshot spacing {gaps[0]}")
    lo, hi = window if window is not None else (times[0], times[-1] - dt)
    if lo < times[0] - 1e-12 or hi > times[-1] - dt + 1e-9 * max(1.0, times[-1]):
        raise EstimateError("window must lie inside [0, T - dt]")
    tol = 1e-9 * max(1.0, times[-1])
    idx = [i for i in range(times.size - k) if lo - tol <= times[i] <= hi + tol]
    if not idx:
        raise EstimateError("no snapshot pairs inside the window")
    vol = traj.grid.cell_volume
    return float(np.mean([np.sum(np.abs(traj.states[i + k] - traj.states[i])) * vol for i in idx]))


def _weights(psi, grid: Grid) -> np.ndarray:
    if psi is None:
        return np.ones(grid.shape)
    if isinstance(psi, WeightFunction):
        return psi.on_grid(grid)
    return np.broadcast_to(np.asarray(psi, float), grid.shape)


def lattice_shifts(grid: Grid, delta: float) -> list[tuple[int, ...]]:
    """Nonzero integer shifts ``n`` with ``|n h| <= delta`` (Euclidean)."""
    h = np.asarray(grid.spacing)
    tol = 1e-9 * float(h.min())
    reach = [int(math.floor((delta + tol) / hi)) for hi in h]
    out = []
    for n in itertools.product(*[range(-r, r + 1) for r in reach]):
        if any(n) and math.sqrt(sum((ni * hi) ** 2 for ni, hi in zip(n, h))) <= delta + tol:
            out.append(n)
    return out


def _shift(v: np.ndarray, n) -> np.ndarray:
    """``v(x + n h)`` on the periodic grid."""
    return np.roll(v, [-k for k in n], axis=tuple(range(v.ndim)))


def translation_modulus(u: Field, delta: float, psi=None) -> float:
    """``max_{|z| <= delta} sum |u(x + z) - u(x)| psi(x) h^d`` over lattice shifts."""
    if delta < 0:
        raise ModelError("delta must be nonnegative")
    v = _values(u)
    w = _weights(psi, u.grid)
    vol = u.grid.cell_volume
    best = 0.0
    for n in lattice_shifts(u.grid, delta):
        best = max(best, float(np.sum(np.abs(_shift(v, n) - v) * w)) * vol)
    return best


def symmetric_translation_modulus(u: Field, delta: float, psi=None) -> float:
    """``max_{|z| <= delta} sum |u(x + z) - u(x - z)| psi(x) h^d`` over lattice shifts."""
    v = _values(u)
    w = _weights(psi, u.grid)
    vol = u.grid.cell_volume
    best = 0.0
    for n in lattice_shifts(u.grid, delta):
        m = tuple(-k for k in n)
        best = max(best, float(np.sum(np.abs(_shift(v, n) - _shift(v, m)) * w)) * vol)
    return best

# }}}


# {{{ mollifier


@functools.lru_cache(maxsize=None)
def _bump_normalization(dim: int) -> float:
    def bump(r):
        return math.exp(-1.0 / (1.0 - r * r)) if r < 1 else 0.0
    if dim == 1:
        m = 2.0 * integrate.quad(bump, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
    else:
        m = 2.0 * math.pi * integrate.quad(lambda r: r * bump(r), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
    return 1.0 / m


@dataclass(frozen=True)
class Mollifier:
    """Radial bump ``J(z) = c_d exp(-1 / (1 - |z|^2))`` on ``|z| < 1``, unit mass.

    ``kernel`` returns the cell averages of ``J_delta(z) = delta^{-d} J(z / delta)``
    over the cells of a grid, renormalised to unit discrete mass.
    """

    dim: int = 1
    quad_points: int = 12

    @property
    def normalization(self) -> float:
        return _bump_normalization(self.dim)

    def __call__(self, z, delta: float = 1.0):
        z = np.asarray(z, float)
        r2 = (z / delta) ** 2 if z.ndim == 0 or self.dim == 1 else np.sum((z / delta) ** 2, axis=-1)
        inside = r2 < 1
        with np.errstate(divide="ignore", over="ignore"):
            val = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - r2, 1.0)), 0.0)
        return self.normalization * val / delta**self.dim

    def kernel(self, grid: Grid, delta: float, min_cells: float = 2.0) -> list[tuple[tuple[int, ...], float]]:
        """Nonzero ``(shift, weight)`` pairs of the discrete kernel; weights sum to 1.

        Raises when ``delta`` spans fewer than ``min_cells`` cells.
        """
        if grid.dim != self.dim:
            raise ModelError("mollifier and grid dimensions differ")
        h = np.asarray(grid.spacing)
        if delta < min_cells * float(h.min()) * (1 - 1e-12):
            raise ModelError(f"kernel under-resolved: delta = {delta} < {min_cells:g}h = {min_cells * float(h.min())}")
        x, w = np.polynomial.legendre.leggauss(self.quad_points)
        reach = [int(math.ceil(delta / hi + 0.5)) for hi in h]
        c = self.normalization / delta**self.dim
        out = []
        for n in itertools.product(*[range(-r, r + 1) for r in reach]):
            # tensor Gauss rule on the cell centred at n h
            pts = [(ni + 0.5 * x) * hi / delta for ni, hi in zip(n, h)]
            mesh = np.meshgrid(*pts, indexing="ij")
            r2 = sum(m * m for m in mesh)
            inside = r2 < 1
            if not inside.any():
                continue
            vals = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - r2, 1.0)), 0.0)
            ww = w
            for _ in range(self.dim - 1):
                ww = np.multiply.outer(ww, w)
            avg = float(np.sum(ww * vals)) / 2.0**self.dim * c
            if avg > 0:
                out.append((n, avg))
        total = sum(a for _, a in out)
        return [(n, a / total) for n, a in out]


def convolve(v: np.ndarray, kernel) -> np.ndarray:
    """``sum_n w_n v(x + n h)``; commutes with whole-cell translation."""
    out = np.zeros_like(np.asarray(v, float))
    for n, a in kernel:
        out += a * _shift(v, n)
    return out


def besov_dual_modulus(u: Field, delta: float, J: Mollifier | None = None, psi=None) -> float:
    """``sum_z J_delta(z) sum_x |u(x + z) - u(x - z)| psi(x) h^d``."""
    J = J or Mollifier(u.grid.dim)
    v = _values(u)
    w = _weights(psi, u.grid)
    vol = u.grid.cell_volume
    total = 0.0
    for n, a in J.kernel(u.grid, delta):
        m = tuple(-k for k in n)
        total += a * float(np.sum(np.abs(_shift(v, n) - _shift(v, m)) * w))
    return total * vol

# }}}


# {{{ Monte Carlo


def _run_one(statistic, seed):
    try:
        return seed, float(statistic(seed)), None
    except BlowUpError as e:
        return seed, math.nan, str(e)


def mc_expectation(statistic: Callable[[int], float], M: int, seed_base: int = 0, name: str = "",
                   n_jobs: int = 1, max_failure_fraction: float = 0.1) -> EstimateReport:
    """Estimate ``E[statistic]`` over paths seeded ``seed_base + i``, ``i < M``.

    Paths that blow up are recorded as failures; more than
    ``max_failure_fraction`` of them aborts the estimate.
    """
    if M < 2:
        raise EstimateError("M must be at least 2")
    seeds = [seed_base + i for i in range(M)]
    if n_jobs == 1:
        rows = [_run_one(statistic, s) for s in seeds]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(_run_one)(statistic, s) for s in seeds)
    rows.sort(key=lambda r: r[0])
    failures = [s for s, _, err in rows if err is not None]
    if len(failures) > max_failure_fraction * M:
        raise EstimateError(f"{name}: {len(failures)} of {M} paths blew up")
    vals = [v for _, v, err in rows if err is None]
    return EstimateReport.from_values(name, vals, seed_base, failures)


def mc_vector(statistic: Callable[[int], Sequence[float]], M: int, seed_base: int = 0,
              names: Sequence[str] = (), n_jobs: int = 1,
              max_failure_fraction: float = 0.1) -> list[EstimateReport]:
    """Like ``mc_expectation`` for a statistic returning several values per path."""
    if M < 2:
        raise EstimateError("M must be at least 2")
    seeds = [seed_base + i for i in range(M)]

    def one(seed):
        try:
            return seed, np.asarray(statistic(seed), float), None
        except BlowUpError as e:
            return seed, None, str(e)

    if n_jobs == 1:
        rows = [one(s) for s in seeds]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(one)(s) for s in seeds)
    rows.sort(key=lambda r: r[0])
    failures = [s for s, _, err in rows if err is not None]
    if len(failures) > max_failure_fraction * M:
        raise EstimateError(f"{len(failures)} of {M} paths blew up")
    table = np.array([v for _, v, err in rows if err is None])
    names = list(names) or [f"stat{i}" for i in range(table.shape[1])]
    return [EstimateReport.from_values(nm, table[:, i], seed_base, failures) for i, nm in enumerate(names)]

# }}}
