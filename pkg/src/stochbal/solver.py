"""Explicit finite-volume solver for the viscous stochastic balance law.

One step is Lie-split: a monotone flux difference plus centred diffusion,
followed by an Euler-Maruyama noise update evaluated at the post-transport
state (Ito convention).  The time step follows the Brownian path: the path
is bridge-refined globally until it satisfies the CFL bound for the initial
data, and any step that violates the bound for the running solution is
split further by local bridge sampling.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from . import _kernels as _k
from .model import Field, FluxModel, Grid, ModelError, Problem
from .noise import BrownianPath, PathError, refine_path

SCHEMES = ("local_lax_friedrichs", "engquist_osher")


class BlowUpError(RuntimeError):
    def __init__(self, time: float, cell: tuple[int, ...]):
        super().__init__(f"non-finite solution at t = {time:.6g}, cell {cell}")
        self.time = time
        self.cell = cell


@dataclass(frozen=True)
class SolverConfig:
    flux_scheme: str = "local_lax_friedrichs"
    cfl_number: float = 0.45
    dt_override: float | None = None
    snapshot_times: tuple[float, ...] = ()
    record_steps: bool = False

    def __post_init__(self):
        if self.flux_scheme not in SCHEMES:
            raise ModelError(f"unknown flux scheme {self.flux_scheme!r}")
        if not 0 < self.cfl_number <= 1:
            raise ModelError("cfl_number must lie in (0, 1]")
        if self.dt_override is not None and not self.dt_override > 0:
            raise ModelError("dt_override must be positive")
        snaps = tuple(float(t) for t in self.snapshot_times)
        if list(snaps) != sorted(snaps):
            raise ModelError("snapshot_times must be sorted")
        object.__setattr__(self, "snapshot_times", snaps)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of one sample path.

    With ``record_steps`` the trajectory also keeps every solver state
    (``step_times``, ``step_states``) and the increments consumed by each step
    (``step_increments``, shape ``(steps, modes)``).
    """

    problem: Problem
    grid: Grid
    path: BrownianPath
    times: np.ndarray
    states: np.ndarray
    step_times: np.ndarray | None = None
    step_states: np.ndarray | None = None
    step_increments: np.ndarray | None = None
    n_steps: int = 0

    @property
    def snapshots(self) -> list[tuple[float, Field]]:
        return [(float(t), Field(self.grid, s)) for t, s in zip(self.times, self.states)]

    def field(self, i: int) -> Field:
        return Field(self.grid, self.states[i])

    @property
    def terminal(self) -> Field:
        return Field(self.grid, self.states[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "cell", "value"])
            for t, s in zip(self.times, self.states):
                for i, v in enumerate(s.ravel()):
                    w.writerow([repr(float(t)), i, repr(float(v))])

    def to_binary(self, path) -> None:
        write_binary(path, self.grid, self.times, self.states)


# Binary layout, little endian:
#   4s  magic b"SBLT"
#   u32 version (1), u32 dim, u32 snapshots, u32 cells[2], f64 length[2]
#   f64 times[snapshots]
#   f64 values[snapshots, cells_0, cells_1] (row-major; cells_1 = 1 in 1-D)
_HEADER = struct.Struct("<4sIIIIIdd")


def write_binary(path, grid: Grid, times, states) -> None:
    cells = list(grid.cells) + [1] * (2 - grid.dim)
    length = list(grid.length) + [0.0] * (2 - grid.dim)
    times = np.asarray(times, "<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"SBLT", 1, grid.dim, times.size, *cells, *length))
        fh.write(times.tobytes())
        fh.write(np.ascontiguousarray(states, "<f8").tobytes())


def read_binary(path) -> tuple[Grid, np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, dim, n, c0, c1, l0, l1 = _HEADER.unpack_from(raw)
    if magic != b"SBLT" or version != 1:
        raise ValueError("not a trajectory dump")
    grid = Grid(dim, (c0, c1)[:dim], (l0, l1)[:dim])
    off = _HEADER.size
    times = np.frombuffer(raw, "<f8", n, off)
    states = np.frombuffer(raw, "<f8", n * grid.size, off + 8 * n).reshape((n,) + grid.shape)
    return grid, times.copy(), states.copy()


def cfl_dt(grid: Grid, flux: FluxModel, epsilon: float, u_range, cfl: float) -> float:
    """``cfl * min(h / max|f'|, h^2 / (2 d eps))`` over the axes; ``inf`` if unbounded."""
    lo, hi = map(float, u_range)
    if not lo <= hi:
        raise ModelError("empty u_range")
    if not 0 < cfl <= 1:
        raise ModelError("cfl must lie in (0, 1]")
    a = float(flux.max_abs_fprime(lo, hi))
    h = min(grid.spacing)
    dt = math.inf
    if a > 0:
        dt = h / a
    if epsilon > 0:
        dt = min(dt, h * h / (2 * grid.dim * epsilon))
    return cfl * dt


def numerical_flux(uL, uR, flux: FluxModel, scheme: str = "local_lax_friedrichs"):
    """Two-point monotone flux ``F(uL, uR)``; consistent, ``F(u, u) = f(u)``."""
    uL = np.asarray(uL, float)
    uR = np.asarray(uR, float)
    fL, fR = flux.f(uL), flux.f(uR)
    if scheme == "local_lax_friedrichs":
        alpha = flux.max_abs_fprime(np.minimum(uL, uR), np.maximum(uL, uR))
        return 0.5 * (fL + fR) - 0.5 * alpha * (uR - uL)
    if scheme == "engquist_osher":
        # int_{uL}^{uR} |f'|, signed by the orientation of the pair
        tv = flux.abs_fprime_integral(np.minimum(uL, uR), np.maximum(uL, uR))
        return 0.5 * (fL + fR) - 0.5 * np.sign(uR - uL) * tv
    raise ModelError(f"unknown flux scheme {scheme!r}")


class _Stepper:
    """Pre-bound arrays for repeated steps on one grid."""

    def __init__(self, problem: Problem, grid: Grid, config: SolverConfig):
        self.problem = problem
        self.grid = grid
        self.config = config
        self.x = grid.mesh()[0]
        self.h = grid.spacing
        self.flux = problem.flux
        self.noise = problem.noise
        self.eps = problem.epsilon
        self.transport = problem.flux.kind != "zero"
        self.scheme = config.flux_scheme
        self.fast = None
        if grid.dim == 1 and problem.flux.kind != "table" and problem.noise.kind in _k.NOISE_CODES:
            self.fast = self._fast_args()

    def _fast_args(self):
        flux, noise = self.flux, self.noise
        c = np.trim_zeros(np.asarray(flux.coefficients, float), "b")
        if c.size == 0:
            c = np.zeros(1)
        cp = P.polyder(c) if c.size > 1 else np.zeros(1)
        return (self.h[0], float(self.eps), c, cp, np.asarray(flux._fpp_roots, float),
                np.asarray(flux._fp_roots, float), _k.LLF if self.scheme == SCHEMES[0] else _k.EO,
                self.transport, _k.NOISE_CODES[noise.kind], float(noise.lam), float(noise.mu),
                np.sin(self.x).astype(float))

    def deterministic(self, u: np.ndarray, dt: float) -> np.ndarray:
        out = u.copy()
        for ax in range(self.grid.dim):
            h = self.h[ax]
            if self.transport:
                ur = np.roll(u, -1, axis=ax)
                F = numerical_flux(u, ur, self.flux, self.scheme)
                out -= (dt / h) * (F - np.roll(F, 1, axis=ax))
            if self.eps > 0:
                out += (self.eps * dt / (h * h)) * (np.roll(u, -1, axis=ax) - 2 * u + np.roll(u, 1, axis=ax))
        return out

    def advance(self, u: np.ndarray, dt: float, dW) -> np.ndarray:
        if self.fast is not None:
            h, eps, c, cp, crit, roots, scheme, transport, code, lam, mu, sinx = self.fast
            dW = np.atleast_1d(np.asarray(dW, float))
            dw = float(dW[0]) if dW.size == 1 else float(np.sum(dW)) / math.sqrt(dW.size)
            return _k.advance_1d(u, dt, h, eps, c, cp, crit, roots, scheme, transport,
                                 code, lam, mu, sinx, dw)
        return self.advance_reference(u, dt, dW)

    def advance_block(self, u: np.ndarray, dt: float, subs: np.ndarray) -> tuple[np.ndarray, int]:
        """Apply ``subs.shape[1]`` steps; returns the state and the steps taken.

        Stops at the first non-finite state.
        """
        if self.fast is not None:
            h, eps, c, cp, crit, roots, scheme, transport, code, lam, mu, sinx = self.fast
            m = subs.shape[0]
            dws = subs[0] if m == 1 else subs.sum(axis=0) / math.sqrt(m)
            return _k.advance_block_1d(u, dt, h, eps, c, cp, crit, roots, scheme, transport,
                                       code, lam, mu, sinx, np.ascontiguousarray(dws, float))
        for i in range(subs.shape[1]):
            u = self.advance_reference(u, dt, subs[:, i])
            if not np.isfinite(u).all():
                return u, i + 1
        return u, subs.shape[1]

    def advance_reference(self, u: np.ndarray, dt: float, dW) -> np.ndarray:
        v = self.deterministic(u, dt)
        if self.noise.kind != "zero":
            v += self.noise.forcing(self.x, v, dW)
        return v

    def dt_bound(self, u: np.ndarray) -> float:
        return cfl_dt(self.grid, self.flux, self.eps, (float(u.min()), float(u.max())), self.config.cfl_number)


def step(state: Field, dt: float, dW, problem: Problem, config: SolverConfig = SolverConfig(),
         time: float = 0.0) -> Field:
    """One split step; raises ``BlowUpError`` on a non-finite result."""
    st = _Stepper(problem, state.grid, config)
    v = st.advance(np.asarray(state.values, float), float(dt), dW)
    _check_finite(v, time + dt)
    return Field(state.grid, v)


def _check_finite(v: np.ndarray, t: float) -> None:
    if not np.isfinite(v).all():
        bad = np.argwhere(~np.isfinite(v))[0]
        raise BlowUpError(t, tuple(int(i) for i in bad))


def prepare_path(path: BrownianPath, problem: Problem, grid: Grid, config: SolverConfig) -> BrownianPath:
    """Refine ``path`` to the working resolution of the solver."""
    nodes = path.time_grid
    if not np.any(np.isclose(nodes, problem.T, rtol=1e-12, atol=1e-12 * problem.T)):
        raise PathError(f"path grid has no node at T = {problem.T}")
    if config.dt_override is not None:
        dt_path = np.diff(nodes)
        if not path.is_uniform:
            raise PathError("dt_override needs a uniform path grid")
        ratio = dt_path[0] / config.dt_override
        k = int(round(math.log2(ratio))) if ratio >= 1 else -1
        if k < 0 or not math.isclose(2.0**k, ratio, rel_tol=1e-9):
            raise PathError(f"dt_override {config.dt_override} is not a dyadic refinement "
                            f"of the path step {dt_path[0]}")
        for _ in range(k):
            path = refine_path(path)
        return path
    u0 = problem.initial.sample(grid).values
    bound = cfl_dt(grid, problem.flux, problem.epsilon, (float(u0.min()), float(u0.max())), config.cfl_number)
    while path.steps and math.isfinite(bound) and float(np.max(path.dt)) > bound * (1 + 1e-12):
        if not path.is_uniform:
            raise PathError("path cannot be refined to the CFL step: non-uniform grid")
        path = refine_path(path)
    return path


def solve(problem: Problem, grid: Grid, path: BrownianPath, config: SolverConfig = SolverConfig(),
          initial: np.ndarray | None = None) -> Trajectory:
    """Advance ``u_0`` to ``T`` along ``path``.

    ``initial`` overrides ``problem.initial`` with explicit cell values.
    """
    if path.modes != problem.noise.modes and problem.noise.kind != "zero":
        raise PathError(f"path has {path.modes} modes, noise needs {problem.noise.modes}")
    T = problem.T
    work = prepare_path(path, problem, grid, config)
    st = _Stepper(problem, grid, config)
    u = (problem.initial.sample(grid).values if initial is None
         else np.asarray(initial, float).reshape(grid.shape)).astype(np.float64, copy=True)

    snaps = list(config.snapshot_times) or [T]
    if snaps[0] < 0 or snaps[-1] > T * (1 + 1e-12):
        raise ModelError("snapshot times must lie in [0, T]")
    tol = 1e-9 * T
    times, states = [], []
    si = 0

    def record(t):
        nonlocal si
        while si < len(snaps) and t >= snaps[si] - tol:
            times.append(t)
            states.append(u.copy())
            si += 1

    rec = config.record_steps
    step_t, step_u, step_dw = ([0.0], [u.copy()], []) if rec else (None, None, None)
    record(0.0)
    tg = work.time_grid
    adaptive = config.dt_override is None
    n_steps = 0
    t = 0.0
    for j in range(work.steps):
        if tg[j] >= T - tol:
            break
        dt = float(tg[j + 1] - tg[j])
        depth = 0
        if adaptive:
            bound = st.dt_bound(u)
            while dt / 2**depth > bound * (1 + 1e-12) and depth < 30:
                depth += 1
        if depth == 0:
            subs = work.increments[:, j:j + 1]
        else:
            subs = work.substeps(j, depth)
        sub_dt = dt / 2**depth
        if not rec:
            u, done = st.advance_block(u, sub_dt, subs)
            n_steps += done
            t_next = float(tg[j]) + done * sub_dt if done < subs.shape[1] else float(tg[j + 1])
            _check_finite(u, t_next)
            t = float(tg[j + 1])
            record(t)
            continue
        for i in range(subs.shape[1]):
            dW = subs[:, i]
            u = st.advance(u, sub_dt, dW)
            t_next = float(tg[j]) + (i + 1) * sub_dt if i + 1 < subs.shape[1] else float(tg[j + 1])
            _check_finite(u, t_next)
            n_steps += 1
            if rec:
                step_t.append(t_next)
                step_u.append(u.copy())
                step_dw.append(dW.copy())
        t = float(tg[j + 1])
        record(t)
    if si < len(snaps):
        raise ModelError(f"snapshot times beyond the reached time {t}")
    kw = {}
    if rec:
        kw = dict(step_times=np.asarray(step_t), step_states=np.asarray(step_u),
                  step_increments=np.asarray(step_dw).reshape(len(step_dw), path.modes))
    return Trajectory(problem, grid, path, np.asarray(times), np.asarray(states), n_steps=n_steps, **kw)
