"""Seeded discrete Wiener paths with Brownian-bridge refinement.

Normals are produced by a counter-based generator (Philox4x64): the draw for
``(seed, level, mode, index)`` is the ``index``-th 64-bit word of the Philox
stream keyed on ``(seed, level << 32 | mode)``.  A draw therefore never
depends on how many other draws were made before it, which makes paths
reproducible under any generation order.  ``level = 0`` holds the base
increments; ``level = l + 1`` holds the bridge variates that split the steps
of a level-``l`` path.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


class PathError(ValueError):
    pass


def _philox(seed: int, level: int, mode: int, start: int) -> np.random.Philox:
    key = np.array([seed & _MASK64, ((level & 0xFFFFFFFF) << 32) | (mode & 0xFFFFFFFF)], dtype=np.uint64)
    return np.random.Philox(key=key, counter=start // 4)


def counter_normals(seed: int, level: int, mode: int, start: int, count: int) -> np.ndarray:
    """Standard normals for word indices ``start .. start + count - 1``."""
    if count <= 0:
        return np.zeros(0)
    offset = start % 4
    words = _philox(seed, level, mode, start).random_raw(count + offset)[offset:]
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Increments of ``m`` independent Wiener processes on ``time_grid``.

    ``increments`` has shape ``(modes, steps)``.
    """

    seed: int
    modes: int
    time_grid: np.ndarray
    increments: np.ndarray
    level: int = 0

    def __post_init__(self):
        tg = np.array(self.time_grid, dtype=np.float64)
        inc = np.array(self.increments, dtype=np.float64).reshape(self.modes, tg.size - 1)
        tg.flags.writeable = False
        inc.flags.writeable = False
        object.__setattr__(self, "time_grid", tg)
        object.__setattr__(self, "increments", inc)

    @property
    def steps(self) -> int:
        return self.time_grid.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.time_grid)

    @property
    def is_uniform(self) -> bool:
        d = self.dt
        return d.size == 0 or bool(np.allclose(d, d[0], rtol=1e-9, atol=0))

    def values(self) -> np.ndarray:
        """``W_k(t_j)``, shape ``(modes, steps + 1)``, starting at 0."""
        out = np.zeros((self.modes, self.steps + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    def value_at(self, t: float, tol: float = 1e-9) -> np.ndarray:
        j = int(np.argmin(np.abs(self.time_grid - t)))
        if abs(self.time_grid[j] - t) > tol * max(1.0, self.time_grid[-1]):
            raise PathError(f"t = {t} is not a node of the path")
        return self.values()[:, j]

    def substeps(self, step: int, depth: int) -> np.ndarray:
        """Increments of step ``step`` split ``depth`` times by bridge sampling.

        Shape ``(modes, 2**depth)``.  Identical to the matching slice of
        ``refine_path`` applied ``depth`` times.
        """
        inc = self.increments[:, step:step + 1].copy()
        dt = float(self.time_grid[step + 1] - self.time_grid[step])
        first = step
        for lvl in range(self.level + 1, self.level + depth + 1):
            n = inc.shape[1]
            z = np.stack([counter_normals(self.seed, lvl, k, first, n) for k in range(self.modes)])
            inc = _bridge_split(inc, dt, z)
            dt *= 0.5
            first *= 2
        return inc

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "mode", "increment"])
            for j in range(self.steps):
                for k in range(self.modes):
                    w.writerow([j, k, repr(float(self.increments[k, j]))])


def _bridge_split(inc: np.ndarray, dt, z: np.ndarray) -> np.ndarray:
    """Split each increment over ``dt`` into two halves using bridge variates ``z``."""
    first = 0.5 * inc + 0.5 * np.sqrt(dt) * z
    out = np.empty((inc.shape[0], 2 * inc.shape[1]))
    out[:, 0::2] = first
    out[:, 1::2] = inc - first
    return out


def sample_path(seed: int, modes: int, time_grid) -> BrownianPath:
    tg = np.asarray(time_grid, dtype=np.float64)
    if tg.ndim != 1 or tg.size == 0 or tg[0] != 0.0:
        raise PathError("time grid must be a non-empty 1-D array starting at 0")
    dt = np.diff(tg)
    if np.any(dt <= 0):
        raise PathError("time grid must be strictly increasing")
    if modes < 1:
        raise PathError("modes must be positive")
    inc = np.stack([np.sqrt(dt) * counter_normals(seed, 0, k, 0, dt.size) for k in range(modes)]) \
        if dt.size else np.zeros((modes, 0))
    return BrownianPath(int(seed), int(modes), tg, inc, 0)


def uniform_path(seed: int, T: float, steps: int, modes: int = 1) -> BrownianPath:
    return sample_path(seed, modes, np.linspace(0.0, T, steps + 1))


def refine_path(p: BrownianPath) -> BrownianPath:
    """Midpoint refinement; parent increments are the pairwise sums of the children."""
    if not p.is_uniform:
        raise PathError("bridge refinement needs a uniform time grid")
    if p.steps == 0:
        return BrownianPath(p.seed, p.modes, p.time_grid, p.increments, p.level + 1)
    dt = float(p.time_grid[1] - p.time_grid[0])
    z = np.stack([counter_normals(p.seed, p.level + 1, k, 0, p.steps) for k in range(p.modes)])
    inc = _bridge_split(p.increments, dt, z)
    tg = np.empty(2 * p.steps + 1)
    tg[0::2] = p.time_grid
    tg[1::2] = 0.5 * (p.time_grid[:-1] + p.time_grid[1:])
    return BrownianPath(p.seed, p.modes, tg, inc, p.level + 1)


def refine_to(p: BrownianPath, dt_max: float) -> BrownianPath:
    """Refine until every step is at most ``dt_max``."""
    while p.steps and float(np.max(p.dt)) > dt_max * (1 + 1e-12):
        p = refine_path(p)
    return p
