"""Grids, grid functions, flux/noise models and weight functions.

Everything here is immutable once built.  The spatial domain is a periodic
box ``[0, L_1) x ... x [0, L_d)`` with ``d`` in {1, 2}; cells are centred at
``(j + 1/2) h``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import CubicSpline

WORKING_RANGE = (-10.0, 10.0)


class ModelError(ValueError):
    """Invalid model construction or an unsatisfiable precondition."""


# {{{ grid and fields


@dataclass(frozen=True)
class Grid:
    dim: int
    cells: tuple[int, ...]
    length: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ModelError(f"dim must be 1 or 2, got {self.dim}")
        cells = tuple(int(c) for c in np.broadcast_to(self.cells, (self.dim,)))
        length = tuple(float(x) for x in np.broadcast_to(self.length, (self.dim,)))
        if any(c <= 0 for c in cells):
            raise ModelError("cells_per_axis must be positive")
        if any(not (x > 0 and math.isfinite(x)) for x in length):
            raise ModelError("domain_length must be positive and finite")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "length", length)

    @classmethod
    def uniform(cls, cells: int, length: float = 2 * math.pi, dim: int = 1) -> "Grid":
        return cls(dim, (cells,) * dim, (length,) * dim)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.length, self.cells))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def boundary(self) -> str:
        return "periodic"

    def centers(self, axis: int = 0) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates broadcast to the field shape."""
        return tuple(np.meshgrid(*[self.centers(a) for a in range(self.dim)], indexing="ij"))

    def centered_mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinates relative to the domain centre, used by weight functions."""
        return tuple(x - 0.5 * L for x, L in zip(self.mesh(), self.length))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "cells": list(self.cells), "length": list(self.length)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        dim = int(d.get("dim", 1))
        return cls(dim, tuple(np.broadcast_to(d["cells"], (dim,))),
                   tuple(np.broadcast_to(d.get("length", 2 * math.pi), (dim,))))


@dataclass(frozen=True, eq=False)
class Field:
    """Cell averages of ``u`` on a periodic grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(self.grid.shape)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def scale(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)

    def to_csv(self, path) -> None:
        write_field_csv(self, path)


def write_field_csv(u: Field, path) -> None:
    """One row per cell: index, coordinates, value."""
    grid = u.grid
    coords = [x.ravel() for x in grid.mesh()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"x{a}" for a in range(grid.dim)] + ["value"])
        for i, v in enumerate(u.values.ravel()):
            w.writerow([i] + [repr(float(c[i])) for c in coords] + [repr(float(v))])


def read_field_csv(path, grid: Grid) -> Field:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != grid.size:
        raise ModelError(f"expected {grid.size} rows, found {len(rows)}")
    values = np.empty(grid.size)
    for row in rows:
        values[int(row["index"])] = float(row["value"])
    return Field(grid, values)

# }}}


# {{{ flux


@dataclass(frozen=True, eq=False)
class FluxModel:
    """Scalar flux ``f``; in ``d`` dimensions every component ``f_i`` equals ``f``.

    Built-in kinds are polynomials, so ``f'`` and ``f''`` are exact.  The
    ``table`` kind interpolates tabulated values with a cubic spline.
    """

    kind: str
    coefficients: tuple[float, ...] = ()
    table_u: tuple[float, ...] = ()
    table_f: tuple[float, ...] = ()
    growth_exponent: int = 0
    growth_constant: float = 1.0
    working_range: tuple[float, float] = WORKING_RANGE
    _f: Callable = field(init=False, repr=False)
    _fp: Callable = field(init=False, repr=False)
    _fpp: Callable = field(init=False, repr=False)
    _fp_roots: np.ndarray = field(init=False, repr=False)
    _fpp_roots: np.ndarray = field(init=False, repr=False)
    _fppp_roots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind == "table":
            spline = CubicSpline(np.asarray(self.table_u, float), np.asarray(self.table_f, float))
            d1, d2 = spline.derivative(1), spline.derivative(2)
            object.__setattr__(self, "_f", spline)
            object.__setattr__(self, "_fp", d1)
            object.__setattr__(self, "_fpp", d2)
            object.__setattr__(self, "_fp_roots", _real_roots_spline(d1))
            object.__setattr__(self, "_fpp_roots", _real_roots_spline(d2))
            object.__setattr__(self, "_fppp_roots", np.zeros(0))
        elif self.kind in ("burgers", "linear", "polynomial", "zero"):
            c = np.trim_zeros(np.asarray(self.coefficients, float), "b")
            if c.size == 0:
                c = np.zeros(1)
            cp = P.polyder(c) if c.size > 1 else np.zeros(1)
            cpp = P.polyder(cp) if cp.size > 1 else np.zeros(1)
            object.__setattr__(self, "_f", _horner(c))
            object.__setattr__(self, "_fp", _horner(cp))
            object.__setattr__(self, "_fpp", _horner(cpp))
            object.__setattr__(self, "_fp_roots", _real_roots(cp))
            object.__setattr__(self, "_fpp_roots", _real_roots(cpp))
            object.__setattr__(self, "_fppp_roots",
                               _real_roots(P.polyder(cpp)) if cpp.size > 1 else np.zeros(0))
        else:
            raise ModelError(f"unknown flux kind {self.kind!r}")

    # constructors

    @classmethod
    def burgers(cls) -> "FluxModel":
        return cls("burgers", (0.0, 0.0, 0.5), growth_exponent=2, growth_constant=0.5)

    @classmethod
    def linear(cls, a: float) -> "FluxModel":
        return cls("linear", (0.0, float(a)), growth_exponent=1, growth_constant=abs(a))

    @classmethod
    def zero(cls) -> "FluxModel":
        return cls("zero", (0.0,), growth_exponent=0, growth_constant=0.0)

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "FluxModel":
        """``f(u) = sum_k c_k u^k`` with coefficients in increasing degree."""
        c = tuple(float(x) for x in coefficients)
        r = max(len(np.trim_zeros(np.asarray(c), "b")) - 1, 0)
        return cls("polynomial", c, growth_exponent=r,
                   growth_constant=float(np.sum(np.abs(c))) if c else 0.0)

    @classmethod
    def table(cls, u: Sequence[float], f: Sequence[float], growth_exponent: int = 3,
              growth_constant: float | None = None) -> "FluxModel":
        u = tuple(float(x) for x in u)
        f = tuple(float(x) for x in f)
        if growth_constant is None:
            uu = np.asarray(u)
            growth_constant = float(np.max(np.abs(f) / (1 + np.abs(uu) ** growth_exponent)))
        return cls("table", table_u=u, table_f=f, growth_exponent=growth_exponent,
                   growth_constant=growth_constant)

    def perturbed(self, eta: float) -> "FluxModel":
        """``f + eta * u``; used for flux continuous-dependence runs."""
        if self.kind == "table":
            return FluxModel.table(self.table_u,
                                   np.asarray(self.table_f) + eta * np.asarray(self.table_u),
                                   self.growth_exponent)
        c = list(self.coefficients) + [0.0] * max(0, 2 - len(self.coefficients))
        c[1] += eta
        return FluxModel("polynomial", tuple(c), growth_exponent=max(self.growth_exponent, 1),
                         growth_constant=self.growth_constant + abs(eta))

    # evaluation

    def f(self, u):
        return self._f(u)

    def fprime(self, u):
        return self._fp(u)

    def fsecond(self, u):
        return self._fpp(u)

    def max_abs_fprime(self, lo, hi):
        """``max |f'|`` over ``[lo, hi]`` (elementwise for arrays)."""
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        out = np.maximum(np.abs(self._fp(lo)), np.abs(self._fp(hi)))
        for c in self._fpp_roots:
            inside = (lo <= c) & (c <= hi)
            if np.any(inside):
                out = np.where(inside, np.maximum(out, abs(float(self._fp(c)))), out)
        return out

    def abs_fprime_integral(self, a, b):
        """``int_a^b |f'(s)| ds`` for ``a <= b`` elementwise (split at roots of ``f'``)."""
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        if self._fp_roots.size == 0:
            return np.abs(self._f(b) - self._f(a))
        pts = [a] + [np.clip(r, a, b) for r in self._fp_roots] + [b]
        pts = np.sort(np.stack(np.broadcast_arrays(*pts)), axis=0)
        fv = self._f(pts)
        return np.sum(np.abs(np.diff(fv, axis=0)), axis=0)

    @property
    def lipschitz_fprime(self) -> float:
        lo, hi = self.working_range
        return float(self.max_abs_fprime(lo, hi))

    @property
    def bound_fsecond(self) -> float:
        return self.fsecond_bound(self.working_range)

    def fsecond_bound(self, u_range=None) -> float:
        """Max of |f''| on ``u_range`` (endpoints plus interior critical points of f'')."""
        lo, hi = u_range or self.working_range
        pts = np.concatenate([[lo, hi], np.linspace(lo, hi, 2001),
                              [r for r in self._fppp_roots if lo <= r <= hi]])
        return float(np.max(np.abs(self._fpp(pts))))

    def to_dict(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "u": list(self.table_u), "f": list(self.table_f),
                    "growth_exponent": self.growth_exponent}
        if self.kind == "linear":
            return {"kind": "linear", "a": self.coefficients[1]}
        if self.kind in ("burgers", "zero"):
            return {"kind": self.kind}
        return {"kind": "polynomial", "coefficients": list(self.coefficients)}

    @classmethod
    def from_dict(cls, d: dict) -> "FluxModel":
        kind = d.get("kind")
        if kind == "burgers":
            return cls.burgers()
        if kind == "zero":
            return cls.zero()
        if kind == "linear":
            return cls.linear(d["a"])
        if kind == "polynomial":
            return cls.polynomial(d["coefficients"])
        if kind == "table":
            return cls.table(d["u"], d["f"], d.get("growth_exponent", 3))
        raise ModelError(f"unknown flux kind {kind!r}")


def _horner(c: np.ndarray) -> Callable:
    c = np.asarray(c, float)
    if c.size == 1:
        c0 = float(c[0])
        return lambda u: np.zeros_like(np.asarray(u, float)) + c0
    if c.size == 2:
        c0, c1 = float(c[0]), float(c[1])
        return lambda u: c0 + c1 * np.asarray(u, float) if c0 else c1 * np.asarray(u, float)
    if c.size == 3 and c[0] == 0 and c[1] == 0:
        c2 = float(c[2])
        return lambda u: c2 * np.square(u)
    rev = c[::-1].copy()
    return lambda u: np.polyval(rev, u)


def _real_roots(c: np.ndarray) -> np.ndarray:
    c = np.trim_zeros(np.asarray(c, float), "b")
    if c.size <= 1:
        return np.zeros(0)
    r = P.polyroots(c)
    return np.sort(r[np.abs(r.imag) < 1e-12].real)


def _real_roots_spline(s) -> np.ndarray:
    r = np.asarray(s.roots(extrapolate=False), float)
    return np.sort(r[np.isfinite(r)])

# }}}


# {{{ noise


NOISE_KINDS = ("zero", "linear", "sine", "x_modulated", "custom")


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Noise coefficient ``sigma(x, u)``.

    With ``modes = m`` the forcing is ``sum_k sigma_k dW_k`` where every
    ``sigma_k = sigma / sqrt(m)``, so the quadratic variation does not depend
    on ``m``.
    """

    kind: str
    lam: float = 0.0
    mu: float = 0.0
    modes: int = 1
    func: Callable | None = None
    declared_lipschitz_u: float | None = None
    declared_lipschitz_x: float | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ModelError(f"unknown noise kind {self.kind!r}")
        if self.modes < 1:
            raise ModelError("modes must be a positive integer")
        if self.kind == "custom" and (self.func is None or self.declared_lipschitz_u is None):
            raise ModelError("custom noise needs func and a declared lipschitz_u")

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls("zero")

    @classmethod
    def linear(cls, lam: float, modes: int = 1) -> "NoiseModel":
        return cls("linear", lam=float(lam), modes=modes)

    @classmethod
    def sine(cls, lam: float, modes: int = 1) -> "NoiseModel":
        return cls("sine", lam=float(lam), modes=modes)

    @classmethod
    def x_modulated(cls, lam: float, mu: float, modes: int = 1) -> "NoiseModel":
        return cls("x_modulated", lam=float(lam), mu=float(mu), modes=modes)

    @classmethod
    def custom(cls, func: Callable, lipschitz_u: float, lipschitz_x: float | None = None,
               modes: int = 1) -> "NoiseModel":
        """``func(x, u)`` must be vectorised; ``x`` is the first coordinate."""
        return cls("custom", func=func, modes=modes, declared_lipschitz_u=float(lipschitz_u),
                   declared_lipschitz_x=lipschitz_x)

    @property
    def x_dependent(self) -> bool:
        if self.kind == "x_modulated":
            return self.mu != 0.0
        return self.kind == "custom" and self.declared_lipschitz_x is not None

    @property
    def bounded(self) -> bool:
        return self.kind in ("zero", "sine")

    @property
    def lipschitz_u(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind in ("linear", "sine"):
            return abs(self.lam)
        if self.kind == "x_modulated":
            return abs(self.lam) * (1 + abs(self.mu))
        return float(self.declared_lipschitz_u)

    @property
    def lipschitz_x(self) -> float:
        if self.kind == "x_modulated":
            return abs(self.lam * self.mu)
        if self.kind == "custom":
            return float(self.declared_lipschitz_x or 0.0)
        return 0.0

    def sigma(self, x, u):
        """Total coefficient ``sigma(x, u)``; ``x`` is the first coordinate."""
        u = np.asarray(u, float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return self.lam * u
        if self.kind == "sine":
            return self.lam * np.sin(u)
        if self.kind == "x_modulated":
            return self.lam * (1.0 + self.mu * np.sin(x)) * u
        return np.asarray(self.func(x, u), float)

    def dsigma_du(self, x, u, step: float = 1e-6):
        u = np.asarray(u, float)
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return np.full_like(u, self.lam)
        if self.kind == "sine":
            return self.lam * np.cos(u)
        if self.kind == "x_modulated":
            return self.lam * (1.0 + self.mu * np.sin(x)) + 0 * u
        return (self.sigma(x, u + step) - self.sigma(x, u - step)) / (2 * step)

    def forcing(self, x, u, dW) -> np.ndarray:
        """``sum_k sigma_k(x, u) dW_k`` for one step."""
        dW = np.atleast_1d(np.asarray(dW, float))
        if self.kind == "zero":
            return np.zeros_like(u)
        total = dW[0] if dW.size == 1 else float(np.sum(dW)) / math.sqrt(dW.size)
        return self.sigma(x, u) * total

    def with_lam(self, lam: float) -> "NoiseModel":
        if self.kind not in ("linear", "sine", "x_modulated"):
            raise ModelError(f"cannot rescale noise kind {self.kind!r}")
        return NoiseModel(self.kind, lam=float(lam), mu=self.mu, modes=self.modes)

    def sup_distance(self, other: "NoiseModel", u_range=WORKING_RANGE) -> float:
        """``||sigma - sigma_hat||_inf``; finite only for bounded kinds."""
        if not (self.bounded and other.bounded):
            raise ModelError("‖σ−σ̂‖∞ undefined for unbounded noise kinds; "
                             "use the relative distance sup|σ(ξ)−σ̂(ξ)|/|ξ| instead")
        s = np.linspace(-math.pi, math.pi, 20001)
        return float(np.max(np.abs(self.sigma(0.0, s) - other.sigma(0.0, s))))

    def relative_distance(self, other: "NoiseModel", u_range=WORKING_RANGE) -> float:
        """``sup_{xi != 0} |sigma(xi) - sigma_hat(xi)| / |xi|``."""
        if self.kind == other.kind == "linear":
            return abs(self.lam - other.lam)
        lo, hi = u_range
        s = np.linspace(lo, hi, 20000)
        s = s[s != 0]
        return float(np.max(np.abs(self.sigma(0.0, s) - other.sigma(0.0, s)) / np.abs(s)))

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ModelError("custom noise is not serialisable")
        d = {"kind": self.kind}
        if self.kind != "zero":
            d["lam"] = self.lam
        if self.kind == "x_modulated":
            d["mu"] = self.mu
        if self.modes != 1:
            d["modes"] = self.modes
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        kind = d.get("kind")
        if kind not in NOISE_KINDS or kind == "custom":
            raise ModelError(f"unknown noise kind {kind!r}")
        return cls(kind, lam=float(d.get("lam", 0.0)), mu=float(d.get("mu", 0.0)),
                   modes=int(d.get("modes", 1)))

# }}}


# {{{ weights


@dataclass(frozen=True)
class WeightFunction:
    """Cut-off weight ``psi``.

    ``exponential``: ``exp(-C0 |x|)``; ``truncated``: 1 on ``|x| <= R`` then
    ``exp(-C0 (|x| - R))``; ``section6``: the compactly supported
    ``W^{2,inf}`` profile which vanishes for ``|x| >= R + pi``; ``one``: 1.
    """

    kind: str = "one"
    c0: float = 1.0
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("exponential", "truncated", "section6", "one"):
            raise ModelError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def one(cls) -> "WeightFunction":
        return cls("one")

    @classmethod
    def exponential(cls, c0: float) -> "WeightFunction":
        return cls("exponential", c0=float(c0))

    @classmethod
    def truncated(cls, c0: float, radius: float) -> "WeightFunction":
        return cls("truncated", c0=float(c0), radius=float(radius))

    @classmethod
    def section6(cls, radius: float) -> "WeightFunction":
        return cls("section6", radius=float(radius))

    def radial(self, r):
        r = np.abs(np.asarray(r, float))
        if self.kind == "one":
            return np.ones_like(r)
        if self.kind == "exponential":
            return np.exp(-self.c0 * r)
        if self.kind == "truncated":
            return np.where(r <= self.radius, 1.0, np.exp(-self.c0 * (r - self.radius)))
        t = r - self.radius
        tc = np.clip(t, 0.0, math.pi)
        mid = (math.sqrt(2) * np.exp(math.pi - tc) * np.sin(tc + math.pi / 4) + 1) / (math.exp(math.pi) + 1)
        return np.where(t <= 0, 1.0, np.where(t >= math.pi, 0.0, mid))

    def __call__(self, *coords):
        """Evaluate at a point or on broadcast coordinate arrays (Euclidean ``|x|``)."""
        r = np.sqrt(sum(np.square(np.asarray(c, float)) for c in coords))
        return self.radial(r)

    def on_grid(self, grid: Grid) -> np.ndarray:
        """Weight at cell centres, measured from the domain centre."""
        return self(*grid.centered_mesh())

    def kinks(self) -> tuple[float, ...]:
        if self.kind == "exponential":
            return (0.0,)
        if self.kind == "truncated":
            return (-self.radius, self.radius)
        return ()

    def zero_set_distance(self, x) -> np.ndarray:
        """Distance from ``x`` (1-D) to the set where ``psi`` vanishes."""
        x = np.abs(np.asarray(x, float))
        if self.kind == "section6":
            return np.maximum(self.radius + math.pi - x, 0.0)
        return np.full_like(x, np.inf)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c0": self.c0, "radius": self.radius}

    @classmethod
    def from_dict(cls, d: dict | None) -> "WeightFunction":
        if not d:
            return cls.one()
        return cls(d.get("kind", "one"), float(d.get("c0", 1.0)), float(d.get("radius", 0.0)))


def weight_eval(w: WeightFunction, x) -> float:
    return float(w(*np.atleast_1d(np.asarray(x, float))))


@dataclass(frozen=True)
class WeightCheck:
    holds: bool
    max_ratio: float
    max_ratio_first: float
    max_ratio_second: float


def check_weight_inequalities(w: WeightFunction, c0: float, region: tuple[float, float],
                              points: int = 4001, margin: float = 0.1) -> WeightCheck:
    """Finite-difference check of ``|psi'| <= C0 psi`` and ``|psi''| <= C0 psi`` on a 1-D region.

    Points within the stencil of a kink of ``psi`` are skipped: there the
    one-sided derivatives exist but the centred quotient does not converge.
    """
    a, b = map(float, region)
    if not a < b:
        raise ModelError("region must be a non-empty interval")
    xs = np.linspace(a, b, points)
    if np.any(w.zero_set_distance(xs) < margin * (1 - 1e-9)):
        raise ModelError("degenerate region: touches the zero set of psi")
    h1, h2 = 1e-6, 1e-4
    for k in w.kinks():
        xs = xs[np.abs(xs - k) > 2 * h2]
    psi = w.radial(xs)
    d1 = (w.radial(xs + h1) - w.radial(xs - h1)) / (2 * h1)
    d2 = (w.radial(xs + h2) - 2 * psi + w.radial(xs - h2)) / h2**2
    r1 = float(np.max(np.abs(d1) / psi))
    r2 = float(np.max(np.abs(d2) / psi))
    # finite-difference noise floor
    r1 = 0.0 if r1 < 1e-7 else r1
    r2 = 0.0 if r2 < 1e-5 else r2
    ratio = max(r1, r2)
    return WeightCheck(ratio <= c0, ratio, r1, r2)

# }}}


# {{{ initial data and problems


@dataclass(frozen=True)
class InitialData:
    """Initial data generator evaluated at cell centres.

    Kinds: ``bump`` (Gaussian, params center/width/amplitude/offset),
    ``riemann`` (``left`` on ``[x0, x1)`` of the first axis, ``right``
    elsewhere), ``sine`` (amplitude/wavenumber/offset/phase) and ``table``
    (explicit ``values``).
    """

    kind: str
    params: tuple[tuple[str, object], ...] = ()

    @classmethod
    def make(cls, kind: str, **params) -> "InitialData":
        if kind not in ("bump", "riemann", "sine", "table"):
            raise ModelError(f"unknown initial data kind {kind!r}")
        return cls(kind, tuple(sorted((k, _freeze(v)) for k, v in params.items())))

    @property
    def p(self) -> dict:
        return dict(self.params)

    def sample(self, grid: Grid) -> Field:
        p = self.p
        mesh = grid.mesh()
        if self.kind == "bump":
            centre = np.broadcast_to(p.get("center", [0.5 * L for L in grid.length]), (grid.dim,))
            width = float(p.get("width", 0.5))
            r2 = sum(_periodic_dist(x, c, L) ** 2 for x, c, L in zip(mesh, centre, grid.length))
            v = float(p.get("offset", 0.0)) + float(p.get("amplitude", 1.0)) * np.exp(-r2 / width**2)
        elif self.kind == "riemann":
            L = grid.length[0]
            x0 = float(p.get("x0", 0.25 * L))
            x1 = float(p.get("x1", 0.75 * L))
            x = mesh[0]
            v = np.where((x >= x0) & (x < x1), float(p.get("left", 1.0)), float(p.get("right", 0.0)))
        elif self.kind == "sine":
            k = float(p.get("wavenumber", 1.0))
            phase = sum(2 * math.pi * k * x / L for x, L in zip(mesh, grid.length))
            v = float(p.get("offset", 0.0)) + float(p.get("amplitude", 1.0)) * np.sin(phase + float(p.get("phase", 0.0)))
        else:
            v = np.asarray(p["values"], float)
            if v.size != grid.size:
                raise ModelError("table initial data does not match the grid")
        return Field(grid, np.broadcast_to(v, grid.shape))

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: _thaw(v) for k, v in self.params}}

    @classmethod
    def from_dict(cls, d: dict) -> "InitialData":
        d = dict(d)
        return cls.make(d.pop("kind"), **d)


def _freeze(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return tuple(float(x) for x in np.ravel(v))
    return v


def _thaw(v):
    return list(v) if isinstance(v, tuple) else v


def _periodic_dist(x, c, L):
    d = np.mod(x - c + 0.5 * L, L) - 0.5 * L
    return d


@dataclass(frozen=True)
class Problem:
    flux: FluxModel
    noise: NoiseModel
    epsilon: float
    initial: InitialData
    T: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ModelError("viscosity must be nonnegative")
        if not self.T > 0:
            raise ModelError("horizon T must be positive")

    def replace(self, **changes) -> "Problem":
        d = {"flux": self.flux, "noise": self.noise, "epsilon": self.epsilon,
             "initial": self.initial, "T": self.T}
        d.update(changes)
        return Problem(**d)

    def to_dict(self) -> dict:
        return {"flux": self.flux.to_dict(), "noise": self.noise.to_dict(),
                "epsilon": self.epsilon, "initial": self.initial.to_dict(), "T": self.T}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Problem":
        try:
            return cls(FluxModel.from_dict(d["flux"]), NoiseModel.from_dict(d.get("noise", {"kind": "zero"})),
                       float(d.get("epsilon", 0.0)), InitialData.from_dict(d["initial"]), float(d["T"]))
        except KeyError as exc:
            raise ModelError(f"problem is missing key {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "Problem":
        return cls.from_dict(json.loads(text))

# }}}


# {{{ assumption checks


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    satisfied: bool
    witness: tuple[float, ...] | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[AssumptionCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self) -> list[str]:
        return [c.name for c in self.checks]


def validate_problem(p: Problem, u_range: tuple[float, float] = WORKING_RANGE,
                     grid: Grid | None = None, samples: int = 100_000, seed: int = 0) -> ValidationReport:
    """Check the standing assumptions on ``u_range`` by dense sampling.

    Violations are reported with a witness point, never raised.
    """
    lo, hi = map(float, u_range)
    rng = np.random.default_rng(seed)
    L = grid.length[0] if grid is not None else 2 * math.pi
    xs = rng.uniform(0, L, samples)
    checks = []
    noise = p.noise

    s0 = np.abs(noise.sigma(xs[:1000], np.zeros(1000)))
    i = int(np.argmax(s0))
    checks.append(AssumptionCheck("sigma_zero_at_zero", bool(s0[i] == 0.0),
                                  (float(xs[i]), 0.0), f"max |sigma(x,0)| = {s0[i]:.3g}"))

    u = rng.uniform(lo, hi, samples)
    v = rng.uniform(lo, hi, samples)
    dense = np.linspace(lo, hi, 20001)
    u = np.concatenate([u, dense[:-1]])
    v = np.concatenate([v, dense[1:]])
    x = np.concatenate([xs, rng.uniform(0, L, dense.size - 1)])
    ok = u != v
    ratio = np.abs(noise.sigma(x[ok], u[ok]) - noise.sigma(x[ok], v[ok])) / np.abs(u[ok] - v[ok])
    j = int(np.argmax(ratio))
    lip = noise.lipschitz_u
    checks.append(AssumptionCheck(
        "sigma_lipschitz_u", bool(ratio[j] <= lip + 1e-12), (float(u[ok][j]), float(v[ok][j])),
        f"sampled ratio {ratio[j]:.6g} vs declared {lip:.6g}"))

    if noise.x_dependent:
        y = rng.uniform(0, L, samples)
        ok = x[:samples] != y
        uu = u[:samples][ok]
        num = np.abs(noise.sigma(x[:samples][ok], uu) - noise.sigma(y[ok], uu))
        den = np.abs(x[:samples][ok] - y[ok]) * np.abs(uu)
        good = den > 0
        r = num[good] / den[good]
        j = int(np.argmax(r))
        checks.append(AssumptionCheck(
            "sigma_lipschitz_x", bool(r[j] <= noise.lipschitz_x + 1e-12),
            (float(x[:samples][ok][good][j]), float(y[ok][good][j]), float(uu[good][j])),
            f"sampled ratio {r[j]:.6g} vs declared {noise.lipschitz_x:.6g}"))

    flux = p.flux
    g = np.abs(flux.f(dense)) / (1 + np.abs(dense) ** flux.growth_exponent)
    j = int(np.argmax(g))
    checks.append(AssumptionCheck(
        "flux_polynomial_growth", bool(g[j] <= flux.growth_constant * (1 + 1e-12) + 1e-15), (float(dense[j]),),
        f"|f(u)|/(1+|u|^{flux.growth_exponent}) <= {g[j]:.6g}, declared C = {flux.growth_constant:.6g}"))

    if grid is not None:
        u0 = p.initial.sample(grid).values
        vol = grid.cell_volume
        finite = bool(np.isfinite(u0).all())
        norms = (np.sum(np.abs(u0)) * vol, math.sqrt(np.sum(u0**2) * vol))
        checks.append(AssumptionCheck("initial_data_finite", finite and all(map(math.isfinite, norms)),
                                      None, f"L1 = {norms[0]:.6g}, L2 = {norms[1]:.6g}"))
    return ValidationReport(tuple(checks))

# }}}
