"""Mollification, translation moduli and the two Besov/Nikolskii comparisons.

Functions live on the unit periodic interval, sampled on ``N`` cells.  The
comparisons are checked empirically: for every ``delta`` a ratio
``lhs / rhs`` is reported, and the largest ratio is the empirical constant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import (Mollifier, besov_dual_modulus, convolve, lattice_shifts,
                         translation_modulus, _shift, _weights)
from .model import Field, Grid, ModelError


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Samples of a periodic function on ``N`` uniform cells of ``[0, length)``."""

    samples: np.ndarray
    label: str = "custom"
    length: float = 1.0

    def __post_init__(self):
        v = np.array(self.samples, dtype=float).ravel()
        if not np.isfinite(v).all():
            raise ModelError(f"{self.label}: samples must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "samples", v)

    @property
    def grid(self) -> Grid:
        return Grid.uniform(self.samples.size, self.length)

    @property
    def h(self) -> float:
        return self.length / self.samples.size

    @property
    def field(self) -> Field:
        return Field(self.grid, self.samples)

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.samples)) * self.h)

    def shifted(self, cells: int) -> "SampledFunction":
        """``f(x + cells h)``."""
        return SampledFunction(np.roll(self.samples, -cells), self.label, self.length)


# {{{ corpus


def step_function(n: int) -> SampledFunction:
    """Indicator of ``[0, 1/2)``; both jumps sit on cell faces when ``n`` is even."""
    x = Grid.uniform(n, 1.0).centers(0)
    return SampledFunction((x < 0.5).astype(float), "step")


def tent_function(n: int) -> SampledFunction:
    x = Grid.uniform(n, 1.0).centers(0)
    return SampledFunction(np.maximum(0.0, 1.0 - 4.0 * np.abs(x - 0.5)), "tent")


def hoelder_function(n: int, alpha: float = 0.6) -> SampledFunction:
    x = Grid.uniform(n, 1.0).centers(0)
    return SampledFunction(np.abs(x - 0.5) ** alpha, f"hoelder({alpha:g})")


def mollified_noise(n: int, seed: int = 7, coarse: int = 64, scale: float = 0.1) -> SampledFunction:
    """Seeded piecewise-constant noise on ``coarse`` cells, mollified at ``scale``."""
    if n % coarse:
        raise ModelError(f"n = {n} must be a multiple of {coarse}")
    vals = np.random.default_rng(seed).standard_normal(coarse)
    raw = np.repeat(vals, n // coarse)
    g = Grid.uniform(n, 1.0)
    out = convolve(raw, Mollifier(1).kernel(g, scale))
    return SampledFunction(out, "mollified_noise")


def corpus(n: int) -> list[SampledFunction]:
    return [step_function(n), tent_function(n), hoelder_function(n, 0.6), mollified_noise(n)]

# }}}


def mollify(f: SampledFunction, delta: float, J: Mollifier | None = None) -> SampledFunction:
    """``f_delta = J_{delta/2} * f``; needs ``delta >= 2h``."""
    if delta < 2 * f.h * (1 - 1e-12):
        raise ModelError(f"kernel under-resolved: delta = {delta} < 2h = {2 * f.h}")
    J = J or Mollifier(1)
    kernel = J.kernel(f.grid, 0.5 * delta, min_cells=1.0)
    return SampledFunction(convolve(f.samples, kernel), f.label, f.length)


def modulus_omega(f: SampledFunction, delta: float, psi=None) -> float:
    """``omega(delta) = sup_{|z| <= delta} int |f(x + z) - f(x)| psi(x) dx``."""
    return translation_modulus(f.field, delta, psi)


def omega_table(f: SampledFunction, psi=None) -> np.ndarray:
    """``omega(n h)`` for ``n = 0 .. N // 2`` (monotone by construction)."""
    v = f.samples
    w = _weights(psi, f.grid)
    n_max = v.size // 2
    raw = np.array([0.0] + [float(np.sum(np.abs(np.roll(v, -n) - v) * w)) * f.h for n in range(1, n_max + 1)])
    raw_neg = np.array([0.0] + [float(np.sum(np.abs(np.roll(v, n) - v) * w)) * f.h for n in range(1, n_max + 1)])
    return np.maximum.accumulate(np.maximum(raw, raw_neg))


def modulus_integral_check(f: SampledFunction, r: float, deltas, psi=None) -> list[tuple[float, float, float]]:
    """Rows ``(delta, omega(delta), r delta^r int_0^inf kappa^{-r-1} omega(kappa) dkappa)``.

    ``omega`` is piecewise constant between lattice points and constant past
    ``N h / 2`` (every shift is reached), so the integral is exact.
    """
    om = omega_table(f, psi)
    h = f.h
    n = np.arange(om.size)
    # int_{nh}^{(n+1)h} kappa^{-r-1} = ((nh)^{-r} - ((n+1)h)^{-r}) / r, ω(0..h) = 0
    lo = n[1:-1] * h
    hi = (n[1:-1] + 1) * h
    pieces = om[1:-1] * (lo**-r - hi**-r) / r
    tail = om[-1] * ((n[-1] * h) ** -r) / r
    integral = float(np.sum(pieces) + tail)
    rows = []
    for d in deltas:
        k = int(math.floor(d / h + 1e-9))
        w = float(om[min(k, om.size - 1)])
        rows.append((float(d), w, r * d**r * integral))
    return rows


@dataclass
class RatioReport:
    """Per-``delta`` rows ``(delta, lhs, rhs, ratio)`` for one function."""

    label: str
    rows: list[tuple[float, float, float, float]] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max((r[3] for r in self.rows), default=0.0)

    @property
    def finite(self) -> bool:
        return all(math.isfinite(r[3]) for r in self.rows)

    def to_csv(self, path, append: bool = False) -> None:
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh)
            if not append or fh.tell() == 0:
                w.writerow(["label", "delta", "lhs", "rhs", "ratio"])
            for d, lhs, rhs, ratio in self.rows:
                w.writerow([self.label, repr(d), repr(lhs), repr(rhs), repr(ratio)])


def _ratio(label: str, delta: float, lhs: float, rhs: float) -> float:
    if rhs == 0:
        if lhs > 1e-14:
            raise ModelError(f"{label}: rhs = 0 with lhs = {lhs} at delta = {delta}")
        return 0.0
    return lhs / rhs


def _check_rs(r: float, s: float) -> None:
    if not 0 < r < s < 1:
        raise ModelError("need 0 < r < s < 1")


def check_sob_to_trans(f: SampledFunction, psi, r: float, s: float, deltas,
                       J: Mollifier | None = None) -> RatioReport:
    """``int int |f(x+z) - f(x-z)| J_delta(z) psi(x)  <=  C1 delta^r sup_{|z|<=delta} |z|^{-s} int |f(x+z) - f(x-z)| psi``."""
    _check_rs(r, s)
    J = J or Mollifier(1)
    v = f.samples
    w = _weights(psi, f.grid)
    rep = RatioReport(f.label)
    for d in deltas:
        if d < 4 * f.h * (1 - 1e-12):
            raise ModelError(f"delta = {d} below 4h = {4 * f.h}")
        lhs = besov_dual_modulus(f.field, d, J, psi)
        sup = 0.0
        for (n,) in lattice_shifts(f.grid, d):
            if n > 0:
                sym = float(np.sum(np.abs(_shift(v, (n,)) - _shift(v, (-n,))) * w)) * f.h
                sup = max(sup, (n * f.h) ** -s * sym)
        rhs = d**r * sup
        rep.rows.append((float(d), lhs, rhs, _ratio(f.label, d, lhs, rhs)))
    return rep


def dyadic_scales(h: float, lo_factor: float = 4.0) -> list[float]:
    """``2^-k`` within ``[lo_factor h, 1]``."""
    out = []
    k = 0
    while 2.0**-k >= lo_factor * h * (1 - 1e-12):
        out.append(2.0**-k)
        k += 1
    return out


def check_trans_to_sob(f: SampledFunction, psi, r: float, s: float, deltas,
                       J: Mollifier | None = None) -> RatioReport:
    """``omega(delta)  <=  C2 delta^r (sup_{delta'} delta'^{-s} B(delta') + ||f||_1)``.

    ``B(delta')`` is the mollified symmetric difference; the sup runs over
    dyadic ``delta'`` in ``[4h, 1]``.
    """
    _check_rs(r, s)
    J = J or Mollifier(1)
    sup = max(dp**-s * besov_dual_modulus(f.field, dp, J, psi) for dp in dyadic_scales(f.h))
    l1 = float(np.sum(np.abs(f.samples) * _weights(psi, f.grid))) * f.h
    rep = RatioReport(f.label)
    for d in deltas:
        if not 0 < d <= 1:
            raise ModelError("delta must lie in (0, 1]")
        lhs = modulus_omega(f, d, psi)
        rhs = d**r * (sup + l1)
        rep.rows.append((float(d), lhs, rhs, _ratio(f.label, d, lhs, rhs)))
    return rep


@dataclass
class StabilityResult:
    label: str
    direction: str
    constant_h: float
    constant_h2: float

    @property
    def factor(self) -> float:
        a, b = self.constant_h, self.constant_h2
        if a == b:
            return 1.0
        if min(a, b) <= 0:
            return math.inf
        return max(a, b) / min(a, b)

    @property
    def stable(self) -> bool:
        return math.isfinite(self.constant_h) and math.isfinite(self.constant_h2) and self.factor < 2.0


SOB_TO_TRANS = dict(r=0.25, s=0.5, deltas=[2.0**-k for k in range(3, 8)])
TRANS_TO_SOB = dict(r=0.3, s=0.5, deltas=[2.0**-k for k in range(2, 7)])


def lemma_stability(n: int = 512, psi=None) -> tuple[list[RatioReport], list[StabilityResult]]:
    """Both comparisons on the corpus at ``n`` and ``2n`` cells.

    The ``delta`` grids are fixed in physical units so both resolutions
    probe the same scales.
    """
    reports, results = [], []
    for fa, fb in zip(corpus(n), corpus(2 * n)):
        for direction, fn, cfg in (("sob_to_trans", check_sob_to_trans, SOB_TO_TRANS),
                                   ("trans_to_sob", check_trans_to_sob, TRANS_TO_SOB)):
            ra = fn(fa, psi, cfg["r"], cfg["s"], cfg["deltas"])
            rb = fn(fb, psi, cfg["r"], cfg["s"], cfg["deltas"])
            ra.label = f"{fa.label}:{direction}:N={n}"
            rb.label = f"{fb.label}:{direction}:N={2 * n}"
            reports += [ra, rb]
            results.append(StabilityResult(fa.label, direction, ra.max_ratio, rb.max_ratio))
    return reports, results
