"""Smooth Kruzkov entropies, entropy fluxes and the discrete entropy residual.

The base profile is fixed by ``eta_bar''(s) = (15/8)(1 - s^2)^2`` on ``[-1, 1]``
(zero outside), integrated twice with ``eta_bar(0) = eta_bar'(0) = 0``.  Then

    eta_bar(s)  = (15/8)(s^2/2 - s^4/6 + s^6/30),   |s| <= 1
    eta_bar(s)  = |s| - 5/16,                        |s| >  1

so ``M1 = sup ||r| - eta_bar(r)| = 5/16`` and ``M2 = sup |eta_bar''| = 15/8``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import Field, FluxModel, ModelError
from .solver import Trajectory
from .noise import BrownianPath

M1 = 5.0 / 16.0
M2 = 15.0 / 8.0
_C = 15.0 / 8.0

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class QuadratureError(RuntimeError):
    pass


def eta_bar(s):
    """Profile value and first two derivatives at ``s``."""
    s = np.asarray(s, float)
    a = np.abs(s)
    inside = a <= 1
    sc = np.clip(s, -1.0, 1.0)
    s2 = sc * sc
    v_in = _C * s2 * (0.5 - s2 / 6.0 + s2 * s2 / 30.0)
    d1_in = _C * sc * (1.0 - 2.0 * s2 / 3.0 + s2 * s2 / 5.0)
    d2_in = _C * (1.0 - s2) ** 2
    v = np.where(inside, v_in, a - M1)
    d1 = np.where(inside, d1_in, np.sign(s))
    d2 = np.where(inside, d2_in, 0.0)
    return v, d1, d2


def eta_rho(r, rho: float):
    """``eta_rho(r) = rho * eta_bar(r / rho)`` with first and second derivatives."""
    rho = np.asarray(rho, float) if np.ndim(rho) else float(rho)
    if not np.all(np.asarray(rho) > 0):
        raise ModelError(f"rho must be positive, got {rho}")
    v, d1, d2 = eta_bar(np.asarray(r, float) / rho)
    return rho * v, d1, d2 / rho


def _gl_integral(g, a, b):
    """Vectorised 8-point Gauss-Legendre integral of ``g`` over ``[a, b]``."""
    a = np.asarray(a, float)[..., None]
    b = np.asarray(b, float)[..., None]
    half = 0.5 * (b - a)
    xi = 0.5 * (a + b) + half * _GL_X
    return np.sum(_GL_W * g(xi), axis=-1) * half[..., 0]


class Entropy:
    """Convex entropy ``eta`` with flux ``q(u) = int_k^u eta'(xi) f'(xi) dxi``."""

    anchor = 0.0

    def derivatives(self, u):
        raise NotImplementedError

    def value(self, u):
        return self.derivatives(u)[0]

    def d1(self, u):
        return self.derivatives(u)[1]

    def d2(self, u):
        return self.derivatives(u)[2]

    def flux(self, u, f: FluxModel):
        """Entropy flux relative to the anchor ``k``; exact for polynomial fluxes."""
        u = np.asarray(u, float)
        k = np.full_like(u, self.anchor)
        return _gl_integral(lambda x: self.d1(x) * f.fprime(x), k, u)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class EntropyApprox(Entropy):
    """Shifted smooth Kruzkov entropy ``eta_rho(u - k)``."""

    rho: float
    k: float = 0.0
    M1: float = M1
    M2: float = M2

    def __post_init__(self):
        if not self.rho > 0:
            raise ModelError(f"rho must be positive, got {self.rho}")

    @property
    def anchor(self) -> float:
        return self.k

    def derivatives(self, u):
        return eta_rho(np.asarray(u, float) - self.k, self.rho)

    def flux(self, u, f: FluxModel):
        # eta' = sgn outside [k - rho, k + rho]; only the inner part needs quadrature.
        u = np.asarray(u, float)
        c = np.clip(u, self.k - self.rho, self.k + self.rho)
        inner = _gl_integral(lambda x: self.d1(x) * f.fprime(x), np.full_like(u, self.k), c)
        return inner + np.sign(u - self.k) * (f.f(u) - f.f(c))

    def to_dict(self) -> dict:
        return {"kind": "eta_rho", "rho": self.rho, "k": self.k}


@dataclass(frozen=True)
class QuadraticEntropy(Entropy):
    """``eta(u) = u^2``."""

    def derivatives(self, u):
        u = np.asarray(u, float)
        return u * u, 2.0 * u, np.full_like(u, 2.0)

    def to_dict(self) -> dict:
        return {"kind": "quadratic"}


@dataclass(frozen=True)
class LinearEntropy(Entropy):
    """``eta(u) = u``; the entropy balance degenerates to conservation."""

    def derivatives(self, u):
        u = np.asarray(u, float)
        return u, np.ones_like(u), np.zeros_like(u)

    def flux(self, u, f: FluxModel):
        return f.f(np.asarray(u, float)) - f.f(0.0)

    def to_dict(self) -> dict:
        return {"kind": "linear"}


def entropy_from_dict(d: dict) -> Entropy:
    kind = d.get("kind")
    if kind == "eta_rho":
        return EntropyApprox(float(d["rho"]), float(d.get("k", 0.0)))
    if kind == "quadratic":
        return QuadraticEntropy()
    if kind == "linear":
        return LinearEntropy()
    raise ModelError(f"unknown entropy kind {kind!r}")


def kruzkov_flux(u, v, flux: FluxModel, dim: int = 1) -> np.ndarray:
    """``sgn(u - v) (f(u) - f(v))`` for each of the ``dim`` identical components."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    q = np.sign(u - v) * (flux.f(u) - flux.f(v))
    return np.stack([q] * dim, axis=-1) if dim > 1 else q


def entropy_flux_q(u: float, v: float, flux: FluxModel, entropy: EntropyApprox,
                   tol: float = 1e-10) -> float:
    """``q(u, v) = int_v^u eta_rho'(xi - v) f'(xi) dxi`` by adaptive quadrature.

    Breakpoints at ``v +- rho`` keep the integrand smooth on every piece.
    """
    u, v = float(u), float(v)
    if u == v:
        return 0.0
    rho = entropy.rho

    def g(x):
        return float(eta_rho(x - v, rho)[1] * flux.fprime(x))

    lo, hi = min(u, v), max(u, v)
    cuts = [lo] + [c for c in (v - rho, v + rho) if lo < c < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, err, info = integrate.quad(g, a, b, epsabs=tol, epsrel=0.0, limit=200, full_output=1)[:3]
        if err > tol:
            raise QuadratureError(f"quadrature did not converge on [{a}, {b}]: "
                                  f"estimate {val}, error {err}, {info['neval']} evaluations")
        total += val
    return total if u > v else -total


def flux_difference_derivative(u, v, flux: FluxModel, entropy: EntropyApprox):
    """``d/du [q(u, v) - q(v, u)]`` in closed form.

    Equals ``eta'(u - v) f'(u) - int_v^u eta''(xi - u) f'(xi) dxi``; the
    integrand vanishes unless ``|xi - u| < rho``.
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    rho = entropy.rho
    a = np.where(u >= v, np.maximum(v, u - rho), np.minimum(v, u + rho))
    inner = _gl_integral(lambda x: eta_rho(x - u[..., None], rho)[2] * flux.fprime(x), a, u)
    return eta_rho(u - v, rho)[1] * flux.fprime(u) - inner


def flux_difference_bound(flux: FluxModel, rho: float, u_range) -> float:
    """``(M2 / 2) sup|f''| rho`` over ``u_range``."""
    return 0.5 * M2 * flux.fsecond_bound(u_range) * rho


def _as_weights(testfn, grid) -> np.ndarray:
    if isinstance(testfn, Field):
        phi = np.asarray(testfn.values, float)
    elif callable(testfn):
        phi = np.asarray(testfn(*grid.mesh()), float)
    else:
        phi = np.asarray(testfn, float)
    phi = np.broadcast_to(phi, grid.shape)
    if np.any(phi < 0) or not np.isfinite(phi).all():
        raise ModelError("test function must be finite and nonnegative")
    return phi


def _gradients(phi: np.ndarray, h) -> list[np.ndarray]:
    return [(np.roll(phi, -1, axis=ax) - np.roll(phi, 1, axis=ax)) / (2 * h[ax]) for ax in range(phi.ndim)]


def entropy_residual(traj: Trajectory, path: BrownianPath, entropy: Entropy, testfn,
                     s: float, t: float) -> float:
    """Discrete left side of the entropy inequality on ``[s, t]`` for one path.

    ``-[int eta(u) phi]_s^t + int int q(u) . grad phi + int int (1/2) eta''(u) sigma^2 phi
    + sum_n int eta'(u_n) sigma(u_n) phi dW_n``, with left-endpoint states for the
    time integrals and the Ito sum.  Needs a trajectory solved with
    ``record_steps=True``; ``s`` and ``t`` are rounded to the nearest step nodes.
    """
    return entropy_residuals(traj, path, entropy, [testfn], s, t)[0]


def entropy_residuals(traj: Trajectory, path: BrownianPath, entropy: Entropy, testfns,
                      s: float, t: float) -> list[float]:
    """``entropy_residual`` for several test functions, sharing the entropy evaluations."""
    if traj.step_states is None:
        raise ModelError("entropy_residual needs a trajectory recorded with record_steps=True")
    if path.seed != traj.path.seed or path.modes != traj.path.modes:
        raise ModelError("path does not match the trajectory's driving path")
    if not 0 <= s < t:
        raise ModelError("need 0 <= s < t")
    times = traj.step_times
    if t > times[-1] * (1 + 1e-12):
        raise ModelError(f"t = {t} beyond the trajectory horizon {times[-1]}")
    grid, prob = traj.grid, traj.problem
    phis = [_as_weights(fn, grid) for fn in testfns]
    vol = grid.cell_volume
    x = grid.mesh()[0]
    i0 = int(np.argmin(np.abs(times - s)))
    i1 = int(np.argmin(np.abs(times - t)))

    u_all = traj.step_states
    eta_s = entropy.value(u_all[i0])
    eta_t = entropy.value(u_all[i1])
    m = traj.step_increments.shape[1]
    dws = traj.step_increments[i0:i1].sum(axis=1) / math.sqrt(m)
    dts = np.diff(times[i0:i1 + 1])
    u = u_all[i0:i1]
    _, e1, e2 = entropy.derivatives(u)
    q = entropy.flux(u, prob.flux)
    sig = prob.noise.sigma(x, u)
    # time-weighted and dW-weighted sums over steps, then pair with each phi
    q_int = np.tensordot(dts, q, axes=1)
    ito_int = np.tensordot(dts, 0.5 * e2 * sig * sig, axes=1)
    mart = np.tensordot(dws, e1 * sig, axes=1)
    out = []
    for phi in phis:
        grad = _gradients(phi, grid.spacing)
        boundary = -float(np.sum((eta_t - eta_s) * phi)) * vol
        drift = float(np.sum(sum(q_int * g for g in grad) + ito_int * phi)) * vol
        ito = float(np.sum(mart * phi)) * vol
        out.append(boundary + drift + ito)
    return out
