"""Compiled 1-D step for polynomial fluxes and the built-in noise kinds.

Mirrors ``_Stepper.advance`` in ``solver.py``; agreement is tested to
round-off.
"""

import numba as nb
import numpy as np

LLF, EO = 0, 1
NOISE_CODES = {"zero": 0, "linear": 1, "sine": 2, "x_modulated": 3}


@nb.njit(cache=True)
def _poly(c, x):
    acc = 0.0
    for k in range(c.size - 1, -1, -1):
        acc = acc * x + c[k]
    return acc


@nb.njit(cache=True)
def _face_fluxes(u, fu, pu, c, cp, crit, roots, scheme, F):
    n = u.size
    for j in range(n):
        k = j + 1 if j < n - 1 else 0
        a = u[j]
        b = u[k]
        lo = min(a, b)
        hi = max(a, b)
        if scheme == 0:
            alpha = max(abs(pu[j]), abs(pu[k]))
            for r in crit:
                if lo <= r <= hi:
                    alpha = max(alpha, abs(_poly(cp, r)))
            F[j] = 0.5 * (fu[j] + fu[k]) - 0.5 * alpha * (b - a)
        else:
            # |f'| integral, split at the roots of f' (sorted)
            total = 0.0
            fprev = fu[j] if a <= b else fu[k]
            for r in roots:
                if lo < r < hi:
                    fr = _poly(c, r)
                    total += abs(fr - fprev)
                    fprev = fr
            total += abs((fu[k] if a <= b else fu[j]) - fprev)
            # signed: int_a^b |f'|
            F[j] = 0.5 * (fu[j] + fu[k]) - 0.5 * (total if a <= b else -total)


@nb.njit(cache=True)
def advance_1d(u, dt, h, eps, c, cp, crit, roots, scheme, transport,
               noise_code, lam, mu, sinx, dw):
    n = u.size
    out = np.empty(n)
    F = np.empty(n)
    if transport:
        fu = np.empty(n)
        pu = np.empty(n)
        for j in range(n):
            fu[j] = _poly(c, u[j])
            pu[j] = _poly(cp, u[j])
        _face_fluxes(u, fu, pu, c, cp, crit, roots, scheme, F)
    r = dt / h
    d = eps * dt / (h * h)
    for j in range(n):
        jm = j - 1 if j > 0 else n - 1
        jp = j + 1 if j < n - 1 else 0
        v = u[j]
        if transport:
            v -= r * (F[j] - F[jm])
        if eps > 0.0:
            v += d * (u[jp] - 2.0 * u[j] + u[jm])
        if noise_code == 1:
            v += lam * v * dw
        elif noise_code == 2:
            v += lam * np.sin(v) * dw
        elif noise_code == 3:
            v += lam * (1.0 + mu * sinx[j]) * v * dw
        out[j] = v
    return out


@nb.njit(cache=True)
def advance_block_1d(u, dt, h, eps, c, cp, crit, roots, scheme, transport,
                     noise_code, lam, mu, sinx, dws):
    """Apply ``advance_1d`` once per entry of ``dws``; stops early on a non-finite state.

    Returns the final state and the number of steps taken.
    """
    for i in range(dws.size):
        u = advance_1d(u, dt, h, eps, c, cp, crit, roots, scheme, transport,
                       noise_code, lam, mu, sinx, dws[i])
        if not np.isfinite(u.sum()):
            return u, i + 1
    return u, dws.size
