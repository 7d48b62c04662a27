"""Spherical Bessel functions j_0..j_M by backward (Miller) recurrence."""

from __future__ import annotations

import math

import numpy as np

_BIG = 1e250


def _start_order(M: int, xmax: float) -> int:
    top = max(M, xmax)
    return int(top + 6.0 * math.sqrt(top + 1.0) + 25)


def spherical_bessel_table(M: int, x: np.ndarray) -> np.ndarray:
    """Return an array of shape (M + 1, len(x)) with j_n(x) for n = 0..M.

    Works for every x >= 0. The recurrence runs downward from an order well
    above both M and x, then is normalised against the closed form of j_0 or
    j_1, whichever is larger in magnitude (they never vanish together).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValueError("spherical_bessel_table expects x >= 0")
    M = int(M)
    out = np.zeros((M + 1, x.size))
    zero = x == 0.0
    out[0, zero] = 1.0
    pos = ~zero
    if not np.any(pos):
        return out
    tiny = pos & (x < 1e-3)
    if np.any(tiny):
        out[:, tiny] = _series(M, x[tiny])
        pos &= ~tiny
        if not np.any(pos):
            return out
    xp = x[pos]
    table = np.zeros((M + 1, xp.size))
    n_start = _start_order(M, float(xp.max()))

    j_next = np.zeros_like(xp)
    j_cur = np.full_like(xp, 1e-30)
    j1_raw = np.zeros_like(xp)
    for n in range(n_start, 0, -1):
        j_prev = (2 * n + 1) / xp * j_cur - j_next
        if n - 1 <= M:
            table[n - 1] = j_prev
        if n == 2:
            j1_raw = j_cur.copy()
        big = np.abs(j_prev) > _BIG
        if np.any(big):
            scale = np.where(big, 1.0 / _BIG, 1.0)
            j_prev = j_prev * scale
            j_cur = j_cur * scale
            table *= scale
            j1_raw = j1_raw * scale
        j_next, j_cur = j_cur, j_prev
    j0_raw = j_cur
    if M >= 1:
        j1_raw = table[1]

    sin, cos = np.sin(xp), np.cos(xp)
    j0 = sin / xp
    j1 = (sin / xp - cos) / xp
    use_j0 = np.abs(j0) >= np.abs(j1)
    norm = np.where(use_j0, j0 / np.where(use_j0, j0_raw, 1.0),
                    j1 / np.where(use_j0, 1.0, j1_raw))
    out[:, pos] = table * norm
    return out


def _series(M: int, x: np.ndarray) -> np.ndarray:
    """Three-term power series, exact to double precision for x < 1e-3."""
    out = np.empty((M + 1, x.size))
    lead = np.ones_like(x)
    x2 = x * x
    for n in range(M + 1):
        if n:
            lead = lead * x / (2 * n + 1)
        out[n] = lead * (1 - x2 / (2 * (2 * n + 3)) + x2 * x2 / (8 * (2 * n + 3) * (2 * n + 5)))
    return out


def spherical_bessel_j(n: int, x: float) -> float:
    """Spherical Bessel function of the first kind, j_n(x)."""
    if n < 0:
        raise ValueError("order must be non-negative")
    return float(spherical_bessel_table(n, np.array([abs(x)]))[n, 0] * (
        1.0 if x >= 0 or n % 2 == 0 else -1.0))
