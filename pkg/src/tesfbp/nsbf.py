"""Neumann series of Bessel functions for c(omega, y) and s(omega, y).

c and s are the images of cos(omega x) and sin(omega x) under the
transmutation operator. Both solve ``(p u')' - q u = -omega**2 w u`` and are
written as a leading trigonometric term plus a spherical-Bessel series whose
coefficients alpha_n (and mu_n for the derivatives) depend on y only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .bessel import spherical_bessel_table
from .errors import NegativeFrequency, NumericalBlowup, OrderTooLarge
from .slp import CoefficientGrid, FormalPowerTable

ALPHA_CUTOFF = 1e-6  # l(y) / b below which alpha_n (n >= 1) is set to zero
DIRECT_MAX_ORDER = 10


@dataclass(frozen=True)
class NsbfTable:
    M: int
    A: np.ndarray  # A_n = l**n alpha_n, shape (M + 1, n_mesh + 1)
    B: np.ndarray  # B_n = l**n mu_n
    alpha: np.ndarray
    mu: np.ndarray
    phi1: np.ndarray
    phi1_prime: np.ndarray


def _divide_by_powers(X: np.ndarray, grid: CoefficientGrid) -> np.ndarray:
    out = np.zeros_like(X)
    ok = grid.l >= ALPHA_CUTOFF * grid.b_arc
    lo = grid.l[ok]
    power = np.ones_like(lo)
    for n in range(X.shape[0]):
        out[n, ok] = X[n, ok] / power
        power = power * lo
    out[0] = X[0]
    return out


def compute_nsbf_coefficients(grid: CoefficientGrid, powers: FormalPowerTable,
                              M: int = 60) -> NsbfTable:
    """Coefficients A_n, B_n for n = 0..M via the two-term recurrences."""
    if M < 2:
        raise ValueError("M must be at least 2")
    f, fp, rho, rhop = grid.f, grid.f_prime, grid.rho, grid.rho_prime
    l, dl = grid.l, grid.dl
    phi1 = powers.phi[1]

    # (rho f)' in y; appears in every step
    rf_prime = fp * rho + f * rhop
    A = np.empty((M + 1, l.size), dtype=f.dtype)
    B = np.empty_like(A)
    A[0] = 0.5 * (f - 1.0 / rho)
    A[1] = 1.5 * (phi1 - l / rho)
    B[0] = 0.5 * (rf_prime / (rho * dl) - grid.G1 / rho)
    B[1] = 1.5 * (1.0 / (f * rho**2) + (rhop / rho + fp / f) * phi1 / dl
                  - (grid.G2 * l + 1.0) / rho)

    # A_n carries a factor l**n, so growth is judged against b**n
    ref = max(np.max(np.abs(A[0])), np.max(1.0 / rho))
    b_scale = max(grid.b_arc, 1.0)
    for n in range(2, M + 1):
        An2 = A[n - 2]
        eta = grid.integrate((l * rf_prime + (n - 1) * rho * f * dl) * rho * An2)
        theta = grid.integrate((eta / (rho * f) ** 2 - l * An2 / f) * dl)
        ratio = (2 * n + 1) / (2 * n - 3)
        A[n] = ratio * (l**2 * An2 + 2 * (2 * n - 1) * f * theta)
        B[n] = ratio * (l**2 * B[n - 2]
                        + 2 * (2 * n - 1) * (rf_prime * theta / (rho * dl) + eta / (rho**2 * f))
                        - (2 * n - 1) * l * An2)
        if not np.all(np.isfinite(A[n])) or np.max(np.abs(A[n])) > 1e12 * ref * b_scale**n:
            raise NumericalBlowup(f"A_{n} grew beyond 1e12 * b**n times the reference scale")

    return NsbfTable(M=M, A=A, B=B, alpha=_divide_by_powers(A, grid),
                     mu=_divide_by_powers(B, grid), phi1=phi1,
                     phi1_prime=powers.phi1_prime)


def legendre_coefficients(m: int) -> np.ndarray:
    """Monomial coefficients l_{k,m} of the Legendre polynomial P_m."""
    c = np.zeros(m + 1)
    c[m] = 1.0
    return legendre.leg2poly(c)


def alpha_mu_direct(grid: CoefficientGrid, powers: FormalPowerTable, m: int,
                    y_index: int) -> tuple[float, float]:
    """alpha_m and mu_m at one mesh node from the explicit Legendre sums.

    Only usable for small m: the Legendre coefficients grow quickly and the
    sums cancel catastrophically. Intended as a cross-check of the recurrences.
    """
    if m > DIRECT_MAX_ORDER:
        raise OrderTooLarge(f"direct formula limited to m <= {DIRECT_MAX_ORDER}")
    if m > powers.K_max:
        raise OrderTooLarge("formal power table too short for this order")
    if y_index <= 0:
        raise ValueError("y_index must be an interior node")
    i = y_index
    lk = legendre_coefficients(m)
    l, rho, dl, f, fp = grid.l[i], grid.rho[i], grid.dl[i], grid.f[i], grid.f_prime[i]
    phi, psi = powers.phi[:, i], powers.psi[:, i]

    alpha = (2 * m + 1) / 2 * (sum(lk[k] * phi[k] / l**k for k in range(m + 1)) - 1 / rho)
    log_slope = rho / dl * (fp / f + grid.rho_prime[i] / rho)
    total = sum(lk[k] / l**k * ((k * psi[k - 1] / rho if k else 0.0) + log_slope * phi[k])
                for k in range(m + 1))
    mu = (2 * m + 1) / (2 * rho) * (total - m * (m + 1) / (2 * l) - grid.G2[i]
                                    - grid.h_tilde / 2 * (1 + (-1) ** m))
    return alpha, mu


@dataclass(frozen=True)
class CSValues:
    c: np.ndarray
    s: np.ndarray
    c_prime: np.ndarray
    s_prime: np.ndarray


def eval_cs_all(grid: CoefficientGrid, nsbf: NsbfTable, omega: float,
                M: int | None = None) -> CSValues:
    """c, s and their y-derivatives on the mesh for one frequency.

    For omega = 0 the pair is (f, Phi_1): s(omega, .)/omega tends to Phi_1.
    ``M`` truncates the series below the table order (diagnostics).
    """
    if omega < 0:
        raise NegativeFrequency("omega must be non-negative")
    if omega == 0:
        return CSValues(c=grid.f.copy(), s=nsbf.phi1.copy(),
                        c_prime=grid.f_prime.copy(), s_prime=nsbf.phi1_prime.copy())
    M = nsbf.M if M is None else min(M, nsbf.M)
    x = omega * grid.l
    j = spherical_bessel_table(M, x)
    signs = np.array([(-1) ** (n // 2) for n in range(M + 1)], dtype=float)[:, None]
    even = slice(0, M + 1, 2)
    odd = slice(1, M + 1, 2)
    wa = signs * nsbf.alpha[: M + 1] * j
    wm = signs * nsbf.mu[: M + 1] * j
    cos, sin = np.cos(x), np.sin(x)
    rho = grid.rho
    c = cos / rho + 2 * wa[even].sum(axis=0)
    s = sin / rho + 2 * wa[odd].sum(axis=0)
    log_rho = grid.rho_prime / rho
    c_prime = grid.dl * ((grid.G1 * cos - omega * sin) / rho + 2 * wm[even].sum(axis=0)) - log_rho * c
    s_prime = grid.dl * ((grid.G2 * sin + omega * cos) / rho + 2 * wm[odd].sum(axis=0)) - log_rho * s
    return CSValues(c=c, s=s, c_prime=c_prime, s_prime=s_prime)


def eval_cs(grid: CoefficientGrid, nsbf: NsbfTable, omega: float, which: str) -> np.ndarray:
    """One of ``"c"``, ``"s"``, ``"c'"``, ``"s'"`` on the mesh."""
    key = {"c": "c", "s": "s", "c'": "c_prime", "s'": "s_prime",
           "c_prime": "c_prime", "s_prime": "s_prime"}[which]
    return getattr(eval_cs_all(grid, nsbf, omega), key)
