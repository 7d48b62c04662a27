"""Self-checks for the basis machinery, shared by the CLI and the tests."""

from __future__ import annotations

import numpy as np

from .nsbf import NsbfTable, compute_nsbf_coefficients, eval_cs_all
from .slp import CoefficientGrid, build_coefficient_grid, compute_formal_powers, derivative
from .solver import basis_values


def ode_residual(grid: CoefficientGrid, omega: float, u: np.ndarray, u_prime: np.ndarray,
                 trim: int = 2) -> float:
    """Relative residual of (p u')' - q u + omega^2 w u on interior nodes.

    The outer derivative is taken by finite differences; ``u_prime`` is the
    analytic derivative carried along with ``u``.
    """
    flux = derivative(grid.p * u_prime, grid.h)
    res = flux - grid.q * u + omega**2 * grid.w * u
    scale = np.abs(grid.q * u) + omega**2 * np.abs(grid.w * u) + np.abs(flux)
    sl = slice(trim, -trim)
    return float(np.max(np.abs(res[sl])) / np.max(scale[sl]))


def tail_indicator(grid: CoefficientGrid, nsbf: NsbfTable, omega: float,
                   M: int | None = None) -> float:
    """max_y |c^M(omega, y) - c^(M-2)(omega, y)| for truncated series."""
    M = nsbf.M if M is None else M
    return float(np.max(np.abs(eval_cs_all(grid, nsbf, omega, M).c
                               - eval_cs_all(grid, nsbf, omega, M - 2).c)))


def gram_matrix(K: int, T: float, nodes: int = 64) -> np.ndarray:
    """Gram matrix of the boundary basis on [0, T] by Gauss-Legendre in tau."""
    x, wts = np.polynomial.legendre.leggauss(nodes)
    tau = 0.5 * (x + 1)
    wts = wts * T * tau  # dt = 2 T tau dtau
    V = basis_values(K, T, T * tau**2)
    return (V * wts[:, None]).T @ V


def identity_self_test(omega: float = 3.0, L: float = 1.0, n_mesh: int = 2000,
                       M: int = 20) -> dict:
    """c, s against cos, sin for p = w = 1, q = 0, where every series term vanishes."""
    one = lambda y: np.ones_like(y)
    grid = build_coefficient_grid(one, lambda y: np.zeros_like(y), one, L, n_mesh)
    powers = compute_formal_powers(grid, 10)
    nsbf = compute_nsbf_coefficients(grid, powers, M)
    cs = eval_cs_all(grid, nsbf, omega)
    y = grid.mesh
    errs = {
        "c": float(np.max(np.abs(cs.c - np.cos(omega * y)))),
        "s": float(np.max(np.abs(cs.s - np.sin(omega * y)))),
        "c_prime": float(np.max(np.abs(cs.c_prime + omega * np.sin(omega * y)))),
        "s_prime": float(np.max(np.abs(cs.s_prime - omega * np.cos(omega * y)))),
        "A": float(np.max(np.abs(nsbf.A))),
        "B": float(np.max(np.abs(nsbf.B))),
    }
    errs["passed"] = bool(max(errs["c"], errs["s"]) < 1e-9 and max(errs["A"], errs["B"]) < 1e-10)
    return errs
