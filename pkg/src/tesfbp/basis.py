"""Transmuted exponential solutions and the reduced basis.

Each member is ``E_n(y) exp(-omega_n**2 t)`` with
``E_n = c(omega_n, .) + beta_n s(omega_n, .)``; the mixing constant is fixed
so that ``E_n(0) + E_n'(0) = 0``, which makes every linear combination
satisfy the Robin condition ``u(0, t) + u_y(0, t) = 0`` by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import DegenerateStep, DegreeTooLarge, OutOfDomain, ZeroDerivativeAtOrigin
from .nsbf import NsbfTable, eval_cs_all
from .slp import CoefficientGrid, FormalPowerTable, derivative


def generate_frequencies(d: float, delta: float, cap: float, T: float,
                         seed: int) -> np.ndarray:
    """Pseudo-random ascending frequencies starting at 0.

    Each step adds ``d`` plus a uniform draw on (0, delta). Generation stops
    before ``omega * T`` would exceed ``cap``.
    """
    if d + delta <= 0:
        raise DegenerateStep("d + delta must be positive")
    if d < 0 or delta < 0 or T <= 0:
        raise ValueError("need d >= 0, delta >= 0, T > 0")
    rng = np.random.default_rng(seed)
    limit = cap * (1 + 1e-12)
    omegas = [0.0]
    while True:
        step = d + (rng.uniform(0.0, delta) if delta > 0 else 0.0)
        nxt = omegas[-1] + step
        if nxt * T > limit:
            break
        omegas.append(nxt)
    return np.array(omegas)


@dataclass(frozen=True)
class BasisFamily:
    omegas: np.ndarray
    betas: np.ndarray
    mesh: np.ndarray
    e_tilde: np.ndarray  # shape (N + 1, n_mesh + 1)
    e_tilde_prime: np.ndarray
    M: int
    seed: int | None = None
    _spline: CubicHermiteSpline = field(repr=False, default=None)
    _spline_prime: CubicHermiteSpline = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.omegas.size

    @property
    def L(self) -> float:
        return float(self.mesh[-1])

    def values(self, y) -> np.ndarray:
        """E_n(y) for all members; shape ``y.shape + (N + 1,)``."""
        return self._spline(self._check(y))

    def slopes(self, y) -> np.ndarray:
        """E_n'(y) for all members; shape ``y.shape + (N + 1,)``."""
        return self._spline_prime(self._check(y))

    def _check(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0) or np.any(y > self.L * (1 + 1e-12)):
            raise OutOfDomain(f"y outside [0, {self.L}]")
        return y


def build_reduced_basis(grid: CoefficientGrid, nsbf: NsbfTable, omegas,
                        seed: int | None = None) -> BasisFamily:
    """Reduced basis E_n = c + beta_n s with the Robin condition built in.

    For omega = 0 the pair (f, Phi_1) replaces (c, s). Off-mesh values use
    cubic Hermite interpolation; the second derivative needed for the
    interpolant of E_n' comes from the differential equation itself.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas[0] != 0 or np.any(np.diff(omegas) <= 0):
        raise ValueError("omegas must be ascending and start at 0")
    if grid.is_complex:
        raise NotImplementedError("reduced basis requires a real particular solution")
    n_mem = omegas.size
    E = np.empty((n_mem, grid.mesh.size))
    Ep = np.empty_like(E)
    betas = np.empty(n_mem)
    for n, om in enumerate(omegas):
        cs = eval_cs_all(grid, nsbf, om)
        if cs.s_prime[0] == 0:
            raise ZeroDerivativeAtOrigin(f"s'(omega, 0) vanishes for omega={om}")
        betas[n] = -(cs.c[0] + cs.c_prime[0]) / cs.s_prime[0]
        E[n] = cs.c + betas[n] * cs.s
        Ep[n] = cs.c_prime + betas[n] * cs.s_prime

    # E'' from (p E')' = (q - omega^2 w) E
    p_prime = derivative(grid.p, grid.h)
    Epp = ((grid.q - omegas[:, None] ** 2 * grid.w) * E - p_prime * Ep) / grid.p
    spline = CubicHermiteSpline(grid.mesh, E.T, Ep.T)
    spline_p = CubicHermiteSpline(grid.mesh, Ep.T, Epp.T)
    return BasisFamily(omegas=omegas, betas=betas, mesh=grid.mesh, e_tilde=E,
                       e_tilde_prime=Ep, M=nsbf.M, seed=seed,
                       _spline=spline, _spline_prime=spline_p)


def eval_solution(basis: BasisFamily, coeffs, y, t, which: str = "u"):
    """u_N, its y-derivative or its t-derivative at (y, t), broadcasting."""
    coeffs = np.asarray(coeffs)
    if coeffs.size != basis.size:
        raise ValueError(f"expected {basis.size} coefficients, got {coeffs.size}")
    y, t = np.broadcast_arrays(np.asarray(y, float), np.asarray(t, float))
    if np.any(t < 0):
        raise OutOfDomain("t must be non-negative")
    decay = np.exp(-np.multiply.outer(t, basis.omegas**2))
    if which == "u":
        vals = basis.values(y)
    elif which == "u_y":
        vals = basis.slopes(y)
    elif which == "u_t":
        vals = -basis.omegas**2 * basis.values(y)
    else:
        raise ValueError(f"unknown quantity {which!r}")
    out = np.sum(vals * decay * coeffs, axis=-1)
    return out if out.ndim else float(out)


def heat_coefficient(n: int, k: int) -> int:
    """c_k^n = n! / ((n - 2k)! k!)."""
    return math.factorial(n) // (math.factorial(n - 2 * k) * math.factorial(k))


def transmuted_heat_polynomial(powers: FormalPowerTable, n: int, t, y=None):
    """H_n(y, t) = sum_k c_k^n Phi_{n-2k}(y) t^k.

    Returns mesh samples (shape ``(n_mesh + 1,)`` per t) when ``y`` is None,
    otherwise values interpolated at ``y``.
    """
    if n > powers.K_max:
        raise DegreeTooLarge(f"degree {n} exceeds table order {powers.K_max}")
    t = np.asarray(t, dtype=float)
    total = sum(heat_coefficient(n, k) * np.multiply.outer(t**k, powers.phi[n - 2 * k])
                for k in range(n // 2 + 1))
    if y is None:
        return total
    return CubicSpline(powers.mesh, total, axis=-1)(y)
