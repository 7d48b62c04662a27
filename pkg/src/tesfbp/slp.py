"""Mesh data for the Sturm-Liouville operator (1/w)((p u')' - q u).

Everything downstream (NSBF coefficients, basis functions) is represented by
samples on one uniform mesh over [0, L]; this module builds that mesh, the
particular solution ``f`` of ``(p f')' = q f`` and the formal powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MeshMismatch, NonPositiveCoefficient, VanishingSolution

ScalarFn = Callable[[np.ndarray], np.ndarray]


def derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative on a uniform mesh."""
    v = np.asarray(values)
    d = np.empty_like(v)
    d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    # one-sided fourth-order stencils at the two nodes next to each end
    d[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
    d[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    d[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
    d[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
    return d


def cumulative_integral(values: np.ndarray, h: float, corrected: bool = True) -> np.ndarray:
    """Running integral from the first node with the composite trapezoid rule.

    ``values`` must be sampled on a uniform mesh of step ``h``. The result has
    the same length and starts at exactly zero. With ``corrected`` the
    Euler-Maclaurin end correction -h^2/12 (v'(y) - v'(0)) is added, which
    lifts the rule to fourth order for smooth integrands.
    """
    values = np.asarray(values)
    out = np.empty_like(values)
    out[0] = 0.0
    np.cumsum(0.5 * h * (values[1:] + values[:-1]), out=out[1:])
    if corrected and values.size >= 5:
        dv = derivative(values, h)
        out -= h * h / 12 * (dv - dv[0])
    return out


@dataclass(frozen=True)
class CoefficientGrid:
    mesh: np.ndarray
    p: np.ndarray
    q: np.ndarray
    w: np.ndarray
    rho: np.ndarray
    rho_prime: np.ndarray
    l: np.ndarray
    dl: np.ndarray  # sqrt(w/p), the derivative of l
    f: np.ndarray
    f_prime: np.ndarray
    h_tilde: complex | float
    G1: np.ndarray
    G2: np.ndarray
    b_arc: float
    ode_error: float = 0.0

    @property
    def h(self) -> float:
        return float(self.mesh[1] - self.mesh[0])

    @property
    def n_mesh(self) -> int:
        return self.mesh.size - 1

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.f)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Cumulative integral over this mesh, with a length check."""
        if np.shape(values)[-1] != self.mesh.size:
            raise MeshMismatch(
                f"array of length {np.shape(values)[-1]} on a mesh of {self.mesh.size} nodes"
            )
        return cumulative_integral(values, self.h)


def _rk4_on_mesh(p_fn, q_fn, mesh, z0, substeps=1):
    """Integrate (f, p f')' = (p f' / p, q f) across ``mesh`` with RK4.

    Returns f and p f' at the mesh nodes. ``substeps`` splits each mesh
    interval, which is what the Richardson check uses.
    """
    n_sub = (mesh.size - 1) * substeps
    y = np.linspace(mesh[0], mesh[-1], n_sub + 1)
    hs = y[1] - y[0]
    mid = y[:-1] + 0.5 * hs
    p_nodes, q_nodes = p_fn(y), q_fn(y)
    p_mid, q_mid = p_fn(mid), q_fn(mid)

    f = np.empty(n_sub + 1, dtype=np.result_type(z0[0], z0[1], float))
    P = np.empty_like(f)
    f[0], P[0] = z0
    fi, Pi = f[0], P[0]
    for i in range(n_sub):
        k1f, k1P = Pi / p_nodes[i], q_nodes[i] * fi
        f2, P2 = fi + 0.5 * hs * k1f, Pi + 0.5 * hs * k1P
        k2f, k2P = P2 / p_mid[i], q_mid[i] * f2
        f3, P3 = fi + 0.5 * hs * k2f, Pi + 0.5 * hs * k2P
        k3f, k3P = P3 / p_mid[i], q_mid[i] * f3
        f4, P4 = fi + hs * k3f, Pi + hs * k3P
        k4f, k4P = P4 / p_nodes[i + 1], q_nodes[i + 1] * f4
        fi = fi + hs * (k1f + 2 * k2f + 2 * k3f + k4f) / 6
        Pi = Pi + hs * (k1P + 2 * k2P + 2 * k3P + k4P) / 6
        f[i + 1], P[i + 1] = fi, Pi
    return f[::substeps], P[::substeps]


def build_coefficient_grid(
    p_fn: ScalarFn,
    q_fn: ScalarFn,
    w_fn: ScalarFn,
    L: float,
    n_mesh: int = 10000,
    f_prime_0: float = 0.0,
    complex_f: bool = False,
) -> CoefficientGrid:
    """Sample p, q, w on [0, L] and compute every derived quantity.

    ``f`` solves ``(p f')' = q f`` with ``f(0) = 1/rho(0)`` and
    ``f'(0) = f_prime_0``. With ``complex_f`` the solution is
    ``f1 + i f2`` where ``f2(0) = 0, f2'(0) = 1``; use it when the real
    solution has a zero on the interval.
    """
    if n_mesh < 100:
        raise ValueError("n_mesh must be at least 100")
    mesh = np.linspace(0.0, float(L), int(n_mesh) + 1)
    p = np.asarray(p_fn(mesh), dtype=float) * np.ones_like(mesh)
    q = np.asarray(q_fn(mesh), dtype=float) * np.ones_like(mesh)
    w = np.asarray(w_fn(mesh), dtype=float) * np.ones_like(mesh)
    if np.any(p <= 0) or np.any(w <= 0):
        raise NonPositiveCoefficient("p and w must be strictly positive on the mesh")

    def vec(fn):
        return lambda y: np.asarray(fn(y), dtype=float) * np.ones_like(y)

    h = mesh[1] - mesh[0]
    rho = (p * w) ** 0.25
    rho_prime = derivative(rho, h)
    dl = np.sqrt(w / p)
    l = cumulative_integral(dl, h)

    f0 = 1.0 / rho[0]
    z0 = (f0, p[0] * f_prime_0)
    if complex_f:
        z0 = (complex(f0), complex(p[0] * (f_prime_0 + 1j)))
    f, P = _rk4_on_mesh(vec(p_fn), vec(q_fn), mesh, z0)
    f_half, _ = _rk4_on_mesh(vec(p_fn), vec(q_fn), mesh, z0, substeps=2)
    # Richardson estimate of the RK4 error on the coarse mesh
    ode_error = float(np.max(np.abs(f - f_half)) * 16 / 15)

    absf = np.abs(f)
    sign_change = not complex_f and np.any(np.sign(f[1:]) != np.sign(f[:-1]))
    if sign_change or np.min(absf) < 1e-12 * absf[0]:
        raise VanishingSolution(
            "particular solution vanishes on the mesh; retry with complex_f=True"
        )
    f_prime = P / p

    h_tilde = np.sqrt(p[0] / w[0]) * (f_prime[0] / f[0] + rho_prime[0] / rho[0])
    if not complex_f:
        h_tilde = float(np.real(h_tilde))
    boundary = rho * rho_prime / (2 * w)
    G2 = boundary - boundary[0] + 0.5 * cumulative_integral(q / rho**2 + rho_prime**2 / w, h)
    G1 = G2 + h_tilde

    return CoefficientGrid(
        mesh=mesh, p=p, q=q, w=w, rho=rho, rho_prime=rho_prime, l=l, dl=dl,
        f=f, f_prime=f_prime, h_tilde=h_tilde, G1=G1, G2=G2,
        b_arc=float(l[-1]), ode_error=ode_error,
    )


@dataclass(frozen=True)
class FormalPowerTable:
    K_max: int
    mesh: np.ndarray
    phi: np.ndarray  # shape (K_max + 1, n_mesh + 1)
    psi: np.ndarray
    y_fun: np.ndarray
    y_tilde_fun: np.ndarray
    phi1_prime: np.ndarray = field(repr=False)


def compute_formal_powers(grid: CoefficientGrid, K_max: int) -> FormalPowerTable:
    """Formal powers Phi_k, Psi_k built by alternating recursive integrals.

    Phi_k is the image of x**k under the transmutation operator.
    """
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    # the weight w (not p) pairs with f**2 in the even steps, otherwise
    # Phi_k != T[x**k] whenever w != p
    f2w = grid.f**2 * grid.w
    inv_f2p = 1.0 / (grid.f**2 * grid.p)
    shape = (K_max + 1, grid.mesh.size)
    dtype = grid.f.dtype
    Y = np.empty(shape, dtype=dtype)
    Yt = np.empty(shape, dtype=dtype)
    Y[0] = 1.0
    Yt[0] = 1.0
    for k in range(1, K_max + 1):
        odd = k % 2 == 1
        Y[k] = k * grid.integrate(Y[k - 1] * (inv_f2p if odd else f2w))
        Yt[k] = k * grid.integrate(Yt[k - 1] * (f2w if odd else inv_f2p))

    k_odd = (np.arange(K_max + 1) % 2 == 1)[:, None]
    phi = grid.f * np.where(k_odd, Y, Yt)
    psi = np.where(k_odd, Yt, Y) / grid.f
    # Phi_1' = f' Y1 + 1/(f p), exact given f and f'
    phi1_prime = grid.f_prime * Y[1] + 1.0 / (grid.f * grid.p)
    return FormalPowerTable(K_max=K_max, mesh=grid.mesh, phi=phi, psi=psi, y_fun=Y, y_tilde_fun=Yt,
                            phi1_prime=phi1_prime)
