"""Free-boundary fitting: boundary model, residual functional, inner and outer solves.

For a fixed boundary the coefficients of u_N enter linearly, so they are
eliminated by a Tikhonov-regularised least-squares solve. The remaining
boundary coefficients are found by minimising the reduced residual subject
to shape constraints, either by trust-region least squares on the stacked
residual vector or by a simplex search on sqrt(F).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.linalg import qr_multiply
from scipy.optimize import least_squares, minimize
from scipy.special import eval_jacobi

from .basis import BasisFamily
from .errors import (AllLambdasRejected, BoundaryOutOfDomain, BudgetExhausted,
                     InfeasibleStart, LengthMismatch)

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = np.geomspace(1e-12, 1e-2, 21)


def _jacobi_cheb(k: int) -> np.ndarray:
    """Chebyshev coefficients of P_k^{(0,3)}(x) on [-1, 1].

    Interpolation at k + 1 Chebyshev points reproduces the polynomial exactly
    and avoids the ill-conditioned expansion in powers of tau.
    """
    x = np.cos(np.pi * (np.arange(k + 1) + 0.5) / (k + 1))
    return np.polynomial.chebyshev.chebfit(x, eval_jacobi(k, 0.0, 3.0, x), k)


@dataclass(frozen=True)
class BoundaryModel:
    """s_K(t) = sum_k b_k beta_k(t) over an orthonormal sqrt(t)-Jacobi family.

    ``beta_k(t) = sqrt((k + 2) / T) * tau * P_k^{(0,3)}(2 tau - 1)`` with
    ``tau = sqrt(t / T)``, which is orthonormal in L2(0, T). The factor tau
    is kept explicit so that s_K(0) = 0 holds exactly.
    """

    K: int
    T: float
    b_coeffs: np.ndarray
    _q: Chebyshev = field(init=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.b_coeffs, dtype=float)
        if b.size != self.K + 1:
            raise ValueError(f"expected {self.K + 1} coefficients, got {b.size}")
        object.__setattr__(self, "b_coeffs", b)
        object.__setattr__(self, "_q", Chebyshev(b @ basis_matrix(self.K, self.T), domain=[0, 1]))

    @classmethod
    def constant_multiple(cls, K: int, T: float, value_at_T: float) -> "BoundaryModel":
        """c * beta_0 scaled so that s_K(T) = value_at_T."""
        b = np.zeros(K + 1)
        b[0] = value_at_T / float(beta(0, T, T))
        return cls(K, T, b)

    def __call__(self, t):
        tau = np.sqrt(np.asarray(t, float) / self.T)
        return tau * self._q(tau)

    def derivative(self, t, order: int = 1):
        tau = np.sqrt(np.asarray(t, float) / self.T)
        q, dq = self._q(tau), self._q.deriv(1)(tau)
        d1 = q + tau * dq  # d/dtau of tau q
        if order == 1:
            return d1 / (2 * self.T * tau)
        if order == 2:
            d2 = 2 * dq + tau * self._q.deriv(2)(tau)
            return (d2 * tau - d1) / (4 * self.T**2 * tau**3)
        raise ValueError("order must be 1 or 2")


_BASIS_CACHE: dict[tuple[int, float], np.ndarray] = {}


def basis_matrix(K: int, T: float) -> np.ndarray:
    """Row k holds the Chebyshev coefficients (tau in [0, 1]) of beta_k / tau."""
    key = (K, float(T))
    if key not in _BASIS_CACHE:
        rows = np.zeros((K + 1, K + 1))
        for k in range(K + 1):
            rows[k, : k + 1] = _jacobi_cheb(k) * np.sqrt((k + 2) / T)
        _BASIS_CACHE[key] = rows
    return _BASIS_CACHE[key]


def beta(k: int, T: float, t):
    """The k-th orthonormal boundary basis function at t."""
    tau = np.sqrt(np.asarray(t, float) / T)
    return tau * Chebyshev(basis_matrix(k, T)[k], domain=[0, 1])(tau)


def basis_values(K: int, T: float, t) -> np.ndarray:
    """beta_0..beta_K at t; shape ``t.shape + (K + 1,)``."""
    tau = np.sqrt(np.asarray(t, float) / T)
    V = np.polynomial.chebyshev.chebvander(2 * tau - 1, K) @ basis_matrix(K, T).T
    return tau[..., None] * V


def project_boundary(fn, K: int, T: float, nodes: int = 64) -> np.ndarray:
    """Coefficients of the L2(0, T) projection of ``fn(t)`` onto beta_0..beta_K."""
    x, wts = np.polynomial.legendre.leggauss(nodes)
    tau = 0.5 * (x + 1)
    wts = wts * T * tau  # dt = 2 T tau dtau on tau in [0, 1]
    V = basis_values(K, T, T * tau**2)
    return (V * wts[:, None]).T @ fn(T * tau**2)


@dataclass(frozen=True)
class TimeGrid:
    """Half-Chebyshev nodes t_n = T sin(n pi / (2 N_t)), n = 1..N_t.

    t = 0 is left out because the boundary data are inconsistent there.
    """

    N_t: int
    T: float
    nodes: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = np.arange(1, self.N_t + 1)
        nodes = self.T * np.sin(n * np.pi / (2 * self.N_t))
        weights = np.ones(self.N_t)
        weights[[0, -1]] = 0.5
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)


def discrete_norm(values, weights=None) -> float:
    """sqrt of sum''|v_i|^2, the first and last terms halved."""
    v = np.asarray(values)
    if weights is None:
        weights = np.ones(v.size)
        if v.size:
            weights[[0, -1]] = 0.5
    elif np.size(weights) != v.size:
        raise LengthMismatch(f"{v.size} values for {np.size(weights)} weights")
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return scale
    # scaling first avoids underflow and overflow in the squares
    return scale * float(np.sqrt(np.sum(weights * (np.abs(v) / scale) ** 2)))


def _const(value: float) -> Callable:
    return lambda t: np.full(np.shape(t), value, dtype=float)


@dataclass(frozen=True)
class GeneralBoundaryData:
    """gamma11 u(0,t) + gamma12 u_y(0,t) = g1, u(s,t) = g2, u_y(s,t) = g3."""

    gamma11: Callable = _const(1.0)
    gamma12: Callable = _const(1.0)
    g1: Callable = _const(0.0)
    g2: Callable = _const(1.0)
    g3: Callable = _const(0.0)
    # the left condition is satisfied identically by the reduced basis
    robin_builtin: bool = False

    @classmethod
    def russian(cls) -> "GeneralBoundaryData":
        return cls(robin_builtin=True)


@dataclass
class SolveResult:
    a_coeffs: np.ndarray
    b_coeffs: np.ndarray
    I1: float
    I2: float
    I3: float
    F: float
    lam: float
    evaluations: int
    seed: int | None
    wall_time: float
    converged: bool = True
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class InnerSolution:
    a: np.ndarray
    lam: float
    residual: float  # ||D a - g|| for the chosen a
    residual_unregularized: float


def _rows(basis: BasisFamily, boundary: BoundaryModel, grid: TimeGrid,
          data: GeneralBoundaryData, *, check: bool = True):
    t = grid.nodes
    s = boundary(t)
    if check and (np.any(s <= 0) or np.any(s > basis.L)):
        raise BoundaryOutOfDomain("boundary leaves (0, L] on the time grid")
    decay = np.exp(-np.outer(t, basis.omegas**2))
    sw = np.sqrt(grid.weights)[:, None]
    blocks = [basis.values(s) * decay * sw, basis.slopes(s) * decay * sw]
    rhs = [data.g2(t) * sw[:, 0], data.g3(t) * sw[:, 0]]
    if not data.robin_builtin:
        e0, e0p = basis.values(np.zeros(1)), basis.slopes(np.zeros(1))
        left = (data.gamma11(t)[:, None] * e0 + data.gamma12(t)[:, None] * e0p) * decay
        blocks.insert(0, left * sw)
        rhs.insert(0, data.g1(t) * sw[:, 0])
    return np.vstack(blocks), np.concatenate(rhs)


def solve_least_squares(D: np.ndarray, g: np.ndarray, lambdas=DEFAULT_LAMBDAS,
                        coef_cap: float = 1e4) -> InnerSolution:
    """min ||D a - g||^2 + lam^2 ||a||^2, smallest lam with ||a||_inf <= cap.

    Uses a thin QR of D (Q never formed) followed by an SVD of the small
    triangular factor.
    """
    qg, R = qr_multiply(D, g, mode="right")
    U, sv, Vt = np.linalg.svd(R, full_matrices=False)
    proj = U.T @ qg
    g2 = float(g @ g)
    outside = max(g2 - float(proj @ proj), 0.0)
    res0 = np.sqrt(outside + float(np.sum((proj * (sv == 0)) ** 2)))
    for lam in np.sort(np.asarray(lambdas, dtype=float)):
        filt = sv / (sv**2 + lam**2)
        a = Vt.T @ (filt * proj)
        if np.max(np.abs(a)) <= coef_cap:
            shrink = lam**2 / (sv**2 + lam**2)
            res = np.sqrt(outside + float(np.sum((shrink * proj) ** 2)))
            return InnerSolution(a=a, lam=float(lam), residual=res,
                                 residual_unregularized=float(res0))
    raise AllLambdasRejected("no regularisation parameter keeps the coefficients under the cap")


def solve_inner_ls(basis: BasisFamily, boundary: BoundaryModel, grid: TimeGrid,
                   data: GeneralBoundaryData, lambdas=DEFAULT_LAMBDAS,
                   coef_cap: float = 1e4) -> InnerSolution:
    D, g = _rows(basis, boundary, grid, data)
    return solve_least_squares(D, g, lambdas, coef_cap)


def residual_F(basis: BasisFamily, a, boundary: BoundaryModel, grid: TimeGrid,
               data: GeneralBoundaryData):
    """(F, I1, I2, I3) for coefficients ``a`` and the given boundary."""
    a = np.asarray(a, dtype=float)
    t = grid.nodes
    s = boundary(t)
    if np.any(s <= 0) or np.any(s > basis.L):
        raise BoundaryOutOfDomain("boundary leaves (0, L] on the time grid")
    decay = np.exp(-np.outer(t, basis.omegas**2))
    zero = np.zeros_like(t)
    u0 = (basis.values(zero) * decay) @ a
    uy0 = (basis.slopes(zero) * decay) @ a
    us = (basis.values(s) * decay) @ a
    uys = (basis.slopes(s) * decay) @ a
    w = grid.weights
    I1 = discrete_norm(data.gamma11(t) * u0 + data.gamma12(t) * uy0 - data.g1(t), w)
    I2 = discrete_norm(us - data.g2(t), w)
    I3 = discrete_norm(uys - data.g3(t), w)
    return I1**2 + I2**2 + I3**2, I1, I2, I3


@dataclass(frozen=True)
class ConstraintConfig:
    n_check: int = 1000
    monotone: bool = True
    concave: bool = True
    penalty: float = 10.0
    max_evals: int = 5000
    xatol: float = 1e-8
    restarts: int = 2
    progress: float = 0.01
    initial_step: float = 0.05
    lambdas: tuple = tuple(DEFAULT_LAMBDAS)
    coef_cap: float = 1e4
    # "least-squares": trust-region variable projection; "nelder-mead": simplex on sqrt(F)
    method: str = "least-squares"
    # "pass": sweep at the start of each optimisation pass, then hold lambda
    # fixed within the pass; "sweep": rerun the sweep at every evaluation
    lambda_rule: str = "pass"
    # largest interior-constraint violation accepted for a recorded candidate
    interior_tol: float = 1e-3


def constraint_violation(boundary: BoundaryModel, L: float, cfg: ConstraintConfig) -> float:
    """Total violation of 0 < s <= L, s' >= 0, s'' <= 0 on a uniform check grid."""
    T = boundary.T
    tc = np.linspace(T / cfg.n_check, T, cfg.n_check)
    s = boundary(tc)
    v = np.sum(np.maximum(-s, 0.0)) + np.sum(np.maximum(s - L, 0.0))
    v += np.sum(s <= 0) * 1e-3
    if cfg.monotone:
        v += T * np.sum(np.maximum(-boundary.derivative(tc, 1), 0.0))
    if cfg.concave:
        v += T**2 * np.sum(np.maximum(boundary.derivative(tc, 2), 0.0))
    return float(v)


class _Tracker:
    """Counts evaluations and keeps the best feasible candidate seen so far."""

    def __init__(self, basis, grid, data, K, cfg, lambdas, interior=None):
        self.basis, self.grid, self.data, self.K, self.cfg = basis, grid, data, K, cfg
        self.interior = interior
        self.lambdas = lambdas
        self.best = np.inf
        self.b = None
        self.inner = None
        self.evals = 0
        self.history: list[float] = []

    def feasible(self, bm: BoundaryModel) -> tuple[bool, float]:
        viol = constraint_violation(bm, self.basis.L, self.cfg)
        if viol > 0:
            return False, viol
        s = bm(self.grid.nodes)
        ok = bool(np.all(s > 0) and np.all(s <= self.basis.L))
        return ok, 0.0 if ok else 1e-3

    def system(self, b):
        """Rows and right-hand side for a candidate, with s clipped into [0, L]."""
        bm = BoundaryModel(self.K, self.grid.T, b)
        clipped = _ClippedBoundary(bm, self.basis.L)
        D, g = _rows(self.basis, clipped, self.grid, self.data, check=False)
        return bm, D, g

    def interior_violation(self, bm, a) -> tuple[float, float]:
        """(mean, max) violation of the optional interior constraint."""
        if self.interior is None:
            return 0.0, 0.0
        v = np.maximum(np.asarray(self.interior(bm, a), dtype=float), 0.0)
        return float(np.mean(v)), float(np.max(v))

    def record(self, b, value, inner):
        self.history.append(min(self.best, value))
        if value < self.best:
            self.best, self.b, self.inner = value, np.array(b, dtype=float), inner


class _BudgetHit(Exception):
    pass


class _ClippedBoundary:
    def __init__(self, bm, L):
        self.bm, self.L = bm, L

    def __call__(self, t):
        return np.clip(self.bm(t), 0.0, self.L)


def _run_least_squares(tr: _Tracker, b0, lam: float) -> tuple[bool, np.ndarray]:
    """One variable-projection pass on the stacked Tikhonov residual at fixed lam.

    Returns the convergence flag and the last iterate of the pass.
    """
    cfg = tr.cfg

    def resid(b):
        if tr.evals >= cfg.max_evals:
            raise _BudgetHit
        tr.evals += 1
        bm, D, g = tr.system(b)
        ok, viol = tr.feasible(bm)
        inner = solve_least_squares(D, g, (lam,), np.inf)
        # the coefficient cap is a constraint too, since lam is frozen in a pass
        excess = max(np.max(np.abs(inner.a)) / cfg.coef_cap - 1.0, 0.0)
        iv_mean, iv_max = tr.interior_violation(bm, inner.a)
        r = np.concatenate([D @ inner.a - g, lam * inner.a,
                            [cfg.penalty * (viol + excess + iv_mean)]])
        if ok and excess == 0 and iv_max <= cfg.interior_tol:
            tr.record(b, inner.residual, inner)
        return r

    try:
        # max_nfev does not count the finite-difference Jacobian calls
        res = least_squares(resid, np.asarray(b0, dtype=float), method="trf", x_scale="jac",
                            xtol=cfg.xatol, ftol=1e-15, gtol=1e-15,
                            max_nfev=cfg.max_evals - tr.evals)
    except _BudgetHit:
        return False, np.asarray(b0, dtype=float) if tr.b is None else tr.b
    return res.status > 0, res.x


def _run_nelder_mead(tr: _Tracker, b0, lam: float | None):
    """Simplex on sqrt(F); infeasible points score best-so-far plus a penalty."""
    cfg = tr.cfg
    lambdas = cfg.lambdas if lam is None else (lam,)
    cap = cfg.coef_cap if lam is None else np.inf

    def objective(b):
        tr.evals += 1
        bm, D, g = tr.system(b)
        ok, viol = tr.feasible(bm)
        if ok:
            try:
                inner = solve_least_squares(D, g, lambdas, cap)
            except AllLambdasRejected:
                inner, viol = None, 1e-3
            if inner is not None:
                iv_mean, iv_max = tr.interior_violation(bm, inner.a)
                if iv_max <= cfg.interior_tol:
                    tr.record(b, inner.residual, inner)
                    return inner.residual
                viol = iv_mean
        tr.history.append(tr.best)
        base = tr.best if np.isfinite(tr.best) else 1e3
        return base + cfg.penalty * (1.0 + viol)

    K = tr.K
    step = cfg.initial_step * max(np.max(np.abs(b0)), 1e-3)
    x = np.asarray(b0, dtype=float)
    converged = False
    for _ in range(cfg.restarts + 1):
        budget = cfg.max_evals - tr.evals
        if budget <= K + 2:
            break
        simplex = np.vstack([x, x + step * np.eye(K + 1)])
        res = minimize(objective, x, method="Nelder-Mead",
                       options=dict(maxfev=budget, xatol=cfg.xatol, fatol=np.inf,
                                    initial_simplex=simplex, adaptive=True))
        converged = bool(res.success)
        x = tr.b.copy()
        step *= 0.1
        logger.info("simplex pass: best sqrt(F)=%.3e after %d evaluations", tr.best, tr.evals)
    return converged


def minimize_free_boundary(basis: BasisFamily, grid: TimeGrid, data: GeneralBoundaryData,
                           b0, cfg: ConstraintConfig = ConstraintConfig(),
                           seed: int | None = None, interior=None) -> SolveResult:
    """Minimise sqrt(F(a(b), b)) over the boundary coefficients b.

    The returned boundary is the best feasible candidate evaluated, so the
    recorded objective never increases. ``converged`` is False when the
    evaluation budget ran out before the step tolerance was met.

    ``interior(boundary, a)`` may return an array that must be nonpositive;
    its positive part is penalised like the shape constraints, and candidates
    exceeding ``cfg.interior_tol`` are never recorded. Lateral Cauchy data
    alone admit near-solutions whose interior oscillates; an inequality
    known to hold inside the domain rules them out.
    """
    start = time.perf_counter()
    T, K, L = grid.T, len(b0) - 1, basis.L
    b0 = np.asarray(b0, dtype=float)
    bm0 = BoundaryModel(K, T, b0)
    if constraint_violation(bm0, L, cfg) > 0:
        raise InfeasibleStart("initial boundary violates the shape constraints")
    tr = _Tracker(basis, grid, data, K, cfg, cfg.lambdas, interior)

    if cfg.lambda_rule not in ("pass", "sweep"):
        raise ValueError(f"unknown lambda rule {cfg.lambda_rule!r}")
    if cfg.method == "nelder-mead":
        lam = None
        if cfg.lambda_rule == "pass":
            lam = solve_inner_ls(basis, bm0, grid, data, cfg.lambdas, cfg.coef_cap).lam
        converged = _run_nelder_mead(tr, b0, lam)
    elif cfg.method == "least-squares":
        if cfg.lambda_rule != "pass":
            raise ValueError("least squares needs lambda held fixed within a pass")
        x, converged, stalls = b0, False, 0
        while stalls <= cfg.restarts:
            if cfg.max_evals - tr.evals <= 2 * (K + 2):
                converged = False
                break
            before = tr.best
            # regularisation re-chosen at the best boundary found so far
            try:
                lam = solve_inner_ls(basis, BoundaryModel(K, T, x), grid, data,
                                     cfg.lambdas, cfg.coef_cap).lam
            except (AllLambdasRejected, BoundaryOutOfDomain):
                break
            converged, last = _run_least_squares(tr, x, lam)
            # until a candidate qualifies, carry on from where the pass ended
            x = last if tr.b is None else tr.b.copy()
            # a pass can stop early at a kink of the penalty; restart until
            # several passes in a row make no real progress
            progressed = np.isfinite(tr.best) and tr.best <= (1 - cfg.progress) * before
            stalls = 0 if progressed else stalls + 1
            logger.info("pass with lambda=%.1e: best sqrt(F)=%.3e after %d evaluations",
                        lam, tr.best, tr.evals)
    else:
        raise ValueError(f"unknown method {cfg.method!r}")

    if tr.b is None:
        raise BudgetExhausted("no feasible candidate was evaluated", tr.evals)
    bm = BoundaryModel(K, T, tr.b)
    F, I1, I2, I3 = residual_F(basis, tr.inner.a, bm, grid, data)
    return SolveResult(a_coeffs=tr.inner.a, b_coeffs=tr.b, I1=I1, I2=I2, I3=I3, F=F,
                       lam=tr.inner.lam, evaluations=tr.evals, seed=seed,
                       wall_time=time.perf_counter() - start, converged=converged,
                       history=tr.history)
