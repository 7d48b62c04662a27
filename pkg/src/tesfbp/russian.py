"""Finite-horizon Russian option under Black-Scholes-Merton dynamics.

With ``y = 1 - S/m`` (m the running maximum) and ``t = T - z`` the price is
``V = m u(y, t)`` where u solves a parabolic free boundary problem on
``0 < y < s(t)``. Its operator ``0.5 sigma^2 (1-y)^2 u'' - (r-delta)(1-y) u' - r u``
is brought to pqw form so the transmuted basis applies.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .basis import BasisFamily, build_reduced_basis, eval_solution, generate_frequencies
from .errors import (AllLambdasRejected, BoundaryOutOfDomain, BudgetExhausted,
                     InvalidSpec, InvalidState,
                     ZeroDividend)
from .nsbf import compute_nsbf_coefficients
from .slp import build_coefficient_grid, compute_formal_powers
from .solver import (BoundaryModel, ConstraintConfig, GeneralBoundaryData,
                     SolveResult, TimeGrid, constraint_violation, minimize_free_boundary,
                     project_boundary, solve_inner_ls)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RussianOptionSpec:
    r: float
    delta: float
    sigma: float
    T: float

    def __post_init__(self):
        if not (self.r > 0 and self.sigma > 0 and self.delta >= 0 and self.T > 0):
            raise InvalidSpec(f"need r > 0, sigma > 0, delta >= 0, T > 0; got {self}")

    @property
    def exponent(self) -> float:
        """k = 2 (r - delta) / sigma^2, the power in p(y) = (1 - y)^k."""
        return 2 * (self.r - self.delta) / self.sigma**2


def bsm_to_pqw(spec: RussianOptionSpec):
    """(p, q, w) with (1/w)((p u')' - q u) equal to the BSM generator in y."""
    if not isinstance(spec, RussianOptionSpec):
        raise InvalidSpec("expected a RussianOptionSpec")
    k = spec.exponent
    scale = 2 / spec.sigma**2

    def p(y):
        return (1 - np.asarray(y, dtype=float)) ** k

    def w(y):
        return scale * (1 - np.asarray(y, dtype=float)) ** (k - 2)

    def q(y):
        return spec.r * w(y)

    return p, q, w


def bsm_operator(spec: RussianOptionSpec, u, u_y, u_yy, y):
    """The untransformed generator applied to given derivative values."""
    return (0.5 * spec.sigma**2 * (1 - y) ** 2 * u_yy
            - (spec.r - spec.delta) * (1 - y) * u_y - spec.r * u)


@dataclass(frozen=True)
class PerpetualSolution:
    d1: float
    d2: float
    x_star: float
    b_inf: float

    def value(self, y):
        """u_inf(y); equal to 1 in the stopping region y >= b_inf."""
        y = np.asarray(y, dtype=float)
        ratio = np.clip(1 - y, 0.0, None) / self.x_star
        inside = (self.d2 * ratio**self.d1 - self.d1 * ratio**self.d2) / (self.d2 - self.d1)
        out = np.where(y < self.b_inf, inside, 1.0)
        return out if out.ndim else float(out)

    def slope(self, y):
        y = np.asarray(y, dtype=float)
        ratio = np.clip(1 - y, 1e-300, None) / self.x_star
        d = -self.d1 * self.d2 * (ratio ** (self.d1 - 1) - ratio ** (self.d2 - 1))
        out = np.where(y < self.b_inf, d / ((self.d2 - self.d1) * self.x_star), 0.0)
        return out if out.ndim else float(out)


def perpetual_solution(spec: RussianOptionSpec) -> PerpetualSolution:
    """Closed-form infinite-horizon value and exercise boundary."""
    if spec.delta == 0:
        raise ZeroDividend("the perpetual boundary requires a positive dividend yield")
    a = 0.5 * spec.sigma**2
    b = spec.r - spec.delta - a
    c = -spec.r
    d1, d2 = np.roots([a, b, c])
    d1, d2 = float(max(d1, d2)), float(min(d1, d2))
    x_star = (d2 * (1 - d1) / (d1 * (1 - d2))) ** (1 / (d1 - d2))
    return PerpetualSolution(d1=d1, d2=d2, x_star=float(x_star), b_inf=float(1 - x_star))


@dataclass(frozen=True)
class SolverConfig:
    n_mesh: int = 10000
    M: int = 60
    K: int = 9
    N_t: int = 2000
    d: float = 0.1
    delta_step: float = 1 / 3
    cap: float = 20.0
    # frequencies obey omega * sqrt(min(T, cap_horizon)) <= cap;
    # cap_horizon = 0 selects the plain omega * T <= cap rule
    cap_horizon: float = 1.0
    seed: int = 0
    lambda_min: float = 1e-12
    lambda_max: float = 1e-2
    n_lambda: int = 21
    max_evals: int = 5000
    coef_cap: float = 1e4
    # > 0 starts from that multiple of b_inf in the sqrt(t) shape; 0 scans
    start_fraction: float = 0.0
    n_start: int = 25
    # restarts from further-ranked starts while F exceeds f_target
    n_tries: int = 3
    f_target: float = 1e-6
    n_check: int = 1000
    # enforce u_y + u(0, t) >= 0 on an n_slope x n_slope grid during the fit
    # (0 only checks it afterwards)
    n_slope: int = 20

    @property
    def lambdas(self) -> np.ndarray:
        return np.geomspace(self.lambda_min, self.lambda_max, self.n_lambda)

    def frequency_scale(self, T: float) -> float:
        """Factor multiplying omega in the frequency cap for horizon T."""
        if self.cap_horizon <= 0:
            return T
        return float(np.sqrt(min(T, self.cap_horizon)))

    def as_dict(self) -> dict:
        return asdict(self)


def domain_length(perp: PerpetualSolution) -> float:
    return min(1 - 1e-3, 1.05 * perp.b_inf)


def build_basis(spec: RussianOptionSpec, cfg: SolverConfig,
                perp: PerpetualSolution | None = None) -> BasisFamily:
    """Steps up to the reduced basis: grid, formal powers, NSBF, frequencies."""
    perp = perp or perpetual_solution(spec)
    p, q, w = bsm_to_pqw(spec)
    grid = build_coefficient_grid(p, q, w, domain_length(perp), n_mesh=cfg.n_mesh)
    powers = compute_formal_powers(grid, 1)
    nsbf = compute_nsbf_coefficients(grid, powers, cfg.M)
    omegas = generate_frequencies(cfg.d, cfg.delta_step, cfg.cap,
                                  cfg.frequency_scale(spec.T), cfg.seed)
    return build_reduced_basis(grid, nsbf, omegas, seed=cfg.seed)


@dataclass
class FhroSolution:
    spec: RussianOptionSpec
    config: SolverConfig
    perpetual: PerpetualSolution
    basis: BasisFamily = field(repr=False)
    boundary: BoundaryModel
    result: SolveResult
    slope_violation: float = 0.0

    @property
    def converged(self) -> bool:
        return self.result.converged

    def value(self, y, t=None):
        """u_N(y, t) (t defaults to the horizon); 1 in the stopping region."""
        t = self.spec.T if t is None else t
        y, t = np.broadcast_arrays(np.asarray(y, float), np.asarray(t, float))
        out = np.ones(y.shape)
        inside = y < self.boundary(t)
        if np.any(inside):
            out[inside] = eval_solution(self.basis, self.result.a_coeffs, y[inside], t[inside])
        return out if out.ndim else float(out)

    def value_slice(self, ys):
        return np.asarray(self.value(np.asarray(ys, dtype=float)))


def slope_condition_violation(sol: FhroSolution, n_t: int = 50, n_y: int = 50) -> float:
    """Largest violation of u_y(y, t) + u(0, t) >= 0 inside the continuation region."""
    worst = 0.0
    for t in np.linspace(sol.spec.T / n_t, sol.spec.T, n_t):
        s = float(sol.boundary(t))
        ys = np.linspace(0, s, n_y)
        u0 = eval_solution(sol.basis, sol.result.a_coeffs, 0.0, t)
        uy = eval_solution(sol.basis, sol.result.a_coeffs, ys, np.full_like(ys, t), "u_y")
        worst = max(worst, float(np.max(-(uy + u0))))
    return worst


def slope_constraint(basis: BasisFamily, T: float, n: int):
    """Interior constraint -(u_y(y, t) + u(0, t)) <= 0 on a grid scaled to s(t).

    Times are uniform in sqrt(t/T), so the short-time region where spurious
    fits oscillate is sampled as densely as the rest.
    """
    t = T * np.linspace(1.0 / n, 1.0, n) ** 2
    theta = np.linspace(0.0, 1.0, n)
    decay = np.exp(-np.outer(t, basis.omegas**2))
    e0 = basis.values(0.0)

    def violation(bm: BoundaryModel, a):
        ys = np.clip(np.outer(bm(t), theta), 0.0, basis.L)
        uy = np.einsum("tyn,tn->ty", basis.slopes(ys), decay * a)
        u0 = (decay * e0) @ a
        return -(uy + u0[:, None])

    return violation


def start_candidates(spec: RussianOptionSpec, cfg: SolverConfig,
                     perp: PerpetualSolution) -> list[np.ndarray]:
    """Starting boundaries: scaled sqrt(t) shapes and saturating curves.

    The saturating family b_inf (1 - exp(-kappa sqrt(t))) rises like sqrt(t)
    for small t and levels off at the perpetual boundary, which matters for
    long horizons. Each curve is projected onto the boundary basis.
    """
    if cfg.start_fraction > 0:
        return [BoundaryModel.constant_multiple(cfg.K, spec.T,
                                                cfg.start_fraction * perp.b_inf).b_coeffs]
    out = [BoundaryModel.constant_multiple(cfg.K, spec.T, f * perp.b_inf).b_coeffs
           for f in np.linspace(0.1, 0.95, cfg.n_start)]
    for kappa in np.geomspace(0.1, 10.0, cfg.n_start):
        out.append(project_boundary(
            lambda t, k=kappa: perp.b_inf * (1 - np.exp(-k * np.sqrt(t))), cfg.K, spec.T))
    return out


def ranked_starts(spec: RussianOptionSpec, cfg: SolverConfig, perp: PerpetualSolution,
                  basis: BasisFamily, grid: TimeGrid, cons: ConstraintConfig,
                  interior=None) -> list[np.ndarray]:
    """Feasible start candidates ordered by their inner least-squares residual.

    With an interior constraint the score adds its penalised mean violation,
    the same combination the outer solve minimises.
    """
    data = GeneralBoundaryData.russian()
    scored = []
    for b in start_candidates(spec, cfg, perp):
        bm = BoundaryModel(cfg.K, spec.T, b)
        if constraint_violation(bm, basis.L, cons) > 0:
            continue
        try:
            inner = solve_inner_ls(basis, bm, grid, data, cons.lambdas, cons.coef_cap)
        except (AllLambdasRejected, BoundaryOutOfDomain):
            continue
        score = inner.residual
        if interior is not None:
            score += cons.penalty * float(np.mean(np.maximum(interior(bm, inner.a), 0.0)))
        scored.append((score, b))
    scored.sort(key=lambda item: item[0])
    if scored:
        logger.info("best initial boundary residual %.3e", scored[0][0])
    return [b for _, b in scored]


def solve_fhro(spec: RussianOptionSpec, cfg: SolverConfig = SolverConfig()) -> FhroSolution:
    """Full pipeline from model parameters to the fitted free boundary.

    The outer solve starts from the best-ranked boundary. If it settles with
    F above ``cfg.f_target`` (a poor local minimum, typically with the
    concavity constraint active), it restarts from the next-ranked start
    while evaluation budget remains and keeps the best result.
    """
    perp = perpetual_solution(spec)
    basis = build_basis(spec, cfg, perp)
    grid = TimeGrid(cfg.N_t, spec.T)
    data = GeneralBoundaryData.russian()
    cons = ConstraintConfig(n_check=cfg.n_check, max_evals=cfg.max_evals,
                            lambdas=tuple(cfg.lambdas), coef_cap=cfg.coef_cap)
    interior = slope_constraint(basis, spec.T, cfg.n_slope) if cfg.n_slope > 0 else None
    starts = ranked_starts(spec, cfg, perp, basis, grid, cons, interior)
    if not starts:
        # the solver reports the infeasibility of the plain start
        starts = [BoundaryModel.constant_multiple(cfg.K, spec.T, 0.8 * perp.b_inf).b_coeffs]
    logger.info("solving T=%g with %d frequencies", spec.T, basis.size)
    best, used, history = None, 0, []
    for b0 in starts[:max(cfg.n_tries, 1)]:
        remaining = cfg.max_evals - used
        if remaining <= 4 * (cfg.K + 2):
            break
        try:
            run = minimize_free_boundary(basis, grid, data, b0,
                                         replace(cons, max_evals=remaining), seed=cfg.seed,
                                         interior=interior)
        except BudgetExhausted as exc:
            used += exc.evaluations
            logger.info("no admissible candidate from this start")
            continue
        used += run.evaluations
        history += run.history
        if best is None or run.F < best.F:
            best = run
        if best.F <= cfg.f_target:
            break
        logger.info("F=%.2e above target; restarting from the next start", best.F)
    if best is None:
        raise BudgetExhausted("no start produced an admissible boundary", used)
    result = replace(best, evaluations=used, history=history)
    sol = FhroSolution(spec=spec, config=cfg, perpetual=perp, basis=basis,
                       boundary=BoundaryModel(cfg.K, spec.T, result.b_coeffs), result=result)
    sol.slope_violation = slope_condition_violation(sol)
    if sol.slope_violation > 1e-3:
        logger.warning("slope condition violated by %.2e", sol.slope_violation)
    return sol


def price_option(sol: FhroSolution, s: float, m: float, z: float) -> float:
    """V(s, m, z) = m u_N(1 - s/m, T - z), exactly m in the stopping region."""
    T = sol.spec.T
    if not (0 < s <= m):
        raise InvalidState("need 0 < s <= m")
    if not (0 <= z <= T):
        raise InvalidState(f"calendar time must lie in [0, {T}]")
    y, t = 1 - s / m, T - z
    if t == 0 or y >= float(sol.boundary(t)):
        return float(m)
    return float(m * eval_solution(sol.basis, sol.result.a_coeffs, y, t))
