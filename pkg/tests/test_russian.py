import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tesfbp.errors import InvalidSpec, InvalidState, ZeroDividend
from tesfbp.russian import (RussianOptionSpec, SolverConfig, bsm_operator, bsm_to_pqw,
                            build_basis, perpetual_solution, price_option, slope_constraint,
                            solve_fhro, start_candidates)
from tesfbp.solver import BoundaryModel, ConstraintConfig, constraint_violation


def pqw_apply(spec, u, y, h=1e-4):
    """(1/w)((p u')' - q u) by central differences of the flux."""
    p, q, w = bsm_to_pqw(spec)
    up = lambda x: (u(x + h) - u(x - h)) / (2 * h)
    flux = lambda x: p(x) * up(x)
    return ((flux(y + h) - flux(y - h)) / (2 * h) - q(y) * u(y)) / w(y)


class TestSpec:
    @pytest.mark.parametrize("bad", [dict(r=0.0), dict(sigma=0.0), dict(delta=-0.1), dict(T=0.0)])
    def test_validation(self, bad):
        args = dict(r=0.05, delta=0.03, sigma=0.3, T=1.0) | bad
        with pytest.raises(InvalidSpec):
            RussianOptionSpec(**args)

    def test_exponent(self, spec):
        assert spec.exponent == pytest.approx(4 / 9)


class TestOperator:
    def test_coefficients(self, spec):
        p, q, w = bsm_to_pqw(spec)
        assert p(0.5) == pytest.approx(0.7349, abs=1e-4)
        assert q(0.2) == pytest.approx(spec.r * w(0.2))

    def test_cubic(self, spec):
        y = 0.3
        u = lambda x: (1 - x) ** 3
        direct = bsm_operator(spec, u(y), -3 * (1 - y) ** 2, 6 * (1 - y), y)
        assert pqw_apply(spec, u, y) == pytest.approx(direct, abs=1e-6)
        # exact: (1-y)^3 (3 sigma^2 + 3 (r - delta) - r)
        exact = (1 - y) ** 3 * (3 * spec.sigma**2 + 3 * (spec.r - spec.delta) - spec.r)
        assert direct == pytest.approx(exact, abs=1e-10)

    def test_constant(self, spec):
        assert bsm_operator(spec, 1.0, 0.0, 0.0, 0.4) == pytest.approx(-spec.r)
        assert pqw_apply(spec, lambda x: np.ones_like(x), 0.4) == pytest.approx(-spec.r, abs=1e-8)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.9), st.integers(1, 4))
    def test_powers_agree(self, y, n):
        spec = RussianOptionSpec(0.05, 0.03, 0.3, 1.0)
        u = lambda x: (1 - x) ** n + x
        ex = bsm_operator(spec, u(y), -n * (1 - y) ** (n - 1) + 1,
                          n * (n - 1) * (1 - y) ** (n - 2), y)
        assert pqw_apply(spec, u, y) == pytest.approx(ex, abs=1e-5)

    def test_wrong_type(self):
        with pytest.raises(InvalidSpec):
            bsm_to_pqw((0.05, 0.03, 0.3, 1.0))


class TestPerpetual:
    def test_reference_values(self, perp):
        assert perp.b_inf == pytest.approx(0.621097, abs=1e-6)
        assert perp.value(0.0) == pytest.approx(1.69044, abs=1e-5)
        assert perp.value(0.1) == pytest.approx(1.52733, abs=1e-5)
        assert perp.value(0.2) == pytest.approx(1.37749, abs=1e-5)

    def test_root_product(self, spec, perp):
        assert perp.d1 * perp.d2 == pytest.approx(-2 * spec.r / spec.sigma**2)
        assert perp.d1 > 1 and perp.d2 < 0

    def test_smooth_fit_and_robin(self, perp):
        b = perp.b_inf
        assert perp.value(b - 1e-12) == pytest.approx(1.0, abs=1e-9)
        assert perp.slope(b - 1e-12) == pytest.approx(0.0, abs=1e-9)
        assert perp.value(0.0) + perp.slope(0.0) == pytest.approx(0.0, abs=1e-12)
        assert perp.value(0.9) == 1.0 and perp.slope(0.9) == 0.0

    def test_ode(self, spec, perp):
        y, h = np.linspace(0.05, 0.55, 11), 1e-4
        u = perp.value
        uy = perp.slope(y)
        uyy = (perp.slope(y + h) - perp.slope(y - h)) / (2 * h)
        assert np.max(np.abs(bsm_operator(spec, u(y), uy, uyy, y))) < 1e-7

    def test_zero_dividend(self):
        with pytest.raises(ZeroDividend):
            perpetual_solution(RussianOptionSpec(0.05, 0.0, 0.3, 1.0))


class TestStarts:
    def test_candidates_are_feasible_and_bounded(self, spec, perp):
        cfg = SolverConfig()
        cands = start_candidates(spec, cfg, perp)
        assert len(cands) == 2 * cfg.n_start
        feasible = [b for b in cands
                    if constraint_violation(BoundaryModel(cfg.K, spec.T, b), 0.65,
                                            ConstraintConfig()) == 0]
        assert len(feasible) > cfg.n_start

    def test_fixed_fraction(self, spec, perp):
        cands = start_candidates(spec, SolverConfig(start_fraction=0.8), perp)
        assert len(cands) == 1
        assert BoundaryModel(9, spec.T, cands[0])(spec.T) == pytest.approx(0.8 * perp.b_inf)

    def test_frequency_rule(self):
        cfg = SolverConfig()
        assert cfg.frequency_scale(0.25) == pytest.approx(0.5)
        assert cfg.frequency_scale(100.0) == 1.0
        assert SolverConfig(cap_horizon=0).frequency_scale(7.0) == 7.0


@pytest.fixture(scope="module")
def quick_solution():
    spec = RussianOptionSpec(0.05, 0.03, 0.3, 1.0)
    return solve_fhro(spec, SolverConfig())


class TestQuickSolve:
    def test_basis_members(self, spec):
        basis = build_basis(spec, SolverConfig(n_mesh=2000))
        assert basis.omegas[0] == 0 and basis.omegas[-1] <= 20
        assert np.max(np.abs(basis.e_tilde[:, 0] + basis.e_tilde_prime[:, 0])) < 1e-9

    def test_shape(self, quick_solution):
        sol = quick_solution
        t = np.linspace(sol.spec.T / 1000, sol.spec.T, 1000)
        assert sol.boundary(0.0) == 0.0
        assert np.all(sol.boundary.derivative(t) >= 0)
        assert np.all(sol.boundary.derivative(t, 2) <= 0)
        assert sol.boundary(sol.spec.T) < sol.perpetual.b_inf

    def test_values_below_perpetual(self, quick_solution):
        sol = quick_solution
        y = np.linspace(0, 0.3, 7)
        assert np.all(sol.value_slice(y) <= sol.perpetual.value(y) + 1e-3)
        assert np.all(sol.value_slice(y) >= 1 - 1e-3)
        assert sol.value(0.9) == 1.0

    def test_slope_condition(self, quick_solution):
        assert quick_solution.slope_violation < 1e-3

    def test_slope_constraint_on_fitted_solution(self, quick_solution):
        sol = quick_solution
        check = slope_constraint(sol.basis, sol.spec.T, 30)
        v = check(sol.boundary, sol.result.a_coeffs)
        assert v.shape == (30, 30)
        # the Robin condition makes the y = 0 column vanish
        assert np.max(np.abs(v[:, 0])) < 1e-9
        assert np.max(v) < 1e-3

    def test_slope_constraint_flags_wrong_sign(self, quick_solution):
        sol = quick_solution
        check = slope_constraint(sol.basis, sol.spec.T, 10)
        assert np.max(check(sol.boundary, -sol.result.a_coeffs)) > 0.1


# published values of u(0, T) for longer horizons
LONG = {5.0: 1.4401, 10.0: 1.5508}


@pytest.fixture(scope="module")
def sols():
    return {T: solve_fhro(RussianOptionSpec(0.05, 0.03, 0.3, T), SolverConfig())
            for T in (1 / 3, 1.0, 5.0, 10.0)}


@pytest.mark.slow
class TestLongHorizons:
    @pytest.mark.parametrize("T", sorted(LONG))
    def test_table_values(self, sols, T):
        sol = sols[T]
        assert sol.result.F <= 1e-6
        assert sol.slope_violation < 1e-3
        assert sol.value(0.0) == pytest.approx(LONG[T], abs=2e-3)

    def test_horizon_monotonicity(self, sols, perp):
        u = [sols[T].value(0.0) for T in sorted(sols)]
        assert all(b >= a for a, b in zip(u, u[1:]))
        assert u[-1] <= perp.value(0.0)

    def test_boundary_independent_of_horizon(self, sols):
        # in time to maturity the free boundary does not depend on the horizon
        t = np.linspace(0.05, 1 / 3, 20)
        for T in (1.0, 5.0, 10.0):
            assert np.max(np.abs(sols[T].boundary(t) - sols[1 / 3].boundary(t))) < 2e-2


class TestPrice:
    def test_homogeneity(self, quick_solution):
        a = price_option(quick_solution, 0.9, 1.0, 0.2)
        b = price_option(quick_solution, 90.0, 100.0, 0.2)
        assert b == pytest.approx(100 * a, rel=1e-12)

    def test_expiry_and_stopping(self, quick_solution):
        T = quick_solution.spec.T
        assert price_option(quick_solution, 0.5, 1.0, T) == 1.0
        assert price_option(quick_solution, 0.2, 1.0, 0.0) == 1.0

    def test_value_at_maximum(self, quick_solution):
        assert price_option(quick_solution, 1.0, 1.0, 0.0) == pytest.approx(
            quick_solution.value(0.0), rel=1e-12)

    @pytest.mark.parametrize("s,m,z", [(1.1, 1.0, 0.1), (0.0, 1.0, 0.1), (0.5, 1.0, -0.1),
                                       (0.5, 1.0, 1.5)])
    def test_invalid_state(self, quick_solution, s, m, z):
        with pytest.raises(InvalidState):
            price_option(quick_solution, s, m, z)
