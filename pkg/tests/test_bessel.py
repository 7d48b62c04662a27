import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import spherical_jn

from tesfbp.bessel import spherical_bessel_j, spherical_bessel_table


def series_jn(n, x, terms=30):
    """Power series sum_k (-1)^k x^(2k+n) / (2^k k! (2n+2k+1)!!)."""
    total = 0.0
    for k in range(terms):
        dfact = math.prod(range(2 * n + 2 * k + 1, 0, -2))
        total += (-1) ** k * x ** (2 * k + n) / (2**k * math.factorial(k) * dfact)
    return total


def test_closed_form_values():
    assert spherical_bessel_j(0, 1.0) == pytest.approx(math.sin(1.0), rel=1e-15)
    assert spherical_bessel_j(0, 0.0) == 1.0
    assert spherical_bessel_j(1, 0.0) == 0.0


def test_j10_against_series():
    ref = series_jn(10, 1.0)
    assert ref == pytest.approx(7.116552e-11, rel=1e-6)
    assert spherical_bessel_j(10, 1.0) == pytest.approx(ref, rel=1e-4)


@given(st.floats(min_value=0.0, max_value=300.0, allow_subnormal=False))
def test_table_matches_scipy(x):
    tab = spherical_bessel_table(60, np.array([x]))[:, 0]
    ref = spherical_jn(np.arange(61), x)
    assert np.max(np.abs(tab - ref)) < 1e-13


def test_small_arguments_have_tiny_high_orders():
    x = np.array([1e-8, 1e-4, 0.5])
    tab = spherical_bessel_table(20, x)
    assert np.all(np.isfinite(tab))
    assert np.all(np.abs(tab[1:, 0]) < 1e-8)


def test_near_zeros_of_j0():
    # at x = pi, j0 vanishes so the table must normalise against j1
    x = np.array([np.pi, 2 * np.pi])
    assert np.allclose(spherical_bessel_table(10, x), spherical_jn(np.arange(11)[:, None], x),
                       atol=1e-14)


def test_negative_argument_parity():
    assert spherical_bessel_j(3, -2.0) == pytest.approx(-spherical_jn(3, 2.0))
    assert spherical_bessel_j(2, -2.0) == pytest.approx(spherical_jn(2, 2.0))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        spherical_bessel_j(-1, 1.0)
    with pytest.raises(ValueError):
        spherical_bessel_table(3, np.array([-1.0]))


def test_subnormal_argument():
    tab = spherical_bessel_table(4, np.array([5e-324]))[:, 0]
    assert tab[0] == 1.0 and np.all(tab[1:] == 0.0)
