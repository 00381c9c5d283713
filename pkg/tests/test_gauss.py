import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twosided.errors import DomainError, QuadratureError
from twosided.gauss import (Phi, Phi_inv, QuadratureSpec, bisect_root, chi_cdf, chi_inv,
                            dPhi_inv, integrate_1d, interval_mass, log_Phi, minimize_1d, phi)


def erfc_Phi(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@pytest.mark.parametrize("x", [-37.0, -20.0, -8.0, -1.0, 0.0, 0.5, 3.0, 8.0])
def test_Phi_matches_high_precision(x):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    ref = float(mpmath.ncdf(x))
    # relative condition number of Phi is about x**2 in the lower tail
    assert Phi(x) == pytest.approx(ref, rel=4e-16 * max(4.0, x * x), abs=0.0)


def test_Phi_limits_and_symmetry():
    assert Phi(-np.inf) == 0.0 and Phi(np.inf) == 1.0
    xs = np.linspace(-6, 6, 101)
    np.testing.assert_allclose(Phi(xs) + Phi(-xs), 1.0, atol=1e-15)


@pytest.mark.parametrize("p", [1e-300, 1e-50, 1e-10, 1e-4, 0.025, 0.3, 0.5, 0.9, 1 - 1e-12])
def test_Phi_inv_round_trip(p):
    q = Phi_inv(p)
    if p < 0.5:
        assert Phi(q) == pytest.approx(p, rel=1e-13)
    else:
        assert 1.0 - Phi(q) == pytest.approx(1.0 - p, rel=1e-8)


def test_Phi_inv_known_quantiles():
    assert Phi_inv(0.5) == 0.0
    assert Phi_inv(0.025) == pytest.approx(-1.959963984540054, abs=1e-14)
    assert Phi_inv(0.05) == pytest.approx(-1.6448536269514722, abs=1e-14)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_Phi_inv_domain(p):
    with pytest.raises(DomainError):
        Phi_inv(p)


@given(st.floats(1e-12, 0.5))
def test_Phi_inv_monotone_and_derivative(p):
    h = 1e-7 * min(p, 1 - p)
    fd = (Phi_inv(p + h) - Phi_inv(p - h)) / (2 * h)
    assert fd == pytest.approx(dPhi_inv(p), rel=1e-5)
    assert Phi_inv(p - h) < Phi_inv(p + h)


@given(st.floats(-30, 30), st.floats(0, 10))
def test_interval_mass_nonnegative_and_accurate(a, w):
    mpmath = pytest.importorskip("mpmath")
    m = interval_mass(a, a + w)
    assert 0.0 <= m <= 1.0
    # enough digits that the reflected cdf difference cannot cancel to zero
    with mpmath.workdps(400):
        lo, hi = mpmath.mpf(a), mpmath.mpf(a + w)
        ref = float(mpmath.ncdf(-lo) - mpmath.ncdf(-hi) if a > 0 else mpmath.ncdf(hi) - mpmath.ncdf(lo))
    assert m == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_interval_mass_by_quadrature():
    for a, b in ((-1.0, 2.0), (-4.0, -3.0), (0.5, 0.6)):
        ref = integrate_1d(phi, a, b, QuadratureSpec(abs_tol=1e-15))
        assert interval_mass(a, b) == pytest.approx(ref, rel=1e-12)


def test_interval_mass_far_tail_no_cancellation():
    # both endpoints deep in the upper tail, where Phi(hi) - Phi(lo) rounds to 0
    m = interval_mass(10.0, 11.0)
    naive = erfc_Phi(11.0) - erfc_Phi(10.0)
    assert naive == 0.0
    assert m == pytest.approx(0.5 * (math.erfc(10 / math.sqrt(2)) - math.erfc(11 / math.sqrt(2))),
                              rel=1e-12)


def test_log_Phi_tail():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    assert Phi(-40.0) == 0.0
    assert log_Phi(-40.0) == pytest.approx(float(mpmath.log(mpmath.ncdf(-40))), rel=1e-13)


def test_chi_cdf_two_dof_closed_form():
    x = np.linspace(0, 5, 21)
    np.testing.assert_allclose(chi_cdf(2, x), 1 - np.exp(-x * x / 2), atol=1e-15)


@pytest.mark.parametrize("dof", [1, 2, 3, 5])
def test_chi_inv_round_trip(dof):
    for p in (0.05, 0.5, 0.95, 0.999):
        assert chi_cdf(dof, chi_inv(dof, p)) == pytest.approx(p, abs=1e-13)


def test_chi_one_dof_is_two_sided_normal():
    x = 1.7
    assert chi_cdf(1, x) == pytest.approx(Phi(x) - Phi(-x), abs=1e-15)


def test_integrate_polynomial_exact():
    assert integrate_1d(lambda x: x ** 5 - 2 * x, -1.0, 2.0) == pytest.approx(
        (2 ** 6 - 1) / 6 - (4 - 1), abs=1e-12)


def test_integrate_gaussian_tails():
    assert integrate_1d(phi, -np.inf, np.inf, QuadratureSpec(1e-13)) == pytest.approx(1.0, abs=1e-12)


def test_integrate_breakpoint_kink():
    f = lambda x: np.abs(x - 0.3)
    assert integrate_1d(f, 0.0, 1.0, breakpoints=(0.3,)) == pytest.approx(
        0.5 * (0.09 + 0.49), abs=1e-13)


def test_integrate_empty_interval():
    assert integrate_1d(phi, 1.0, 1.0) == 0.0


def test_integrate_depth_cap():
    with pytest.raises(QuadratureError) as info:
        integrate_1d(lambda x: np.sign(np.sin(1e4 * x)), 0.0, 1.0, QuadratureSpec(1e-15, 3))
    assert info.value.estimate is not None


def test_bisect_root_and_bracket_error():
    r = bisect_root(lambda x: x ** 3 - 2.0, 0.0, 2.0, tol=1e-15)
    assert r == pytest.approx(2 ** (1 / 3), abs=1e-14)
    with pytest.raises(DomainError):
        bisect_root(lambda x: x - 5.0, 0.0, 1.0)


def test_minimize_convex():
    x, fx = minimize_1d(lambda s: (s - 0.7) ** 2 + 1.0, -3, 3, dh=lambda s: 2 * (s - 0.7),
                        d2h=lambda s: 2.0)
    assert x == pytest.approx(0.7, abs=1e-10)
    assert fx == pytest.approx(1.0, abs=1e-15)
