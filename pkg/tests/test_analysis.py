import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from opcumulant.analysis import (NoThresholdError, bisect, butikov_lambda_c, closed_form_lambda0,
                                 floquet_margin, kapitza_jacobian, lambda0_series_approx,
                                 lambda_c_first_order, monodromy, stability)


def _lambda_c_expansion(gamma, q_inv):
    G2, q2 = gamma * gamma, q_inv * q_inv
    return (0.454163 + 1.681051 * G2 + 0.859551 * q2 * G2 - 0.404568 * G2 * G2
            - 3.767032 * q2 * G2 * G2 - 0.924046 * q2 * q2 * G2 * G2)


def test_first_order_jacobian():
    J = kapitza_jacobian(0.1, 0.02, 0.4, 1)
    assert np.allclose(J, [[0, 1], [0.01, -0.02]], atol=1e-14)


def test_undriven_orders_agree():
    for n in (3, 5):
        assert np.allclose(kapitza_jacobian(0.1, 0.02, 0.0, n), kapitza_jacobian(0.1, 0.02, 0.0, 1),
                           atol=1e-14)


@given(st.floats(0.05, 0.2), st.floats(0.0, 0.6))
def test_order3_determinant_sign(gamma, lam):
    det = np.linalg.det(kapitza_jacobian(gamma, 0.0, lam, 3))
    crit = lam * lam - 2 * gamma * gamma
    if abs(crit) > 1e-6:
        assert (det > 0) == (crit > 0)


def test_closed_form_examples():
    assert closed_form_lambda0(3, 0.05, 0.0) == pytest.approx(0.0707107, abs=1e-7)
    assert closed_form_lambda0(5, 0.1, 0.0) == pytest.approx(math.sqrt(0.02 / 0.96), rel=1e-12)
    assert closed_form_lambda0(5, 0.1, 0.0) == pytest.approx(0.1443376, abs=1e-7)
    with pytest.raises(ValueError):
        closed_form_lambda0(4, 0.1, 0.0)


@given(st.sampled_from([3, 5, 7]), st.floats(0.01, 0.06))
def test_series_approximates_closed_form(order, gamma):
    exact = closed_form_lambda0(order, gamma, 0.0) ** 2
    approx = lambda0_series_approx(order, gamma, 0.0)
    assert abs(approx - exact) <= 100 * gamma ** (order - 1) * exact


def test_upper_boundary_limit_and_butikov():
    assert lambda_c_first_order(0.0, 0.0).lambda_star == pytest.approx(0.454163, abs=1e-6)
    for g in (0.05, 0.15):
        assert lambda_c_first_order(g, 0.0).lambda_star == pytest.approx(butikov_lambda_c(g), abs=1e-10)


def test_upper_boundary_expansion():
    g, b = 0.1, 0.05
    lc = lambda_c_first_order(g, b).lambda_star
    assert abs(lc - _lambda_c_expansion(g, b / g)) <= 1e-3


def test_upper_boundary_ct_eigenvalues():
    res = lambda_c_first_order(0.1, 0.05)
    assert res.info["ct_eigs_positive"] == [True, True]


def test_undriven_floquet_unstable():
    m = monodromy(0.1, 0.0, 0.0)
    assert m.spectral_radius > 1
    assert m.spectral_radius == pytest.approx(math.exp(2 * math.pi * 0.1), rel=1e-8)


@given(st.floats(0.0, 0.1), st.floats(0.0, 0.5))
def test_liouville(beta, lam):
    m = monodromy(0.1, beta, lam, steps=1024, tol=1e-8)
    assert abs(np.linalg.det(m.monodromy) - math.exp(-2 * math.pi * beta)) <= 1e-8


def test_floquet_margin_sign():
    assert floquet_margin(0.1, 0.0, 0.05) < 0
    assert floquet_margin(0.1, 0.0, 0.3) > 0


def test_bisect_bracket_independence():
    f = lambda x: x ** 3 - 0.2
    r1, _, _ = bisect(f, 0.0, 1.0, xtol=1e-13)
    r2, _, _ = bisect(f, 0.3, 2.0, xtol=1e-13)
    assert abs(r1 - r2) < 1e-12 and r1 == pytest.approx(0.2 ** (1 / 3), abs=1e-12)


def test_no_threshold_raises():
    with pytest.raises(NoThresholdError):
        bisect(lambda x: 1 + x * x, -1.0, 1.0)


def test_stability_classification():
    assert stability(np.diag([-1.0, -0.5])).stable
    s = stability(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert not s.stable and s.marginal
    assert not stability(np.diag([0.1, -1.0])).marginal
