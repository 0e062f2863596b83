import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from opcumulant.backends import FreeElem, MatrixOp, commutator
from opcumulant.cumulants import (CumulantTable, IncompleteTableError, MomentTable, SizeLimitError,
                                  TruncationPolicy, effective_generator, harmonic_moment,
                                  magnus_generator, magnus_word_cumulant, signature_cumulant,
                                  wilcox_series)
from opcumulant.expavg import ExpPoly, WindowSpec, average
from opcumulant.models import matrix_model

GAUSS = WindowSpec("gaussian", 0.8)
OMEGAS = (1.0, 2.5, -0.7)
FNS = [ExpPoly.harmonic(w) for w in OMEGAS]
MIXED = [ExpPoly.const(1.0), ExpPoly.harmonic(1.3), ExpPoly.term(0.5, 1, -0.4)]

words = st.lists(st.integers(0, 2), min_size=1, max_size=5).map(tuple)


def W(omega, tau=GAUSS.tau):
    return math.exp(-omega * omega * tau * tau / 2)


@pytest.fixture(scope="module")
def tables():
    return MomentTable(FNS, GAUSS), MomentTable(MIXED, GAUSS)


@given(words)
def test_recursion_equals_closed_form(tables, w):
    for mt in tables:
        a = signature_cumulant(w, mt, "recursion")
        b = signature_cumulant(w, mt, "closed")
        assert a.allclose(b, atol=1e-12, rtol=1e-10)


@given(st.lists(st.integers(0, 2), min_size=1, max_size=3).map(tuple))
def test_magnus_route_matches_dyson(tables, w):
    mt = tables[1]
    dyson = CumulantTable(mt)[w]
    fe = magnus_generator(mt, len(w))[len(w)]
    got = fe.c.get(w, ExpPoly())
    for t in (0.0, 0.7):
        assert abs(got(t) - dyson(t)) <= 1e-10 * max(1.0, abs(dyson(t)))


def test_harmonic_moments_give_same_cumulants():
    ref = CumulantTable(MomentTable(FNS, GAUSS))
    mt = MomentTable(FNS, GAUSS, lazy=False)
    for n in range(1, 4):
        for w in np.ndindex(*(3,) * n):
            w = tuple(int(i) for i in w)
            hm = harmonic_moment([OMEGAS[i] for i in w], GAUSS)
            mt._M[w] = hm
            mt._dM[w] = hm.derivative()
    alt = CumulantTable(mt)
    for w in [(0,), (1, 2), (2, 0, 1), (0, 0, 2)]:
        assert alt[w].allclose(ref[w], atol=1e-12)


def test_resonant_harmonic_moment_raises():
    with pytest.raises(ZeroDivisionError):
        harmonic_moment([1.0, -1.0], GAUSS)


def test_first_cumulant_is_average(tables):
    mt = tables[1]
    for i, f in enumerate(MIXED):
        assert CumulantTable(mt)[(i,)].allclose(average(GAUSS, f), atol=1e-14)


@given(st.sampled_from([0.4, 1.0, 2.5, -1.3]), st.sampled_from([0.4, -0.4, 1.7, -2.0]))
def test_second_cumulant_formula(wa, wb):
    mt = MomentTable([ExpPoly.harmonic(wa), ExpPoly.harmonic(wb)], GAUSS)
    u = CumulantTable(mt)[(0, 1)]
    expect = ExpPoly.harmonic(wa + wb, 1j / wb * (W(wa + wb) - W(wa) * W(wb)))
    assert u.allclose(expect, atol=1e-14)


def test_resonant_pair_is_stationary():
    mt = MomentTable([ExpPoly.harmonic(1.0), ExpPoly.harmonic(-1.0)], GAUSS)
    assert mt.M((0, 1)).max_power() == 1
    u = CumulantTable(mt)[(0, 1)]
    assert u.max_power() == 0
    assert u(0.0) == pytest.approx(-1j * (1 - W(1.0) ** 2), abs=1e-14)


def test_delta_window_kills_higher_cumulants():
    mt = MomentTable(MIXED, WindowSpec("delta", 0.0))
    ct = CumulantTable(mt)
    assert ct[(1,)].allclose(MIXED[1])
    for w in [(0, 1), (1, 2, 0), (2, 2, 1, 0)]:
        assert ct[w].is_zero() or ct[w].max_abs() < 1e-13


def test_magnus_examples(tables):
    mt = tables[1]
    assert magnus_word_cumulant((1,), mt).allclose(mt.M((1,)))
    k2 = mt.M((0, 1)) - mt.M((0,)) * mt.M((1,)) * 0.5
    assert magnus_word_cumulant((0, 1), mt).allclose(k2, atol=1e-14)
    k3 = (mt.M((0, 1, 2)) - (mt.M((0,)) * mt.M((1, 2)) + mt.M((0, 1)) * mt.M((2,))) * 0.5
          + mt.M((0,)) * mt.M((1,)) * mt.M((2,)) * (1 / 3))
    assert magnus_word_cumulant((0, 1, 2), mt).allclose(k3, atol=1e-13)


@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_wilcox_commuting_case(v):
    K = {g: MatrixOp([[v[g - 1]]]) for g in (1, 2, 3)}
    Kd = {g: MatrixOp([[v[g + 2]]]) for g in (1, 2, 3)}
    out = wilcox_series(K, Kd, 3)
    for g in (1, 2, 3):
        assert np.allclose(out[g].m, Kd[g].m)


def test_wilcox_grade_one():
    rng = np.random.default_rng(3)
    K1, Kd1 = MatrixOp(rng.normal(size=(2, 2))), MatrixOp(rng.normal(size=(2, 2)))
    out = wilcox_series({1: K1}, {1: Kd1}, 3)
    assert np.allclose(out[2].m, 0.5 * commutator(K1, Kd1).m)
    assert np.allclose(out[3].m, commutator(K1, commutator(K1, Kd1)).m / 6)


def test_wilcox_free_algebra():
    a, b = FreeElem.letter(0, 2), FreeElem.letter(1, 2)
    out = wilcox_series({1: a}, {1: b}, 2)
    assert out[2].c == {(0, 1): 0.5, (1, 0): -0.5}


def test_frozen_table_raises(tables):
    mt = MomentTable(FNS, GAUSS).populate([(0, 1)])
    fz = mt.frozen()
    assert fz.M((0, 1)) == mt.M((0, 1))
    with pytest.raises(IncompleteTableError):
        fz.M((2, 2))


def test_size_limit():
    mats = [np.eye(1)] * 11
    model = matrix_model(mats, [ExpPoly.harmonic(float(i)) for i in range(11)])
    with pytest.raises(SizeLimitError):
        effective_generator(model, GAUSS, TruncationPolicy(n_max=6))


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(n_max=0)
    with pytest.raises(ValueError):
        TruncationPolicy(coeff_floor=-1)
    assert TruncationPolicy().cutoff(WindowSpec("gaussian", 4.0)) == 0.5
    assert math.isinf(TruncationPolicy().cutoff(WindowSpec("delta", 0.0)))


def test_scalar_model_against_quadrature():
    # one scalar letter: U = M'/M with M = avg(exp(a F)), F(t) = t + sin(2t)/2
    a, t = 0.3, 0.4
    model = matrix_model([[[a]]], [ExpPoly.const(1.0) + ExpPoly.cos(2.0)])
    x, wts = np.polynomial.hermite_e.hermegauss(60)
    s = t - GAUSS.tau * x
    e = np.exp(a * (s + np.sin(2 * s) / 2))
    exact = np.sum(wts * a * (1 + np.cos(2 * s)) * e) / np.sum(wts * e)
    errs = []
    for n in (1, 2, 4, 6):
        ser = effective_generator(model, GAUSS, TruncationPolicy(n_max=n, slow_cutoff=math.inf))
        errs.append(abs(ser.element(t).m[0, 0] - exact))
    assert errs == sorted(errs, reverse=True) and errs[-1] < 1e-5


def test_delta_window_generator_reproduces_flow():
    # with no averaging, U = M^-1 M' is the instantaneous generator
    rng = np.random.default_rng(1)
    mats = [rng.normal(size=(4, 4)) * 0.3 for _ in range(2)]
    fns = [ExpPoly.const(1.0), ExpPoly.cos(1.5)]
    model = matrix_model(mats, fns)
    s = effective_generator(model, WindowSpec("delta", 0.0), TruncationPolicy(n_max=3))
    A = sum(complex(f(0.9)) * m for f, m in zip(fns, mats))
    assert np.allclose(s.element(0.9).m, A, atol=1e-12)
    assert all(abs(c) < 1e-12 for _, c in s.word_sum(2, 0.9))
