import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ruelle_lab.models import CAT_MAP, ToralSuspension, TrigPoly, enumerate_orbits_suspension
from ruelle_lab.trace_check import (OrbitTableShort, TestFunction, counting_tail, laplace, laplace_bound,
                                    lhs_resonance_sum, operator_side_trace, resonance_tail, rhs_orbit_sum)
from ruelle_lab.transfer import ResonanceSet, resonances_suspension


def cat_resonances(k_max, shift=0.0):
    return ResonanceSet([(shift + 2j * np.pi * k, 1) for k in range(-k_max, k_max + 1)], "matrix-spectrum", 1)


@pytest.fixture(scope="module")
def res1000():
    return cat_resonances(1000)


def bump_oracle(center, width, t):
    u = (t - center) / width
    out = np.zeros_like(t)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1 / (1 - u[inside] ** 2))
    return out


# ---------------------------------------------------------------- test functions

def test_bump_values():
    h = TestFunction(2.0, 0.3, 1.5)
    t = np.linspace(1.5, 2.5, 101)
    assert np.allclose(h(t), 1.5 * bump_oracle(2.0, 0.3, t), rtol=1e-15, atol=0)
    assert h(np.array([2.0]))[0] == pytest.approx(1.5 * math.exp(-1), rel=1e-15)


def test_bump_validation():
    with pytest.raises(ValueError):
        TestFunction(0.2, 0.3)
    with pytest.raises(ValueError):
        TestFunction(2.0, 0.0)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_bump_derivatives_finite_difference(k):
    h = TestFunction(2.0, 0.3)
    t = np.linspace(1.8, 2.2, 9)
    e = 1e-4

    def f(x):
        return h.derivative(x, k - 1)

    fd = (-f(t + 2 * e) + 8 * f(t + e) - 8 * f(t - e) + f(t - 2 * e)) / (12 * e)
    scale = np.abs(h.derivative(t, k)).max()
    assert np.max(np.abs(fd - h.derivative(t, k))) < 1e-7 * scale


def test_bv_norm_matches_dense_sampling():
    h = TestFunction(2.0, 0.3)
    t = np.linspace(1.7, 2.3, 2_000_001)
    for k in (0, 2):
        tv = np.abs(np.diff(h.derivative(t, k))).sum()
        assert h.bv_norm(k) == pytest.approx(tv, rel=1e-6)


def test_laplace_normalized():
    h = TestFunction.normalized(1.0, 0.3)
    assert laplace(h, 0.0) == pytest.approx(1.0, abs=1e-13)


def test_laplace_trapezoid_oracle():
    h = TestFunction(1.0, 0.3)
    t = np.linspace(0.7, 1.3, 1_000_001)
    f = np.exp(2j * np.pi * t) * bump_oracle(1.0, 0.3, t)
    ref = np.trapezoid(f, t)
    assert abs(laplace(h, 2j * np.pi) - ref) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 200.0), st.floats(0.5, 4.0), st.floats(0.05, 0.45))
def test_laplace_symmetry(omega, center, width):
    h = TestFunction(center, width)
    a, b = laplace(h, 1j * omega), laplace(h, -1j * omega)
    assert abs(abs(a) - abs(b)) <= 1e-12
    # even about the center: e^{-i omega c} Lap is real
    assert abs((a * np.exp(-1j * omega * center)).imag) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 400.0), st.integers(1, 6))
def test_laplace_ibp_bound(omega, k):
    h = TestFunction(2.0, 0.3)
    assert abs(laplace(h, 1j * omega)) <= laplace_bound(h, 1j * omega, k) * (1 + 1e-9) + 1e-13


# ---------------------------------------------------------------- resonance side

def test_lhs_single_zero():
    h = TestFunction.normalized(2.0, 0.3)
    r = lhs_resonance_sum(ResonanceSet([(0, 1)], "matrix-spectrum", 0), h, 5)
    assert r.value == pytest.approx(1.0, abs=1e-13)
    assert r.tail < 1e-13 and r.terms == 1


def test_lhs_empty():
    r = lhs_resonance_sum([], TestFunction(2.0, 0.3), 10)
    assert r.value == 0 and r.terms == 0


def test_lhs_poisson(res1000):
    h = TestFunction(2.0, 0.3)
    target = float(h(np.array([2.0]))[0])
    gaps = [abs(lhs_resonance_sum(res1000, h, K).value - target) for K in (11, 41, 161, 641)]
    assert all(b < a for a, b in zip(gaps, gaps[1:])), gaps
    assert gaps[-1] < 1e-12


def test_lhs_no_integer_in_support(res1000):
    h = TestFunction(2.5, 0.3)
    r = lhs_resonance_sum(res1000, h, 2001)
    assert abs(r.value) < 1e-10
    assert abs(r.value) <= r.tail


def test_lhs_tail_bounds_truncation(res1000):
    h = TestFunction(3.0, 0.3)
    full = lhs_resonance_sum(res1000, h, 2001).value
    for K in (21, 41, 81):
        r = lhs_resonance_sum(res1000, h, K)
        assert abs(r.value - full) <= r.tail


def test_lhs_partials(res1000):
    h = TestFunction(2.0, 0.3)
    r = lhs_resonance_sum(res1000, h, 50, with_partials=True)
    assert len(r.partial) == 50 and r.partial[-1] == pytest.approx(r.value, abs=1e-13)


def test_resonance_tail_empty():
    assert resonance_tail(TestFunction(2.0, 0.3), []) == 0.0


# ---------------------------------------------------------------- orbit side

def test_rhs_center_two(cat_orbits):
    h = TestFunction(2.0, 0.3)
    assert rhs_orbit_sum(cat_orbits, h) == pytest.approx(h(np.array([2.0]))[0], rel=1e-14)


def test_rhs_empty_support(cat_orbits):
    assert rhs_orbit_sum(cat_orbits, TestFunction(2.5, 0.3)) == 0
    assert rhs_orbit_sum(cat_orbits, TestFunction(0.5, 0.3)) == 0


def test_rhs_constant_potential(cat, cat_orbits):
    h = TestFunction(2.0, 0.3)
    base = rhs_orbit_sum(cat_orbits, h)
    k0 = 0.3 - 0.2j
    shifted = rhs_orbit_sum(cat_orbits, h, g=TrigPoly.constant(k0, 2))
    assert shifted == pytest.approx(base * np.exp(2 * k0), rel=1e-13)
    sus = ToralSuspension(CAT_MAP, 1.0, TrigPoly.constant(k0, 2))
    assert rhs_orbit_sum(enumerate_orbits_suspension(sus, 4), h) == pytest.approx(shifted, rel=1e-13)


def test_rhs_short_table(cat):
    orb = enumerate_orbits_suspension(cat, 2)
    with pytest.raises(OrbitTableShort, match="orbit table short"):
        rhs_orbit_sum(orb, TestFunction(2.0, 0.3))
    with pytest.raises(OrbitTableShort):
        rhs_orbit_sum(enumerate_orbits_suspension(cat, 5), TestFunction(2.0, 0.3), T_max=2.0)


# ---------------------------------------------------------------- three-way agreement

@settings(max_examples=30, deadline=None)
@given(st.floats(1.8, 4.2), st.floats(0.1, 0.3))
def test_three_way_agreement(cat_orbits, res1000, center, width):
    h = TestFunction(center, width)
    lhs = lhs_resonance_sum(res1000, h, 2001)
    rhs = rhs_orbit_sum(cat_orbits, h)
    assert abs(lhs.value - rhs) <= lhs.tail


def test_gap_monotone_in_K(cat_orbits, res1000):
    h = TestFunction(3.0, 0.3)
    rhs = rhs_orbit_sum(cat_orbits, h)
    gaps = [abs(lhs_resonance_sum(res1000, h, K).value - rhs) for K in (5, 11, 21, 41, 81)]
    assert all(b < a for a, b in zip(gaps, gaps[1:])), gaps


def test_potential_covariance(cat_orbits):
    k0 = 0.25
    sus = ToralSuspension(CAT_MAP, 1.0, TrigPoly.constant(k0, 2))
    res = resonances_suspension(sus, 4, 1000)
    assert np.allclose(np.sort_complex(res.values), np.sort_complex(cat_resonances(1000, k0).values), atol=1e-9)
    h = TestFunction(3.0, 0.3)
    lhs = lhs_resonance_sum(res, h, 2001)
    rhs = rhs_orbit_sum(cat_orbits, h, g=TrigPoly.constant(k0, 2))
    assert abs(lhs.value - rhs) <= lhs.tail


# ---------------------------------------------------------------- operator side

def test_operator_trace_center_two(cat):
    h = TestFunction(2.0, 0.3)
    r = operator_side_trace(cat, h, 4, 2000)
    assert abs(r.value - h(np.array([2.0]))[0]) < 1e-6


def test_operator_trace_below_shortest_orbit(cat):
    h = TestFunction(0.5, 0.3)
    r = operator_side_trace(cat, h, 4, 500)
    assert abs(r.value) <= r.tail


def test_operator_trace_linear(cat):
    h = TestFunction(2.0, 0.3)
    a = operator_side_trace(cat, h, 4, 100).value
    b = operator_side_trace(cat, TestFunction(2.0, 0.3, 2.0), 4, 100).value
    assert b == 2 * a


# ---------------------------------------------------------------- counting

def test_counting_converges():
    rep = counting_tail(cat_resonances(10_000), 1.0, 2, [20, 200, 2000, 20000])
    assert rep.classification == "converging"
    assert np.all(np.abs(np.diff(rep.increments)) < 1e-6)


def test_counting_harmonic_diverges():
    rep = counting_tail(cat_resonances(10_000), 1.0, 2, [20, 200, 2000, 20000], exponent=1.0)
    assert rep.classification == "diverging"


def test_counting_single():
    rep = counting_tail(ResonanceSet([(0.5j, 1)], "matrix-spectrum", 0), 1.0, 2, [1, 10])
    assert rep.classification == "converging"
    assert rep.partial_sums[0] == rep.partial_sums[1]


def test_counting_p_series_oracle():
    # sum over k of 1/(1 + (2 pi |k|)^4) against the p-series tail bound
    rep = counting_tail(cat_resonances(10_000), 1.0, 2, [1001, 20001])
    tail = 2 * (2 * np.pi) ** -4 / (3 * 500 ** 3)
    assert 0 < rep.increments[0] <= tail


def test_counting_requires_increasing():
    with pytest.raises(ValueError):
        counting_tail(cat_resonances(3), 1.0, 2, [10, 5])
