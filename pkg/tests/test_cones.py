import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ruelle_lab.cones import (BelowThresholdError, Cone, ConeSystem, RelatedPairError, band_scale,
                              cone_hyperbolic, contains, distance_to_cone, dump_cone_system, flow_constant,
                              is_cone_system, load_cone_system, related, sphere_samples,
                              strictly_nested, support_separation, suspension_derivative_transpose,
                              transition_params, transverse_gap)
from ruelle_lab.models import CAT_MAP

E2 = np.eye(2)


def rot(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def test_contains_examples():
    c = Cone(E2, 1, 1.0)
    assert contains(c, np.zeros(2))
    assert contains(c, np.array([1.0, 1.0]))
    assert not contains(c, np.array([1.0, 2.0]))


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(1e-3, 1e3).flatmap(lambda t: st.sampled_from([t, -t])),
       st.floats(0.05, 3), st.floats(0, 2 * math.pi))
def test_contains_scale_invariant(a, b, t, m, ang):
    c = Cone(rot(ang), 1, m)
    xi = np.array([a, b])
    if np.linalg.norm(xi) < 1e-6:
        return
    # skip points within rounding of the boundary
    core, perp = c.split(xi)
    if abs(perp[0] - m * core[0]) < 1e-9 * np.linalg.norm(xi):
        return
    assert contains(c, xi) == contains(c, t * xi)


def test_cone_validation():
    with pytest.raises(ValueError):
        Cone(np.array([[1.0, 1.0], [0.0, 1.0]]), 1, 1.0)
    with pytest.raises(ValueError):
        Cone(E2, 3, 1.0)
    with pytest.raises(ValueError):
        Cone(E2, 1, -0.1)


def test_strictly_nested_examples():
    assert strictly_nested(Cone(E2, 1, 0.5), Cone(E2, 1, 1.0))
    assert not strictly_nested(Cone(E2, 1, 1.0), Cone(E2, 1, 1.0))
    assert not strictly_nested(Cone(E2, 1, 0.1), Cone(rot(math.pi / 2), 1, 0.1))
    # rotated frame, sampling path
    assert strictly_nested(Cone(rot(0.1), 1, 0.3), Cone(E2, 1, 1.0))
    assert not strictly_nested(Cone(rot(0.8), 1, 0.3), Cone(E2, 1, 1.0))


@settings(max_examples=40)
@given(st.lists(st.floats(0.01, 5), min_size=3, max_size=3), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_strictly_nested_transitive(ms, t1, t2):
    a, b, c = Cone(rot(t1), 1, ms[0]), Cone(rot(t2), 1, ms[1]), Cone(E2, 1, ms[2])
    if strictly_nested(a, b) and strictly_nested(b, c):
        assert strictly_nested(a, c)


def test_distance_to_cone_exact():
    c = Cone(E2, 1, 0.0)
    d = distance_to_cone(c, np.array([[0.0, 1.0], [1.0, 1.0], [-1.0, 0.0]]))
    assert d == pytest.approx([1.0, 1.0, 0.0])


def test_transverse_gap_examples():
    a = Cone(E2, 1, 0.0)
    b = Cone(rot(math.pi / 2), 1, 0.0)
    assert transverse_gap(a, a) == 0.0
    assert transverse_gap(a, b) == pytest.approx(1.0)


def test_transverse_gap_cat_eigencones_against_dense_oracle():
    w, V = np.linalg.eigh(np.array(CAT_MAP, dtype=float))
    s, u = V[:, 0], V[:, 1]
    cs = Cone(np.column_stack([s, u]), 1, 0.3)
    cu = Cone(np.column_stack([u, -s]), 1, 0.3)
    est = transverse_gap(cs, cu, 4096)
    # dense oracle: uniform angles, distance by projection onto the boundary rays
    th = np.linspace(0, 2 * np.pi, 1_000_000, endpoint=False)
    pts = np.column_stack([np.cos(th), np.sin(th)])

    def dist(c, X):
        rays = []
        for sgn in (1, -1):
            for t in (1, -1):
                r = sgn * (c.frame[:, 0] + t * 0.3 * c.frame[:, 1])
                rays.append(r / np.linalg.norm(r))
        best = np.full(len(X), np.inf)
        for r in rays:
            p = np.clip(X @ r, 0, None)
            best = np.minimum(best, np.linalg.norm(X - p[:, None] * r[None, :], axis=1))
        return np.where(contains(c, X), 0.0, best)

    in_s = pts[contains(cs, pts)]
    in_u = pts[contains(cu, pts)]
    oracle = min(dist(cu, in_s).min(), dist(cs, in_u).min())
    assert oracle > 0
    assert est == pytest.approx(oracle, rel=0.02)


@settings(max_examples=30)
@given(st.floats(0, 1.5), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_transverse_gap_symmetric(t, m1, m2):
    a, b = Cone(E2, 1, m1), Cone(rot(t), 1, m2)
    assert transverse_gap(a, b) == pytest.approx(transverse_gap(b, a), abs=1e-12)


def test_sphere_samples_deterministic():
    a, b = sphere_samples(3, 1000), sphere_samples(3, 1000)
    assert np.array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)


def test_cat_system_is_valid(cat_cones):
    ok, bad = is_cone_system(cat_cones, 10000)
    assert ok, bad
    assert flow_constant(cat_cones) > 0


def test_system_with_c2_equal_c0_fails_condition_5(cat_cones):
    th = cat_cones
    bad_sys = ConeSystem(th.c0, (th.chain[0], th.c0, *th.chain[2:]), th.cf, th.flow_dir, th.du, th.ds)
    ok, bad = is_cone_system(bad_sys, 4000)
    assert not ok
    assert 5 in [c for c, _ in bad]


def test_system_without_flow_cone_fails_covering(cat_cones):
    th = cat_cones
    thin = Cone(th.cf.frame, 1, 1e-3)
    ok, bad = is_cone_system(ConeSystem(th.c0, th.chain, thin, th.flow_dir, 1, 1), 4000)
    assert not ok
    assert 1 in [c for c, _ in bad]


def test_hyperbolicity_two_step_cat(cat_cones, cat_dt2):
    rep = cone_hyperbolic(cat_dt2, cat_cones, cat_cones)
    assert rep.holds
    assert rep.Lambda >= 2.0
    # the expansion on C_(r-1) cannot exceed the top eigenvalue of A^2
    assert rep.expansion <= ((3 + math.sqrt(5)) / 2) ** 2 + 1e-9


def test_identity_is_not_hyperbolic(cat_cones):
    rep = cone_hyperbolic(np.eye(3), cat_cones, cat_cones)
    assert not rep.holds
    assert 3 in [w[2] for w in rep.witnesses]


def test_inverse_map_fails_mapping(cat_cones):
    inv = np.linalg.inv(np.array(CAT_MAP, dtype=float))
    M = np.eye(3)
    M[:2, :2] = inv.T
    rep = cone_hyperbolic(M, cat_cones, cat_cones)
    assert not rep.holds
    assert 1 in [w[2] for w in rep.witnesses]


@pytest.mark.parametrize("p,q", [(2, 2), (2, 3), (3, 4)])
def test_hyperbolicity_composes(cat_cones, p, q):
    F = suspension_derivative_transpose(CAT_MAP, p)
    G = suspension_derivative_transpose(CAT_MAP, q)
    assert cone_hyperbolic(F, cat_cones, cat_cones).holds
    assert cone_hyperbolic(G, cat_cones, cat_cones).holds
    assert cone_hyperbolic(G @ F, cat_cones, cat_cones).holds


def test_callable_derivative_over_points(cat_cones, cat_dt2):
    rep = cone_hyperbolic(lambda x: cat_dt2, cat_cones, cat_cones, points=[0.0, 0.5])
    assert rep.holds


def test_serialization_roundtrip(cat_cones):
    text = dump_cone_system(cat_cones)
    back = load_cone_system(text)
    assert dump_cone_system(back) == text
    with pytest.raises(ValueError, match="missing key"):
        load_cone_system("dim = 3\nr = 4\n")


def test_related_relation(cat_cones, cat_dt2):
    tp = transition_params(cat_cones, cat_cones, cat_dt2, 0.4, 1.0)
    assert related((5, 0), (3, 1), tp)          # out of the stable band: always allowed
    assert related((7, "f"), (7, "f"), tp)
    assert not related((1, "f"), (14, "f"), tp)
    with pytest.raises(ValueError):
        transition_params(cat_cones, cat_cones, cat_dt2, 0.4, 100.0, Lambda=3.6)


def test_support_separation_signals(cat_cones, cat_dt2, bank):
    spec, ang = bank
    kw = dict(spec=spec, angular=ang, angular_p=ang)
    with pytest.raises(RelatedPairError, match="related pair"):
        support_separation(cat_cones, cat_cones, cat_dt2, ((10, 1), (10, 0)), 0.4, **kw)
    with pytest.raises(BelowThresholdError):
        support_separation(cat_cones, cat_cones, cat_dt2, ((3, 2), (4, 3)), 0.4, **kw)


def test_support_separation_flow_vs_chain(cat_cones, cat_dt2, bank):
    spec, ang = bank
    ratios = []
    for n in (10, 11, 12):
        d = support_separation(cat_cones, cat_cones, cat_dt2, ((n, "f"), (n + 3, 1)), 0.4,
                               spec=spec, angular=ang, angular_p=ang, samples=4000)
        ratios.append(d / max(band_scale(n, "f", 4, 0.4), band_scale(n + 3, 1, 4, 0.4)))
    assert min(ratios) > 0.1
    assert max(ratios) / min(ratios) < 2
