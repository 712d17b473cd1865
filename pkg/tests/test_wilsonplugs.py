import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from seifertvp import bordism as bd
from seifertvp import flowcore as fc
from seifertvp import wilsonplugs as wp
from seifertvp.errors import DomainError, LedgerError
from seifertvp.smoothkit import bump_b

TWO_PI = 2 * math.pi


def _cyl_points(n, seed=0, z_lo=-0.95, z_hi=0.95):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(1.05, 2.95, n), rng.uniform(0, TWO_PI, n), rng.uniform(z_lo, z_hi, n)])


# -- the Wilson function -------------------------------------------------------------


@given(st.floats(-1, 1))
def test_f_vanishes_on_middle_circle(z):
    assert wp.wilson_f(2.0, z) == 0.0


def test_f_examples():
    assert wp.wilson_f(3.0, 0.0) == 1.0
    assert wp.wilson_gradient(2.0, 0.0) == (0.0, 0.0)
    with pytest.raises(DomainError):
        wp.wilson_f(0.5, 0.0)
    with pytest.raises(DomainError):
        wp.wilson_f(2.0, 1.5)


def test_unique_critical_point():
    rr, zz = np.meshgrid(np.linspace(1.05, 2.95, 9), np.linspace(-0.95, 0.95, 9))
    crit = wp.critical_circles(wp._f_grad, list(zip(rr.ravel(), zz.ravel())))
    assert len(crit) == 1
    assert crit[0] == pytest.approx((2.0, 0.0), abs=1e-8)


# -- W_s -----------------------------------------------------------------------------


def test_Ws_structure():
    v = wp.field_Ws()
    pts = _cyl_points(500)
    vals = v.raw(pts)
    assert np.all(vals[:, 1] == 1.0)
    for r in (1.0, 3.0):
        wall = np.column_stack([np.full(50, r), np.zeros(50), np.linspace(-1, 1, 50)])
        assert np.max(np.abs(v.raw(wall)[:, 0])) <= 1e-10


def test_Ws_divergence_free():
    rep = fc.divergence_check(wp.field_Ws(), _cyl_points(1000, 1), h=1e-4, rel_tol=1e-5)
    assert rep.passed, rep


def test_Ws_closed_orbit_on_middle_circle():
    orbits = wp.closed_orbits_Ws()
    assert len(orbits) == 1
    assert orbits[0].point[0] == pytest.approx(2.0, abs=1e-8)
    assert orbits[0].point[2] == pytest.approx(0.0, abs=1e-8)
    assert orbits[0].period == pytest.approx(TWO_PI, rel=1e-6)


def test_Ws_connects_bottom_to_top():
    tr = wp.transit_semi(wp.field_Ws(), np.array([1.5]), 0.3)
    assert not tr.stopped[0]
    # f is conserved and equals r - 2 on both ends, so the leaf exits at the same radius
    assert tr.exit[0, 0] == pytest.approx(1.5, abs=1e-8)


def test_domain_boundary_kinds():
    assert wp.CYL.boundary_kind(1.0, 0.2) == "parallel"
    assert wp.CYL.boundary_kind(2.2, -1.0) == "transverse"
    assert wp.CYL.boundary_kind(2.2, 0.0) == "interior"


def test_semi_plug_exit_map_preserves_area():
    # the end flux density is f_r(r, +-1) = 1, so areas in (r, theta) are conserved
    v = wp.field_Ws()
    rng = np.random.default_rng(4)
    for _ in range(10):
        r0 = rng.choice([rng.uniform(1.1, 1.8), rng.uniform(2.1, 2.8)])
        t0, dr, dt = rng.uniform(0, 5), 0.1, 0.4
        m = 25
        side = np.linspace(0, 1, m, endpoint=False)
        r = np.concatenate([r0 + dr * side, np.full(m, r0 + dr), r0 + dr * (1 - side), np.full(m, r0)])
        t = np.concatenate([np.full(m, t0), t0 + dt * side, np.full(m, t0 + dt), t0 + dt * (1 - side)])
        tr = wp.transit_semi(v, r, t)
        er, et = tr.exit[:, 0], t + tr.winding
        area = 0.5 * abs(np.dot(er, np.roll(et, -1)) - np.dot(et, np.roll(er, -1)))
        assert area == pytest.approx(dr * dt, rel=2e-2)


def test_semi_plug_record_classifies():
    rec = wp.semi_plug_Ws_record(n_samples=30)
    assert bd.classify(rec) is bd.PlugClass.semi_plug
    assert rec.closed_leaf_count == 1


# -- the plug W ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def plug_w():
    return wp.plug_W(n_samples=200, seed=0)


def test_plug_W_matched_ends(plug_w):
    rep = bd.matched_ends_check(plug_w.record, 1e-6)
    assert rep.passed, rep
    assert rep.n_checked == 200


def test_plug_W_two_closed_orbits(plug_w):
    assert len(plug_w.closed) == 2
    zs = sorted(o.point[2] for o in plug_w.closed)
    assert zs == pytest.approx([0.0, 2.0 + wp.COLLAR], abs=1e-8)
    assert plug_w.record.closed_leaf_count == 2


def test_plug_W_stops_the_middle_circle(plug_w):
    rec = plug_w.record
    assert bd.classify(rec) is bd.PlugClass.plug
    stopped = np.array(rec.stopped_entries)
    assert len(stopped) == 2
    assert np.all(stopped[:, 0] == 2.0)
    # leaves just off the circle are slow but finite
    tr = wp.transit_mirrored(wp.field_Ws(), None, np.array([2.0 - 1e-3, 2.0 + 1e-3]), np.zeros(2), t_max=2000)
    assert not tr.stopped.any()


def test_plug_W_field_divergence_free(plug_w):
    pts = _cyl_points(500, 2, z_lo=1.2, z_hi=3.0)
    rep = fc.divergence_check(plug_w.field, pts, h=1e-4, rel_tol=1e-5)
    assert rep.passed, rep


# -- P1, P2 and the plug P -----------------------------------------------------------------


def test_bump_integral_two_pi():
    assert wp.bump_integral() == pytest.approx(TWO_PI, abs=1e-10)
    ref = quad(lambda z: 3 * math.pi * bump_b((1 + 3 * z) / 2), -1 / 3, 1 / 3,
               points=[-1 / 9, -1 / 15, 1 / 15, 1 / 9], epsabs=1e-13)[0]
    assert ref == pytest.approx(TWO_PI, abs=1e-10)


def test_P1_P2_share_projection():
    p1, p2 = wp.fields_P1P2()
    pts = _cyl_points(1000, 3, z_lo=-1, z_hi=1)
    a, b = p1.raw(pts), p2.raw(pts)
    np.testing.assert_array_equal(a[:, [0, 2]], b[:, [0, 2]])
    top = pts.copy()
    top[:, 2] = 0.5
    np.testing.assert_array_equal(p1.raw(top), p2.raw(top))
    # the extra rotation lives only on r > 2
    inner = pts[pts[:, 0] < 2]
    np.testing.assert_array_equal(p1.raw(inner), p2.raw(inner))


def test_P2_annulus_of_closed_leaves():
    _, p2 = wp.fields_P1P2()
    z = np.linspace(-1 / 3, 1 / 3, 41)
    pts = np.column_stack([np.full_like(z, 2.0), np.zeros_like(z), z])
    np.testing.assert_allclose(p2.raw(pts), np.tile([0.0, 1.0, 0.0], (41, 1)), atol=1e-15)


@pytest.mark.parametrize("which", [0, 1])
def test_P_fields_divergence_free_and_parallel_walls(which):
    v = wp.fields_P1P2()[which]
    rep = fc.divergence_check(v, _cyl_points(1000, 5 + which), h=1e-4, rel_tol=1e-5)
    assert rep.passed, rep
    for r in (1.0, 3.0):
        wall = np.column_stack([np.full(50, r), np.zeros(50), np.linspace(-1, 1, 50)])
        assert np.max(np.abs(v.raw(wall)[:, 0])) <= 1e-10


def test_winding_discrepancy():
    assert wp.winding_difference(2.5, 1.5) == pytest.approx(TWO_PI, abs=1e-3)
    p1, p2 = wp.fields_P1P2()
    # relative to the leaf of the mirror of P2 alone
    for r, want in ((2.5, TWO_PI), (1.5, 0.0)):
        full = wp.transit_mirrored(p1, p2, np.array([r]), np.zeros(1))
        ref = wp.transit_mirrored(p2, p2, np.array([r]), np.zeros(1))
        assert full.winding[0] - ref.winding[0] == pytest.approx(want, abs=1e-3)


@pytest.fixture(scope="module")
def plug_p():
    return wp.plug_P(n_samples=200, seed=1)


def test_plug_P_matched_and_twisted(plug_p):
    rec = plug_p.record
    assert bd.matched_ends_check(rec, 1e-6).passed
    assert rec.twist == bd.Twist.dehn(1)
    assert str(rec.twist) == "integral_dehn(1)"
    assert rec.closed_leaf_count == 0


def test_plug_P_winding_is_sum_of_halves(plug_p):
    # integrate the glued field in one pass and compare with the two-half bookkeeping
    tr = plug_p.transit
    idx = np.arange(100)
    X0 = np.column_stack([tr.entry[idx, 0], tr.entry[idx, 1], np.full(100, -1.0)])
    res = fc.integrate_batch(plug_p.field, X0, 500.0, 1e-12, h_max=0.05)
    assert all(c == fc.EXITED for c in res.codes)
    np.testing.assert_allclose(res.winding[:, 0], tr.winding[idx], atol=1e-6)


# -- ledgers -------------------------------------------------------------------------------


def test_plug_D_ledger():
    D, led = wp.plug_D_ledger()
    assert D.closed_leaf_count == 2
    assert D.twist.kind is bd.TwistKind.integral_dehn
    assert D.base == "annulus S^1 x I"
    assert led.all_broken


def test_plug_D_ledger_requires_stopping_W():
    W = bd.BordismRecord("W", "annulus S^1 x I", wp.ENTRY, wp.EXIT, closed_leaf_count=2)
    with pytest.raises(LedgerError):
        wp.plug_D_ledger(W=W)


@pytest.mark.parametrize("k", [0, 1, 3])
def test_assembly_ledger_count(k):
    led = wp.assembly_ledger(k)
    assert led.final_count == 2
    assert led.all_broken
    assert [e["framing"] for e in led.entries[:-1]] == ["m+l"] * k


# -- contours -------------------------------------------------------------------------------


def test_contours_lie_on_levels():
    cont = wp.contours_f()
    assert sorted(cont) == sorted(wp.CONTOUR_LEVELS)
    for lev, segs in cont.items():
        assert segs
        for seg in segs:
            assert np.max(np.abs(wp._f(seg[:, 0], seg[:, 1]) - lev)) <= 2e-3
    zero = cont[0.0]
    assert len(zero) == 1 and np.all(zero[0][:, 0] == 2.0)


def test_contour_exports():
    cont = wp.contours_f(n=101)
    text = wp.contours_csv(cont)
    rows = text.strip().split("\r\n")
    assert rows[0] == "level,path,r,z"
    assert len(rows) - 1 == sum(len(s) for segs in cont.values() for s in segs)
    root = ET.fromstring(wp.contours_svg(cont))
    assert len(root) == sum(len(segs) for segs in cont.values())


# -- wormhole ---------------------------------------------------------------------------------


def _wormhole_points(n, seed=0):
    rng = np.random.default_rng(seed)
    v = wp.wormhole_field()
    out = []
    while len(out) < n:
        p = rng.uniform(-5, 5, (4 * n, 3))
        p = p[np.sum(p * p, axis=1) > 0.04]
        out.extend(p[v.margins(p) > 1e-3])
    return np.array(out[:n])


def test_wormhole_alpha():
    np.testing.assert_allclose(wp.wormhole_alpha([1, 0, 0]), [[2, 0, 0]])
    with pytest.raises(DomainError):
        wp.wormhole_alpha([0, 0, 0])


def test_wormhole_jacobian_matches_differences():
    rng = np.random.default_rng(7)
    p = rng.uniform(0.5, 2, (20, 3))
    J = wp.wormhole_jacobian(p)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        col = (wp.wormhole_alpha(p + e) - wp.wormhole_alpha(p - e)) / (2 * h)
        np.testing.assert_allclose(J[:, :, k], col, atol=1e-8)


def test_wormhole_exact_value():
    # D alpha(3, 0, 0) = diag(8/9, 10/9, 10/9): alpha^*(dx^dy) <-> (0, 0, 80/81), plus (y, -x, 0)
    v = wp.wormhole_field()
    np.testing.assert_allclose(v.raw(np.array([[3.0, 0, 0]]))[0], [0, -3, 80 / 81], atol=1e-14)


def test_wormhole_field_oracle():
    v = wp.wormhole_field()
    pts = _wormhole_points(200, 1)
    h = 1e-6
    grads = []
    for comp in (0, 1):
        g = np.zeros((len(pts), 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            g[:, k] = (wp.wormhole_alpha(pts + e)[:, comp] - wp.wormhole_alpha(pts - e)[:, comp]) / (2 * h)
        grads.append(g)
    want = np.cross(grads[0], grads[1]) + np.column_stack([pts[:, 1], -pts[:, 0], np.zeros(len(pts))])
    np.testing.assert_allclose(v.raw(pts), want, atol=1e-7)


def test_wormhole_tends_to_limit_field():
    v = wp.wormhole_field()
    errs = []
    for s in (1.0, 2.0, 3.0):
        p = np.array([[s, 0.3 * s, 0.2 * s]])
        lim = np.array([p[0, 1], -p[0, 0], 1.0])
        errs.append(np.linalg.norm(v.raw(p)[0] - lim))
    assert errs[0] > errs[1] > errs[2]


def test_wormhole_divergence_free():
    rep = fc.divergence_check(wp.wormhole_field(), _wormhole_points(1000, 2), h=1e-4, rel_tol=1e-5)
    assert rep.passed, rep


def test_wormhole_origin_excluded():
    v = wp.wormhole_field()
    assert v.margins(np.array([[0.0, 0.0, 0.0]]))[0] < 0
    # |alpha(p)| >= 2 everywhere, so a neighbourhood of the origin maps outside the cylinder
    assert v.margins(np.array([[0.05, 0.0, 0.0]]))[0] < 0


def test_wormhole_closed_orbit():
    orb = wp.wormhole_closed_orbit()
    assert orb is not None
    v = wp.wormhole_field()
    w = v.raw(orb.point[None])[0]
    assert abs(w[0]) < 1e-9 and abs(w[2]) < 1e-9
    assert orb.period > 0
