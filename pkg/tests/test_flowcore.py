import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seifertvp import flowcore as fc
from seifertvp.errors import DomainError, MapError
from seifertvp.wilsonplugs import field_Ws


def const_field(vec, zlim=1.0):
    vec = np.asarray(vec, dtype=float)
    return fc.SampledField(lambda p: np.broadcast_to(vec, np.shape(p)).copy(),
                           margin=lambda p: zlim - np.abs(p[:, 2]))


def levi_civita_oracle(P, Q, R):
    """Solve iota_v(dx^dy^dz) = omega for v from the antisymmetric matrix of omega."""
    # omega = P dy^dz - Q dx^dz + R dx^dy  ->  omega_{yz} = P, omega_{xz} = -Q, omega_{xy} = R
    W = np.array([[0, R, -Q], [-R, 0, P], [Q, -P, 0]], dtype=float)
    # contraction: (iota_v mu)_{jk} = eps_{ijk} v_i; solve the linear system on the 3 entries
    A = np.zeros((3, 3))
    b = np.array([W[1, 2], W[0, 2], W[0, 1]])
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1
        eps = np.zeros((3, 3))
        for j in range(3):
            for k in range(3):
                eps[j, k] = np.linalg.det(np.stack([e, np.eye(3)[j], np.eye(3)[k]]))
        A[:, i] = [eps[1, 2], eps[0, 2], eps[0, 1]]
    return np.linalg.solve(A, b)


def test_field_from_flux_examples():
    one = lambda p: np.ones(len(p))
    zero = lambda p: np.zeros(len(p))
    v = fc.field_from_flux(fc.FluxForm(zero, zero, one))
    assert np.array_equal(v.raw(np.zeros((1, 3)))[0], [0, 0, 1])
    v0 = fc.field_from_flux(fc.FluxForm(zero, zero, zero))
    assert np.array_equal(v0.raw(np.random.default_rng(0).random((5, 3))), np.zeros((5, 3)))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_field_from_flux_matches_linear_algebra(P, Q, R):
    c = lambda val: (lambda p: np.full(len(p), val))
    v = fc.field_from_flux(fc.FluxForm(c(P), c(Q), c(R)))
    assert np.allclose(v.raw(np.zeros((1, 3)))[0], levi_civita_oracle(P, Q, R), atol=1e-12)


def test_flux_roundtrip_random_points():
    rng = np.random.default_rng(0)
    om = fc.FluxForm(lambda p: np.sin(p[:, 1] * p[:, 2]), lambda p: p[:, 0] ** 2, lambda p: np.cos(p[:, 0]))
    mu = fc.VolumeForm("weighted", lambda p: 2.0 + np.sin(p[:, 0]))
    v = fc.field_from_flux(om, mu)
    pts = rng.normal(size=(1000, 3))
    assert np.allclose(fc.contract(v, pts), om.components(pts), atol=1e-10)


def test_hamiltonian_examples():
    J = fc.hamiltonian_2d(lambda a, b: a)
    assert np.allclose(J(0.3, 0.7), (0.0, 1.0))
    J = fc.hamiltonian_2d(lambda a, b: (a * a + b * b) / 2)
    va, vb = J(0.4, -1.2)
    assert va == pytest.approx(1.2, abs=1e-8) and vb == pytest.approx(0.4, abs=1e-8)


def _ham_field(f, grad):
    J = fc.hamiltonian_2d(f, grad)

    def ev(p):
        a, b = J(p[:, 0], p[:, 1])
        return np.column_stack([a, b, np.zeros(len(p))])

    return fc.SampledField(ev)


def test_hamiltonian_trajectories_conserve_f():
    f = lambda a, b: np.sin(a) * np.cos(b) + 0.3 * a * a
    grad = lambda a, b: (np.cos(a) * np.cos(b) + 0.6 * a, -np.sin(a) * np.sin(b))
    v = _ham_field(f, grad)
    x0 = np.array([0.3, 0.2, 0.0])
    tr = fc.integrate(v, x0, 10.0, tol=1e-11, detect_closed=False)
    assert tr.exit_code == fc.TIME
    assert abs(f(*tr.end[:2]) - f(*x0[:2])) <= 1e-7
    div = fc.divergence(v, np.random.default_rng(1).normal(size=(200, 3)))
    assert np.max(np.abs(div)) < 1e-8


def test_divergence_examples():
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (100, 3))
    assert fc.divergence_check(const_field([0, 0, 1]), pts).max_abs == 0
    lin = fc.SampledField(lambda p: np.column_stack([p[:, 0], 0 * p[:, 0], 0 * p[:, 0]]))
    assert np.allclose(fc.divergence(lin, pts), 1.0)
    assert not fc.divergence_check(lin, pts).passed


def test_divergence_wilson_field():
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(1.01, 2.99, 1000), rng.uniform(0, 2 * np.pi, 1000),
                           rng.uniform(-0.99, 0.99, 1000)])
    rep = fc.divergence_check(field_Ws(), pts, h=1e-4)
    assert rep.max_abs <= 1e-6


def test_divergence_rejects_boundary_points():
    with pytest.raises(DomainError):
        fc.divergence_check(const_field([0, 0, 1]), np.array([[0, 0, 1 - 1e-6]]))


def test_integrate_examples():
    tr = fc.integrate(const_field([0, 0, 1]), [0, 0, -1], 10.0)
    assert tr.exit_code == fc.EXITED
    assert tr.end[2] == pytest.approx(1.0, abs=1e-10) and tr.times[-1] == pytest.approx(2.0, abs=1e-10)
    t3 = fc.linear_t3_flow(1, 0, 0)
    tr = fc.integrate(t3, [0.2, 0.3, 0.4], 5.0)
    assert tr.exit_code == fc.CLOSED and tr.period == pytest.approx(1.0, abs=1e-8)
    tr = fc.integrate(field_Ws(), [1.5, 0.0, -1.0], 500.0, tol=1e-10, detect_closed=False)
    assert tr.exit_code == fc.EXITED and tr.end[2] == pytest.approx(1.0, abs=1e-9)


def test_trajectory_csv_format():
    tr = fc.integrate(const_field([0, 0, 1]), [0, 0, -1], 10.0)
    lines = tr.to_csv().split("\r\n")
    assert lines[0] == "t,x,y,z"
    assert float(lines[-2].split(",")[-1]) == pytest.approx(1.0)


def test_detect_closed_orbit_examples():
    ws = field_Ws()
    orb = fc.detect_closed_orbit(ws, [2.0, 0.0, 0.0])
    assert orb is not None and orb.period == pytest.approx(2 * np.pi, rel=1e-8)
    assert np.allclose(orb.point[[0, 2]], [2.0, 0.0], atol=1e-6)
    assert fc.detect_closed_orbit(ws, [1.5, 0.0, 0.0]) is None


def test_t3_irrational_has_no_closed_orbits():
    t3 = fc.linear_t3_flow(1.0, math.sqrt(2), 3 ** (1 / 3))
    seeds = np.random.default_rng(0).random((100, 3))
    found = fc.detect_closed_orbits(t3, seeds, fc.Section(0, 0.0, 1), tol=1e-6, max_returns=1000)
    assert all(o is None for o in found)


def test_t3_equidistribution():
    r = np.array([1.0, math.sqrt(2), 3 ** (1 / 3)])
    t3 = fc.linear_t3_flow(*r)
    t = np.arange(10_000) * 0.999
    pts = np.mod(0.1 + np.outer(t, r), 1.0)
    # the integrator agrees with the closed form on a few long times
    X = fc.flow_map(t3, np.full((1, 3), 0.1), float(t[-1]))
    assert np.allclose(t3.wrap(X)[0], pts[-1], atol=1e-8)
    counts = np.histogramdd(pts, bins=(10, 10, 10), range=[(0, 1)] * 3)[0]
    assert counts.min() > 0
    assert fc.divergence_check(t3, pts[:100]).max_abs == 0


def test_t3_rejects_zero_direction():
    with pytest.raises(DomainError):
        fc.linear_t3_flow(0, 0, 0)


def _disk(p):
    return np.hypot(p[:, 0], p[:, 1]) <= 1.0


def _rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return lambda p: p @ np.array([[c, s], [-s, c]])


def test_suspension_identity_and_half_turn():
    seeds = np.array([[0.3, 0.1, 0.2], [-0.5, 0.4, 0.7]])
    ident = fc.suspension_flow(lambda p: p, _disk)
    for o in fc.detect_closed_orbits(ident, seeds, max_returns=5):
        assert o is not None and o.period == pytest.approx(1.0, abs=1e-8)
    half = fc.suspension_flow(_rotation(math.pi), _disk)
    for o in fc.detect_closed_orbits(half, seeds, max_returns=5):
        assert o is not None and o.period == pytest.approx(2.0, abs=1e-8)


def test_suspension_irrational_rotation_has_no_closed_orbit():
    rot = fc.suspension_flow(_rotation(2 * math.pi * (math.sqrt(5) - 1) / 2), _disk)
    seeds = np.array([[0.5, 0.0, 0.2], [0.0, 0.9, 0.4]])
    assert all(o is None for o in fc.detect_closed_orbits(rot, seeds, max_returns=1000))


def test_suspension_map_error():
    bad = fc.suspension_flow(lambda p: p + 5.0, _disk)
    with pytest.raises(MapError):
        fc.integrate(bad, [0.1, 0.1, 0.5], 3.0)


def test_jacobian_determinant_is_one_for_divergence_free():
    v = _ham_field(lambda a, b: np.sin(a) * np.cos(b),
                   lambda a, b: (np.cos(a) * np.cos(b), -np.sin(a) * np.sin(b)))
    assert fc.jacobian_determinant(v, [0.3, 0.4, 0.0], t=1.0) == pytest.approx(1.0, abs=1e-4)
    ws = field_Ws()
    assert fc.jacobian_determinant(ws, [1.6, 0.0, -0.5], t=1.0) == pytest.approx(1.0, abs=1e-4)


@given(st.floats(0.5, 3.0), st.floats(0.5, 3.0))
def test_winding_additive_under_concatenation(t1, t2):
    t3 = fc.linear_t3_flow(1.0, math.sqrt(2), 0.5)
    x0 = np.array([0.1, 0.2, 0.3])
    a = fc.integrate(t3, x0, t1, detect_closed=False)
    b = fc.integrate(t3, a.end, t2, detect_closed=False)
    ab = fc.integrate(t3, x0, t1 + t2, detect_closed=False)
    assert np.allclose(a.total_winding + b.total_winding, ab.total_winding, atol=1e-8)
