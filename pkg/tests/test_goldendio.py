import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seifertvp import goldendio as gd
from seifertvp.errors import InsufficientDataError, PreconditionError, SearchError

G = gd.GoldenNumber
big = st.integers(-10**12, 10**12)
golden = st.builds(G, big, big)

mpmath.mp.dps = 60
TAU_MP = (1 + mpmath.sqrt(5)) / 2


def mp(x: G):
    return x.a + x.b * TAU_MP


@given(golden, golden, golden)
def test_ring_axioms(x, y, z):
    assert (x * y) * z == x * (y * z)
    assert x * (y + z) == x * y + x * z
    assert x + y == y + x
    assert x * y == y * x


@given(big, big)
def test_sign_matches_high_precision(a, b):
    s = G(a, b).sign()
    ref = mp(G(a, b))
    assert s == (0 if ref == 0 else (1 if ref > 0 else -1))


def test_tau_squared():
    assert gd.TAU * gd.TAU == gd.TAU + 1


@pytest.mark.parametrize("n", range(0, 61))
def test_inverse_power_identity(n):
    # tau^-n = (-1)^n (F_n - F_{n-1} tau), with F_0 = F_1 = 1
    rep = gd.TAU_INV ** n
    sgn = -1 if n % 2 else 1
    assert rep == G(sgn * gd.fibonacci(n), -sgn * gd.fibonacci(n - 1))


def test_mod_tau_examples():
    assert gd.mod_tau(0).value == G(0, 0)
    assert gd.mod_tau(2).value == G(2, -1)
    assert gd.mod_tau(2).value == gd.TAU_INV ** 2
    assert gd.mod_tau(-1).value == G(-1, 1)


@given(st.integers(-10**15, 10**15))
def test_mod_tau_range_and_value(n):
    r = gd.mod_tau(n).value
    assert r.sign() >= 0 and (gd.TAU - r).sign() > 0
    assert r.b == -math.floor(mpmath.mpf(n) / TAU_MP) if abs(n) < 10**15 else True


@pytest.mark.parametrize("n", [1, 2, 10])
def test_fib_distance_examples(n):
    res = gd.fib_distance_check(n)
    assert res.holds
    if n == 1:
        assert res.distance == gd.TAU - 1


def test_fib_distance_alternates():
    sides = [gd.fib_distance_check(n).side for n in range(1, 41)]
    assert all(gd.fib_distance_check(n).holds for n in range(1, 41))
    assert all(a != b for a, b in zip(sides, sides[1:]))


@pytest.mark.parametrize("n", [1, 3, 10])
def test_fib_optimal_examples(n):
    assert gd.fib_optimal_check(n)


def test_fib_optimal_brute_force_oracle():
    # independent float oracle at mpmath precision for small F_n
    n = 12
    F = gd.fibonacci(n)

    def d(p):
        r = mpmath.mpf(p) - mpmath.floor(p / TAU_MP) * TAU_MP
        return min(r, TAU_MP - r)

    assert all(d(F) < d(p) for p in range(1, F))
    assert gd.fib_optimal_check(n)


@given(st.integers(-10**6, 10**6), st.integers(5, 40))
def test_translation_by_fibonacci_is_small(m, n):
    d = gd.mod_tau(m + gd.fibonacci(n)).distance(gd.mod_tau(m))
    assert d <= gd.TAU_INV ** n


def test_enum_Z_examples():
    a, b = gd.mod_tau(0), gd.CircleTau(G(1, 0))
    z = gd.enum_Z(a, b, 10)
    assert 2 in z and 3 not in z
    assert gd.enum_Z(gd.mod_tau(0), None, 5) == list(range(-5, 6))
    with pytest.raises(PreconditionError):
        gd.enum_Z(a, a, 5)


def test_enum_Z_matches_longdouble_enumeration():
    N = 10**4
    ns = np.arange(-N, N + 1)
    t = (np.longdouble(1) + np.sqrt(np.longdouble(5))) / 2
    res = ns.astype(np.longdouble) - np.floor(ns.astype(np.longdouble) / t) * t
    a, b = gd.mod_tau(3), gd.mod_tau(-7)  # an arc that wraps through zero
    lo, hi = a.value.to_longdouble(), b.value.to_longdouble()
    inside = ((res > lo) | (res < hi)) if lo > hi else ((res > lo) & (res < hi))
    ref = ns[inside & (ns != 3) & (ns != -7)]  # the arc is open at its integer endpoints
    assert gd.enum_Z(a, b, N) == [int(v) for v in ref]


def test_gap_survey():
    full = gd.gap_ratio_survey([gd.Arc.full()], 100)
    assert full.max_ratio == 1.0
    rng = np.random.default_rng(1)
    arcs = []
    for _ in range(100):
        s, length = int(rng.integers(-1000, 1000)), int(rng.integers(4, 12))
        start = gd.mod_tau(s)
        arcs.append(gd.Arc(start, gd.CircleTau(start.value + gd.TAU_INV ** length)))
    survey = gd.gap_ratio_survey(arcs, 10**5)
    assert 1.0 <= survey.max_ratio <= 7.0
    rep = survey.report(10**5)
    assert rep.lemma == "gap_bound" and '"constant"' in rep.to_json()


def test_gap_survey_shrunk_arc_scales_by_tau_squared():
    start = gd.mod_tau(0)
    arc = gd.Arc(start, gd.CircleTau(gd.TAU_INV ** 6))
    _, big_gap = gd.gap_stats(arc, 10**5)
    _, small_gap = gd.gap_stats(arc.scaled(gd.TAU_INV ** 2), 10**5)
    assert small_gap / big_gap == pytest.approx(gd.TAU_FLOAT ** 2, rel=0.1)


def test_gap_survey_insufficient():
    tiny = gd.Arc(gd.mod_tau(0), gd.CircleTau(gd.TAU_INV ** 30))
    with pytest.raises(InsufficientDataError):
        gd.gap_ratio_survey([tiny], 100)
    assert gd.gap_ratio_survey([tiny], 100, skip_insufficient=True).insufficient == [tiny]


def test_sum_ratio_singleton_is_one():
    # the arc just around 2 mod tau, far from 0, contains only n = 2 among |n| <= 10
    c = gd.mod_tau(2).value
    eps = gd.TAU_INV ** 12
    r = gd.sum_ratio_352(gd.CircleTau(c - eps), gd.CircleTau(c + eps), 10)
    assert r.count == 1
    assert r.ratio == pytest.approx(1.0, rel=1e-14)


def test_sum_ratio_rejects_zero():
    with pytest.raises(PreconditionError):
        # an arc wrapping through the residue of 0
        gd.sum_ratio_352(gd.CircleTau(gd.TAU - gd.TAU_INV ** 5), gd.CircleTau(gd.TAU_INV ** 5), 10)


def test_sum_ratio_finite_on_small_arc():
    r = gd.sum_ratio_352(gd.CircleTau(gd.TAU_INV ** 8), gd.CircleTau(gd.TAU_INV ** 4), 10**5)
    assert math.isfinite(r.ratio) and r.ratio > 0 and math.isfinite(r.ratio_w)


@given(st.integers(-300, 300), st.integers(-300, 300))
def test_find_between_is_minimal(n1, n2):
    if n1 == n2:
        with pytest.raises(PreconditionError):
            gd.find_between(n1, n2)
        return
    n3, ratio = gd.find_between(n1, n2)
    arc = gd.Arc(gd.mod_tau(n1), gd.mod_tau(n2))
    assert arc.contains(n3)
    assert not any(arc.contains(k) for k in range(-abs(n3) + 1, abs(n3)))
    assert ratio == abs(n3) / max(abs(n1), abs(n2), 1)


def test_find_between_search_error():
    # F_n just below tau: the arc from it to 0 is tiny and holds no small integer
    n = next(k for k in (20, 21) if gd.fib_distance_check(k).side == "below")
    with pytest.raises(SearchError):
        gd.find_between(gd.fibonacci(n), 0, N=5)
