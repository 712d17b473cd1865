"""Denjoy intervals, the Denjoy map, and volume-preserving fields on the strip.

Interval ``I_{n,phi}`` has width ``w(n - phi)`` and left endpoint
``a_{n,phi} = sum of w(k - phi) over k with k mod tau in [0, n mod tau)``.
Intervals with ``w(n - phi) < delta`` are *inert*.  They keep their place on
the circle, so every retained interval sits at its true position, but they
carry no density.  Positions are computed from an exact residue ordering of
``|k| <= K_pos``.  The remaining far tail uses the identity

    [k mod tau < n mod tau] = {n/tau} + {(k-n)/tau} - {k/tau},

whose fluctuating part is bounded by the Koksma inequality together with
the discrepancy bound for the golden rotation.

The densities are

    f = w'(n-phi)/w(n-phi) * b(L_n(theta)),    F = w(n-phi)^{3/2} B(L_n(theta))

on each retained interval.  The potentials and fields are evaluated from
exact piecewise antiderivatives (prefix sums in extended precision plus a
local partial piece), never by nested numerical quadrature.
"""
from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import goldendio as gd
from .errors import CalibrationError, DomainError
from .flowcore import SampledField
from .smoothkit import (
    TABLES,
    ProfileTable,
    smooth_step,
    _beta,
    _bump_b_raw,
    _smooth_step_deriv,
    _B_HI,
    _B_LO,
    _B_PLATEAU,
    _FLANK,
    width_w,
    width_w_deriv,
    w_tail_shifted,
)

TAU = gd.TAU_FLOAT
LD = np.longdouble

# |sum_{j=1}^N ({j/tau} - 1/2)| <= 3 + (1/log(tau) + 1/log 2) log N
_DISC_A = 3.0
_DISC_B = 1.0 / math.log(TAU) + 1.0 / math.log(2.0)


def _disc(m):
    return _DISC_A + _DISC_B * math.log(max(m, 1.0))


def far_tail_bound(K: int, n: int, phi: float) -> float:
    """Bound on |sum_{|k|>K} w(k-phi) ({(k-n)/tau} - {k/tau})|, used for a_{n,phi}."""
    if n == 0:
        return 0.0
    if K <= abs(phi) + 1:
        raise DomainError("window too small for the far-tail bound")
    out = 0.0
    for side in (1, -1):
        first = width_w(side * (K + 1) - phi)
        M = 4.0 * _disc(K + 1 + abs(n)) + 1.0
        slope = 4.0 * _DISC_B / (K + 1)
        if side > 0:
            rest = (math.pi / 2 - math.atan(K + 2 - phi)) / math.pi
        else:
            rest = (math.atan(-K - 2 - phi + 1) + math.pi / 2) / math.pi
        out += M * first + slope * rest
    return out


def _frac_over_tau(ns):
    """{n / tau} in float, from the exact floor."""
    ns = np.asarray(ns, dtype=np.int64)
    m = gd.residue_floors(ns)
    return (ns - m * TAU) / TAU


# -- global residue order ------------------------------------------------------


class _ResidueOrder:
    """All k in [-K, K] sorted by k mod tau, verified pairwise exactly."""

    def __init__(self, K: int):
        ks = np.arange(-K, K + 1, dtype=np.int64)
        ms = gd.residue_floors(ks)
        r = ks.astype(float) - ms.astype(float) * TAU
        order = np.argsort(r, kind="stable")
        ks, ms = ks[order], ms[order]
        # adjacent residues must be strictly increasing
        dn = ks[1:] - ks[:-1]
        dm = ms[1:] - ms[:-1]
        if not np.all(gd._sign_vec(2 * dn - dm, -dm) > 0):
            keys = [gd.GoldenNumber(int(k), -int(m)) for k, m in zip(ks, ms)]
            idx = sorted(range(len(keys)), key=lambda i: keys[i])
            ks, ms = ks[idx], ms[idx]
        self.K = K
        self.ks = ks
        self.frac = (ks.astype(float) - ms.astype(float) * TAU) / TAU
        self.rank = np.empty(2 * K + 1, dtype=np.int64)
        self.rank[ks + K] = np.arange(2 * K + 1)


_ORDERS: dict = {}


def residue_order(K: int) -> _ResidueOrder:
    if K not in _ORDERS:
        _ORDERS[K] = _ResidueOrder(K)
    return _ORDERS[K]


# -- per-phi tables -------------------------------------------------------------

_B_tab = TABLES.b
_BB_tab = TABLES.B


@dataclass
class PhiTable:
    phi: float
    ns: np.ndarray  # retained indices in circle order
    a: np.ndarray  # left endpoints, float64
    a_ld: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    lo: int
    hi: int
    pos: np.ndarray  # pos[n - lo] = index into the ordered arrays
    eps_a: float
    dropped_mass: float
    dropped_wp: float
    rho_max: float  # sup of |w'|/w over inert intervals
    # prefix sums (extended precision), length m + 1
    Pf0: np.ndarray
    Pf1: np.ndarray
    Pfa: np.ndarray
    PF0: np.ndarray
    PF1: np.ndarray
    PL: np.ndarray

    @property
    def size(self):
        return len(self.ns)

    def index_of(self, n: int) -> Optional[int]:
        if n < self.lo or n > self.hi:
            return None
        return int(self.pos[n - self.lo])


@dataclass(frozen=True)
class DenjoyFamily:
    """The interval system at truncation ``delta``; positions certified to ``eps_a``."""

    delta: float = 1e-9
    K_pos: int = 1 << 17
    cache_size: int = 48
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False, compare=False)

    @property
    def half_window(self) -> float:
        """X with w(X - 1/2) = delta: n is retained iff |n - phi + 1/2| <= X."""
        return _half_window(self.delta)

    def window(self, phi: float) -> tuple[int, int]:
        X = self.half_window
        return int(math.ceil(phi - 0.5 - X - 1e-12)), int(math.floor(phi - 0.5 + X + 1e-12))

    def dropped_mass(self, phi: float) -> float:
        lo, hi = self.window(phi)
        return w_tail_shifted(lo, hi, phi)

    @property
    def eps_a(self) -> float:
        return self.table(0.0).eps_a

    def table(self, phi: float) -> PhiTable:
        key = float(phi)
        t = self._cache.get(key)
        if t is not None:
            self._cache.move_to_end(key)
            return t
        t = _build_table(self, key)
        self._cache[key] = t
        while len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return t


_HW: dict = {}


def _half_window(delta: float) -> float:
    if delta not in _HW:
        if not 0 < delta < 0.25:
            raise DomainError("delta must lie in (0, 1/4)")
        _HW[delta] = brentq(lambda X: width_w(X - 0.5) - delta, 0.5, 1e9, xtol=1e-12)
    return _HW[delta]


def _build_table(fam: DenjoyFamily, phi: float) -> PhiTable:
    lo, hi = fam.window(phi)
    K = fam.K_pos
    if lo < -K + 2 or hi > K - 2:
        raise DomainError(f"phi={phi} is outside the supported range")
    order = residue_order(K)
    w_all = width_w(order.ks - phi).astype(LD)
    cum = np.cumsum(w_all) - w_all  # exclusive prefix in circle order
    keep = (order.ks >= lo) & (order.ks <= hi)
    ns = order.ks[keep]
    t_far = w_tail_shifted(-K, K, phi)
    a_ld = cum[keep] + LD(t_far) * order.frac[keep].astype(LD)
    w = width_w(ns - phi)
    wp = width_w_deriv(ns - phi)
    a = a_ld.astype(float)
    pos = np.empty(hi - lo + 1, dtype=np.int64)
    pos[ns - lo] = np.arange(len(ns))
    w_ld = w.astype(LD)
    wp_ld = wp.astype(LD)
    b0, b1 = LD(_B_tab.total0), LD(_B_tab.total1)
    B0, B1 = LD(_BB_tab.total0), LD(_BB_tab.total1)
    w52 = w_ld ** LD(2.5)

    def prefix(x):
        return np.concatenate([[LD(0)], np.cumsum(x)])

    nmax = max(abs(lo), abs(hi))
    eps_a = far_tail_bound(K, nmax, phi)
    # sup |w'|/w over inert indices is attained next to the window
    edge = np.array([lo - 1, lo - 2, hi + 1, hi + 2], dtype=float) - phi
    rho_max = float(np.max(np.abs(width_w_deriv(edge)) / width_w(edge)))
    dropped_wp = _dropped_abs_wp(lo, hi, phi)
    return PhiTable(
        phi=phi, ns=ns, a=a, a_ld=a_ld, w=w, wp=wp, lo=lo, hi=hi, pos=pos,
        eps_a=eps_a, dropped_mass=w_tail_shifted(lo, hi, phi), dropped_wp=dropped_wp,
        rho_max=rho_max,
        Pf0=prefix(wp_ld * b0), Pf1=prefix(wp_ld * (a_ld * b0 + w_ld * b1)),
        Pfa=prefix(np.abs(wp_ld) * b0),
        PF0=prefix(w52 * B0), PF1=prefix(w52 * (a_ld * B0 + w_ld * B1)),
        PL=prefix(w_ld),
    )


def _dropped_abs_wp(lo: int, hi: int, phi: float) -> float:
    """Upper bound for the sum of |w'(k - phi)| over k outside [lo, hi]."""
    up = hi + 1 - phi
    dn = lo - 1 - phi
    # |w'| is monotone beyond the window: sum <= first term + integral = first + w(first)
    return float(abs(width_w_deriv(up)) + width_w(up) + abs(width_w_deriv(dn)) + width_w(dn))


# -- piecewise antiderivatives ----------------------------------------------------


def _locate(tab: PhiTable, u):
    """Interval index j with a_j <= u, and local coordinate s (s >= 1 means in a gap)."""
    j = np.searchsorted(tab.a, u, side="right") - 1
    j = np.clip(j, 0, tab.size - 1)
    s = (u - tab.a[j]) / tab.w[j]
    return j, s


def _cums(tab: PhiTable, t, kind: str):
    """Periodic antiderivatives at t as (prefix index, partial, wraps).

    kind 'f' returns (int f, int t f); 'F' the same for F; 'fa' int |f| and 'L'
    covered length.  The value is ``P[idx] + partial + wraps * total`` and the
    prefix index is chosen so two evaluations in one interval share it.
    """
    t = np.asarray(t, dtype=float)
    m = np.floor(t)
    u = t - m
    j, s = _locate(tab, u)
    right = s >= 0.5
    sl = np.clip(s, 0.0, 1.0)
    sr = np.clip(1.0 - s, 0.0, 1.0)
    idx = np.where(right, j + 1, j)
    w, a = tab.w[j], tab.a[j]
    if kind in ("f", "fa"):
        tb = _B_tab
        scale = tab.wp[j] if kind == "f" else np.abs(tab.wp[j])
    elif kind == "F":
        tb = _BB_tab
        scale = w**2.5
    else:  # covered length
        part = np.where(right, -w * sr, w * sl)
        return idx, part.astype(LD), m
    c0l, c1l = tb.cum0(sl), tb.cum1(sl)
    c0r, c1r = tb.cum0(sr), tb.cum1(sr)
    p0 = np.where(right, -c0r, c0l) * scale
    if kind == "fa":
        return idx, p0.astype(LD), m
    # int (a + w v) B(v) dv from 0 to s, or minus the same from s to 1 (via symmetry)
    p1 = np.where(right, -(a * c0r + w * (c0r - c1r)), a * c0l + w * c1l) * scale
    return idx, (p0.astype(LD), p1.astype(LD)), m


def _diff0(tab, P, lo_r, hi_r):
    """(int over [lo, hi]) from two _cums results for a zeroth moment."""
    ilo, plo, mlo = lo_r
    ihi, phi_, mhi = hi_r
    total = P[-1]
    return (P[ihi] - P[ilo]) + (phi_ - plo) + LD(1) * (mhi - mlo).astype(LD) * total


def _point_value(P0, P1, r):
    """Periodic G(t) and K(t) = int_0^t s F(s) ds at a single set of points."""
    idx, (p0, p1), m = r
    m = m.astype(LD)
    G1, K1 = P0[-1], P1[-1]
    g = P0[idx] + p0
    k = P1[idx] + p1
    return m * G1 + g, m * K1 + G1 * m * (m - 1) / 2 + k + m * g


def _moment_about(theta, P0, P1, lo_r, hi_r):
    """int_lo^hi (t - theta) F(t) dt and int_lo^hi F, with prefix cancellation."""
    G0 = _diff0(None, P0, (lo_r[0], lo_r[1][0], lo_r[2]), (hi_r[0], hi_r[1][0], hi_r[2]))
    glo, klo = _point_value(P0, P1, lo_r)
    ghi, khi = _point_value(P0, P1, hi_r)
    # first moments, with the same shared-prefix cancellation for the K part
    ilo, (_, p1lo), mlo = lo_r
    ihi, (_, p1hi), mhi = hi_r
    mlo_, mhi_ = mlo.astype(LD), mhi.astype(LD)
    K1, G1 = P1[-1], P0[-1]
    glo_loc = P0[ilo] + lo_r[1][0]
    ghi_loc = P0[ihi] + hi_r[1][0]
    dK = (P1[ihi] - P1[ilo]) + (p1hi - p1lo) + (mhi_ - mlo_) * K1 \
        + G1 * (mhi_ * (mhi_ - 1) - mlo_ * (mlo_ - 1)) / 2 + mhi_ * ghi_loc - mlo_ * glo_loc
    return dK - LD(1) * theta.astype(LD) * G0, G0


# -- public operations ---------------------------------------------------------------


@dataclass(frozen=True)
class VPFieldParams:
    C_v: float = 1.0
    delta: float = 1e-9
    quad_tol: float = 1e-8

    def __post_init__(self):
        if not self.C_v >= 0:
            raise DomainError("C_v must be non-negative")


_DEFAULT_FAMILIES: dict = {}


def family_for(delta: float = 1e-9) -> DenjoyFamily:
    if delta not in _DEFAULT_FAMILIES:
        _DEFAULT_FAMILIES[delta] = DenjoyFamily(delta=delta)
    return _DEFAULT_FAMILIES[delta]


def a_series(n: int, phi: float, eps: float = 1e-10, K_max: int = 1 << 23) -> tuple[float, float]:
    """a_{n,phi} with an error bound <= eps, from an exact-membership partial sum."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    if n == 0:
        return 0.0, 0.0
    K = 1 << 10
    while K < abs(phi) + 4 or far_tail_bound(K, n, phi) > eps:
        K *= 2
        if K > K_max:
            raise DomainError(f"eps={eps} is below the attainable bound at K={K_max}")
    ks = np.arange(-K, K + 1, dtype=np.int64)
    ms = gd.residue_floors(ks)
    r_n = gd.mod_tau(n).value
    below = gd._cmp_residue_vec(ks, ms, r_n) < 0
    wk = width_w(ks[below] - phi).astype(LD)
    s = float(np.sum(wk))
    frac = float(r_n) / TAU
    value = s + frac * w_tail_shifted(-K, K, phi)
    return value, far_tail_bound(K, n, phi)


def interval_at(n: int, phi: float, family: Optional[DenjoyFamily] = None) -> tuple[float, float]:
    fam = family or family_for()
    tab = fam.table(phi)
    j = tab.index_of(n)
    if j is not None:
        left = float(tab.a_ld[j] % 1)
    else:
        left = a_series(n, phi, max(fam.eps_a, 1e-9))[0] % 1.0
    return left, float(width_w(n - phi))


def _group_by_phi(phi, *arrays):
    phi, *arrays = np.broadcast_arrays(np.asarray(phi, dtype=float), *[np.asarray(x, dtype=float) for x in arrays])
    flat_phi = phi.ravel()
    uniq, inv = np.unique(flat_phi, return_inverse=True)
    for k, ph in enumerate(uniq):
        sel = np.flatnonzero(inv == k)
        yield ph, sel, [x.ravel()[sel] for x in arrays]


def _densities(tab: PhiTable, theta):
    u = np.mod(theta, 1.0)
    j, s = _locate(tab, u)
    inside = (s >= 0) & (s < 1)
    sc = np.clip(s, 0.0, 1.0)
    f = np.where(inside, tab.wp[j] / tab.w[j] * _bump_b_raw(sc), 0.0)
    F = np.where(inside, tab.w[j] ** 1.5 * (_bump_b_raw(sc) + _beta(sc)), 0.0)
    return f, F, j, s, inside


def density_f(theta, phi, family: Optional[DenjoyFamily] = None):
    fam = family or family_for()
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(np.broadcast(theta, np.asarray(phi)).shape)
    flat = out.reshape(-1)
    for ph, sel, (th,) in _group_by_phi(phi, theta):
        flat[sel] = _densities(fam.table(ph), th)[0]
    return float(out) if out.ndim == 0 else out


def density_F(theta, phi, family: Optional[DenjoyFamily] = None):
    fam = family or family_for()
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(np.broadcast(theta, np.asarray(phi)).shape)
    flat = out.reshape(-1)
    for ph, sel, (th,) in _group_by_phi(phi, theta):
        flat[sel] = _densities(fam.table(ph), th)[1]
    return float(out) if out.ndim == 0 else out


def _bump_B_deriv(x):
    x = np.asarray(x, dtype=float)
    rise_arg = (x - _B_LO) / _FLANK
    fall_arg = (_B_HI - x) / _FLANK
    db = _B_PLATEAU * (_smooth_step_deriv(rise_arg) / _FLANK * smooth_step(fall_arg)
                       - smooth_step(rise_arg) * _smooth_step_deriv(fall_arg) / _FLANK)
    m = (x > 0) & (x < 1)
    dbeta = np.zeros_like(x)
    xm = x[m]
    q = xm * (1 - xm)
    dbeta[m] = _beta(xm) * (1 - 2 * xm) / (2 * q**1.5)
    return db + dbeta


_Z_SMALL = 1e-5


@dataclass
class _Local:
    hz: np.ndarray
    htheta: np.ndarray
    habs: np.ndarray
    vz1: np.ndarray  # v_z at C = 1
    vtheta1: np.ndarray
    H: np.ndarray
    V1: np.ndarray
    gap_h: np.ndarray  # length of I_h not covered by retained intervals


def _local_quantities(tab: PhiTable, theta, z, need=("h", "v")) -> _Local:
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    n = theta.size
    az = np.abs(z)
    sgn = np.where(z < 0, -1.0, 1.0)
    out = _Local(*[np.zeros(n) for _ in range(8)])
    # h: H(theta, z) = 1/2 [t g - K_f] from theta - z to theta + z (odd in z)
    lo_h = _cums(tab, theta - az, "f")
    hi_h = _cums(tab, theta + az, "f")
    glo, klo = _point_value(tab.Pf0, tab.Pf1, lo_h)
    ghi, khi = _point_value(tab.Pf0, tab.Pf1, hi_h)
    dg = _diff0(tab, tab.Pf0, (lo_h[0], lo_h[1][0], lo_h[2]), (hi_h[0], hi_h[1][0], hi_h[2]))
    out.hz = (sgn * 0.5 * dg).astype(float)
    out.htheta = (-0.5 * (glo + ghi)).astype(float)
    mth, _ = _moment_about(theta, tab.Pf0, tab.Pf1, lo_h, hi_h)
    # int g over [lo, hi] = [t g - K] = theta*dg + z*(g_hi + g_lo) - (K_hi - K_lo)... via moment
    # H = 1/2 int_lo^hi g = 1/2 (hi g_hi - lo g_lo - dK); dK - theta dg = mth
    lo_t = (theta - az).astype(LD)
    hi_t = (theta + az).astype(LD)
    dK = mth + theta.astype(LD) * dg
    out.H = (sgn * 0.5 * (hi_t * ghi - lo_t * glo - dK)).astype(float)
    fa = _diff0(tab, tab.Pfa, _cums(tab, theta - az, "fa"), _cums(tab, theta + az, "fa"))
    out.habs = (0.5 * fa).astype(float)
    cov = _diff0(tab, tab.PL, _cums(tab, theta - az, "L"), _cums(tab, theta + az, "L"))
    out.gap_h = np.maximum((2 * az - cov.astype(float)), 0.0)
    if "v" in need:
        lo_v = _cums(tab, theta - 5 * az, "F")
        hi_v = _cums(tab, theta + 5 * az, "F")
        mv, dG = _moment_about(theta, tab.PF0, tab.PF1, lo_v, hi_v)
        Glo, _ = _point_value(tab.PF0, tab.PF1, lo_v)
        Ghi, _ = _point_value(tab.PF0, tab.PF1, hi_v)
        small = az < _Z_SMALL
        zz = np.where(small, 1.0, az).astype(LD)
        vz = (dG / zz).astype(float)
        vth = (-(mv / (zz * zz))).astype(float) * sgn
        # V = (1/z) int_lo^hi G = (1/z)(hi G_hi - lo G_lo - dK_F)
        dKF = mv + theta.astype(LD) * dG
        lo5 = (theta - 5 * az).astype(LD)
        hi5 = (theta + 5 * az).astype(LD)
        V = ((hi5 * Ghi - lo5 * Glo - dKF) / zz).astype(float)
        if np.any(small):
            gs, Fs, j, s, inside = _densities_and_G(tab, theta[small])
            vz[small] = 10.0 * Fs
            dF = np.where(inside, np.sqrt(tab.w[j]) * _bump_B_deriv(np.clip(s, 0, 1)), 0.0)
            vth[small] = -(250.0 / 3.0) * z[small] * dF
            V[small] = 10.0 * gs
        out.vz1, out.vtheta1, out.V1 = vz, vth, V
    return out


def _densities_and_G(tab, theta):
    f, F, j, s, inside = _densities(tab, theta)
    r = _cums(tab, theta, "F")
    G, _ = _point_value(tab.PF0, tab.PF1, r)
    return G.astype(float), F, j, s, inside


def _eval_grouped(theta, z, phi, family, fn):
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    shape = np.broadcast(theta, z, np.asarray(phi)).shape
    results = None
    for ph, sel, (th, zz) in _group_by_phi(np.broadcast_to(phi, shape), theta, z):
        vals = fn(family.table(ph), th, zz)
        if results is None:
            results = [np.zeros(int(np.prod(shape))) for _ in vals]
        for r, v in zip(results, vals):
            r[sel] = v
    return [r.reshape(shape) if shape else float(r[0]) for r in results]


def hz_vz(theta, z, phi, p: VPFieldParams = VPFieldParams(), family: Optional[DenjoyFamily] = None):
    """(h_z, v_z, h_abs); at z = 0 the continuous limits (0, 10 C F(theta), 0)."""
    fam = family or family_for(p.delta)

    def fn(tab, th, zz):
        q = _local_quantities(tab, th, zz)
        return q.hz, p.C_v * q.vz1, q.habs

    return tuple(_eval_grouped(theta, z, phi, fam, fn))


def potentials_HV(theta, z, phi, p: VPFieldParams = VPFieldParams(), family: Optional[DenjoyFamily] = None):
    if np.any(np.abs(np.asarray(z)) > 1):
        raise DomainError("|z| must be at most 1")
    fam = family or family_for(p.delta)

    def fn(tab, th, zz):
        q = _local_quantities(tab, th, zz)
        return q.H, p.C_v * q.V1

    return tuple(_eval_grouped(theta, z, phi, fam, fn))


def _strip_margin(pts):
    return 1.0 - np.abs(pts[:, 2])


def fields_hvE(p: VPFieldParams = VPFieldParams(), family: Optional[DenjoyFamily] = None):
    """h, v and E' = v + h + d/dphi on S^1 x R x [-1, 1], coordinates (theta, phi, z)."""
    fam = family or family_for(p.delta)

    def make(which):
        def ev(pts):
            pts = np.atleast_2d(pts)
            th, ph, z = pts[:, 0], pts[:, 1], pts[:, 2]

            def fn(tab, a, b):
                q = _local_quantities(tab, a, b)
                return q.htheta, q.hz, p.C_v * q.vtheta1, p.C_v * q.vz1

            ht, hz, vt, vz = _eval_grouped(th, z, ph, fam, fn)
            out = np.zeros((len(pts), 3))
            if which in ("h", "E"):
                out[:, 0] += ht
                out[:, 2] += hz
            if which in ("v", "E"):
                out[:, 0] += vt
                out[:, 2] += vz
            if which == "E":
                out[:, 1] = 1.0
            return out

        return SampledField(ev, margin=_strip_margin, periods=(1.0, None, None),
                            names=("theta", "phi", "z"))

    return make("h"), make("v"), make("E")


def sigma_map(theta, phi, family: Optional[DenjoyFamily] = None):
    """sigma(theta, phi) = (theta + a_{1,phi+1}, phi + 1)."""
    fam = family or family_for()
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    shift = np.vectorize(lambda ph: _a_of(fam, 1, ph + 1.0))(phi)
    return theta + shift, phi + 1.0


def _a_of(fam, n, phi):
    tab = fam.table(phi)
    j = tab.index_of(n)
    if j is None:
        return a_series(n, phi, 1e-8)[0]
    return float(tab.a_ld[j])


def a_phi_derivative(n: int, phi: float, family: Optional[DenjoyFamily] = None) -> float:
    """d a_{n,phi} / d phi = -sum_{k mod tau < n mod tau} w'(k - phi), same truncation as positions."""
    fam = family or family_for()
    K = fam.K_pos
    order = residue_order(K)
    rank = order.rank[n + K]
    wp = width_w_deriv(order.ks[:rank] - phi).astype(LD)
    frac = order.frac[rank]
    d_far = -(width_w_deriv_tail(K, phi))
    return float(-np.sum(wp) + frac * d_far)


def width_w_deriv_tail(K: int, phi: float) -> float:
    """sum_{|k|>K} w'(k - phi) = d/dphi of -(tail mass)... closed form."""
    # tail mass T(phi) = [pi/2 - atan(K+1-phi) + atan(-K-phi) + pi/2] / pi
    up = K + 1 - phi
    dn = -K - phi
    dT = (1.0 / (1 + up * up) - 1.0 / (1 + dn * dn)) / math.pi
    return -dT


# -- the Denjoy map -------------------------------------------------------------------


# Wide plateau bump for the intervals with 4|I_{n+1}| <= 3|I_n|, where the narrow
# bump b would make the derivative negative; its sup 1/(1 - _WIDE_FLANK) keeps
# 1 + (r - 1) psi > 0 for every ratio r occurring in the family.
_WIDE_FLANK = 0.1


def _wide_bump(x):
    x = np.asarray(x, dtype=float)
    return smooth_step(x / _WIDE_FLANK) * smooth_step((1.0 - x) / _WIDE_FLANK) / (1.0 - _WIDE_FLANK)


_WIDE_TABLE: list = []


def _wide_table() -> ProfileTable:
    if not _WIDE_TABLE:
        _WIDE_TABLE.append(ProfileTable(_wide_bump))
    return _WIDE_TABLE[0]


def uses_wide_profile(w_n, w_next):
    """True where the narrow-bump model would not be monotone."""
    return 4 * np.asarray(w_next) <= 3 * np.asarray(w_n)


def denjoy_map(x, family: Optional[DenjoyFamily] = None):
    """(alpha(x), alpha'(x)) for x in [0, 1), built on the intervals at phi = 0."""
    fam = family or family_for()
    tab = fam.table(0.0)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any((x < 0) | (x >= 1)):
        raise DomainError("x must lie in [0, 1)")
    j, s = _locate(tab, x)
    inside = (s >= 0) & (s < 1)
    n = tab.ns[j]
    has_next = n + 1 <= tab.hi
    # image interval index, or the left neighbour's for points in gaps
    nxt = np.where(has_next, n + 1, n)
    jn = tab.pos[nxt - tab.lo]
    wn, wj = tab.w[jn], tab.w[j]
    an = tab.a[jn]
    sc = np.clip(s, 0.0, 1.0)
    wide = uses_wide_profile(wj, wn)
    wt = _wide_table()
    cb = np.where(wide, wt.cum0(sc), _B_tab.cum0(sc))
    prof = np.where(wide, _wide_bump(sc), _bump_b_raw(sc))
    in_model = inside & has_next
    img_in = an + wj * sc + (wn - wj) * cb
    deriv_in = 1.0 + (wn - wj) / wj * prof
    # rigid translation matching alpha at the right end of the interval to the left
    img_out = np.where(has_next, x - (tab.a[j] + wj) + an + wn, x)
    img = np.where(in_model, img_in, img_out) % 1.0
    der = np.where(in_model, deriv_in, 1.0)
    if scalar:
        return float(img[0]), float(der[0])
    return img, der


def derivative_integral(n: int, family: Optional[DenjoyFamily] = None, tol: float = 1e-14) -> tuple[float, float]:
    """Adaptive quadrature of alpha' over I_n, returned with |I_{n+1}| for comparison."""
    from scipy.integrate import quad

    fam = family or family_for()
    tab = fam.table(0.0)
    j, jn = tab.index_of(n), tab.index_of(n + 1)
    if j is None or jn is None:
        raise DomainError(f"interval {n} or its image is not retained")
    lo, w = float(tab.a_ld[j]), float(tab.w[j])

    def integrand(s):
        return w * denjoy_map((lo + w * s) % 1.0, fam)[1]

    val = quad(integrand, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200, points=(_WIDE_FLANK, 1 / 3, 2 / 3, 1 - _WIDE_FLANK))[0]
    return val, float(tab.w[jn])


def rotation_number(fmap, x0, iterations: int = 10**4) -> tuple[float, float]:
    """Birkhoff average of the lift displacement, with an O(1/iterations) error estimate."""
    if iterations < 1000:
        raise DomainError("use at least 10^3 iterations")
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    total = np.zeros_like(x)
    for _ in range(iterations):
        y = fmap(x)
        if isinstance(y, tuple):
            y = y[0]
        y = np.asarray(y, dtype=float)
        total += np.mod(y - x, 1.0)
        x = np.mod(y, 1.0)
    rho = total / iterations
    return float(np.mean(rho)), 1.0 / iterations


def min_return_distance(fmap, seeds, max_period: int = 100) -> tuple[float, int]:
    x0 = np.asarray(seeds, dtype=float)
    x = x0.copy()
    best, arg = np.inf, -1
    for p in range(1, max_period + 1):
        y = fmap(x)
        x = np.mod(np.asarray(y[0] if isinstance(y, tuple) else y), 1.0)
        d = np.abs(x - x0)
        d = np.minimum(d, 1.0 - d)
        if d.min() < best:
            best, arg = float(d.min()), p
    return best, arg


# -- verification of the central inequality -------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    n_theta: int = 100
    n_z: int = 50
    n_phi: int = 20
    z_min: float = 1e-4
    z_max: float = 1.0

    def densified(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n_theta * factor, self.n_z * factor, self.n_phi * factor, self.z_min, self.z_max)

    def axes(self):
        theta = np.arange(self.n_theta) / self.n_theta
        z = np.geomspace(self.z_min, self.z_max, self.n_z)
        phi = np.arange(self.n_phi) / self.n_phi
        return theta, z, phi

    @property
    def size(self):
        return self.n_theta * self.n_z * self.n_phi


CASES = ("inside_one_interval", "main", "exceptional_endpoint", "wraps_circle")


def classify_points(tab: PhiTable, theta, z):
    """Case of each (theta, z) in the analysis of I_h = [theta-z, theta+z], I_v = [theta-5z, theta+5z]."""
    theta = np.asarray(theta, dtype=float)
    az = np.abs(np.asarray(z, dtype=float))
    case = np.full(theta.shape, 1, dtype=int)
    wraps = 10 * az >= 1.0
    jl, sl = _locate(tab, np.mod(theta - az, 1.0))
    jr, sr = _locate(tab, np.mod(theta + az, 1.0))
    hl = np.mod(theta - az, 1.0)
    inside_h = (jl == jr) & (sl >= 0) & (sl < 1) & (sr >= 0) & (sr <= 1) & (hl <= np.mod(theta + az, 1.0)) & (2 * az < 1)
    _, svl = _locate(tab, np.mod(theta - 5 * az, 1.0))
    _, svr = _locate(tab, np.mod(theta + 5 * az, 1.0))
    ends_inside = (svl > 0) & (svl < 1) & (svr > 0) & (svr < 1)
    case[~ends_inside] = 2
    case[inside_h] = 0
    case[wraps & ~inside_h] = 3
    return case


@dataclass
class PropertyReport:
    property: str
    grid: dict
    C_v: float
    passed: bool
    min_margin: float
    witness: dict
    tail_bounds: dict
    cases: dict
    n_points: int
    n_fail: int
    symmetry_defect: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=float)


def _mass_before(tab: PhiTable, x, eps: float, kind: str):
    """Integral of F ('F') or |f| ('fa') over [x - eps, x]."""
    lo, hi = _cums(tab, x - eps, kind), _cums(tab, x, kind)
    if kind == "F":
        lo, hi = (lo[0], lo[1][0], lo[2]), (hi[0], hi[1][0], hi[2])
    return np.maximum(_diff0(tab, tab.PF0 if kind == "F" else tab.Pfa, lo, hi).astype(float), 0.0)


def _position_tails(tab: PhiTable, theta, az):
    """Errors from endpoints known only to eps_a.

    The true offsets lie in [0, eps_a] and are nondecreasing in position, so
    the true window integral of F is at least the computed one minus the F-mass
    just below the right edge, and |h_z| moves by at most the |f|-mass just
    below either edge.  Returns (bound on |h_z| change, v_z loss per unit C).
    """
    eps = tab.eps_a
    pos_h = 0.5 * (_mass_before(tab, theta - az, eps, "fa") + _mass_before(tab, theta + az, eps, "fa"))
    return pos_h, _mass_before(tab, theta + 5 * az, eps, "F") / az


def _sweep(grid: GridSpec, family: DenjoyFamily, with_cases=True):
    theta, z, phi = grid.axes()
    TH, Z = np.meshgrid(theta, z, indexing="ij")
    TH, Z = TH.ravel(), Z.ravel()
    rows = []
    for ph in phi:
        tab = family.table(float(ph))
        q = _local_quantities(tab, TH, Z)
        case = classify_points(tab, TH, Z) if with_cases else None
        pos_h, pos_v1 = _position_tails(tab, TH, Z)
        # dropped intervals inside I_h, plus displaced endpoints; v_z loses at most C pos_v1
        tail = 0.5 * tab.rho_max * q.gap_h + pos_h
        rows.append((ph, q.hz, q.vz1 - pos_v1, q, case, tail, tab))
    return TH, Z, rows


def verify_property_iv(p: VPFieldParams, grid: GridSpec = GridSpec(), family: Optional[DenjoyFamily] = None,
                       check_symmetry: bool = True) -> PropertyReport:
    """Check v_z > |h_z| on the grid, after subtracting pointwise truncation and position bounds."""
    if grid.z_min <= 0:
        raise DomainError("grid must exclude z = 0")
    fam = family or family_for(p.delta)
    TH, Z, rows = _sweep(grid, fam)
    best = (np.inf, None)
    n_fail = 0
    counts = {c: 0 for c in CASES}
    max_tail = 0.0
    eps_a = 0.0
    main_checked = 0
    for ph, hz, vz1, q, case, tail, tab in rows:
        vz = p.C_v * vz1
        noise = 1e-14 * (np.abs(vz) + np.abs(hz))
        margin = vz - np.abs(hz) - tail - noise
        n_fail += int(np.sum(margin <= 0))
        k = int(np.argmin(margin))
        if margin[k] < best[0]:
            best = (float(margin[k]), dict(theta=float(TH[k]), z=float(Z[k]), phi=float(ph),
                                           h_z=float(hz[k]), v_z=float(p.C_v * q.vz1[k]),
                                           case=CASES[case[k]]))
        for i, c in enumerate(CASES):
            counts[c] += int(np.sum(case == i))
        main_checked += int(np.sum(case == 1))
        max_tail = max(max_tail, float(np.max(tail)))
        eps_a = max(eps_a, tab.eps_a)
    sym = 0.0
    if check_symmetry:
        # v_z and V are even in z
        tab = rows[0][6]
        sel = slice(None, None, 97)
        qm = _local_quantities(tab, TH[sel], -Z[sel])
        qp = rows[0][3]
        sym = float(np.max(np.abs(qm.vz1 - qp.vz1[sel]) / (1 + np.abs(qp.vz1[sel]))))
    return PropertyReport(
        property="v_z > |h_z|",
        grid=asdict(grid),
        C_v=p.C_v,
        passed=n_fail == 0,
        min_margin=best[0],
        witness=best[1],
        tail_bounds=dict(max_pointwise_tail=max_tail, eps_a=eps_a,
                         dropped_mass=fam.dropped_mass(0.0), delta=fam.delta),
        cases=counts,
        n_points=grid.size,
        n_fail=n_fail,
        symmetry_defect=sym,
    )


@dataclass
class Calibration:
    C_v: float
    C_min: float
    witness: dict
    grid: dict
    stable_ratio: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=float)


def required_C(grid: GridSpec, family: Optional[DenjoyFamily] = None, delta: float = 1e-9) -> tuple[float, dict]:
    """Smallest C with C v_z(C=1) >= |h_z| + tail bound everywhere on the grid (v_z is linear in C)."""
    fam = family or family_for(delta)
    TH, Z, rows = _sweep(grid, fam, with_cases=False)
    best, wit = 0.0, {}
    for ph, hz, vz1, q, _, tail, _ in rows:
        need = (np.abs(hz) + tail) * (1 + 1e-12)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(vz1 > 0, need / vz1, np.where(need > 0, np.inf, 0.0))
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best = float(ratio[k])
            wit = dict(theta=float(TH[k]), z=float(Z[k]), phi=float(ph), ratio=best)
    return best, wit


def calibrate_C(grid: GridSpec = GridSpec(), family: Optional[DenjoyFamily] = None, delta: float = 1e-9,
                safety: float = 2.0, C_cap: float = 1e6, check_stability: bool = False) -> Calibration:
    C_min, wit = required_C(grid, family, delta)
    if not np.isfinite(C_min) or safety * C_min > C_cap:
        raise CalibrationError(f"no passing C_v <= {C_cap} (need {C_min})")
    cal = Calibration(C_v=safety * C_min, C_min=C_min, witness=wit, grid=asdict(grid))
    if check_stability:
        C2, _ = required_C(grid.densified(2), family, delta)
        cal.stable_ratio = C2 / C_min if C_min > 0 else 1.0
    return cal
