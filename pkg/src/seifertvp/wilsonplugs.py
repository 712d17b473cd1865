"""Explicit smooth plugs on the thickened annulus and the wormhole semi-plug.

Coordinates on ``C = F x [-1, 1]`` are ``(r, theta, z)`` with ``F`` the
annulus ``1 <= r <= 3`` and volume ``dr dtheta dz``.  A function ``f(r, z)``
gives the divergence-free field ``J grad f + d/dtheta = (-f_z, 1, f_r)``.

Mirror images live on ``z in [1 + c, 3 + c]`` after a trivially foliated
collar ``[1, 1 + c]`` on which the field is ``d/dz``; the mirrored copy at
height ``Z`` uses the local coordinate ``z = 2 + c - Z`` and reverses the
field, so trajectories retrace the first half and exit directly above their
entry points.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares, root

from .bordism import BordismRecord, LeafSample, Region, Twist, insertion_ledger, BaseFlow, ClosedLeaf, Insertion
from .errors import DomainError, LedgerError
from .flowcore import (
    EXITED,
    ClosedOrbit,
    FluxForm,
    Section,
    SampledField,
    field_from_flux,
    integrate_batch,
)
from .smoothkit import _bump_b_raw, _smooth_step_deriv, smooth_step

TWO_PI = 2.0 * math.pi
COLLAR = 0.1
# max step: the twist bump of P1 is crossed in about 0.1 time units
H_MAX = 0.02
R_LO, R_HI = 1.0, 3.0


@dataclass(frozen=True)
class CylinderDomain:
    r_lo: float = R_LO
    r_hi: float = R_HI
    z_lo: float = -1.0
    z_hi: float = 1.0

    def margin(self, pts):
        r, z = pts[:, 0], pts[:, 2]
        return np.minimum.reduce([r - self.r_lo, self.r_hi - r, z - self.z_lo, self.z_hi - z])

    def boundary_kind(self, r: float, z: float) -> str:
        if r in (self.r_lo, self.r_hi):
            return "parallel"
        if z in (self.z_lo, self.z_hi):
            return "transverse"
        return "interior"


CYL = CylinderDomain()
ENTRY = Region("F-", (None, TWO_PI))
EXIT = Region("F+", (None, TWO_PI))


def _check_rz(r, z):
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(r < R_LO) or np.any(r > R_HI) or np.any(np.abs(z) > 1):
        raise DomainError("(r, z) must lie in [1, 3] x [-1, 1]")
    return r, z


def wilson_f(r, z):
    r, z = _check_rz(r, z)
    out = _f(r, z)
    return float(out) if out.ndim == 0 else out


def _f(r, z):
    u = r - 2.0
    return z**2 * u + (1 - z**2) * u**3


def _f_grad(r, z):
    u = r - 2.0
    fr = z**2 + 3 * (1 - z**2) * u**2
    fz = 2 * z * u - 2 * z * u**3
    return fr, fz


def wilson_gradient(r, z):
    r, z = _check_rz(r, z)
    return _f_grad(r, z)


def _hamiltonian_field(grad, theta_rate=None):
    def ev(pts):
        r, z = pts[:, 0], pts[:, 2]
        gr, gz = grad(r, z)
        th = np.ones_like(r) if theta_rate is None else theta_rate(r, z)
        return np.column_stack([-gz, th, gr])

    return ev


def _cyl_field(ev, domain=CYL):
    return SampledField(ev, margin=domain.margin, periods=(None, TWO_PI, None), names=("r", "theta", "z"),
                        default_section=Section(1, 0.0, 1))


def field_Ws() -> SampledField:
    return _cyl_field(_hamiltonian_field(_f_grad))


def _reversed(field: SampledField) -> SampledField:
    def ev(pts):
        return -field.raw(pts)

    return SampledField(ev, margin=field.margin, periods=field.periods, names=field.names,
                        default_section=field.default_section)


def _mirror_doubled(first, c: float = COLLAR) -> SampledField:
    """First copy on z <= 1, vertical collar, mirrored copy on [1 + c, 3 + c]."""
    def ev(pts):
        z = pts[:, 2]
        out = np.zeros_like(pts)
        lo = z <= 1.0
        hi = z >= 1.0 + c
        mid = ~(lo | hi)
        if lo.any():
            out[lo] = first(pts[lo])
        if mid.any():
            out[mid, 2] = 1.0
        if hi.any():
            q = pts[hi].copy()
            q[:, 2] = 2.0 + c - q[:, 2]
            w = first(q)
            out[hi] = np.column_stack([-w[:, 0], -w[:, 1], w[:, 2]])
        return out

    dom = CylinderDomain(z_hi=3.0 + c)
    return _cyl_field(ev, dom)


# -- transits -------------------------------------------------------------------------


@dataclass
class Transit:
    entry: np.ndarray  # (N, 2) entry (r, theta)
    exit: np.ndarray  # (N, 2) exit (r, theta mod 2 pi); NaN when stopped
    winding: np.ndarray  # lifted theta displacement
    time: np.ndarray
    stopped: np.ndarray


def _half_transit(field: SampledField, r, theta, z0, t_max, tol):
    X0 = np.column_stack([r, theta, np.full(len(r), z0)])
    res = integrate_batch(field, X0, t_max, tol, h_max=H_MAX)
    ok = np.array([c == EXITED for c in res.codes])
    ex = np.column_stack([res.points[:, 0], np.mod(res.points[:, 1], TWO_PI)])
    ex[~ok] = np.nan
    return ex, res.winding[:, 0], res.times, ~ok, res.points


def transit_semi(field: SampledField, r, theta, t_max: float = 500.0, tol: float = 1e-11) -> Transit:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    theta = np.broadcast_to(np.asarray(theta, dtype=float), r.shape)
    ex, wd, tt, st, _ = _half_transit(field, r, theta, -1.0, t_max, tol)
    return Transit(np.column_stack([r, theta]), ex, wd, tt, st)


def transit_mirrored(first: SampledField, second: Optional[SampledField], r, theta,
                     t_max: float = 500.0, tol: float = 1e-11) -> Transit:
    """Pass through ``first`` then the mirror image of ``second`` (default: of ``first``)."""
    second = second or first
    a = transit_semi(first, r, theta, t_max, tol)
    ok = ~a.stopped
    rev = _reversed(second)
    ex = np.full_like(a.exit, np.nan)
    wd = a.winding.copy()
    tt = a.time + COLLAR
    st = a.stopped.copy()
    if ok.any():
        X0 = np.column_stack([a.exit[ok, 0], a.exit[ok, 1], np.ones(int(ok.sum()))])
        res = integrate_batch(rev, X0, t_max, tol, h_max=H_MAX)
        done = np.array([c == EXITED for c in res.codes])
        e2 = np.column_stack([res.points[:, 0], np.mod(res.points[:, 1], TWO_PI)])
        e2[~done] = np.nan
        idx = np.flatnonzero(ok)
        ex[idx] = e2
        wd[idx] += res.winding[:, 0]
        tt[idx] += res.times
        st[idx] = ~done
    return Transit(a.entry, ex, wd, tt, st)


def _record(name, tr: Transit, closed, twist, stopped_circle=None):
    samples = []
    for e, x, w, s in zip(tr.entry, tr.exit, tr.winding, tr.stopped):
        samples.append(LeafSample(tuple(map(float, e)), None if s else tuple(map(float, x)), float(w)))
    return BordismRecord(name=name, base="annulus S^1 x I", entry_region=ENTRY, exit_region=EXIT,
                         leaf_samples=tuple(samples), closed_leaf_count=closed, twist=twist,
                         stopped_circle=stopped_circle)


def _probe_entries(n: int, seed: int, avoid: float = 0.02):
    rng = np.random.default_rng(seed)
    r = rng.uniform(R_LO + 0.01, R_HI - 0.01, 4 * n)
    r = r[np.abs(r - 2.0) > avoid][:n]
    theta = rng.uniform(0, TWO_PI, n)
    return r, theta


# -- closed orbits ---------------------------------------------------------------------


def critical_circles(grad, seeds, tol: float = 1e-12) -> list[tuple[float, float]]:
    """Zeros of the (r, z)-projection ``(-g_z, g_r)``, deduplicated to 1e-5."""
    found = []
    for r0, z0 in seeds:
        sol = least_squares(lambda p: np.array(grad(np.array([p[0]]), np.array([p[1]]))).ravel(),
                            [r0, z0], bounds=([R_LO, -1], [R_HI, 1]), xtol=tol, ftol=tol, gtol=tol)
        if np.max(np.abs(sol.fun)) < 1e-10:
            p = (float(sol.x[0]), float(sol.x[1]))
            if not any(abs(p[0] - q[0]) < 1e-5 and abs(p[1] - q[1]) < 1e-5 for q in found):
                found.append(p)
    return found


def closed_orbits_Ws(seeds=None, verify: bool = True) -> list[ClosedOrbit]:
    """Closed leaves of W_s, located on the projection and confirmed by a first return."""
    if seeds is None:
        rr, zz = np.meshgrid(np.linspace(1.2, 2.8, 5), np.linspace(-0.8, 0.8, 5))
        seeds = list(zip(rr.ravel(), zz.ravel()))
    crit = critical_circles(_f_grad, seeds)
    v = field_Ws()
    return [o for o in (_confirm(v, r, z, verify) for r, z in crit) if o is not None]


def _confirm(v, r, z, verify, tol=1e-6):
    if not verify:
        return ClosedOrbit(TWO_PI, np.array([r, 0.0, z]), 1)
    from .flowcore import detect_closed_orbit

    return detect_closed_orbit(v, [r, 0.0, z], Section(1, 0.0, 1), tol=tol, max_returns=2)


# -- the plugs ---------------------------------------------------------------------------


@dataclass
class PlugResult:
    field: SampledField
    record: BordismRecord
    transit: Transit
    closed: list


def plug_W(n_samples: int = 200, seed: int = 0, t_max: float = 500.0, tol: float = 1e-11) -> PlugResult:
    """Mirror-image plug built from W_s: matched ends and two closed leaves."""
    ws = field_Ws()
    doubled = _mirror_doubled(ws.raw)
    r, th = _probe_entries(n_samples, seed)
    # stopped probes on the critical circle r = 2
    r = np.concatenate([r, [2.0, 2.0]])
    th = np.concatenate([th, [0.0, math.pi]])
    tr = transit_mirrored(ws, None, r, th, t_max, tol)
    closed = []
    for o in closed_orbits_Ws():
        closed.append(o)
        mirror_pt = o.point.copy()
        mirror_pt[2] = 2.0 + COLLAR - mirror_pt[2]
        from .flowcore import detect_closed_orbit

        m = detect_closed_orbit(doubled, mirror_pt, Section(1, 0.0, -1), tol=1e-6, max_returns=2)
        if m is not None:
            closed.append(m)
    rec = _record("W", tr, len(closed), Twist(), stopped_circle={"r": 2.0, "z": 0.0})
    return PlugResult(doubled, rec, tr, closed)


def semi_plug_Ws_record(n_samples: int = 100, seed: int = 0, t_max: float = 500.0) -> BordismRecord:
    ws = field_Ws()
    r, th = _probe_entries(n_samples, seed)
    r = np.concatenate([r, [2.0]])
    th = np.concatenate([th, [0.0]])
    tr = transit_semi(ws, r, th, t_max)
    return _record("W_s", tr, 1, Twist(), stopped_circle={"r": 2.0, "z": 0.0})


# P1 / P2


def _e_raw(z):
    return smooth_step((2.0 / 3.0 - np.abs(z)) * 3.0)


def _e_raw_deriv(z):
    return -3.0 * np.sign(z) * _smooth_step_deriv((2.0 / 3.0 - np.abs(z)) * 3.0)


def _o_raw(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = np.sign(x[nz]) * np.exp(1.0 - 1.0 / x[nz] ** 2)
    return out


def _o_raw_deriv(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    ax = np.abs(x[nz])
    out[nz] = 2.0 / ax**3 * np.exp(1.0 - 1.0 / ax**2)
    return out


def g_function(r, z):
    r, z = _check_rz(r, z)
    e = _e_raw(z)
    return e * _o_raw(r - 2) + (1 - e) * (r - 2)


def _g_grad(r, z):
    u = r - 2.0
    e = _e_raw(z)
    gr = e * _o_raw_deriv(u) + (1 - e)
    gz = _e_raw_deriv(z) * (_o_raw(u) - u)
    return gr, gz


def twist_bump(z):
    """Extra dtheta/dz of P1 over P2 on r > 2: 3 pi b((1 + 3z)/2)."""
    z = np.asarray(z, dtype=float)
    return 3.0 * math.pi * _bump_b_raw((1.0 + 3.0 * z) / 2.0)


def _p1_theta(r, z):
    extra = np.where((r > 2) & (np.abs(z) <= 1.0 / 3.0), twist_bump(z) * _o_raw_deriv(r - 2), 0.0)
    return 1.0 + extra


def fields_P1P2() -> tuple[SampledField, SampledField]:
    return _cyl_field(_hamiltonian_field(_g_grad, _p1_theta)), _cyl_field(_hamiltonian_field(_g_grad))


def bump_integral(tol: float = 1e-13) -> float:
    from scipy.integrate import quad

    # b((1+3z)/2) is supported on z in [-1/9, 1/9]
    val, _ = quad(lambda z: float(twist_bump(z)), -1.0 / 9.0, 1.0 / 9.0, epsabs=tol, epsrel=tol, limit=200,
                  points=[-1.0 / 15.0, 1.0 / 15.0])
    return val


def plug_P(n_samples: int = 200, seed: int = 0, t_max: float = 500.0, tol: float = 1e-11) -> PlugResult:
    """P1 followed by the mirror image of P2: matched ends, 2 pi extra winding on r > 2."""
    p1, p2 = fields_P1P2()
    r, th = _probe_entries(n_samples, seed)
    tr = transit_mirrored(p1, p2, r, th, t_max, tol)
    twist = Twist.dehn(winding_turns(tr))
    doubled = _mirror_pair(p1, p2)
    rec = _record("P", tr, 0, twist)
    return PlugResult(doubled, rec, tr, [])


def _mirror_pair(p1: SampledField, p2: SampledField, c: float = COLLAR) -> SampledField:
    def ev(pts):
        z = pts[:, 2]
        out = np.zeros_like(pts)
        lo = z <= 1.0
        hi = z >= 1.0 + c
        mid = ~(lo | hi)
        if lo.any():
            out[lo] = p1.raw(pts[lo])
        if mid.any():
            out[mid, 2] = 1.0
        if hi.any():
            q = pts[hi].copy()
            q[:, 2] = 2.0 + c - q[:, 2]
            w = p2.raw(q)
            out[hi] = np.column_stack([-w[:, 0], -w[:, 1], w[:, 2]])
        return out

    return _cyl_field(ev, CylinderDomain(z_hi=3.0 + c))


def winding_turns(tr: Transit) -> int:
    """Rounded (r > 2 winding) - (r < 2 winding) in full turns."""
    ok = ~tr.stopped
    hi = ok & (tr.entry[:, 0] > 2)
    lo = ok & (tr.entry[:, 0] < 2)
    if not hi.any() or not lo.any():
        return 0
    return int(round((np.median(tr.winding[hi]) - np.median(tr.winding[lo])) / TWO_PI))


def winding_difference(r_hi: float = 2.5, r_lo: float = 1.5, tol: float = 1e-11) -> float:
    """Net theta winding of the P leaf at r_hi minus the one at r_lo."""
    p1, p2 = fields_P1P2()
    tr = transit_mirrored(p1, p2, np.array([r_hi, r_lo]), np.zeros(2), tol=tol)
    return float(tr.winding[0] - tr.winding[1])


def plug_D_ledger(P: Optional[BordismRecord] = None, W: Optional[BordismRecord] = None):
    """Insert W into P so that W's stopped circle breaks both annuli of closed leaves."""
    if P is None:
        P = BordismRecord("P", "annulus S^1 x I", ENTRY, EXIT, closed_leaf_count=0, twist=Twist.dehn(1))
    if W is None:
        W = BordismRecord("W", "annulus S^1 x I", ENTRY, EXIT, closed_leaf_count=2,
                          stopped_circle={"r": 2.0, "z": 0.0})
    annuli = (ClosedLeaf("P.annulus1", "annulus"), ClosedLeaf("P.annulus2", "annulus"))
    if W.stopped_circle is None and not W.stopped_entries:
        raise LedgerError("W must stop a circle to break the annuli")
    led = insertion_ledger(BaseFlow("P", annuli), [Insertion(W, tuple(a.name for a in annuli))])
    D = BordismRecord("D", P.base, P.entry_region, P.exit_region, closed_leaf_count=led.final_count,
                      twist=P.twist, measured=P.measured and W.measured, stopped_circle=W.stopped_circle)
    return D, led


def assembly_ledger(k: int = 1, D: Optional[BordismRecord] = None, W: Optional[BordismRecord] = None):
    """Dense T^3 flow, then k copies of D along arcs, then one W breaking every closed leaf."""
    if k < 0:
        raise LedgerError("k must be non-negative")
    if D is None:
        D, _ = plug_D_ledger()
    if W is None:
        W = BordismRecord("W", "annulus S^1 x I", ENTRY, EXIT, closed_leaf_count=2,
                          stopped_circle={"r": 2.0, "z": 0.0})
    inserts = [Insertion(D, (), framing="m+l") for _ in range(k)]
    targets = tuple(f"{D.name}#{i}.{j}" for i in range(k) for j in range(D.closed_leaf_count))
    inserts.append(Insertion(W, targets))
    return insertion_ledger(BaseFlow("T3 irrational flow", ()), inserts)


# -- contours ----------------------------------------------------------------------------

CONTOUR_LEVELS = (-0.9, -0.5, -0.1, 0.0, 0.1, 0.5, 0.9)  # f = -1, 1 are the walls r = 1, 3


def contours_f(levels=CONTOUR_LEVELS, n: int = 401) -> dict:
    """Level-set polylines of f on [1, 3] x [-1, 1] as {level: [array (k, 2) of (r, z)]}."""
    import contourpy

    r = np.linspace(R_LO, R_HI, n)
    z = np.linspace(-1.0, 1.0, n)
    R, Z = np.meshgrid(r, z)
    gen = contourpy.contour_generator(R, Z, _f(R, Z))
    out = {}
    for lev in levels:
        if lev == 0.0:
            # the zero set is exactly the singular contour r = 2
            out[lev] = [np.column_stack([np.full(n, 2.0), z])]
        else:
            out[lev] = [np.asarray(seg) for seg in gen.lines(lev)]
    return out


def contours_csv(cont: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["level", "path", "r", "z"])
    for lev in sorted(cont):
        for k, seg in enumerate(cont[lev]):
            for rr, zz in seg:
                w.writerow([format(lev, ".17g"), k, format(float(rr), ".17g"), format(float(zz), ".17g")])
    return buf.getvalue()


def contours_svg(cont: dict, size: int = 400) -> str:
    def px(rr, zz):
        return (rr - R_LO) / (R_HI - R_LO) * size, (1.0 - zz) / 2.0 * size

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}">']
    for lev in sorted(cont):
        for seg in cont[lev]:
            pts = " ".join("%.4f,%.4f" % px(a, b) for a, b in seg)
            lines.append(f'<polyline data-level="{lev:g}" fill="none" stroke="black" points="{pts}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# -- wormhole ------------------------------------------------------------------------------


def wormhole_alpha(p):
    p = np.atleast_2d(np.asarray(p, dtype=float))
    s = np.sum(p * p, axis=1)
    if np.any(s == 0):
        raise DomainError("alpha is undefined at the origin")
    return (1.0 + 1.0 / s)[:, None] * p


def wormhole_jacobian(p):
    """D alpha = (1 + 1/s) I - 2 p p^T / s^2 with s = |p|^2."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    s = np.sum(p * p, axis=1)
    if np.any(s == 0):
        raise DomainError("alpha is undefined at the origin")
    eye = np.eye(3)[None]
    return (1.0 + 1.0 / s)[:, None, None] * eye - 2.0 * np.einsum("ni,nj->nij", p, p) / (s**2)[:, None, None]


def _wormhole_flux():
    def pull(pts):
        J = wormhole_jacobian(pts)
        return np.cross(J[:, 0, :], J[:, 1, :])

    def P(pts):
        return pull(pts)[:, 0] + pts[:, 1]

    def Q(pts):
        return pull(pts)[:, 1] - pts[:, 0]

    def R(pts):
        return pull(pts)[:, 2]

    return FluxForm(P, Q, R)


def _wormhole_margin(pts):
    s = np.sum(pts * pts, axis=1)
    safe = np.where(s > 0, s, 1.0)
    a = (1.0 + 1.0 / safe)[:, None] * pts
    d = np.minimum(4.0 - np.hypot(a[:, 0], a[:, 1]), 4.0 - np.abs(a[:, 2]))
    return np.where(s > 0, d / (1.0 + 1.0 / safe), -1.0)


def wormhole_field() -> SampledField:
    """Field of alpha^*(dx^dy) + x dx^dz + y dy^dz on alpha^{-1}(cylinder)."""
    return field_from_flux(_wormhole_flux(), margin=_wormhole_margin,
                           default_section=Section(1, 0.0, -1))


def wormhole_closed_orbit(seed=(1.05, 0.05), tol: float = 1e-13) -> Optional[ClosedOrbit]:
    """Closed trajectory through the half-plane {y = 0, x > 0}, or ``None`` if the search fails.

    The field commutes with rotations about the z axis, so the first-return
    map to the half-plane fixes (x, z) exactly when the meridional part
    (v_x, v_z) vanishes there.  The orbit is a strong saddle (its return
    multiplier is far beyond 1/machine epsilon), so the fixed point is solved
    on the meridional field and confirmed by integrating a quarter turn.
    """
    v = wormhole_field()

    def merid(q):
        p = np.array([[q[0], 0.0, q[1]]])
        if v.margins(p)[0] <= 0:
            return np.array([1e3, 1e3])
        w = v.raw(p)[0]
        return np.array([w[0], w[2]])

    sol = root(merid, np.asarray(seed, dtype=float), method="hybr", tol=tol)
    if not sol.success or np.max(np.abs(merid(sol.x))) > 1e-10:
        return None
    p0 = np.array([sol.x[0], 0.0, sol.x[1]])
    omega = -v.raw(p0[None])[0, 1] / sol.x[0]  # angular speed about the z axis
    if abs(omega) < 1e-12:
        return None
    period = TWO_PI / abs(omega)
    res = integrate_batch(v, p0[None], period / 4, 1e-12)
    p1 = res.points[0]
    if abs(np.hypot(p1[0], p1[1]) - sol.x[0]) > 1e-6 or abs(p1[2] - sol.x[1]) > 1e-6:
        return None
    return ClosedOrbit(float(period), p0, 1)
