"""Flux forms, sampled vector fields and a vectorised Dormand-Prince integrator.

Fields act on arrays of shape ``(N, 3)``.  Periodic coordinates are
integrated in the universal cover (lift coordinates) so winding is simply
the accumulated displacement; domain boundaries are described by a signed
``margin`` (non-negative inside) and located on the dense output by
bisection.  A field may carry a ``glue`` map that re-injects trajectories
reaching the boundary, which is how suspensions and other quotient
manifolds are integrated.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import RK45

from .errors import DomainError, IntegrationError, MapError

_A, _B, _C, _E, _P = RK45.A, RK45.B, RK45.C, RK45.E, RK45.P

EXITED = "exited_boundary"
TIME = "time_exhausted"
CLOSED = "closed_detected"
RETURNS = "returns_exhausted"
FAILED = "step_underflow"

_CODES = {0: "running", 1: EXITED, 2: TIME, 3: CLOSED, 4: RETURNS, 5: FAILED}

EVENT_TOL = 1e-10


@dataclass(frozen=True)
class VolumeForm:
    """``density * dx dy dz``; ``product`` marks a planar area form wedge dz."""

    kind: str = "euclidean"
    density: Optional[Callable] = None

    def rho(self, pts):
        if self.density is None:
            return np.ones(len(pts))
        return np.asarray(self.density(pts), dtype=float)


EUCLIDEAN = VolumeForm()


@dataclass(frozen=True)
class FluxForm:
    """omega = P dy^dz - Q dx^dz + R dx^dy, components given as vectorised callables."""

    P: Callable
    Q: Callable
    R: Callable
    domain: Optional[Callable] = None

    def components(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([self.P(pts), self.Q(pts), self.R(pts)], axis=-1)

    def exterior_derivative(self, pts, h: float = 1e-4):
        """Coefficient of dx^dy^dz in d(omega), by central differences."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts))
        for axis, comp in enumerate((self.P, self.Q, self.R)):
            e = np.zeros(3)
            e[axis] = h
            out += (comp(pts + e) - comp(pts - e)) / (2 * h)
        return out


@dataclass(frozen=True)
class Section:
    """Hyperplane ``x[axis] = value`` (mod the period if the axis is periodic)."""

    axis: int
    value: float = 0.0
    direction: int = 1


@dataclass
class SampledField:
    """A vector field on a subset of R^3 (or of a quotient of it)."""

    eval: Callable
    margin: Optional[Callable] = None
    periods: tuple = (None, None, None)
    volume: VolumeForm = EUCLIDEAN
    glue: Optional[Callable] = None
    names: tuple = ("x", "y", "z")
    default_section: Optional[Section] = None

    def wrap(self, pts):
        pts = np.array(pts, dtype=float, copy=True)
        for i, p in enumerate(self.periods):
            if p:
                pts[..., i] = np.mod(pts[..., i], p)
        return pts

    def margins(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.margin is None:
            return np.full(len(pts), np.inf)
        return np.asarray(self.margin(self.wrap(pts)), dtype=float)

    def contains(self, pts):
        return self.margins(pts) >= 0

    def raw(self, pts):
        return np.asarray(self.eval(pts), dtype=float)

    def __call__(self, pts):
        arr = np.asarray(pts, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if not np.all(self.contains(arr)):
            raise DomainError("point outside the field's domain")
        out = self.raw(arr)
        return out[0] if single else out


def field_from_flux(omega: FluxForm, mu: VolumeForm = EUCLIDEAN, margin=None, **kwargs) -> SampledField:
    """The field v with iota_v(mu) = omega."""

    def ev(pts):
        return omega.components(pts) / mu.rho(pts)[:, None]

    return SampledField(ev, margin=margin, volume=mu, **kwargs)


def contract(v: SampledField, pts, mu: Optional[VolumeForm] = None):
    """Components (P, Q, R) of iota_v(mu) in the convention of :class:`FluxForm`."""
    mu = mu or v.volume
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return v.raw(pts) * mu.rho(pts)[:, None]


def hamiltonian_2d(f: Callable, grad: Optional[Callable] = None, h: float = 1e-6):
    """J(grad f) = (-df/db, df/da) as a vectorised function of (a, b)."""

    def J(a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if grad is not None:
            fa, fb = grad(a, b)
        else:
            fa = (f(a + h, b) - f(a - h, b)) / (2 * h)
            fb = (f(a, b + h) - f(a, b - h)) / (2 * h)
        return -np.asarray(fb, dtype=float), np.asarray(fa, dtype=float)

    return J


@dataclass
class DivergenceReport:
    max_abs: float
    max_rel: float
    worst_point: np.ndarray
    threshold: float
    passed: bool
    n_points: int


def divergence(v: SampledField, pts, h: float = 1e-4):
    """Central-difference div(rho v) / rho at each point."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    rho = v.volume.rho(pts)
    out = np.zeros(len(pts))
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        up, dn = pts + e, pts - e
        fu = v.raw(up)[:, axis] * v.volume.rho(up)
        fd = v.raw(dn)[:, axis] * v.volume.rho(dn)
        out += (fu - fd) / (2 * h)
    return out / rho


def divergence_check(v: SampledField, pts, h: float = 1e-4, rel_tol: float = 1e-5) -> DivergenceReport:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if v.margin is not None:
        m = v.margins(pts)
        if np.any(m < h):
            raise DomainError("divergence sample closer than h to the boundary")
    div = divergence(v, pts, h)
    mag = np.linalg.norm(v.raw(pts), axis=1)
    rel = np.abs(div) / (1.0 + mag)
    k = int(np.argmax(rel))
    return DivergenceReport(
        max_abs=float(np.max(np.abs(div))),
        max_rel=float(rel[k]),
        worst_point=pts[k].copy(),
        threshold=rel_tol,
        passed=bool(rel[k] <= rel_tol),
        n_points=len(pts),
    )


# -- integration ---------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray  # lift coordinates
    winding: np.ndarray  # cumulative displacement of each periodic coordinate per sample
    exit_code: str
    periodic_axes: tuple = ()
    glue_count: int = 0
    period: Optional[float] = None

    @property
    def end(self):
        return self.points[-1]

    @property
    def total_winding(self):
        return self.winding[-1]

    def to_csv(self, fh=None, names=("x", "y", "z")) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["t", *names, *[f"winding{i + 1}" for i in range(len(self.periodic_axes))]])
        for t, p, wd in zip(self.times, self.points, self.winding):
            w.writerow([_g17(t), *(_g17(c) for c in p), *(_g17(c) for c in wd)])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _g17(x) -> str:
    return format(float(x), ".17g")


@dataclass
class BatchResult:
    points: np.ndarray
    times: np.ndarray
    codes: list
    winding: np.ndarray
    glue_count: np.ndarray
    hits_t: list
    hits_p: list
    start: np.ndarray

    def code_mask(self, code: str):
        return np.array([c == code for c in self.codes])


def _dense(yy, hh, Q, theta):
    th = np.asarray(theta, dtype=float)
    pw = np.stack([th, th**2, th**3, th**4], axis=-1)
    return yy + hh[:, None] * np.einsum("mdk,mk->md", Q, pw)


def _section_level(sec: Section, period, y_old, y_end):
    """Crossing flag and the lifted level value per sample."""
    a = sec.axis
    if period:
        u0 = (y_old[:, a] - sec.value) / period
        u1 = (y_end[:, a] - sec.value) / period
        if sec.direction > 0:
            cnt = np.floor(u1) - np.floor(u0)
            level = sec.value + period * np.floor(u1)
        else:
            cnt = np.ceil(u0) - np.ceil(u1)
            level = sec.value + period * np.ceil(u1)
        return cnt, level
    s0 = y_old[:, a] - sec.value
    s1 = y_end[:, a] - sec.value
    if sec.direction > 0:
        cnt = ((s0 < 0) & (s1 >= 0)).astype(float)
    else:
        cnt = ((s0 > 0) & (s1 <= 0)).astype(float)
    return cnt, np.full(len(y_old), sec.value)


def _bisect(pred, yy, hh, Q, lo, hi, tol=EVENT_TOL):
    """Shrink [lo, hi] so pred(dense(lo)) is False and pred(dense(hi)) is True."""
    lo = lo.copy()
    hi = hi.copy()
    span = float(np.max((hi - lo) * hh)) if len(hh) else 0.0
    iters = max(1, int(math.ceil(math.log2(max(span, tol) / (0.25 * tol)))))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        p = pred(_dense(yy, hh, Q, mid))
        hi = np.where(p, mid, hi)
        lo = np.where(p, lo, mid)
    return lo, hi


def integrate_batch(
    v: SampledField,
    X0,
    t_max: float,
    tol: float = 1e-9,
    *,
    h_max: float = np.inf,
    h0: Optional[float] = None,
    section: Optional[Section] = None,
    max_returns: Optional[int] = None,
    closed_tol: Optional[float] = None,
    closed_ref=None,
    max_steps: int = 10**6,
    record: bool = False,
    record_cb=None,
) -> BatchResult:
    """Integrate many initial points at once with per-sample adaptive steps.

    Stops each sample at the boundary (unless glued), at ``t_max``, after
    ``max_returns`` section hits, or when a section hit comes within
    ``closed_tol`` of ``closed_ref`` (defaults to the starting point when it
    lies on the section, else the first hit).
    """
    Y = np.array(np.atleast_2d(X0), dtype=float)
    n = len(Y)
    if np.any(~v.contains(Y)):
        raise DomainError("initial point outside the domain")
    periodic = tuple(i for i, p in enumerate(v.periods) if p)
    t = np.zeros(n)
    h = np.full(n, h0 if h0 is not None else min(h_max, max(t_max, 1e-12) * 1e-2, 1e-2))
    k1 = v.raw(Y)
    status = np.zeros(n, dtype=int)
    wind = np.zeros((n, len(periodic)))
    seg_start = Y[:, periodic].copy()
    glue_count = np.zeros(n, dtype=int)
    hits_t = [[] for _ in range(n)]
    hits_p = [[] for _ in range(n)]
    start = Y.copy()
    ref = None
    if section is not None and closed_tol is not None:
        ref = np.full((n, 3), np.nan)
        if closed_ref is not None:
            ref[:] = np.atleast_2d(closed_ref)
        else:
            on = _on_section(section, v.periods[section.axis], Y)
            ref[on] = Y[on]
    steps = 0
    while True:
        idx = np.flatnonzero(status == 0)
        if idx.size == 0:
            break
        steps += 1
        if steps > max_steps:
            raise IntegrationError("maximum number of steps exceeded")
        yy = Y[idx]
        tt = t[idx]
        hh = np.minimum(h[idx], t_max - tt)
        m = idx.size
        K = np.empty((7, m, 3))
        K[0] = k1[idx]
        for s in range(1, 6):
            dy = np.tensordot(_A[s, :s], K[:s], axes=1)
            K[s] = v.raw(yy + hh[:, None] * dy)
        y_new = yy + hh[:, None] * np.tensordot(_B, K[:6], axes=1)
        K[6] = v.raw(y_new)
        err = hh[:, None] * np.tensordot(_E, K, axes=1)
        scale = tol + np.maximum(np.abs(yy), np.abs(y_new)) * tol
        en = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        bad = ~np.isfinite(en) | ~np.all(np.isfinite(y_new), axis=1)
        en = np.where(bad, np.inf, en)
        acc = en <= 1.0
        if section is not None and v.periods[section.axis]:
            cnt, _ = _section_level(section, v.periods[section.axis], yy, y_new)
            acc &= cnt <= 1
        with np.errstate(divide="ignore"):
            fac = np.where(en == 0, 10.0, np.clip(0.9 * en ** (-0.2), 0.2, 10.0))
        fac = np.where(acc, fac, np.minimum(fac, 0.5))
        new_h = np.minimum(np.minimum(hh * fac, h_max), 1e6)
        under = ~acc & (hh < 1e-14 * np.maximum(1.0, np.abs(tt)))
        if np.any(under):
            status[idx[under]] = 5
        h[idx] = new_h
        a = np.flatnonzero(acc)
        if a.size == 0:
            continue
        ia = idx[a]
        ya, yn, ha, ta = yy[a], y_new[a], hh[a], tt[a]
        Q = np.einsum("smd,sk->mdk", K[:, a], _P)
        theta_end = np.ones(a.size)
        # boundary exits
        out = v.margins(yn) < 0
        if np.any(out):
            o = np.flatnonzero(out)
            lo, hi = _bisect(lambda p: v.margins(p) < 0, ya[o], ha[o], Q[o],
                             np.zeros(o.size), np.ones(o.size))
            theta_end[o] = hi
        y_end = _dense(ya, ha, Q, theta_end)
        y_end = np.where((theta_end == 1.0)[:, None], yn, y_end)
        t_end = ta + theta_end * ha
        # section hits before the end of the (possibly truncated) step
        if section is not None:
            per = v.periods[section.axis]
            cnt, level = _section_level(section, per, ya, y_end)
            hit = np.flatnonzero(cnt >= 1)
            if hit.size:
                ax = section.axis
                lv = level[hit]
                if section.direction > 0:
                    pred = lambda p, lv=lv: p[:, ax] >= lv
                else:
                    pred = lambda p, lv=lv: p[:, ax] <= lv
                lo, hi = _bisect(pred, ya[hit], ha[hit], Q[hit], np.zeros(hit.size), theta_end[hit])
                th = 0.5 * (lo + hi)
                ph = _dense(ya[hit], ha[hit], Q[hit], th)
                for j, k in enumerate(hit):
                    g = ia[k]
                    th_t = ta[k] + th[j] * ha[k]
                    hits_t[g].append(th_t)
                    hits_p[g].append(ph[j].copy())
                    if ref is not None:
                        if np.isnan(ref[g, 0]):
                            ref[g] = ph[j]
                        elif _section_distance(v, section, ph[j], ref[g]) < closed_tol:
                            status[g] = 3
                            theta_end[k] = th[j]
                            y_end[k] = ph[j]
                            t_end[k] = th_t
                            continue
                    if max_returns is not None and len(hits_t[g]) >= max_returns:
                        status[g] = 4
                        theta_end[k] = th[j]
                        y_end[k] = ph[j]
                        t_end[k] = th_t
        Y[ia] = y_end
        t[ia] = t_end
        k1[ia] = np.where((theta_end == 1.0)[:, None], K[6][a], v.raw(y_end))
        if record_cb is not None:
            record_cb(ia, t_end, y_end)
        exited = np.flatnonzero((theta_end < 1.0) & (status[ia] == 0))
        if exited.size:
            ge = ia[exited]
            if v.glue is not None:
                wind[ge] += Y[ge][:, periodic] - seg_start[ge]
                moved, ok = v.glue(Y[ge])
                ok = np.asarray(ok, dtype=bool)
                if np.any(ok):
                    gk = ge[ok]
                    Y[gk] = moved[ok]
                    k1[gk] = v.raw(moved[ok])
                    seg_start[gk] = Y[gk][:, periodic]
                    glue_count[gk] += 1
                    if record_cb is not None:
                        record_cb(gk, t[gk], Y[gk])
                status[ge[~ok]] = 1
                seg_start[ge[~ok]] = Y[ge[~ok]][:, periodic]
            else:
                status[ge] = 1
        done_t = (status[ia] == 0) & (t[ia] >= t_max * (1 - 1e-15))
        status[ia[done_t]] = 2
    wind += Y[:, periodic] - seg_start
    return BatchResult(
        points=Y, times=t, codes=[_CODES[s] for s in status], winding=wind,
        glue_count=glue_count, hits_t=hits_t, hits_p=hits_p, start=start,
    )


def _on_section(sec: Section, period, Y):
    d = Y[:, sec.axis] - sec.value
    if period:
        d = (d + 0.5 * period) % period - 0.5 * period
    return np.abs(d) < 1e-12


def _section_distance(v: SampledField, sec: Section, p, q):
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    for i, per in enumerate(v.periods):
        if per:
            d[i] = (d[i] + 0.5 * per) % per - 0.5 * per
    d[sec.axis] = 0.0
    return float(np.linalg.norm(d))


def _auto_section(v: SampledField, x0) -> Optional[Section]:
    if v.default_section is not None:
        return v.default_section
    x0 = np.asarray(x0, dtype=float)
    vel = v.raw(x0[None])[0]
    best, axis = 0.0, None
    for i, p in enumerate(v.periods):
        if p and abs(vel[i]) / p > best:
            best, axis = abs(vel[i]) / p, i
    if axis is None:
        return None
    return Section(axis, float(x0[axis]), 1 if vel[axis] > 0 else -1)


def _period_cap(v: SampledField, sec: Optional[Section], x0) -> float:
    if sec is None or not v.periods[sec.axis]:
        return np.inf
    vel = np.abs(v.raw(np.atleast_2d(x0))[:, sec.axis])
    top = float(np.max(vel)) if vel.size else 0.0
    return np.inf if top == 0 else 0.5 * v.periods[sec.axis] / top


def integrate(
    v: SampledField,
    x0,
    t_max: float,
    tol: float = 1e-9,
    *,
    detect_closed: bool = True,
    closed_tol: float = 1e-6,
    section: Optional[Section] = None,
    h_max: Optional[float] = None,
    max_steps: int = 10**6,
) -> Trajectory:
    """Integrate one trajectory and keep every accepted step as a sample."""
    x0 = np.asarray(x0, dtype=float)
    periodic = tuple(i for i, p in enumerate(v.periods) if p)
    sec = section if section is not None else (_auto_section(v, x0) if detect_closed else None)
    if h_max is None:
        h_max = _period_cap(v, sec, x0)
    ts, ps = [0.0], [x0.copy()]
    seg = [np.zeros(len(periodic))]
    state = {"base": np.zeros(len(periodic)), "start": x0[list(periodic)].copy(), "last": x0.copy()}

    def cb(ia, tt, yy):
        # glue jumps show up as a second callback at the same time
        for t_, y_ in zip(tt, yy):
            if ts and t_ == ts[-1] and not np.allclose(y_, ps[-1]):
                state["base"] = state["base"] + ps[-1][list(periodic)] - state["start"]
                state["start"] = y_[list(periodic)].copy()
            ts.append(float(t_))
            ps.append(y_.copy())
            seg.append(state["base"] + y_[list(periodic)] - state["start"])

    res = integrate_batch(
        v, x0[None], t_max, tol, h_max=h_max, section=sec,
        closed_tol=closed_tol if (detect_closed and sec is not None) else None,
        max_steps=max_steps, record_cb=cb,
    )
    code = res.codes[0]
    if code == FAILED:
        raise IntegrationError(f"step size underflow at t={res.times[0]:.6g}")
    traj = Trajectory(
        times=np.array(ts), points=np.array(ps), winding=np.array(seg).reshape(len(ts), len(periodic)),
        exit_code=code, periodic_axes=periodic, glue_count=int(res.glue_count[0]),
    )
    if code == CLOSED:
        traj.period = float(res.times[0])
    return traj


@dataclass(frozen=True)
class ClosedOrbit:
    period: float
    point: np.ndarray
    returns: int


def detect_closed_orbit(
    v: SampledField,
    seed,
    section: Optional[Section] = None,
    tol: float = 1e-6,
    max_returns: int = 1000,
    t_max: float = np.inf,
    ode_tol: float = 1e-10,
) -> Optional[ClosedOrbit]:
    found = detect_closed_orbits(v, np.atleast_2d(seed), section, tol, max_returns, t_max, ode_tol)
    return found[0]


def detect_closed_orbits(
    v: SampledField,
    seeds,
    section: Optional[Section] = None,
    tol: float = 1e-6,
    max_returns: int = 1000,
    t_max: float = np.inf,
    ode_tol: float = 1e-10,
) -> list:
    """First-return search for each seed; one entry (or None) per seed."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    sec = section if section is not None else _auto_section(v, seeds[0])
    if sec is None:
        raise ValueError("no section given and the field has no periodic coordinate")
    res = integrate_batch(
        v, seeds, t_max, ode_tol, h_max=_period_cap(v, sec, seeds), section=sec,
        max_returns=max_returns + 1, closed_tol=tol,
    )
    out = []
    for i in range(len(seeds)):
        if res.codes[i] != CLOSED:
            out.append(None)
            continue
        on = _on_section(sec, v.periods[sec.axis], seeds[i:i + 1])[0]
        if on:
            t0, p0 = 0.0, seeds[i]
        else:
            t0, p0 = res.hits_t[i][0], res.hits_p[i][0]
        out.append(ClosedOrbit(float(res.times[i] - t0), v.wrap(p0), len(res.hits_t[i])))
    return out


def distinct_orbits(v: SampledField, orbits, tol: float = 1e-4) -> list:
    """Drop duplicates among detected closed orbits (comparing wrapped section points)."""
    uniq = []
    for o in orbits:
        if o is None:
            continue
        q = v.wrap(o.point)
        if not any(np.linalg.norm(_wrapped_diff(v, q, u.point)) < tol for u in uniq):
            uniq.append(ClosedOrbit(o.period, q, o.returns))
    return uniq


def _wrapped_diff(v, p, q):
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    for i, per in enumerate(v.periods):
        if per:
            d[i] = (d[i] + 0.5 * per) % per - 0.5 * per
    return d


def poincare_returns(v: SampledField, seeds, section: Section, n_returns: int,
                     t_max: float = np.inf, tol: float = 1e-10):
    """Section hits ``(times, points)`` for each seed, NaN-padded to ``n_returns``."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    res = integrate_batch(v, seeds, t_max, tol, h_max=_period_cap(v, section, seeds),
                          section=section, max_returns=n_returns)
    T = np.full((len(seeds), n_returns), np.nan)
    X = np.full((len(seeds), n_returns, 3), np.nan)
    for i in range(len(seeds)):
        k = len(res.hits_t[i])
        if k:
            T[i, :k] = res.hits_t[i]
            X[i, :k] = np.array(res.hits_p[i])
    return T, X


def flow_map(v: SampledField, X, t: float, tol: float = 1e-12):
    """Time-t map of many points; raises if any trajectory leaves the domain first."""
    res = integrate_batch(v, X, t, tol)
    if any(c != TIME for c in res.codes):
        raise IntegrationError("trajectory left the domain before the requested time")
    return res.points


def jacobian_determinant(v: SampledField, x0, t: float = 1.0, eps: float = 1e-5, tol: float = 1e-12):
    """det D(flow_t) at x0 from central differences of advected points."""
    x0 = np.asarray(x0, dtype=float)
    pts = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = eps
        pts += [x0 + e, x0 - e]
    img = flow_map(v, np.array(pts), t, tol)
    J = np.stack([(img[2 * i] - img[2 * i + 1]) / (2 * eps) for i in range(3)], axis=1)
    if v.volume.density is not None:
        rho0 = v.volume.rho(x0[None])[0]
        rho1 = v.volume.rho(flow_map(v, x0[None], t, tol))[0]
        return float(np.linalg.det(J) * rho1 / rho0)
    return float(np.linalg.det(J))


# -- model flows ----------------------------------------------------------------


def linear_t3_flow(r1: float, r2: float, r3: float) -> SampledField:
    r = np.array([r1, r2, r3], dtype=float)
    if not np.any(r):
        raise DomainError("the direction vector must be nonzero")

    def ev(pts):
        return np.broadcast_to(r, np.shape(pts)).copy()

    return SampledField(ev, periods=(1.0, 1.0, 1.0), names=("theta1", "theta2", "theta3"))


def suspension_flow(sigma: Callable, in_F: Callable) -> SampledField:
    """Unit vertical flow on F x [0, 1] with (p, 1) glued to (sigma(p), 0).

    ``sigma`` and ``in_F`` act on ``(N, 2)`` arrays.
    """

    def ev(pts):
        out = np.zeros_like(pts)
        out[:, 2] = 1.0
        return out

    def margin(pts):
        m = np.minimum(pts[:, 2], 1.0 - pts[:, 2])
        return np.where(in_F(pts[:, :2]), m, -1.0)

    def glue(pts):
        top = pts[:, 2] > 0.5
        img = np.asarray(sigma(pts[:, :2]), dtype=float)
        if not np.all(in_F(img[top])):
            raise MapError("sigma maps a point outside F")
        out = np.column_stack([img, np.zeros(len(pts))])
        return out, top

    return SampledField(ev, margin=margin, glue=glue, volume=VolumeForm("product"),
                        default_section=Section(2, 0.5, 1))
