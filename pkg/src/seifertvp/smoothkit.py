"""Fixed smooth profile functions and the interval-width function.

Four profiles are used throughout:

* ``b``: bump on [0, 1] with support [1/3, 2/3], unit integral, ``b <= 4``.
* ``B``: bump on [0, 1], flat at both ends, strictly above ``b`` on (0, 1).
* ``e``: even transition on [-1, 1], 1 on [-1/3, 1/3] and 0 for |x| >= 2/3.
* ``o``: odd increasing function on [-1, 1], flat at 0, with o(1) = 1.

``w(x) = (arctan(x + 1) - arctan(x)) / pi`` gives the interval lengths of
the Denjoy construction.  Antiderivatives of ``b`` and ``B`` (and of their
first moments) are served from cubic Hermite tables whose nodes are
computed by Gauss-Legendre quadrature, so evaluation is vectorised and
accurate to ~1e-14.
"""
from __future__ import annotations

import enum
import math
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError

# b rises on [1/3, 2/5], is constant on [2/5, 3/5], falls on [3/5, 2/3]
_B_LO, _B_HI = 1.0 / 3.0, 2.0 / 3.0
_FLANK = 1.0 / 15.0
_B_PLATEAU = 1.0 / (1.0 / 3.0 - _FLANK)  # 15/4, makes the integral exactly 1


class SmoothProfile(enum.Enum):
    bumpB_small = "b"
    bumpB_big = "B"
    transition_e = "e"
    odd_o = "o"
    width_w = "w"


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


def _flat_exp(t):
    """exp(-1/t) for t > 0, else 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly between otherwise."""
    t, scalar = _as_array(t)
    a = _flat_exp(t)
    c = _flat_exp(1.0 - t)
    return _ret(a / (a + c), scalar)


def _smooth_step_deriv(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = (t > 0) & (t < 1)
    tm = t[m]
    a = np.exp(-1.0 / tm)
    c = np.exp(-1.0 / (1.0 - tm))
    da = a / tm**2
    dc = -c / (1.0 - tm) ** 2
    out[m] = (da * c - a * dc) / (a + c) ** 2
    return out


def _check_domain(x, lo, hi, name):
    if np.any(~np.isfinite(x)) or np.any(x < lo) or np.any(x > hi):
        raise DomainError(f"{name} is defined on [{lo}, {hi}]")


def bump_b(x):
    x, scalar = _as_array(x)
    _check_domain(x, 0.0, 1.0, "b")
    rise = smooth_step((x - _B_LO) / _FLANK)
    fall = smooth_step((_B_HI - x) / _FLANK)
    return _ret(_B_PLATEAU * rise * fall, scalar)


def _bump_b_raw(x):
    # no domain check, used by quadrature over [0, 1]
    rise = smooth_step((x - _B_LO) / _FLANK)
    fall = smooth_step((_B_HI - x) / _FLANK)
    return _B_PLATEAU * rise * fall


def _beta(x):
    """Positive flat bump on (0, 1): exp(2 - 1/sqrt(x(1-x))), peak 1 at 1/2."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = (x > 0) & (x < 1)
    out[m] = np.exp(2.0 - 1.0 / np.sqrt(x[m] * (1.0 - x[m])))
    return out


def bump_B(x):
    x, scalar = _as_array(x)
    _check_domain(x, 0.0, 1.0, "B")
    return _ret(_bump_b_raw(x) + _beta(x), scalar)


def transition_e(x):
    x, scalar = _as_array(x)
    _check_domain(x, -1.0, 1.0, "e")
    return _ret(smooth_step((2.0 / 3.0 - np.abs(x)) * 3.0), scalar)


def transition_e_deriv(x):
    x, scalar = _as_array(x)
    _check_domain(x, -1.0, 1.0, "e'")
    return _ret(-3.0 * np.sign(x) * _smooth_step_deriv((2.0 / 3.0 - np.abs(x)) * 3.0), scalar)


def odd_o(x):
    x, scalar = _as_array(x)
    _check_domain(x, -1.0, 1.0, "o")
    out = np.zeros_like(x)
    nz = x != 0
    with np.errstate(divide="ignore", over="ignore"):
        out[nz] = np.sign(x[nz]) * np.exp(1.0 - 1.0 / x[nz] ** 2)
    return _ret(out, scalar)


def odd_o_deriv(x):
    """Closed form o'(x) = 2 |x|^-3 exp(1 - 1/x^2); even, vanishing to all orders at 0."""
    x, scalar = _as_array(x)
    _check_domain(x, -1.0, 1.0, "o'")
    out = np.zeros_like(x)
    nz = x != 0
    ax = np.abs(x[nz])
    out[nz] = 2.0 / ax**3 * np.exp(1.0 - 1.0 / ax**2)
    return _ret(out, scalar)


def width_w(x):
    """(1/pi)(arctan(x+1) - arctan(x)), evaluated without cancellation."""
    x, scalar = _as_array(x)
    return _ret(np.arctan(1.0 / (x * x + x + 1.0)) / math.pi, scalar)


def width_w_deriv(x):
    x, scalar = _as_array(x)
    return _ret((1.0 / (1.0 + (x + 1.0) ** 2) - 1.0 / (1.0 + x * x)) / math.pi, scalar)


def w_tail(K: int) -> float:
    """Exact two-sided tail sum_{k >= K} w(k) + sum_{k <= -K} w(k)."""
    if K < 1:
        raise DomainError("w_tail needs K >= 1")
    upper = math.atan(1.0 / K)  # pi/2 - arctan K
    lower = math.pi / 2 if K == 1 else math.atan(1.0 / (K - 1))  # arctan(1-K) + pi/2
    return (upper + lower) / math.pi


def w_tail_shifted(lo: int, hi: int, phi: float) -> float:
    """Total of w(k - phi) over integers k outside [lo, hi]."""
    above = math.pi / 2 - math.atan(hi + 1 - phi)
    below = math.atan(lo - phi) + math.pi / 2
    return (max(above, 0.0) + max(below, 0.0)) / math.pi


class ProfileTable:
    """Vectorised value / antiderivative / first-moment antiderivative of a profile on [0, 1]."""

    def __init__(self, func, cells: int = 1 << 14, order: int = 12):
        self.func = func
        nodes, weights = np.polynomial.legendre.leggauss(order)
        xs = np.linspace(0.0, 1.0, cells + 1)
        h = xs[1] - xs[0]
        mid = 0.5 * (xs[:-1] + xs[1:])
        pts = mid[:, None] + 0.5 * h * nodes[None, :]
        vals = func(pts)
        cell0 = 0.5 * h * (vals @ weights)
        cell1 = 0.5 * h * ((vals * pts) @ weights)
        c0 = np.concatenate([[0.0], np.cumsum(cell0)])
        c1 = np.concatenate([[0.0], np.cumsum(cell1)])
        fx = func(xs)
        self._cum0 = CubicHermiteSpline(xs, c0, fx)
        self._cum1 = CubicHermiteSpline(xs, c1, fx * xs)
        self.total0 = float(c0[-1])
        self.total1 = float(c1[-1])

    def value(self, x):
        return self.func(np.clip(x, 0.0, 1.0))

    def cum0(self, x):
        x = np.asarray(x, dtype=float)
        out = self._cum0(np.clip(x, 0.0, 1.0))
        return np.where(x >= 1.0, self.total0, np.where(x <= 0.0, 0.0, out))

    def cum1(self, x):
        x = np.asarray(x, dtype=float)
        out = self._cum1(np.clip(x, 0.0, 1.0))
        return np.where(x >= 1.0, self.total1, np.where(x <= 0.0, 0.0, out))


class _Tables:
    @cached_property
    def b(self) -> ProfileTable:
        return ProfileTable(_bump_b_raw)

    @cached_property
    def B(self) -> ProfileTable:
        return ProfileTable(lambda x: _bump_b_raw(x) + _beta(x))


TABLES = _Tables()


def cumulative_b(x):
    """Antiderivative of b from 0."""
    x, scalar = _as_array(x)
    _check_domain(x, 0.0, 1.0, "cumulative_b")
    return _ret(TABLES.b.cum0(x), scalar)


def cumulative_B(x):
    x, scalar = _as_array(x)
    _check_domain(x, 0.0, 1.0, "cumulative_B")
    return _ret(TABLES.B.cum0(x), scalar)


_EVAL = {
    SmoothProfile.bumpB_small: bump_b,
    SmoothProfile.bumpB_big: bump_B,
    SmoothProfile.transition_e: transition_e,
    SmoothProfile.odd_o: odd_o,
    SmoothProfile.width_w: width_w,
}


def eval_profile(p: SmoothProfile, x):
    return _EVAL[SmoothProfile(p)](x)
