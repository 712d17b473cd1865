"""Exact arithmetic in Z[tau], tau the golden ratio, and the Diophantine lemmas.

An element ``a + b*tau`` is stored as two Python ints.  Signs are decided by
integer arithmetic: ``a + b*tau = ((2a + b) + b*sqrt(5)) / 2``, and the sign
of ``p + q*sqrt(5)`` reduces to comparing ``p**2`` with ``5*q**2``.

Residues ``n mod tau`` live in ``[0, tau)``.  The vectorised helpers below
keep every membership decision exact; floats are only used to guess a
floor, which is then corrected by exact sign tests.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import total_ordering
from math import isqrt

import numpy as np

from .errors import InsufficientDataError, PreconditionError, SearchError

TAU_FLOAT = (1.0 + math.sqrt(5.0)) / 2.0


def _sign_p_q5(p: int, q: int) -> int:
    """Sign of p + q*sqrt(5) for integers p, q."""
    if p >= 0 and q >= 0:
        return 0 if p == 0 and q == 0 else 1
    if p <= 0 and q <= 0:
        return -1
    d = p * p - 5 * q * q
    return 1 if (d > 0) == (p > 0) else -1


def _floor_q_sqrt5(q: int) -> int:
    if q >= 0:
        return isqrt(5 * q * q)
    return -isqrt(5 * q * q) - 1


@total_ordering
class GoldenNumber:
    """a + b*tau with tau^2 = tau + 1."""

    __slots__ = ("a", "b")

    def __init__(self, a: int = 0, b: int = 0):
        self.a = int(a)
        self.b = int(b)

    @classmethod
    def coerce(cls, x) -> "GoldenNumber":
        if isinstance(x, GoldenNumber):
            return x
        if isinstance(x, (int, np.integer)):
            return cls(int(x), 0)
        raise TypeError(f"cannot coerce {type(x).__name__} to GoldenNumber")

    def __repr__(self):
        return f"GoldenNumber({self.a}, {self.b})"

    def __str__(self):
        return f"{self.a}{self.b:+d}τ"

    def __hash__(self):
        return hash((self.a, self.b))

    def __eq__(self, other):
        try:
            o = GoldenNumber.coerce(other)
        except TypeError:
            return NotImplemented
        return self.a == o.a and self.b == o.b

    def __lt__(self, other):
        return (self - GoldenNumber.coerce(other)).sign() < 0

    def __add__(self, other):
        try:
            o = GoldenNumber.coerce(other)
        except TypeError:
            return NotImplemented
        return GoldenNumber(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return GoldenNumber(-self.a, -self.b)

    def __sub__(self, other):
        try:
            o = GoldenNumber.coerce(other)
        except TypeError:
            return NotImplemented
        return GoldenNumber(self.a - o.a, self.b - o.b)

    def __rsub__(self, other):
        return GoldenNumber.coerce(other) - self

    def __mul__(self, other):
        try:
            o = GoldenNumber.coerce(other)
        except TypeError:
            return NotImplemented
        a, b, c, d = self.a, self.b, o.a, o.b
        return GoldenNumber(a * c + b * d, a * d + b * c + b * d)

    __rmul__ = __mul__

    def conj(self) -> "GoldenNumber":
        """Galois conjugate, tau -> 1 - tau."""
        return GoldenNumber(self.a + self.b, -self.b)

    def norm(self) -> int:
        return self.a * self.a + self.a * self.b - self.b * self.b

    def inverse(self) -> "GoldenNumber":
        n = self.norm()
        if n not in (1, -1):
            raise ZeroDivisionError(f"{self} is not a unit of Z[tau]")
        c = self.conj()
        return GoldenNumber(c.a * n, c.b * n)

    def __pow__(self, k: int):
        base = self if k >= 0 else self.inverse()
        k = abs(k)
        out = GoldenNumber(1, 0)
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def sign(self) -> int:
        return _sign_p_q5(2 * self.a + self.b, self.b)

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def floor(self) -> int:
        # floor(b*tau) = floor((b + floor(b*sqrt5)) / 2)
        return self.a + (self.b + _floor_q_sqrt5(self.b)) // 2

    def __float__(self):
        return self.a + self.b * TAU_FLOAT

    def to_longdouble(self):
        t = (np.longdouble(1) + np.sqrt(np.longdouble(5))) / np.longdouble(2)
        return np.longdouble(self.a) + np.longdouble(self.b) * t


TAU = GoldenNumber(0, 1)
TAU_INV = GoldenNumber(-1, 1)  # tau - 1


def reduce_mod_tau(x: GoldenNumber) -> GoldenNumber:
    """x - floor(x / tau) * tau, in [0, tau)."""
    x = GoldenNumber.coerce(x)
    # x / tau = x * (tau - 1) = (b - a) + a*tau
    q = GoldenNumber(x.b - x.a, x.a).floor()
    r = x - GoldenNumber(0, q)
    assert r.sign() >= 0 and (TAU - r).sign() > 0
    return r


@total_ordering
@dataclass(frozen=True)
class CircleTau:
    """A point of R / tau Z with its unique representative in [0, tau)."""

    value: GoldenNumber

    def __post_init__(self):
        object.__setattr__(self, "value", reduce_mod_tau(self.value))

    def __lt__(self, other):
        return self.value < other.value

    def __float__(self):
        return float(self.value)

    def distance(self, other: "CircleTau") -> GoldenNumber:
        d = abs(self.value - other.value)
        e = TAU - d
        return d if d <= e else e


def mod_tau(n) -> CircleTau:
    return CircleTau(GoldenNumber.coerce(n))


def circle_distance(x: CircleTau, y: CircleTau) -> GoldenNumber:
    return x.distance(y)


def fibonacci(n: int) -> int:
    """F_0 = F_1 = 1, F_{n+2} = F_{n+1} + F_n; F_{-1} = 0."""
    if n < -1:
        raise ValueError("fibonacci index must be >= -1")
    a, b = 0, 1  # F_{-1}, F_0
    for _ in range(n + 1):
        a, b = b, a + b
    return a


def tau_inverse_power(n: int) -> GoldenNumber:
    """tau^-n in closed form (-1)^n (F_n - F_{n-1} tau)."""
    s = -1 if n % 2 else 1
    return GoldenNumber(s * fibonacci(n), -s * fibonacci(n - 1))


@dataclass(frozen=True)
class FibDistanceResult:
    n: int
    holds: bool
    distance: GoldenNumber
    side: str  # "above": residue just above 0; "below": residue just below tau


def fib_distance_check(n: int) -> FibDistanceResult:
    if n < 1:
        raise PreconditionError("n must be positive")
    r = mod_tau(fibonacci(n))
    d = r.distance(mod_tau(0))
    target = tau_inverse_power(n)
    side = "above" if d == r.value else "below"
    return FibDistanceResult(n, d == target, d, side)


# -- vectorised exact residues -------------------------------------------------


def _as_int_array(x):
    arr = np.asarray(x)
    if arr.dtype == object:
        return arr
    return arr.astype(np.int64)


def _sign_vec(p, q):
    """Elementwise sign of p + q*sqrt(5); int64 when safe, Python ints otherwise."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.dtype != object and q.dtype != object:
        big = max(int(np.max(np.abs(p), initial=0)), int(np.max(np.abs(q), initial=0)))
        if big >= 1 << 30:
            p = p.astype(object)
            q = q.astype(object)
    d = p * p - 5 * q * q
    out = np.where(
        (p >= 0) & (q >= 0),
        np.where((p == 0) & (q == 0), 0, 1),
        np.where((p <= 0) & (q <= 0), -1, np.where((d > 0) == (p > 0), 1, -1)),
    )
    return out.astype(np.int64)


def residue_floors(ns) -> np.ndarray:
    """m = floor(n / tau) for an integer array, so that n mod tau = n - m*tau."""
    ns = _as_int_array(ns)
    if ns.dtype == object or (ns.size and np.max(np.abs(ns)) > 1 << 50):
        return np.array([GoldenNumber(-int(n), int(n)).floor() for n in ns.ravel()], dtype=object).reshape(ns.shape)
    m = np.floor(ns.astype(float) * (TAU_FLOAT - 1.0)).astype(np.int64)
    # exact correction: need 0 <= n - m*tau < tau
    for _ in range(3):
        low = _sign_vec(2 * ns - m, -m) < 0  # residue < 0
        m = m - low
        high = _sign_vec(2 * ns - (m + 1), -(m + 1)) >= 0  # residue >= tau
        m = m + high
        if not (low.any() or high.any()):
            break
    return m


def _cmp_residue_vec(ns, ms, g: GoldenNumber):
    """Sign of (n - m*tau) - g elementwise."""
    pa = ns - g.a
    qb = -ms - g.b
    return _sign_vec(2 * pa + qb, qb)


@dataclass(frozen=True)
class Arc:
    """Open oriented arc of R / tau Z; ``end is None`` means the whole circle."""

    start: CircleTau
    end: CircleTau | None

    @classmethod
    def full(cls) -> "Arc":
        return cls(mod_tau(0), None)

    def length(self) -> GoldenNumber:
        if self.end is None:
            return TAU
        d = self.end.value - self.start.value
        return d if d.sign() > 0 else d + TAU

    def contains_vec(self, ns, ms=None) -> np.ndarray:
        ns = _as_int_array(ns)
        if ms is None:
            ms = residue_floors(ns)
        if self.end is None:
            return np.ones(ns.shape, dtype=bool)
        after_start = _cmp_residue_vec(ns, ms, self.start.value) > 0
        before_end = _cmp_residue_vec(ns, ms, self.end.value) < 0
        if self.start.value < self.end.value:
            return after_start & before_end
        return after_start | before_end

    def contains(self, n: int) -> bool:
        return bool(self.contains_vec(np.array([n]))[0])

    def scaled(self, factor: GoldenNumber) -> "Arc":
        """Arc with the same start and length multiplied by ``factor``."""
        new_len = self.length() * factor
        return Arc(self.start, CircleTau(self.start.value + new_len))


def enum_Z(a: CircleTau, b: CircleTau | None, N: int) -> list[int]:
    """All n in [-N, N] with n mod tau in the open oriented arc (a, b), ascending."""
    if b is not None and a == b:
        raise PreconditionError("arc endpoints must differ")
    ns = np.arange(-N, N + 1, dtype=np.int64)
    mask = Arc(a, b).contains_vec(ns)
    return [int(n) for n in ns[mask]]


def fib_optimal_check(n: int) -> bool:
    """Brute force: d(F_n mod tau, 0) < d(p mod tau, 0) for every 0 < p < F_n."""
    Fn = fibonacci(n)
    if Fn > 10**7:
        raise PreconditionError("F_n too large for brute force")
    if Fn <= 1:
        return True
    dF = tau_inverse_power(n)
    ps = np.arange(1, Fn, dtype=np.int64)
    ms = residue_floors(ps)
    # d(p) > dF  <=>  r_p > dF  and  tau - r_p > dF
    above = _cmp_residue_vec(ps, ms, dF) > 0
    below = _cmp_residue_vec(ps, ms, TAU - dF) < 0
    return bool(np.all(above & below))


@dataclass
class CalibrationReport:
    lemma: str
    constant: float
    samples: str
    max_witness: object
    date: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        if d["date"] is None:
            del d["date"]
        return json.dumps(d, sort_keys=True, default=str)


@dataclass
class GapSurvey:
    max_ratio: float
    witness: Arc | None
    per_arc: list = field(default_factory=list)
    insufficient: list = field(default_factory=list)

    def report(self, N: int) -> CalibrationReport:
        w = None
        if self.witness is not None:
            w = {"start": str(self.witness.start.value),
                 "end": None if self.witness.end is None else str(self.witness.end.value)}
        return CalibrationReport(
            lemma="gap_bound", constant=self.max_ratio,
            samples=f"{len(self.per_arc)} arcs, N={N}", max_witness=w)


def gap_stats(arc: Arc, N: int) -> tuple[int, int]:
    """(min gap, max gap) between consecutive elements of Z(arc) in [-N, N]."""
    ns = np.arange(-N, N + 1, dtype=np.int64)
    z = ns[arc.contains_vec(ns)]
    if z.size < 2:
        raise InsufficientDataError(f"Z has {z.size} elements in [-{N}, {N}]")
    gaps = np.diff(z)
    return int(gaps.min()), int(gaps.max())


def gap_ratio_survey(arcs, N: int, skip_insufficient: bool = False) -> GapSurvey:
    ns = np.arange(-N, N + 1, dtype=np.int64)
    ms = residue_floors(ns)
    out = GapSurvey(0.0, None)
    for arc in arcs:
        z = ns[arc.contains_vec(ns, ms)]
        if z.size < 2:
            if not skip_insufficient:
                raise InsufficientDataError(f"arc {arc} has {z.size} elements in [-{N}, {N}]")
            out.insufficient.append(arc)
            continue
        gaps = np.diff(z)
        ratio = float(gaps.max()) / float(gaps.min())
        out.per_arc.append((arc, int(gaps.min()), int(gaps.max()), ratio))
        if ratio > out.max_ratio:
            out.max_ratio, out.witness = ratio, arc
    return out


@dataclass(frozen=True)
class SumRatio:
    lhs: float
    rhs: float
    lhs_w: float
    rhs_w: float
    count: int
    tail_bound: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs

    @property
    def ratio_w(self) -> float:
        return self.lhs_w / self.rhs_w


def sum_ratio_352(a: CircleTau, b: CircleTau | None, N: int, phi: float = 0.0) -> SumRatio:
    """Both sides (without the constant) of the 3-5-2 inequality and its w-weighted form.

    Returns ``lhs = sum 1/|n|^3``, ``rhs = sum 1/|n|^5 / sum 1/n^2`` over
    Z(a, b) in [-N, N], the w-weighted analogues at ``phi``, and a bound on
    the truncated tail of the slowest-converging sum (``sum 1/n^2``).
    """
    from .smoothkit import width_w

    arc = Arc(a, b)
    if arc.contains(0):
        raise PreconditionError("0 lies in Z(a, b)")
    ns = np.arange(-N, N + 1, dtype=np.int64)
    z = ns[arc.contains_vec(ns)].astype(float)
    if z.size == 0:
        raise InsufficientDataError("Z(a, b) is empty in the search window")
    az = np.abs(z)
    lhs = float(np.sum(az**-3.0))
    rhs = float(np.sum(az**-5.0) / np.sum(az**-2.0))
    w = width_w(z - phi)
    lhs_w = float(np.sum(w**1.5))
    rhs_w = float(np.sum(w**2.5) / np.sum(w))
    return SumRatio(lhs, rhs, lhs_w, rhs_w, int(z.size), 2.0 / N)


def find_between(n1: int, n2: int, N: int = 10**6) -> tuple[int, float]:
    """Smallest |n3| with n3 mod tau strictly inside the arc (n1 mod tau, n2 mod tau).

    Ties in |n3| prefer the non-negative candidate.  Returns ``(n3, ratio)``
    where ``ratio = |n3| / max(|n1|, |n2|)``.
    """
    if n1 == n2:
        raise PreconditionError("n1 and n2 must differ")
    arc = Arc(mod_tau(n1), mod_tau(n2))
    scale = max(abs(n1), abs(n2), 1)
    M = 8 * scale + 8
    while True:
        M = min(M, N)
        ks = np.arange(0, M + 1, dtype=np.int64)
        # candidate order 0, 1, -1, 2, -2, ...
        cand = np.empty(2 * ks.size - 1, dtype=np.int64)
        cand[0::2] = ks
        cand[1::2] = -ks[1:]
        hit = np.flatnonzero(arc.contains_vec(cand))
        if hit.size:
            n3 = int(cand[hit[0]])
            return n3, abs(n3) / scale
        if M >= N:
            raise SearchError(f"no integer between {n1} and {n2} within [-{N}, {N}]")
        M *= 4
