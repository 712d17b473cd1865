"""Flow-bordism records and the bookkeeping of plug assembly.

A record keeps sampled leaves ``entry -> exit`` (``exit is None`` marks an
entry point whose leaf did not leave within the integration horizon, so the
"infinite leaf" notion is always horizon-relative).  Mirror images,
concatenation, matched-ends checks and the plug/semi-plug classification
operate on these samples; insertion ledgers replay closed-leaf counting.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GluingError, LedgerError, PreconditionError
from .flowcore import TIME, SampledField, integrate_batch


class TwistKind(str, enum.Enum):
    untwisted = "untwisted"
    integral_dehn = "integral_dehn"
    wormhole = "wormhole"


@dataclass(frozen=True)
class Twist:
    kind: TwistKind = TwistKind.untwisted
    k: int = 0

    def __str__(self):
        if self.kind is TwistKind.integral_dehn:
            return f"integral_dehn({self.k})"
        return self.kind.value

    @classmethod
    def dehn(cls, k: int) -> "Twist":
        return cls(TwistKind.integral_dehn, k) if k else cls()

    def compose(self, other: "Twist") -> "Twist":
        if TwistKind.wormhole in (self.kind, other.kind):
            return Twist(TwistKind.wormhole)
        return Twist.dehn(self.k + other.k)


@dataclass(frozen=True)
class LeafSample:
    entry: Optional[tuple]
    exit: Optional[tuple]
    winding: float = 0.0


@dataclass(frozen=True)
class Region:
    """Descriptor of an entry or exit region; ``periods`` per coordinate (None if not periodic)."""

    name: str
    periods: tuple = ()


@dataclass(frozen=True)
class BordismRecord:
    name: str
    base: str
    entry_region: Region
    exit_region: Region
    leaf_samples: tuple = ()
    closed_leaf_count: int = 0
    twist: Twist = Twist()
    measured: bool = True
    stopped_circle: Optional[dict] = None  # description of the entry stopped set, if known
    transit: Optional[Callable] = field(default=None, compare=False, repr=False)

    @property
    def stopped_entries(self):
        return [s.entry for s in self.leaf_samples if s.exit is None and s.entry is not None]

    @property
    def stopped_exits(self):
        return [s.exit for s in self.leaf_samples if s.entry is None and s.exit is not None]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base": self.base,
            "entry_region": self.entry_region.name,
            "exit_region": self.exit_region.name,
            "closed_leaf_count": self.closed_leaf_count,
            "twist": str(self.twist),
            "measured": self.measured,
            "n_samples": len(self.leaf_samples),
            "n_stopped": len(self.stopped_entries),
        }


def mirror(r: BordismRecord) -> BordismRecord:
    """Reverse the leaves: entry and exit swap, windings negate."""
    samples = tuple(LeafSample(s.exit, s.entry, -s.winding) for s in r.leaf_samples)
    name = r.name[:-4] if r.name.endswith("_bar") else r.name + "_bar"
    tw = r.twist if r.twist.kind is not TwistKind.integral_dehn else Twist.dehn(-r.twist.k)
    return replace(r, name=name, entry_region=r.exit_region, exit_region=r.entry_region,
                   leaf_samples=samples, twist=tw, transit=None)


def _wrapped_diff(a, b, periods):
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    for i, p in enumerate(periods):
        if p and i < len(d):
            d[i] = (d[i] + p / 2) % p - p / 2
    return d


def concatenate(r1: BordismRecord, r2: BordismRecord, gluing: Optional[Callable] = None,
                tol: float = 1e-9, name: Optional[str] = None, twist: Optional[Twist] = None) -> BordismRecord:
    """Stack r2 on top of r1, identifying r1's exit with r2's entry through ``gluing``."""
    if r1.exit_region.name != r2.entry_region.name:
        raise GluingError(f"exit region {r1.exit_region.name!r} does not match entry {r2.entry_region.name!r}")
    glue = gluing or (lambda p: p)
    periods = r2.entry_region.periods
    lookup = [s for s in r2.leaf_samples if s.entry is not None]
    keys = np.array([s.entry for s in lookup], dtype=float) if lookup else np.zeros((0, 0))
    out = []
    for s in r1.leaf_samples:
        if s.entry is None:
            continue
        if s.exit is None:
            out.append(LeafSample(s.entry, None, s.winding))
            continue
        q = tuple(glue(s.exit))
        if r2.transit is not None:
            ex, wd = r2.transit(q)
            out.append(LeafSample(s.entry, None if ex is None else tuple(ex), s.winding + wd))
            continue
        if len(keys) == 0:
            raise GluingError("second record has no entry samples")
        d = np.array([np.linalg.norm(_wrapped_diff(k, q, periods)) for k in keys])
        j = int(np.argmin(d))
        if d[j] > tol:
            raise GluingError(f"no sample of {r2.name} enters at {q} (nearest {d[j]:.3g})")
        s2 = lookup[j]
        out.append(LeafSample(s.entry, s2.exit, s.winding + s2.winding))
    return BordismRecord(
        name=name or f"{r1.name}+{r2.name}",
        base=r1.base,
        entry_region=r1.entry_region,
        exit_region=r2.exit_region,
        leaf_samples=tuple(out),
        closed_leaf_count=r1.closed_leaf_count + r2.closed_leaf_count,
        twist=twist if twist is not None else r1.twist.compose(r2.twist),
        measured=r1.measured and r2.measured,
        stopped_circle=r1.stopped_circle,
    )


@dataclass
class MatchReport:
    max_mismatch: float
    passed: bool
    n_checked: int
    witness: Optional[tuple] = None


def matched_ends_check(r: BordismRecord, tol: float = 1e-6) -> MatchReport:
    """Every finite sampled leaf must exit directly above its entry."""
    if not r.leaf_samples:
        raise PreconditionError("record has no samples")
    periods = r.entry_region.periods
    worst, wit, n = 0.0, None, 0
    for s in r.leaf_samples:
        if s.entry is None or s.exit is None:
            continue
        n += 1
        d = float(np.max(np.abs(_wrapped_diff(s.exit, s.entry, periods))))
        if d > worst:
            worst, wit = d, s.entry
    return MatchReport(worst, worst <= tol, n, wit)


class PlugClass(str, enum.Enum):
    plug = "plug"
    semi_plug = "semi_plug"
    un_plug = "un_plug"
    none = "none"


def classify(r: BordismRecord, tol: float = 1e-6) -> PlugClass:
    has_infinite = bool(r.stopped_entries)
    matched = matched_ends_check(r, tol).passed
    if has_infinite and matched:
        return PlugClass.plug
    if has_infinite:
        return PlugClass.semi_plug
    if matched:
        return PlugClass.un_plug
    return PlugClass.none


@dataclass
class StoppedSet:
    points: np.ndarray
    fraction: float
    T_max: float
    n_probes: int

    def hausdorff_to(self, other: np.ndarray) -> float:
        if len(self.points) == 0:
            return float("inf")
        from scipy.spatial.distance import directed_hausdorff

        return max(directed_hausdorff(self.points, other)[0], directed_hausdorff(other, self.points)[0])


def _transit_times(v, X, T_max, tol, h_max):
    res = integrate_batch(v, X, T_max, tol, h_max=h_max)
    stopped = res.code_mask(TIME)
    return np.where(stopped, T_max, res.times), stopped


def stopped_set_estimate(v: SampledField, entry_pts, T_max: float, tol: float = 1e-8,
                         h_max: float = 0.5, refine_depth: int = 0, long_factor: float = 3.0) -> StoppedSet:
    """Entry points whose leaves neither exit nor close up within T_max.

    ``entry_pts`` is a flat ``(N, 3)`` list or a structured ``(n1, n2, 3)``
    grid.  With a grid and ``refine_depth > 0``, every grid edge touching a
    probe whose transit time exceeds ``long_factor`` times the median is
    searched for the maximum of the transit time (ternary search), so thin
    stopped sets between grid lines are still hit.
    """
    X = np.asarray(entry_pts, dtype=float)
    grid = X.ndim == 3
    flat = X.reshape(-1, 3)
    times, stopped = _transit_times(v, flat, T_max, tol, h_max)
    hits = [flat[stopped]]
    n_probes = len(flat)
    if grid and refine_depth > 0:
        n1, n2 = X.shape[:2]
        T = times.reshape(n1, n2)
        long = T > long_factor * np.median(T)
        st2 = stopped.reshape(n1, n2)
        ia, ib = [], []
        for (da, db) in ((1, 0), (0, 1)):
            for i in range(n1 - da):
                for j in range(n2 - db):
                    a, b = (i, j), (i + da, j + db)
                    if (long[a] or long[b]) and not (st2[a] or st2[b]):
                        ia.append(a)
                        ib.append(b)
        lo = np.array([X[a] for a in ia]).reshape(-1, 3)
        hi = np.array([X[b] for b in ib]).reshape(-1, 3)
        tlo = np.array([T[a] for a in ia])
        thi = np.array([T[b] for b in ib])
        for _ in range(refine_depth):
            if not len(lo):
                break
            m1 = lo + (hi - lo) / 3.0
            m2 = lo + 2.0 * (hi - lo) / 3.0
            t, st = _transit_times(v, np.vstack([m1, m2]), T_max, tol, h_max)
            n_probes += 2 * len(lo)
            k = len(lo)
            t1, t2, s1, s2 = t[:k], t[k:], st[:k], st[k:]
            hits += [m1[s1], m2[s2]]
            # keep edges that still bracket an interior maximum of the transit time
            peak = np.maximum(t1, t2) > np.maximum(tlo, thi) * (1 + 1e-9)
            keep = ~(s1 | s2) & peak
            left = t1 > t2
            lo, hi = np.where(left[:, None], lo, m1), np.where(left[:, None], m2, hi)
            tlo, thi = np.where(left, tlo, t1), np.where(left, t2, thi)
            lo, hi, tlo, thi = lo[keep], hi[keep], tlo[keep], thi[keep]
    pts = np.vstack(hits) if hits else np.zeros((0, 3))
    frac = float(np.mean(stopped)) if len(flat) else 0.0
    return StoppedSet(pts, frac, T_max, n_probes)


# -- insertion ledger ----------------------------------------------------------


@dataclass(frozen=True)
class ClosedLeaf:
    name: str
    kind: str = "leaf"  # or "annulus" for a family of closed leaves


@dataclass(frozen=True)
class BaseFlow:
    name: str
    closed: tuple = ()


@dataclass(frozen=True)
class Insertion:
    record: BordismRecord
    breaks: tuple = ()  # names of closed leaves the stopped set is positioned to meet
    framing: Optional[str] = None  # e.g. "m+l" for a Dehn-twisted insertion along an arc


@dataclass
class Ledger:
    base: str
    entries: list
    closed: list
    all_broken: bool

    @property
    def final_count(self) -> int:
        return len(self.closed)

    def to_json(self) -> str:
        return json.dumps({"base": self.base, "operations": self.entries,
                           "final_closed": [c.name for c in self.closed],
                           "final_count": self.final_count, "all_orbits_broken": self.all_broken},
                          sort_keys=True, indent=2)


def insertion_ledger(base: BaseFlow, insertions: Sequence[Insertion]) -> Ledger:
    """Replay insertions: each breaks its target leaves and contributes its own closed leaves."""
    closed = list(base.closed)
    entries = []
    for i, ins in enumerate(insertions):
        rec = ins.record
        names = {c.name for c in closed}
        missing = [b for b in ins.breaks if b not in names]
        if missing:
            raise LedgerError(f"insertion {i} targets nonexistent closed leaves {missing}")
        if ins.breaks and not (rec.stopped_entries or rec.stopped_circle):
            raise LedgerError(f"{rec.name} stops nothing, so it cannot break closed leaves")
        before = len(closed)
        closed = [c for c in closed if c.name not in ins.breaks]
        new = [ClosedLeaf(f"{rec.name}#{i}.{j}") for j in range(rec.closed_leaf_count)]
        closed.extend(new)
        entries.append({
            "index": i,
            "record": rec.name,
            "broken": list(ins.breaks),
            "added": rec.closed_leaf_count,
            "before": before,
            "after": len(closed),
            "twist": str(rec.twist),
            "framing": ins.framing,
        })
        if len(closed) != before - len(ins.breaks) + rec.closed_leaf_count:
            raise LedgerError("closed-leaf count not conserved")
    survivors = {c.name for c in closed}
    last_new = set()
    if insertions:
        k = len(insertions) - 1
        last_new = {c for c in survivors if c.startswith(f"{insertions[-1].record.name}#{k}.")}
    # every leaf that existed before the last insertion has been broken
    all_broken = bool(insertions) and survivors == last_new
    return Ledger(base.name, entries, closed, all_broken)
