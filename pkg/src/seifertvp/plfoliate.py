"""Exact piecewise-affine maps, slanted suspensions and PL measure transfer.

All arithmetic is over ``fractions.Fraction``.  Polygons are convex with
vertices listed counter-clockwise.  A slanted suspension of ``g`` with
slope ``l`` has leaves rising by ``l`` in ``y`` over one unit of the
suspension coordinate, and level 1 is glued to level 0 through ``g``, so the
return map to level 0 is ``p -> g(p + (0, l))`` whenever the vertical
segment stays in the domain.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .errors import GraphError, MatchingError, PreconditionError, TilingError

Q = Fraction


def _q(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


@dataclass(frozen=True, order=True)
class RatPoint:
    x: Fraction
    y: Fraction

    def __post_init__(self):
        object.__setattr__(self, "x", _q(self.x))
        object.__setattr__(self, "y", _q(self.y))

    def __add__(self, o):
        return RatPoint(self.x + o.x, self.y + o.y)

    def __sub__(self, o):
        return RatPoint(self.x - o.x, self.y - o.y)

    def scale(self, t) -> "RatPoint":
        return RatPoint(self.x * t, self.y * t)

    def to_json(self):
        return [_fs(self.x), _fs(self.y)]

    def __repr__(self):
        return f"({self.x}, {self.y})"


def P(x, y) -> RatPoint:
    return RatPoint(_q(x), _q(y))


def _fs(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def _parse(s: str) -> Fraction:
    return Fraction(s)


def cross(o: RatPoint, a: RatPoint, b: RatPoint) -> Fraction:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


@dataclass(frozen=True)
class Affine:
    """(x, y) -> (a x + b y + e, c x + d y + f)."""

    a: Fraction
    b: Fraction
    c: Fraction
    d: Fraction
    e: Fraction = Fraction(0)
    f: Fraction = Fraction(0)

    def __call__(self, p: RatPoint) -> RatPoint:
        return RatPoint(self.a * p.x + self.b * p.y + self.e, self.c * p.x + self.d * p.y + self.f)

    @property
    def det(self) -> Fraction:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, o: "Affine") -> "Affine":
        """self after o."""
        return Affine(
            self.a * o.a + self.b * o.c, self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c, self.c * o.b + self.d * o.d,
            self.a * o.e + self.b * o.f + self.e, self.c * o.e + self.d * o.f + self.f,
        )

    def inverse(self) -> "Affine":
        D = self.det
        if D == 0:
            raise PreconditionError("singular affine map")
        a, b, c, d = self.d / D, -self.b / D, -self.c / D, self.a / D
        return Affine(a, b, c, d, -(a * self.e + b * self.f), -(c * self.e + d * self.f))

    @classmethod
    def identity(cls) -> "Affine":
        return cls(Q(1), Q(0), Q(0), Q(1))

    @classmethod
    def from_triangles(cls, src: Sequence[RatPoint], dst: Sequence[RatPoint]) -> "Affine":
        """The affine map sending the three points of ``src`` to those of ``dst``."""
        p0, p1, p2 = src
        q0, q1, q2 = dst
        M = cls(p1.x - p0.x, p2.x - p0.x, p1.y - p0.y, p2.y - p0.y)
        N = cls(q1.x - q0.x, q2.x - q0.x, q1.y - q0.y, q2.y - q0.y)
        L = N @ M.inverse()
        t = q0 - L(p0)
        return cls(L.a, L.b, L.c, L.d, t.x, t.y)

    def to_json(self):
        return [_fs(v) for v in (self.a, self.b, self.c, self.d, self.e, self.f)]


def translation(dx, dy) -> Affine:
    return Affine(Q(1), Q(0), Q(0), Q(1), _q(dx), _q(dy))


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        vs = tuple(self.vertices)
        if len(vs) < 3:
            raise TilingError("polygon needs three vertices", vs)
        if _signed_area(vs) < 0:
            vs = tuple(reversed(vs))
        object.__setattr__(self, "vertices", vs)

    @property
    def area(self) -> Fraction:
        return _signed_area(self.vertices)

    def edges(self):
        vs = self.vertices
        return [(vs[i], vs[(i + 1) % len(vs)]) for i in range(len(vs))]

    def contains(self, p: RatPoint) -> bool:
        return all(cross(a, b, p) >= 0 for a, b in self.edges())

    def interior_contains(self, p: RatPoint) -> bool:
        return all(cross(a, b, p) > 0 for a, b in self.edges())

    def image(self, A: Affine) -> "Polygon":
        return Polygon(tuple(A(v) for v in self.vertices))

    def vertical_extent(self, x: Fraction):
        """(ymin, ymax) of the polygon over abscissa x, or None."""
        ys = []
        for a, b in self.edges():
            if a.x == b.x:
                if a.x == x:
                    ys += [a.y, b.y]
            elif min(a.x, b.x) <= x <= max(a.x, b.x):
                t = (x - a.x) / (b.x - a.x)
                ys.append(a.y + t * (b.y - a.y))
        return (min(ys), max(ys)) if ys else None

    def to_json(self):
        return [v.to_json() for v in self.vertices]


def _signed_area(vs) -> Fraction:
    s = Fraction(0)
    for i in range(len(vs)):
        a, b = vs[i], vs[(i + 1) % len(vs)]
        s += a.x * b.y - a.y * b.x
    return s / 2


def tri(*pts) -> Polygon:
    return Polygon(tuple(P(*p) if not isinstance(p, RatPoint) else p for p in pts))


def interiors_overlap(p: Polygon, q: Polygon) -> bool:
    """Exact separating-axis test on convex polygons (touching boundaries do not count)."""
    for poly in (p, q):
        for a, b in poly.edges():
            nx, ny = b.y - a.y, a.x - b.x  # outward normal for a CCW polygon
            pp = [nx * v.x + ny * v.y for v in p.vertices]
            qq = [nx * v.x + ny * v.y for v in q.vertices]
            if max(pp) <= min(qq) or max(qq) <= min(pp):
                return False
    return True


def clip_convex(subject: Polygon, clip: Polygon) -> Optional[Polygon]:
    """Exact convex intersection (Sutherland-Hodgman); None if it has no interior."""
    pts = list(subject.vertices)
    for a, b in clip.edges():
        if not pts:
            return None
        out = []
        for i in range(len(pts)):
            cur, nxt = pts[i], pts[(i + 1) % len(pts)]
            cc, cn = cross(a, b, cur), cross(a, b, nxt)
            if cc >= 0:
                out.append(cur)
            if (cc > 0 > cn) or (cc < 0 < cn):
                t = cc / (cc - cn)
                out.append(cur + (nxt - cur).scale(t))
        pts = out
    dedup = []
    for v in pts:
        if not dedup or dedup[-1] != v:
            dedup.append(v)
    if len(dedup) > 1 and dedup[0] == dedup[-1]:
        dedup.pop()
    if len(dedup) < 3 or _signed_area(tuple(dedup)) == 0:
        return None
    return Polygon(tuple(dedup))


# -- piecewise affine maps ---------------------------------------------------------


@dataclass(frozen=True)
class Piece:
    polygon: Polygon
    map: Affine

    @property
    def image(self) -> Polygon:
        return self.polygon.image(self.map)


def _area_sum(polys) -> Fraction:
    return sum((p.area for p in polys), Fraction(0))


def _check_tiling(polys: Sequence[Polygon], region: Sequence[Polygon], what: str):
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if interiors_overlap(polys[i], polys[j]):
                raise TilingError(f"{what}: pieces {i} and {j} overlap", (polys[i], polys[j]))
    for i, p in enumerate(polys):
        if not any(all(r.contains(v) for v in p.vertices) for r in region):
            raise TilingError(f"{what}: piece {i} is not inside the region", p)
    if _area_sum(polys) != _area_sum(region):
        raise TilingError(f"{what}: pieces cover area {_area_sum(polys)} of {_area_sum(region)}", None)


def _shared_segments(p: Polygon, q: Polygon):
    """Overlapping collinear edge segments of two polygons, as point pairs."""
    out = []
    for a, b in p.edges():
        for c, d in q.edges():
            if cross(a, b, c) != 0 or cross(a, b, d) != 0:
                continue
            # project onto the edge direction
            ux, uy = b.x - a.x, b.y - a.y

            def t(v):
                return (v.x - a.x) * ux + (v.y - a.y) * uy

            L = t(b)
            lo, hi = max(Fraction(0), min(t(c), t(d))), min(L, max(t(c), t(d)))
            if lo < hi:
                out.append((a + (b - a).scale(lo / L), a + (b - a).scale(hi / L)))
    return out


@dataclass
class PiecewiseAffineMap:
    pieces: list
    domain: list  # convex polygons whose union is the domain
    codomain: list = None

    def __post_init__(self):
        if self.codomain is None:
            self.codomain = list(self.domain)

    def piece_at(self, p: RatPoint) -> Optional[Piece]:
        for pc in self.pieces:
            if pc.polygon.contains(p):
                return pc
        return None

    def __call__(self, p: RatPoint) -> RatPoint:
        pc = self.piece_at(p)
        if pc is None:
            raise PreconditionError(f"{p} is outside the domain")
        return pc.map(p)

    def check_tiling(self):
        _check_tiling([pc.polygon for pc in self.pieces], self.domain, "domain")

    def check_continuity(self):
        for i in range(len(self.pieces)):
            for j in range(i + 1, len(self.pieces)):
                pi, pj = self.pieces[i], self.pieces[j]
                for u, v in _shared_segments(pi.polygon, pj.polygon):
                    if pi.map(u) != pj.map(u) or pi.map(v) != pj.map(v):
                        raise TilingError(f"pieces {i} and {j} disagree on a shared edge", (u, v))

    def check_image_tiling(self):
        _check_tiling([pc.image for pc in self.pieces], self.codomain, "image")

    def validate(self):
        self.check_tiling()
        self.check_continuity()
        self.check_image_tiling()
        return True

    def inverse(self) -> "PiecewiseAffineMap":
        return PiecewiseAffineMap([Piece(pc.image, pc.map.inverse()) for pc in self.pieces],
                                  list(self.codomain), list(self.domain))

    def compose(self, first: "PiecewiseAffineMap") -> "PiecewiseAffineMap":
        """self after first."""
        out = []
        for p1 in first.pieces:
            img = p1.image
            inv = p1.map.inverse()
            for p2 in self.pieces:
                piece = clip_convex(img, p2.polygon)
                if piece is not None:
                    out.append(Piece(piece.image(inv), p2.map @ p1.map))
        return PiecewiseAffineMap(out, list(first.domain), list(self.codomain))

    def conjugate(self, iso: Affine) -> "PiecewiseAffineMap":
        """iso o self o iso^-1 on iso(domain)."""
        inv = iso.inverse()
        return PiecewiseAffineMap(
            [Piece(pc.polygon.image(iso), iso @ pc.map @ inv) for pc in self.pieces],
            [d.image(iso) for d in self.domain], [c.image(iso) for c in self.codomain])

    def to_json(self) -> str:
        return json.dumps({
            "pieces": [{"polygon": pc.polygon.to_json(), "affine": pc.map.to_json()} for pc in self.pieces],
            "domain": [d.to_json() for d in self.domain],
            "codomain": [c.to_json() for c in self.codomain],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseAffineMap":
        data = json.loads(text)

        def poly(vs):
            return Polygon(tuple(RatPoint(_parse(x), _parse(y)) for x, y in vs))

        pieces = [Piece(poly(d["polygon"]), Affine(*map(_parse, d["affine"]))) for d in data["pieces"]]
        return cls(pieces, [poly(d) for d in data["domain"]], [poly(c) for c in data["codomain"]])


def check_area_preserving(m: PiecewiseAffineMap) -> bool:
    """Exact: |det| = 1 on every piece, and pieces and images tile domain and codomain."""
    m.check_tiling()
    m.check_continuity()
    if any(abs(pc.map.det) != 1 for pc in m.pieces):
        return False
    m.check_image_tiling()
    return True


def affine_map(A: Affine, domain: Polygon) -> PiecewiseAffineMap:
    return PiecewiseAffineMap([Piece(domain, A)], [domain], [domain.image(A)])


# -- the trapezoid map and its assemblies ---------------------------------------------

A1, A2, A3, A4, A5 = P(0, 0), P(0, 2), P(Q(1, 3), 0), P(1, 1), P(1, 0)


def _reflect_half(p: RatPoint) -> RatPoint:
    return RatPoint(1 - p.x, p.y)


TRAPEZOID = Polygon((A1, A5, A4, A2))
TRAPEZOID_U = TRAPEZOID.image(Affine(Q(-1), Q(0), Q(0), Q(1), Q(1), Q(0)))


def build_trapezoid_f() -> PiecewiseAffineMap:
    """T -> U, sending a_i to b_{6-i}, linear on the three triangles around a_3."""
    a = [A1, A2, A3, A4, A5]
    b = [_reflect_half(p) for p in a]
    img = {i: b[4 - i] for i in range(5)}
    tris = [(0, 2, 1), (1, 2, 3), (2, 4, 3)]
    pieces = []
    for t in tris:
        src = [a[i] for i in t]
        dst = [img[i] for i in t]
        pieces.append(Piece(Polygon(tuple(src)), Affine.from_triangles(src, dst)))
    return PiecewiseAffineMap(pieces, [TRAPEZOID], [TRAPEZOID_U])


ROT = Affine(Q(-1), Q(0), Q(0), Q(-1), Q(1), Q(3))  # half turn about (1/2, 3/2)
REF = Affine(Q(-1), Q(0), Q(0), Q(1))  # reflection in the y axis
SHEAR_AFF = Affine(Q(-1), Q(0), Q(-2), Q(-1), Q(1), Q(5))  # (x, y) -> (1 - x, 5 - 2x - y)

R1_LEFT = Polygon((P(-1, 0), P(0, 0), P(0, 3), P(-1, 3)))
R1_RIGHT = Polygon((P(0, 0), P(1, 0), P(1, 3), P(0, 3)))
R2_RIGHT = Polygon((P(0, 0), P(1, 0), P(1, 5), P(0, 3)))


def _pieces_of(m: PiecewiseAffineMap, iso: Optional[Affine] = None):
    if iso is None:
        return list(m.pieces)
    return list(m.conjugate(iso).pieces)


def _right_column_g1():
    f = build_trapezoid_f()
    return _pieces_of(f) + _pieces_of(f, ROT)


def build_g1() -> PiecewiseAffineMap:
    """Area-preserving PL homeomorphism of [-1, 1] x [0, 3] from four copies of f."""
    right = PiecewiseAffineMap(_right_column_g1(), [R1_RIGHT])
    left = right.conjugate(REF)
    m = PiecewiseAffineMap(right.pieces + left.pieces, [R1_LEFT, R1_RIGHT])
    m.validate()
    return m


def build_g2() -> PiecewiseAffineMap:
    """Area-preserving PL homeomorphism of R_1 plus the triangle (0,3), (1,3), (1,5).

    Right column: f on T, the shear (x, y + 2x - 1) on the triangle
    (0,2), (1,1), (1,3), and f conjugated by (x, y) -> (1 - x, 5 - 2x - y)
    on the rest.  The left column is the mirror of the right column of g_1.
    """
    f = build_trapezoid_f()
    shear_tri = tri((0, 2), (1, 1), (1, 3))
    shear = Affine(Q(1), Q(0), Q(2), Q(1), Q(0), Q(-1))
    right = _pieces_of(f) + [Piece(shear_tri, shear)] + _pieces_of(f, SHEAR_AFF)
    left = PiecewiseAffineMap(_right_column_g1(), [R1_RIGHT]).conjugate(REF).pieces
    m = PiecewiseAffineMap(right + list(left), [R1_LEFT, R2_RIGHT])
    m.validate()
    return m


# -- slanted suspensions -----------------------------------------------------------------


@dataclass
class SlantedSuspension:
    base: PiecewiseAffineMap
    slope: Fraction = Fraction(1)

    def __post_init__(self):
        self.slope = _q(self.slope)
        if self.slope < 0:
            raise PreconditionError("slope must be non-negative")

    @property
    def domain(self):
        return self.base.domain

    def extent(self, x: Fraction):
        """(bottom, top) of the domain over abscissa x; domains are vertically convex."""
        lo, hi = None, None
        for d in self.domain:
            e = d.vertical_extent(x)
            if e is not None:
                lo = e[0] if lo is None else min(lo, e[0])
                hi = e[1] if hi is None else max(hi, e[1])
        return (lo, hi) if lo is not None else None

    def step(self, p: RatPoint):
        """One turn from level 0: ("turn", image) or ("exit", exit level in [0, 1))."""
        ext = self.extent(p.x)
        if ext is None or not (ext[0] <= p.y <= ext[1]):
            raise PreconditionError(f"{p} is outside the domain")
        top = ext[1]
        q = RatPoint(p.x, p.y + self.slope)
        if q.y > top:
            return "exit", (top - p.y) / self.slope  # slope > 0 here since q.y > p.y
        return "turn", self.base(q)

    def return_map(self, p: RatPoint) -> Optional[RatPoint]:
        kind, val = self.step(p)
        return val if kind == "turn" else None

    def return_pieces(self) -> list:
        """Affine pieces of the return map: base o (shift by l) on shift^-1 of each base piece."""
        sh = translation(0, self.slope)
        inv = sh.inverse()
        out = []
        for pc in self.base.pieces:
            out.append(Piece(pc.polygon.image(inv), pc.map @ sh))
        return out

    def fixed_points(self) -> list:
        """Exact solve of (A - I) p = -t on each piece of the return map."""
        found = []
        for pc in self.return_pieces():
            A = pc.map
            M = Affine(A.a - 1, A.b, A.c, A.d - 1)
            cand = []
            if M.det != 0:
                Minv = M.inverse()
                cand = [Minv(RatPoint(-A.e, -A.f))]
            else:
                cand = _degenerate_fixed(A, pc.polygon)
            for p in cand:
                if pc.polygon.contains(p) and self._segment_inside(p) and self.return_map(p) == p:
                    if p not in found:
                        found.append(p)
        return sorted(found)

    def _segment_inside(self, p: RatPoint) -> bool:
        ext = self.extent(p.x)
        return ext is not None and ext[0] <= p.y and p.y + self.slope <= ext[1]


def _degenerate_fixed(A: Affine, poly: Polygon) -> list:
    """Fixed points of an affine piece whose linear part has eigenvalue 1, restricted to poly.

    The fixed set is empty, a line, or the plane; a line is cut to the
    polygon and reported by its endpoints, the plane by the vertices.
    """
    Mx, My = (A.a - 1, A.b), (A.c, A.d - 1)
    rhs = (-A.e, -A.f)
    rows = [(r, c) for r, c in zip((Mx, My), rhs) if r != (0, 0)]
    if not rows:
        return list(poly.vertices) if rhs == (0, 0) else []
    (u, v), c = rows[0]
    for (u2, v2), c2 in rows[1:]:
        # rank one: the second row is a multiple of the first
        if (u2 * c != u * c2) or (v2 * c != v * c2):
            return []
    out = []
    for a, b in poly.edges():
        fa, fb = u * a.x + v * a.y - c, u * b.x + v * b.y - c
        if fa == 0:
            out.append(a)
        elif (fa < 0 < fb) or (fb < 0 < fa):
            out.append(a + (b - a).scale(fa / (fa - fb)))
    return out


@dataclass
class LeafTrace:
    orbit: list
    kind: str  # "closed", "exits", "survives"
    period: Optional[int] = None
    winding: int = 0
    exit: Optional[tuple] = None  # (x, exit level)


def trace_leaf(s: SlantedSuspension, p: RatPoint, max_steps: int = 1000) -> LeafTrace:
    """Iterate the return map exactly from a level-0 point."""
    orbit = [p]
    cur = p
    for k in range(1, max_steps + 1):
        kind, val = s.step(cur)
        if kind == "exit":
            return LeafTrace(orbit, "exits", winding=k - 1, exit=(cur.x, val))
        cur = val
        if cur == p:
            return LeafTrace(orbit, "closed", period=k, winding=k)
        orbit.append(cur)
    return LeafTrace(orbit, "survives", winding=max_steps)


def entry_leaf(s: SlantedSuspension, x0, z0, max_steps: int = 1000) -> LeafTrace:
    """Leaf entering through the bottom of the domain at abscissa x0 and level z0 in [0, 1)."""
    x0, z0 = _q(x0), _q(z0)
    ext = s.extent(x0)
    if ext is None:
        raise PreconditionError("entry abscissa outside the domain")
    y1 = ext[0] + (1 - z0) * s.slope
    start = RatPoint(x0, ext[0])
    if y1 > ext[1]:
        return LeafTrace([start], "exits", winding=0, exit=(x0, z0 + (ext[1] - ext[0]) / s.slope))
    p = s.base(RatPoint(x0, y1))
    tr = trace_leaf(s, p, max_steps)
    tr.orbit.insert(0, start)
    tr.winding += 1
    if tr.kind == "closed":
        tr.kind = "survives"  # an entering leaf cannot close up
    return tr


def dehn_twist_count(s1: SlantedSuspension, s2: SlantedSuspension, samples: Optional[Iterable] = None,
                     max_steps: int = 1000) -> int:
    """Extra suspension turns of s2 over s1, (x > 0 leaves) minus (x < 0 leaves).

    Leaves are matched by entry point and compared through the vertical
    projection of the exit region onto the entry region.
    """
    lo1, lo2 = _bottoms(s1), _bottoms(s2)
    if lo1 != lo2:
        raise MatchingError("entry regions differ", (lo1, lo2))
    if samples is None:
        samples = [(Q(i, 16), Q(j, 7)) for i in range(-15, 16) if i != 0 for j in range(1, 7)]
    diffs = {1: set(), -1: set()}
    for x0, z0 in samples:
        t1 = entry_leaf(s1, x0, z0, max_steps)
        t2 = entry_leaf(s2, x0, z0, max_steps)
        if t1.kind != "exits" or t2.kind != "exits":
            continue
        if t1.exit != t2.exit:
            raise MatchingError("exit points differ under projection", ((x0, z0), t1.exit, t2.exit))
        diffs[1 if x0 > 0 else -1].add(t2.winding - t1.winding)
    if any(len(v) > 1 for v in diffs.values()) or not all(diffs.values()):
        raise MatchingError("winding differences are not constant on each side", diffs)
    return next(iter(diffs[1])) - next(iter(diffs[-1]))


def _bottoms(s: SlantedSuspension):
    xs = sorted({v.x for d in s.domain for v in d.vertices})
    return tuple((x, s.extent(x)[0]) for x in xs)


# -- PL Moser -----------------------------------------------------------------------------


@dataclass
class SimplicialMeasure:
    adjacency: dict  # node -> iterable of neighbours
    measure: dict  # node -> positive Fraction

    def __post_init__(self):
        self.adjacency = {k: frozenset(v) for k, v in self.adjacency.items()}
        self.measure = {k: _q(v) for k, v in self.measure.items()}
        if any(v <= 0 for v in self.measure.values()):
            raise PreconditionError("measures must be positive")
        if set(self.measure) != set(self.adjacency):
            raise PreconditionError("measure and graph have different nodes")

    @property
    def total(self) -> Fraction:
        return sum(self.measure.values(), Fraction(0))


@dataclass(frozen=True)
class Transfer:
    source: object
    target: object
    amount: Fraction


def _spanning_tree(adj: dict, root):
    parent = {root: None}
    order = [root]
    dq = deque([root])
    while dq:
        u = dq.popleft()
        for w in sorted(adj[u], key=repr):
            if w not in parent:
                parent[w] = u
                order.append(w)
                dq.append(w)
    return parent, order


def moser_plan(m1: SimplicialMeasure, m2: SimplicialMeasure) -> list:
    """Transfers along a spanning tree turning m1 into m2, all intermediates positive."""
    if m1.adjacency != m2.adjacency:
        raise PreconditionError("measures live on different graphs")
    if m1.total != m2.total:
        raise PreconditionError("totals differ")
    nodes = sorted(m1.adjacency, key=repr)
    if not nodes:
        return []
    parent, order = _spanning_tree(m1.adjacency, nodes[0])
    if len(order) != len(nodes):
        raise GraphError("graph is disconnected")
    children = {u: [] for u in nodes}
    for u in order[1:]:
        children[parent[u]].append(u)
    excess = {}
    for u in reversed(order):
        excess[u] = m1.measure[u] - m2.measure[u] + sum((excess[c] for c in children[u]), Fraction(0))
    plan = []
    for u in reversed(order):  # children first: push surpluses toward the root
        if parent[u] is not None and excess[u] > 0:
            plan.append(Transfer(u, parent[u], excess[u]))
    for u in order:  # root first: fill deficits downward
        if parent[u] is not None and excess[u] < 0:
            plan.append(Transfer(parent[u], u, -excess[u]))
    return plan


def replay_plan(m1: SimplicialMeasure, plan: Sequence[Transfer]):
    """Apply transfers; returns (final measure, minimum intermediate value). Checks adjacency."""
    cur = dict(m1.measure)
    low = min(cur.values())
    for t in plan:
        if t.target not in m1.adjacency[t.source]:
            raise GraphError(f"{t.source} and {t.target} are not adjacent")
        cur[t.source] -= t.amount
        cur[t.target] += t.amount
        low = min(low, cur[t.source])
    return cur, low


def plan_to_json(plan: Sequence[Transfer]) -> str:
    return json.dumps([{"from": repr(t.source), "to": repr(t.target), "amount": _fs(t.amount)} for t in plan])


def triangle_pair_transfer(T1: Polygon, T2: Polygon, delta) -> PiecewiseAffineMap:
    """PL homeomorphism of T1 u T2, fixing its outer boundary, moving area delta from T1 to T2.

    The shared edge's midpoint M moves toward the far vertex of T1 (or of T2
    for negative delta); the map is affine on the four fan triangles around M.
    """
    delta = _q(delta)
    shared = [v for v in T1.vertices if v in T2.vertices]
    if len(T1.vertices) != 3 or len(T2.vertices) != 3 or len(shared) != 2:
        raise PreconditionError("T1 and T2 must be triangles sharing exactly one edge")
    a1, a2 = T1.area, T2.area
    if not (-a2 < delta < a1):
        raise PreconditionError("delta out of range")
    Pp, Qp = shared
    A = next(v for v in T1.vertices if v not in shared)
    B = next(v for v in T2.vertices if v not in shared)
    M = (Pp + Qp).scale(Q(1, 2))
    if delta >= 0:
        M2 = M + (A - M).scale(delta / a1)
    else:
        M2 = M + (B - M).scale(-delta / a2)
    fan = [(A, Pp), (Pp, B), (B, Qp), (Qp, A)]
    pieces = []
    for u, w in fan:
        src = (u, w, M)
        dst = (u, w, M2)
        if cross(*src) == 0 or (cross(*src) > 0) != (cross(*dst) > 0):
            raise PreconditionError("fan retriangulation degenerates for this delta")
        pieces.append(Piece(Polygon(src), Affine.from_triangles(src, dst)))
    m = PiecewiseAffineMap(pieces, [T1, T2])
    m.codomain = [pc.image for pc in pieces]
    return m


def transfer_image_areas(m: PiecewiseAffineMap, T1: Polygon, T2: Polygon) -> tuple:
    """Areas of the images of T1 and T2."""
    out = []
    for T in (T1, T2):
        s = Fraction(0)
        for pc in m.pieces:
            part = clip_convex(pc.polygon, T)
            if part is not None:
                s += part.image(pc.map).area
        out.append(s)
    return tuple(out)


def is_identity(m: PiecewiseAffineMap) -> bool:
    return all(pc.map(v) == v for pc in m.pieces for v in pc.polygon.vertices)
