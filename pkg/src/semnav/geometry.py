"""2D polygon primitives: hulls, booleans, dilation, triangulation, decomposition.

Vertex lists are numpy arrays of shape (n, 2) in counterclockwise order.
Boolean operations and dilation are delegated to shapely; triangulation,
convex decomposition, projections and the triangle dual tree are built here
because downstream modules need full control over their structure.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import shapely
import shapely.geometry as shg
from shapely.geometry.polygon import orient as _sh_orient

from .errors import (
    DegenerateInput,
    DegeneratePolygon,
    DegenerateVertex,
    NegativeRadius,
    NoBoundaryAdjacentTriangle,
    TopologyError,
)

#: Global geometric tolerance (meters); override with SEMNAV_EPS.
DEFAULT_EPS = float(os.environ.get("SEMNAV_EPS", "1e-9"))


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DegenerateInput("expected an (n, 2) array of points")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInput("non-finite coordinates")
    return arr


def signed_area(vertices: np.ndarray) -> float:
    """Signed area of a closed polygon (positive when counterclockwise)."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def dedup_vertices(vertices: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Drop consecutive duplicate vertices (cyclically) within tolerance."""
    out = []
    n = len(vertices)
    for i in range(n):
        if not out or np.linalg.norm(vertices[i] - out[-1]) > eps:
            out.append(vertices[i])
    while len(out) >= 2 and np.linalg.norm(out[-1] - out[0]) <= eps:
        out.pop()
    return np.asarray(out)


def merge_collinear(vertices: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Remove vertices lying (nearly) on the segment joining their neighbours."""
    pts = list(vertices)
    changed = True
    while changed and len(pts) > 3:
        changed = False
        n = len(pts)
        for i in range(n):
            a, b, c = pts[(i - 1) % n], pts[i], pts[(i + 1) % n]
            u, v = b - a, c - b
            cross = u[0] * v[1] - u[1] * v[0]
            if abs(cross) <= rel_tol * (np.linalg.norm(u) * np.linalg.norm(v)) and u @ v > 0.0:
                pts.pop(i)
                changed = True
                break
    return np.asarray(pts)


class Polygon:
    """Simple polygon with counterclockwise vertices."""

    __slots__ = ("vertices",)

    def __init__(self, vertices, eps: float = DEFAULT_EPS, validate: bool = True):
        arr = dedup_vertices(_as_points(vertices), eps)
        if len(arr) < 3:
            raise DegeneratePolygon("polygon needs at least 3 distinct vertices")
        if signed_area(arr) < 0:
            arr = arr[::-1].copy()
        if validate:
            if signed_area(arr) <= eps:
                raise DegeneratePolygon("polygon area below tolerance")
            if not shg.Polygon(arr).is_valid:
                raise DegeneratePolygon("polygon is self-intersecting")
        self.vertices = arr
        self.vertices.setflags(write=False)

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        return f"{type(self).__name__}({self.vertices.tolist()!r})"

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def edges(self):
        """Iterate (start, end) vertex pairs of every edge."""
        v = self.vertices
        return zip(v, np.roll(v, -1, axis=0))

    def to_shapely(self) -> shg.Polygon:
        return shg.Polygon(self.vertices)

    def translated(self, offset) -> "Polygon":
        return type(self)(self.vertices + np.asarray(offset, float), validate=False)

    def transformed(self, pose) -> "Polygon":
        """Apply an SE(2) pose (x, y, theta) to the polygon."""
        x, y, th = pose
        c, s = math.cos(th), math.sin(th)
        rot = np.array([[c, -s], [s, c]])
        return type(self)(self.vertices @ rot.T + np.array([x, y]), validate=False)


class ConvexPolygon(Polygon):
    """Polygon whose interior angles never exceed 180 degrees."""

    def __init__(self, vertices, eps: float = DEFAULT_EPS, validate: bool = True):
        super().__init__(vertices, eps, validate)
        if validate and not is_convex(self.vertices, eps):
            raise DegeneratePolygon("polygon is not convex")


@dataclass(frozen=True)
class Triangle:
    """Triangle with CCW vertices v1, v2, v3."""

    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray

    def __post_init__(self):
        a = signed_area(self.points)
        if a <= 0:
            raise DegeneratePolygon(f"triangle not CCW or degenerate (area {a})")

    @property
    def points(self) -> np.ndarray:
        return np.array([self.v1, self.v2, self.v3])

    @property
    def area(self) -> float:
        return signed_area(self.points)

    @property
    def barycenter(self) -> np.ndarray:
        return (np.asarray(self.v1) + self.v2 + self.v3) / 3.0


def is_convex(vertices: np.ndarray, eps: float = DEFAULT_EPS) -> bool:
    """True when every cross product of consecutive edges is >= -tolerance."""
    v = np.asarray(vertices, float)
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = np.linalg.norm(e, axis=1)
    scale = scale * np.roll(scale, -1)
    return bool(np.all(cross >= -np.maximum(eps, 1e-9 * scale)))


def convex_hull(points) -> ConvexPolygon:
    """Minimal convex polygon containing all input points (monotone chain)."""
    pts = _as_points(points)
    if len(pts) < 3:
        raise DegenerateInput("need at least 3 points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(iterable):
        chain = []
        for p in iterable:
            while len(chain) >= 2:
                u = chain[-1] - chain[-2]
                v = p - chain[-2]
                if u[0] * v[1] - u[1] * v[0] <= 0:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInput("all points collinear")
    return ConvexPolygon(np.asarray(hull))


def from_shapely(geom: shg.Polygon, eps: float = DEFAULT_EPS) -> Polygon:
    """Convert a shapely polygon (no holes) back into a Polygon."""
    if geom.interiors:
        raise TopologyError("polygon with holes is unsupported")
    g = _sh_orient(geom, 1.0)
    return Polygon(np.asarray(g.exterior.coords)[:-1], eps=eps)


def _shapely_components(geom, eps: float, min_area: float) -> list[Polygon]:
    out = []
    for g in getattr(geom, "geoms", [geom]):
        if isinstance(g, shg.Polygon) and not g.is_empty and g.area > max(min_area, eps):
            out.append(from_shapely(g, eps))
    return out


def boolean_op(kind: str, a, b, eps: float = DEFAULT_EPS) -> list[Polygon]:
    """Union / intersection / difference of polygons; result as CCW components."""
    def collect(x):
        polys = [x] if isinstance(x, Polygon) else list(x)
        sh = [p.to_shapely() for p in polys]
        for s in sh:
            if not s.is_valid:
                raise TopologyError("invalid operand polygon")
        return shapely.unary_union(sh)

    sa, sb = collect(a), collect(b)
    if kind == "union":
        res = sa.union(sb)
    elif kind == "intersection":
        res = sa.intersection(sb)
    elif kind == "difference":
        res = sa.difference(sb)
    else:
        raise ValueError(f"unknown boolean kind {kind!r}")
    return _shapely_components(res, eps, min_area=eps)


#: Arc discretization for round dilation: 6 segments/quadrant keeps the chord
#: sagitta under 1% of the radius, and the radius is scaled so the chords
#: circumscribe (rather than inscribe) the true arc.
_ROUND_SEGS = 6
_ROUND_SCALE = 1.0 / math.cos(math.pi / (4 * _ROUND_SEGS))


def dilate(p: Polygon, r: float, style: str = "mitre", eps: float = DEFAULT_EPS) -> Polygon:
    """Conservative polygonal superset of the Minkowski sum of p and a disk of radius r."""
    if r < 0:
        raise NegativeRadius(f"negative dilation radius {r}")
    if r == 0:
        return p
    if style == "mitre":
        res = p.to_shapely().buffer(r, join_style="mitre", mitre_limit=100.0)
        exact = p.to_shapely().buffer(r, quad_segs=32)
        if not res.contains(exact.buffer(-1e-7)):
            res = p.to_shapely().buffer(r * _ROUND_SCALE, quad_segs=_ROUND_SEGS)
    elif style == "round":
        res = p.to_shapely().buffer(r * _ROUND_SCALE, quad_segs=_ROUND_SEGS)
    else:
        raise ValueError(f"unknown dilation style {style!r}")
    if res.geom_type != "Polygon":
        raise TopologyError("dilation produced a non-polygonal result")
    return from_shapely(res, eps)


# ---------------------------------------------------------------------------
# Ear-clipping triangulation and the triangle dual tree
# ---------------------------------------------------------------------------

def _point_in_triangle(p, a, b, c, tol) -> bool:
    d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    d2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
    d3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
    return d1 >= -tol and d2 >= -tol and d3 >= -tol


def ear_clip(p: Polygon, eps: float = DEFAULT_EPS):
    """Triangulate a simple polygon; returns (triangles, vertex-index triples, adjacency).

    The adjacency list pairs triangles sharing a full edge; for a simple
    polygon without holes this dual graph is a tree.
    """
    verts = merge_collinear(dedup_vertices(p.vertices, eps))
    if len(verts) < 3:
        raise DegeneratePolygon("too few vertices after preprocessing")
    scale = float(np.abs(verts).max()) + 1.0
    tol = 1e-12 * scale * scale
    idx = list(range(len(verts)))
    triples: list[tuple[int, int, int]] = []

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(verts) ** 2:
            raise DegenerateVertex("ear clipping failed to terminate")
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = verts[i0], verts[i1], verts[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= tol:
                continue  # reflex or degenerate corner: not an ear
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                if _point_in_triangle(verts[j], a, b, c, tol):
                    ear = False
                    break
            if ear:
                triples.append((i0, i1, i2))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise DegenerateVertex("no ear found; polygon may be degenerate")
    triples.append((idx[0], idx[1], idx[2]))

    triangles = [Triangle(verts[a], verts[b], verts[c]) for a, b, c in triples]
    edge_owner: dict[tuple[int, int], int] = {}
    adjacency: list[tuple[int, int]] = []
    for t, (a, b, c) in enumerate(triples):
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            if key in edge_owner:
                adjacency.append((edge_owner[key], t))
            else:
                edge_owner[key] = t
    return triangles, triples, adjacency


@dataclass
class TriangleTree:
    """Dual tree of an ear-clipping triangulation with per-node purge data."""

    nodes: list[Triangle]
    parent: list[int | None]
    root: int
    purge_order: list[int]
    depth: list[int]
    #: per-node CCW vertices (x1, x2, x3); x1x2 is the edge shared with the
    #: parent (or lying on the enclosing boundary for a boundary-mode root)
    oriented: list[np.ndarray]
    # filled by the diffeo module
    center: list = field(default_factory=list)
    collar: list = field(default_factory=list)
    radius: float | None = None


def _orient_with_shared_edge(shared: set[int], triple, verts) -> np.ndarray:
    ids = list(triple)
    shared_ids = [i for i in ids if i in shared]
    other = [i for i in ids if i not in shared][0]
    a, b = verts[shared_ids[0]], verts[shared_ids[1]]
    c = verts[other]
    pts = np.array([a, b, c])
    if signed_area(pts) < 0:
        pts = np.array([b, a, c])
    return pts


def build_triangle_tree(p: Polygon, mode: str = "interior",
                        boundary: ConvexPolygon | None = None,
                        eps: float = DEFAULT_EPS) -> TriangleTree:
    """Rooted dual tree with purge order in descending depth."""
    triangles, triples, adjacency = ear_clip(p, eps)
    n = len(triangles)
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for a, b in adjacency:
        nbrs[a].append(b)
        nbrs[b].append(a)

    if mode == "interior":
        areas = [t.area for t in triangles]
        best = max(areas) - eps
        root = min(i for i in range(n) if areas[i] >= best)
        root_edge = None
    elif mode == "boundary-touching":
        if boundary is None:
            raise ValueError("boundary-touching mode requires the boundary polygon")
        root, root_edge = _find_boundary_root(triangles, triples, boundary, eps)
    else:
        raise ValueError(f"unknown tree mode {mode!r}")

    parent: list[int | None] = [None] * n
    depth = [0] * n
    seen = [False] * n
    order = [root]
    seen[root] = True
    for u in order:
        for v in sorted(nbrs[u]):
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                depth[v] = depth[u] + 1
                order.append(v)
    if not all(seen):
        raise TopologyError("triangle dual graph is disconnected")

    purge_order = sorted((i for i in range(n) if i != root),
                         key=lambda i: (-depth[i], i))
    purge_order.append(root)

    all_verts = merge_collinear(dedup_vertices(p.vertices, eps))
    oriented = []
    for i in range(n):
        if parent[i] is not None:
            shared = set(triples[i]) & set(triples[parent[i]])
            oriented.append(_orient_with_shared_edge(shared, triples[i], all_verts))
        elif root_edge is not None:
            oriented.append(_orient_with_shared_edge(set(root_edge), triples[i], all_verts))
        else:
            oriented.append(triangles[i].points)
    return TriangleTree(nodes=triangles, parent=parent, root=root,
                        purge_order=purge_order, depth=depth, oriented=oriented,
                        center=[None] * n, collar=[None] * n)


def _find_boundary_root(triangles, triples, boundary: ConvexPolygon, eps: float):
    """Pick the lowest-index triangle with an edge lying on the boundary."""
    tol = max(1e-7, eps)
    bverts = boundary.vertices
    bedges = list(zip(bverts, np.roll(bverts, -1, axis=0)))

    def on_boundary_edge(a, b):
        for p0, p1 in bedges:
            d = p1 - p0
            nrm = np.linalg.norm(d)
            nvec = np.array([-d[1], d[0]]) / nrm
            if abs((a - p0) @ nvec) <= tol and abs((b - p0) @ nvec) <= tol:
                return True
        return False

    for i, t in enumerate(triangles):
        pts = t.points
        ids = triples[i]
        for k in range(3):
            if on_boundary_edge(pts[k], pts[(k + 1) % 3]):
                return i, (ids[k], ids[(k + 1) % 3])
    raise NoBoundaryAdjacentTriangle("no triangle edge lies on the enclosing boundary")


# ---------------------------------------------------------------------------
# Convex decomposition (triangulate, then greedily merge convex neighbours)
# ---------------------------------------------------------------------------

def convex_decompose(p: Polygon, eps: float = DEFAULT_EPS) -> list[ConvexPolygon]:
    """Partition a simple polygon into convex pieces (Hertel-Mehlhorn style)."""
    verts = merge_collinear(dedup_vertices(p.vertices, eps))
    poly = Polygon(verts, validate=False)
    if is_convex(poly.vertices, eps):
        return [ConvexPolygon(poly.vertices, validate=False)]
    _, triples, _ = ear_clip(poly, eps)
    pieces = [list(t) for t in triples]  # vertex-index cycles, CCW

    def merged(pa: list[int], pb: list[int]):
        shared = set(pa) & set(pb)
        if len(shared) != 2:
            return None
        # locate the shared edge in pa (consecutive pair)
        na = len(pa)
        for i in range(na):
            a, b = pa[i], pa[(i + 1) % na]
            if a in shared and b in shared:
                if b not in pb or a not in pb:
                    return None
                j = pb.index(b)
                if pb[(j + 1) % len(pb)] != a:
                    return None
                mid = [pb[(j + 1 + k) % len(pb)] for k in range(1, len(pb) - 1)]
                out = pa[: i + 1] + mid + pa[i + 1:]
                return out
        return None

    changed = True
    while changed:
        changed = False
        for i in range(len(pieces)):
            for j in range(i + 1, len(pieces)):
                cand = merged(pieces[i], pieces[j])
                if cand is None:
                    continue
                cand_pts = merge_collinear(verts[cand], rel_tol=1e-12)
                if is_convex(cand_pts, eps):
                    pieces[i] = cand
                    pieces.pop(j)
                    changed = True
                    break
            if changed:
                break
    return [ConvexPolygon(merge_collinear(verts[c], rel_tol=1e-12), validate=False)
            for c in pieces]


# ---------------------------------------------------------------------------
# Projections and point classification
# ---------------------------------------------------------------------------

def project_to_segment(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    t = float(np.clip((q - a) @ d / max(d @ d, 1e-300), 0.0, 1.0))
    return a + t * d


def project_to_convex(q, c: ConvexPolygon) -> np.ndarray:
    """Metric projection of q onto a convex polygon."""
    q = np.asarray(q, float)
    v = c.vertices
    e = np.roll(v, -1, axis=0) - v
    rel = q[None, :] - v
    if np.all(e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0] >= 0.0):
        return q.copy()
    t = np.clip(np.einsum("ij,ij->i", rel, e) / np.einsum("ij,ij->i", e, e),
                0.0, 1.0)
    proj = v + t[:, None] * e
    d2 = np.einsum("ij,ij->i", proj - q, proj - q)
    return proj[int(np.argmin(d2))]


def point_in_polygon(q, p: Polygon, eps: float = DEFAULT_EPS) -> str:
    """Classify a point as 'inside', 'boundary' or 'outside' a simple polygon."""
    q = np.asarray(q, float)
    v = p.vertices
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        if np.linalg.norm(q - project_to_segment(q, a, b)) <= eps:
            return "boundary"
    inside = False
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        if (a[1] > q[1]) != (b[1] > q[1]):
            xint = a[0] + (q[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if q[0] < xint:
                inside = not inside
    return "inside" if inside else "outside"


def distance_to_polygon(q, p: Polygon) -> float:
    """Unsigned distance from a point to the polygon boundary."""
    q = np.asarray(q, float)
    v = p.vertices
    e = np.roll(v, -1, axis=0) - v
    rel = q[None, :] - v
    t = np.clip(np.einsum("ij,ij->i", rel, e) / np.einsum("ij,ij->i", e, e),
                0.0, 1.0)
    proj = v + t[:, None] * e
    return float(np.sqrt(np.min(np.einsum("ij,ij->i", proj - q, proj - q))))
