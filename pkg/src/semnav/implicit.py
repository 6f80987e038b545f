"""R-function implicit representations of polygons as AND-OR trees of halfplanes.

A polygon's implicit function beta is negative strictly inside, zero on the
boundary and positive outside. With unit edge normals the construction is
normalized: for moderate powers p it approximates the Euclidean distance to
the polygon away from the boundary.

Evaluation routines return value, gradient and Hessian in one recursive pass
because the diffeomorphism switches need second derivatives of the collar
functions built from these trees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePolygon, SingularPoint
from .geometry import DEFAULT_EPS, Polygon

# ---------------------------------------------------------------------------
# Tree nodes. vgh() returns (v, gx, gy, hxx, hxy, hyy) as plain floats.
# ---------------------------------------------------------------------------


class Leaf:
    """Halfplane omega(x) = (x - anchor) . normal, positive toward the interior."""

    __slots__ = ("ax", "ay", "nx", "ny")

    def __init__(self, anchor, normal):
        n = np.asarray(normal, float)
        nrm = float(np.hypot(n[0], n[1]))
        if nrm == 0.0:
            raise DegeneratePolygon("zero-length edge normal")
        self.ax, self.ay = float(anchor[0]), float(anchor[1])
        self.nx, self.ny = float(n[0] / nrm), float(n[1] / nrm)

    def value(self, x, y):
        return (x - self.ax) * self.nx + (y - self.ay) * self.ny

    def vgh(self, x, y):
        return ((x - self.ax) * self.nx + (y - self.ay) * self.ny,
                self.nx, self.ny, 0.0, 0.0, 0.0)


class Not:
    __slots__ = ("child",)

    def __init__(self, child):
        self.child = child

    def value(self, x, y):
        return -self.child.value(x, y)

    def vgh(self, x, y):
        v, gx, gy, hxx, hxy, hyy = self.child.vgh(x, y)
        return -v, -gx, -gy, -hxx, -hxy, -hyy


class Combine:
    """Binary R-conjunction (sign=-1) or R-disjunction (sign=+1) of power p."""

    __slots__ = ("left", "right", "p", "sign")

    def __init__(self, kind, left, right, p):
        if p < 1 or int(p) != p:
            raise ValueError("power p must be a positive integer")
        self.left, self.right, self.p = left, right, int(p)
        self.sign = -1.0 if kind == "and" else 1.0

    def value(self, x, y):
        v1 = self.left.value(x, y)
        v2 = self.right.value(x, y)
        s = (abs(v1) ** self.p + abs(v2) ** self.p) ** (1.0 / self.p)
        return v1 + v2 + self.sign * s

    def vgh(self, x, y):
        p, sg = self.p, self.sign
        v1, g1x, g1y, h1xx, h1xy, h1yy = self.left.vgh(x, y)
        v2, g2x, g2y, h2xx, h2xy, h2yy = self.right.vgh(x, y)
        sp = abs(v1) ** p + abs(v2) ** p
        s = sp ** (1.0 / p)
        if s <= 0.0:
            # only at polygon vertices, where the function is non-analytic
            raise SingularPoint("R-function derivative at a vertex")
        # first partials of s wrt the child values
        a1 = _sgn_pow(v1, p - 1) * s ** (1 - p)
        a2 = _sgn_pow(v2, p - 1) * s ** (1 - p)
        # second partials of s wrt the child values
        b11 = (p - 1) * (_sgn_pow(v1, p - 2) * s ** (1 - p)
                         - _sgn_pow(v1, 2 * p - 2) * s ** (1 - 2 * p))
        b22 = (p - 1) * (_sgn_pow(v2, p - 2) * s ** (1 - p)
                         - _sgn_pow(v2, 2 * p - 2) * s ** (1 - 2 * p))
        b12 = (1 - p) * _sgn_pow(v1, p - 1) * _sgn_pow(v2, p - 1) * s ** (1 - 2 * p)
        f1 = 1.0 + sg * a1
        f2 = 1.0 + sg * a2
        v = v1 + v2 + sg * s
        gx = f1 * g1x + f2 * g2x
        gy = f1 * g1y + f2 * g2y
        hxx = (f1 * h1xx + f2 * h2xx
               + sg * (b11 * g1x * g1x + 2 * b12 * g1x * g2x + b22 * g2x * g2x))
        hxy = (f1 * h1xy + f2 * h2xy
               + sg * (b11 * g1x * g1y + b12 * (g1x * g2y + g1y * g2x) + b22 * g2x * g2y))
        hyy = (f1 * h1yy + f2 * h2yy
               + sg * (b11 * g1y * g1y + 2 * b12 * g1y * g2y + b22 * g2y * g2y))
        return v, gx, gy, hxx, hxy, hyy


def _sgn_pow(v, k):
    """v**k for integer k >= 0, preserving the sign convention of odd powers."""
    if k == 0:
        return 1.0
    r = abs(v) ** k
    return r if (k % 2 == 0 or v >= 0) else -r


def r_combine(kind: str, v1: float, v2: float = None, p: int = 2) -> float:
    """Scalar R-function combination of one ('not') or two values."""
    if kind == "not":
        return -v1
    s = (abs(v1) ** p + abs(v2) ** p) ** (1.0 / p)
    if kind == "and":
        return v1 + v2 - s
    if kind == "or":
        return v1 + v2 + s
    raise ValueError(f"unknown R-function kind {kind!r}")


def halfplane_eval(h: Leaf, x) -> float:
    return h.value(float(x[0]), float(x[1]))


@dataclass(frozen=True)
class ImplicitTree:
    """Root node plus the source polygon vertices (for singularity checks)."""

    root: object
    vertices: np.ndarray
    power: int

    def value(self, x, y):
        return self.root.value(x, y)

    def vgh(self, x, y):
        return self.root.vgh(x, y)


# ---------------------------------------------------------------------------
# Polygon -> AND-OR tree construction
# ---------------------------------------------------------------------------

def _hull_index_set(pts: np.ndarray) -> set[int]:
    """Indices of points that are strict convex-hull vertices."""
    n = len(pts)
    order = sorted(range(n), key=lambda i: (pts[i, 0], pts[i, 1]))

    def half(seq):
        chain = []
        for i in seq:
            while len(chain) >= 2:
                u = pts[chain[-1]] - pts[chain[-2]]
                v = pts[i] - pts[chain[-2]]
                if u[0] * v[1] - u[1] * v[0] <= 1e-12 * (np.linalg.norm(u) * np.linalg.norm(v) + 1e-300):
                    chain.pop()
                else:
                    break
            chain.append(i)
        return chain

    lower = half(order)
    upper = half(order[::-1])
    return set(lower[:-1] + upper[:-1])


def _edge_leaf(a, b) -> Leaf:
    d = np.asarray(b, float) - np.asarray(a, float)
    normal = np.array([-d[1], d[0]])  # interior side of a CCW polygon
    return Leaf(a, normal)


def build_polygon_implicit(p: Polygon, power: int = 2) -> ImplicitTree:
    """AND-OR tree for a simple CCW polygon; beta > 0 strictly outside."""
    v = p.vertices
    n = len(v)
    if n < 3:
        raise DegeneratePolygon("need at least 3 vertices")
    ahead = np.roll(v, -1, axis=0) - v
    behind = v - np.roll(v, 1, axis=0)
    cross = behind[:, 0] * ahead[:, 1] - behind[:, 1] * ahead[:, 0]
    convex = cross >= -1e-12 * (np.linalg.norm(behind, axis=1) * np.linalg.norm(ahead, axis=1))

    def chain_tree(start: int, count: int):
        """Tree for the chain of `count` edges starting at vertex index `start`."""
        if count == 1:
            return _edge_leaf(v[start % n], v[(start + 1) % n])
        idxs = [(start + k) % n for k in range(count + 1)]
        pts = v[idxs]
        hull = _hull_index_set(pts)
        splits = [k for k in range(1, count) if k in hull]
        if not splits:
            splits = [count // 2]
        tree = None
        prev = 0
        for k in splits + [count]:
            sub = chain_tree(start + prev, k - prev)
            if tree is None:
                tree = sub
            else:
                kind = "and" if convex[(start + prev) % n] else "or"
                tree = Combine(kind, tree, sub, power)
            prev = k
        return tree

    hull = sorted(_hull_index_set(v))
    if len(hull) < 2:
        raise DegeneratePolygon("degenerate polygon hull")
    tree = None
    for i, h in enumerate(hull):
        nxt = hull[(i + 1) % len(hull)]
        count = (nxt - h) % n or n
        sub = chain_tree(h, count)
        tree = sub if tree is None else Combine("and", tree, sub, power)
    return ImplicitTree(root=Not(tree), vertices=v, power=int(power))


# ---------------------------------------------------------------------------
# Evaluation entry points
# ---------------------------------------------------------------------------

def implicit_eval(t: ImplicitTree, x) -> float:
    return t.value(float(x[0]), float(x[1]))


def _check_not_vertex(t: ImplicitTree, x, tol: float):
    d = t.vertices - np.asarray(x, float)
    if float(np.min(np.hypot(d[:, 0], d[:, 1]))) <= tol:
        raise SingularPoint("gradient queried at a polygon vertex")


def implicit_grad(t: ImplicitTree, x, tol: float = DEFAULT_EPS) -> np.ndarray:
    _check_not_vertex(t, x, tol)
    _, gx, gy, *_ = t.vgh(float(x[0]), float(x[1]))
    return np.array([gx, gy])


def implicit_vgh(t: ImplicitTree, x, tol: float = DEFAULT_EPS):
    """Value, gradient and Hessian at x (raises SingularPoint at vertices)."""
    _check_not_vertex(t, x, tol)
    v, gx, gy, hxx, hxy, hyy = t.vgh(float(x[0]), float(x[1]))
    return v, np.array([gx, gy]), np.array([[hxx, hxy], [hxy, hyy]])
