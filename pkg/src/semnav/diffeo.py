"""Construction and evaluation of the mapped-space-to-model-space diffeomorphism.

Each consolidated obstacle's triangulation tree induces a sequence of purging
transformations: every leaf triangle is collapsed onto its parent, and the
remaining root triangle is either deformed into a disk (interior obstacles) or
merged into the enclosing-freespace boundary (boundary-touching obstacles).
Every step is

    h(x) = sigma(x) * [c + nu(x) (x - c)] + (1 - sigma(x)) * x

with a C-infinity switch sigma supported inside a convex polygonal collar and
a radial deforming factor nu. The full map is the composition of all steps;
Jacobians and the second partials needed by the differential-drive controller
are accumulated inductively through the composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
import shapely.geometry as shg
import shapely.ops

from .errors import (
    GoalAtCenter,
    InadmissibleCollar,
    OutOfDomain,
    SingularDenominator,
    SingularPoint,
)
from .geometry import (
    DEFAULT_EPS,
    ConvexPolygon,
    Polygon,
    TriangleTree,
    convex_decompose,
    dilate,
    from_shapely,
    is_convex,
    point_in_polygon,
)
from .implicit import ImplicitTree, Not, build_polygon_implicit

_ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])
_I2 = np.eye(2)


@dataclass(frozen=True)
class DiffeoParams:
    """Tunable switch parameters (slope on the purged boundary, collar approach
    rate, switch cutoff distance) plus the R-function power for gamma/delta."""

    mu_gamma: float = 4.0
    mu_delta: float = 0.05
    eps_gamma: float = 2.0
    power: int = 2

    def __post_init__(self):
        if min(self.mu_gamma, self.mu_delta, self.eps_gamma) <= 0:
            raise ValueError("diffeomorphism parameters must be strictly positive")


# ---------------------------------------------------------------------------
# Bump functions
# ---------------------------------------------------------------------------

def zeta(mu: float, chi: float) -> float:
    """C-infinity bump: exp(-mu/chi) for chi > 0, identically 0 for chi <= 0."""
    if chi <= 0.0:
        return 0.0
    return math.exp(-mu / chi)


def zeta_prime(mu: float, chi: float) -> float:
    if chi <= 0.0:
        return 0.0
    z = math.exp(-mu / chi)
    return mu * z / (chi * chi) if z > 0.0 else 0.0


def _zeta_second(mu: float, chi: float) -> float:
    if chi <= 0.0:
        return 0.0
    z = math.exp(-mu / chi)
    return z * mu * (mu - 2.0 * chi) / chi ** 4 if z > 0.0 else 0.0


def eta(mu: float, eps: float, chi: float) -> float:
    """Normalized cutoff: 1 at chi = 0, 0 for chi >= eps."""
    return zeta(mu, eps - chi) / zeta(mu, eps)


def _eta_prime(mu: float, eps: float, chi: float) -> float:
    return -zeta_prime(mu, eps - chi) / zeta(mu, eps)


def _eta_second(mu: float, eps: float, chi: float) -> float:
    return _zeta_second(mu, eps - chi) / zeta(mu, eps)


# ---------------------------------------------------------------------------
# Purge steps
# ---------------------------------------------------------------------------

class PurgeStep:
    """One purging transformation: a leaf collapse or a root deformation."""

    __slots__ = ("kind", "x1", "x2", "x3", "center", "radius", "gamma", "delta",
                 "params", "collar", "normal", "numer", "_cN", "_cd")

    def __init__(self, kind: str, x1, x2, x3, center, collar: ConvexPolygon,
                 params: DiffeoParams, radius: float | None = None):
        if kind not in ("leaf", "root-disk", "root-boundary"):
            raise ValueError(f"unknown purge step kind {kind!r}")
        self.kind = kind
        self.x1 = np.asarray(x1, float)
        self.x2 = np.asarray(x2, float)
        self.x3 = np.asarray(x3, float)
        self.center = np.asarray(center, float)
        self.radius = radius
        self.params = params
        self.collar = collar

        if kind == "root-disk":
            gamma_poly = Polygon(np.array([self.x1, self.x2, self.x3]), validate=False)
            self.normal = None
            self.numer = None
        else:
            gamma_poly = Polygon(
                np.array([self.x3, self.x1, self.center, self.x2]), validate=False)
            e = self.x2 - self.x1
            self.normal = _ROT90 @ (e / np.linalg.norm(e))
            self.numer = float((self.x1 - self.center) @ self.normal)
        self.gamma = build_polygon_implicit(gamma_poly, params.power)
        beta = build_polygon_implicit(collar, params.power)
        self.delta = ImplicitTree(root=Not(beta.root), vertices=beta.vertices,
                                  power=beta.power)
        # collar halfplanes for the fast outside test: inside iff cN @ x <= cd
        v = collar.vertices
        edge = np.roll(v, -1, axis=0) - v
        nrm = np.stack([edge[:, 1], -edge[:, 0]], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        self._cN = nrm
        self._cd = np.einsum("ij,ij->i", nrm, v)

    def in_collar(self, x, tol: float = 0.0) -> bool:
        return bool(np.all(self._cN @ x <= self._cd + tol))

    @property
    def vertices(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3])


def _switch_terms(s: PurgeStep, x: np.ndarray, order: int):
    """sigma and (optionally) its gradient and Hessian at x."""
    prm = s.params
    if s.kind != "root-disk" and (
            math.hypot(x[0] - s.x1[0], x[1] - s.x1[1]) <= DEFAULT_EPS
            or math.hypot(x[0] - s.x2[0], x[1] - s.x2[1]) <= DEFAULT_EPS):
        if order > 0:
            raise SingularPoint("switch derivatives at a purged-edge vertex")
        return 1.0, None, None
    if not s.in_collar(x):
        return 0.0, None, None

    ggrad = ghess = None
    if order == 0:
        gval = s.gamma.value(x[0], x[1])
    else:
        gval, ggrad, ghess = _vgh(s.gamma, x)
    if abs(gval) <= 1e-13:
        # on the purged boundary gamma is exactly zero; rounding noise here
        # would be amplified without bound where the collar is thin
        gval = 0.0
    a = eta(prm.mu_gamma, prm.eps_gamma, gval)
    if a == 0.0:
        return 0.0, (np.zeros(2) if order else None), (np.zeros((2, 2)) if order > 1 else None)

    d = x - s.center
    r = float(np.hypot(d[0], d[1]))
    if r <= DEFAULT_EPS:
        raise SingularPoint("switch evaluated at the transformation center")
    dgrad = dhess = None
    if order == 0:
        dval = s.delta.value(x[0], x[1])
    else:
        dval, dgrad, dhess = _vgh(s.delta, x)
    w = dval / r
    b = zeta(prm.mu_delta, w)
    if b == 0.0:
        return 0.0, (np.zeros(2) if order else None), (np.zeros((2, 2)) if order > 1 else None)

    den = a * b + 1.0 - a
    if den <= 0.0:  # marginal collar geometry: outside the smooth support
        return 0.0, (np.zeros(2) if order else None), (np.zeros((2, 2)) if order > 1 else None)
    sigma = a * b / den
    if order == 0:
        return sigma, None, None

    # chain for a = eta(gamma(x))
    ep = _eta_prime(prm.mu_gamma, prm.eps_gamma, gval)
    ga = ep * ggrad
    # chain for b = zeta(delta(x)/|x-c|)
    gw = dgrad / r - (dval / r ** 3) * d
    zp = zeta_prime(prm.mu_delta, w)
    gb = zp * gw
    sa = b / den ** 2
    sb = a * (1.0 - a) / den ** 2
    gs = sa * ga + sb * gb
    if order == 1:
        return sigma, gs, None

    es = _eta_second(prm.mu_gamma, prm.eps_gamma, gval)
    Ha = es * np.outer(ggrad, ggrad) + ep * ghess
    Hw = (dhess / r
          - (np.outer(dgrad, d) + np.outer(d, dgrad)) / r ** 3
          + dval * (3.0 * np.outer(d, d) / r ** 5 - _I2 / r ** 3))
    zs = _zeta_second(prm.mu_delta, w)
    Hb = zs * np.outer(gw, gw) + zp * Hw
    saa = -2.0 * b * (b - 1.0) / den ** 3
    sab = 1.0 / den ** 2 - 2.0 * a * b / den ** 3
    sbb = -2.0 * a * a * (1.0 - a) / den ** 3
    Hs = (sa * Ha + sb * Hb + saa * np.outer(ga, ga)
          + sab * (np.outer(ga, gb) + np.outer(gb, ga)) + sbb * np.outer(gb, gb))
    return sigma, gs, Hs


def _vgh(tree: ImplicitTree, x):
    v, gx, gy, hxx, hxy, hyy = tree.vgh(x[0], x[1])
    return v, np.array([gx, gy]), np.array([[hxx, hxy], [hxy, hyy]])


def switch_eval(s: PurgeStep, x) -> float:
    """Switch value in [0, 1]: 1 on the purged boundary, 0 outside the collar."""
    x = np.asarray(x, float)
    if s.kind != "root-disk" and (
            np.linalg.norm(x - s.x1) <= DEFAULT_EPS
            or np.linalg.norm(x - s.x2) <= DEFAULT_EPS):
        return 1.0
    return _switch_terms(s, x, order=0)[0]


def _deforming_terms(s: PurgeStep, x: np.ndarray, order: int):
    """nu and (optionally) gradient / Hessian at x."""
    d = x - s.center
    if s.kind == "root-disk":
        r = float(np.hypot(d[0], d[1]))
        if r <= DEFAULT_EPS:
            raise SingularDenominator("deforming factor at the disk center")
        nu = s.radius / r
        if order == 0:
            return nu, None, None
        gn = -(s.radius / r ** 3) * d
        if order == 1:
            return nu, gn, None
        Hn = s.radius * (3.0 * np.outer(d, d) - r * r * _I2) / r ** 5
        return nu, gn, Hn
    q = float(d @ s.normal)
    if abs(q) <= DEFAULT_EPS:
        raise SingularDenominator("deforming factor on the line through the center")
    nu = s.numer / q
    if order == 0:
        return nu, None, None
    gn = -(s.numer / q ** 2) * s.normal
    if order == 1:
        return nu, gn, None
    Hn = (2.0 * s.numer / q ** 3) * np.outer(s.normal, s.normal)
    return nu, gn, Hn


def deforming_factor(s: PurgeStep, x) -> float:
    return _deforming_terms(s, np.asarray(x, float), order=0)[0]


def purge_map(s: PurgeStep, x) -> np.ndarray:
    """h(x): identity outside the collar, boundary of gamma onto its target."""
    x = np.asarray(x, float)
    sigma, _, _ = _switch_terms(s, x, order=0)
    if sigma == 0.0:
        return x.copy()
    nu = _deforming_terms(s, x, order=0)[0]
    return sigma * (s.center + nu * (x - s.center)) + (1.0 - sigma) * x


def _step_jacobian(s: PurgeStep, x: np.ndarray, second: bool):
    """h(x), D_x h and (optionally) the tensor S[m,r,q] = d[Dh]_mr / dx_q."""
    order = 2 if second else 1
    sigma, gs, Hs = _switch_terms(s, x, order)
    if sigma == 0.0 and (gs is None or not gs.any()):
        return x.copy(), None, None  # identity step
    nu, gn, Hn = _deforming_terms(s, x, order)
    d = x - s.center
    h = sigma * (s.center + nu * d) + (1.0 - sigma) * x
    J = ((nu - 1.0) * np.outer(d, gs) + sigma * np.outer(d, gn)
         + (1.0 + sigma * (nu - 1.0)) * _I2)
    if not second:
        return h, J, None
    S = np.zeros((2, 2, 2))
    S += (nu - 1.0) * gs[None, :, None] * _I2[:, None, :]
    S += d[:, None, None] * gs[None, :, None] * gn[None, None, :]
    S += (nu - 1.0) * d[:, None, None] * Hs[None, :, :]
    S += d[:, None, None] * gs[None, None, :] * gn[None, :, None]
    S += sigma * gn[None, :, None] * _I2[:, None, :]
    S += sigma * d[:, None, None] * Hn[None, :, :]
    S += sigma * gn[None, None, :] * _I2[:, :, None]
    S += (nu - 1.0) * gs[None, None, :] * _I2[:, :, None]
    return h, J, S


def purge_map_jacobian(s: PurgeStep, x, second: bool = True):
    """Analytic D_x h (2x2) and optional second-partial tensor at x."""
    x = np.asarray(x, float)
    for v in (s.x1, s.x2, s.x3):
        if np.linalg.norm(x - v) <= DEFAULT_EPS:
            raise SingularPoint("Jacobian queried at a triangle vertex")
    h, J, S = _step_jacobian(s, x, second)
    if J is None:
        J = _I2.copy()
        S = np.zeros((2, 2, 2))
    elif S is None and second:
        S = np.zeros((2, 2, 2))
    return (J, S) if second else (J, None)


# ---------------------------------------------------------------------------
# Snapshots: ordered step sequences realizing the full map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffeoSnapshot:
    """Immutable ordered sequence of purge steps for one hybrid mode."""

    steps: tuple
    mode: frozenset
    model_disks: tuple  # ((center, radius), ...) for interior obstacles
    obstacles: tuple    # consolidated mapped-space polygons (for domain checks)

    def is_identity(self) -> bool:
        return not self.steps


@dataclass
class ObstacleData:
    """A consolidated obstacle with its triangulation tree and collar data."""

    polygon: Polygon
    tree: TriangleTree
    kind: str  # 'disk' | 'boundary'
    clearance: float


@dataclass
class CollarContext:
    """Everything a collar needs to avoid: the world around one obstacle."""

    fe: ConvexPolygon
    obstacles: list
    index: int
    unknown: list = field(default_factory=list)


def global_purge_order(obstacles) -> list:
    """(obstacle, node) pairs: all leaves by descending depth, then all roots."""
    leaves, roots = [], []
    for ci, obs in enumerate(obstacles):
        for ni in obs.tree.purge_order:
            if ni == obs.tree.root:
                roots.append((ci, ni))
            else:
                leaves.append((ci, ni))
    leaves.sort(key=lambda cn: (-obstacles[cn[0]].tree.depth[cn[1]], cn[0], cn[1]))
    return leaves + roots


def compute_centers(obs: ObstacleData, fe: ConvexPolygon):
    """Deterministic admissible centers (and radius for interior obstacles)."""
    tree = obs.tree
    for ni in range(len(tree.nodes)):
        x1, x2, x3 = tree.oriented[ni]
        if ni != tree.root:
            parent = tree.nodes[tree.parent[ni]]
            tree.center[ni] = _leaf_center(x1, x2, x3, parent)
        elif obs.kind == "disk":
            tri = tree.nodes[ni]
            c = tri.barycenter
            tree.center[ni] = c
            tree.radius = 0.5 * _dist_to_triangle_boundary(c, tri.points)
        else:
            m = 0.5 * (x1 + x2)
            c = m + 0.25 * (m - x3)
            if point_in_polygon(c, fe) != "outside":
                raise InadmissibleCollar(
                    "boundary-root center failed to leave the enclosing freespace")
            tree.center[ni] = c


def _leaf_center(x1, x2, x3, parent) -> np.ndarray:
    """Point on the median from x3, strictly inside the parent triangle."""
    m = 0.5 * (x1 + x2)
    u = m - x3  # median direction; t=1 at the shared edge midpoint
    bp = parent.barycenter
    cand = 0.5 * (m + bp)
    t_cand = float((cand - x3) @ u / (u @ u))
    t_exit = _ray_exit(x3, u, parent.points)
    if not (1.0 + 1e-9 < t_cand < t_exit - 1e-9):
        t_cand = 1.0 + 0.5 * (t_exit - 1.0)
    c = x3 + t_cand * u
    if _point_in_triangle_strict(c, parent.points) is False:
        raise InadmissibleCollar("no admissible center inside the parent triangle")
    return c


def _ray_exit(origin, direction, tri_pts) -> float:
    """Largest t with origin + t*direction inside the triangle."""
    t_hi = math.inf
    for i in range(3):
        a, b = tri_pts[i], tri_pts[(i + 1) % 3]
        e = b - a
        n = np.array([e[1], -e[0]])  # outward for CCW triangle
        dn = float(direction @ n)
        if dn > 1e-15:
            t = float((a - origin) @ n) / dn
            t_hi = min(t_hi, t)
    return t_hi


def _point_in_triangle_strict(p, tri_pts) -> bool:
    for i in range(3):
        a, b = tri_pts[i], tri_pts[(i + 1) % 3]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) <= 1e-12:
            return False
    return True


def _dist_to_triangle_boundary(p, tri_pts) -> float:
    best = math.inf
    for i in range(3):
        a, b = tri_pts[i], tri_pts[(i + 1) % 3]
        e = b - a
        t = np.clip((p - a) @ e / (e @ e), 0, 1)
        best = min(best, float(np.linalg.norm(p - (a + t * e))))
    return best


# -- collar construction ----------------------------------------------------

_BIG = 1e6


def _halfplane_polygon(point, normal) -> shg.Polygon:
    """Large polygon approximating {z : (z - point) . normal <= 0}."""
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    t = np.array([-n[1], n[0]])
    p = np.asarray(point, float)
    return shg.Polygon([p + _BIG * t, p - _BIG * t,
                        p - _BIG * t - _BIG * n, p + _BIG * t - _BIG * n])


def _clip_halfplane(geom, point, normal):
    return geom.intersection(_halfplane_polygon(point, normal))


def _wedge_halfplanes(x1, x2, x3, c):
    """Halfplanes bounded by the lines x1-c and c-x2, containing the triangle."""
    out = []
    for endpoint, witness in ((x1, x2), (x2, x1)):
        u = endpoint - c
        n = _ROT90 @ u
        if (witness - c) @ n < 0:
            n = -n
        out.append((c, -n))  # keep side where (z - c) . n >= 0
    return out


def _fe_edge_halfplanes(fe: ConvexPolygon, skip_line=None, tol=1e-7):
    """Inward halfplanes of the enclosing freespace, optionally skipping the
    edge collinear with the segment skip_line = (p, q)."""
    out = []
    v = fe.vertices
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        e = b - a
        n_in = _ROT90 @ (e / np.linalg.norm(e))  # inward for CCW boundary
        if skip_line is not None:
            p, q = skip_line
            if abs((p - a) @ n_in) <= tol and abs((q - a) @ n_in) <= tol:
                continue
        out.append((a, -n_in))
    return out


def _bisector_halfplane(keep: shg.Polygon, avoid: shg.Polygon):
    p, q = shapely.ops.nearest_points(keep, avoid)
    p = np.array([p.x, p.y])
    q = np.array([q.x, q.y])
    n = q - p
    nn = np.linalg.norm(n)
    if nn <= 1e-12:
        raise InadmissibleCollar("obstacles touch; no separating bisector exists")
    return (0.5 * (p + q), n / nn)


def _contains_polygon(region: shg.Polygon, poly: shg.Polygon, tol=1e-9) -> bool:
    return poly.difference(region.buffer(1e-9)).area <= tol


def compute_collars(obs: ObstacleData, context: CollarContext,
                    retries: int = 3) -> None:
    """Fill obs.tree.collar with admissible convex collars (Definitions 3/5/7)."""
    order = global_purge_order(context.obstacles)
    rank = {cn: k for k, cn in enumerate(order)}
    ci = context.index
    tree = obs.tree
    fe_sh = context.fe.to_shapely()
    unknown_sh = [u.to_shapely() for u in context.unknown]

    for ni in tree.purge_order:
        x1, x2, x3 = tree.oriented[ni]
        c = tree.center[ni]
        eps = obs.clearance
        last_err = None
        for _ in range(retries + 1):
            try:
                if ni == tree.root and obs.kind == "disk":
                    collar = _root_disk_collar(obs, ni, context, eps, unknown_sh)
                elif ni == tree.root:
                    collar = _root_boundary_collar(obs, ni, context, eps, unknown_sh)
                else:
                    collar = _leaf_collar(obs, ni, context, eps, rank, unknown_sh)
                tree.collar[ni] = collar
                break
            except InadmissibleCollar as err:
                last_err = err
                eps *= 0.5
        else:
            raise InadmissibleCollar(
                f"no admissible collar for node {ni}: {last_err}")


def _gamma_quad(x1, x2, x3, c) -> Polygon:
    return Polygon(np.array([x3, x1, c, x2]), validate=False)


def _root_disk_collar(obs, ni, context, eps, unknown_sh) -> ConvexPolygon:
    tri = obs.tree.nodes[ni]
    tri_sh = shg.Polygon(tri.points)
    region = dilate(Polygon(tri.points, validate=False), eps).to_shapely()
    for pt, n in _fe_edge_halfplanes(context.fe):
        region = _clip_halfplane(region, pt, n)
    for cj, other in enumerate(context.obstacles):
        if cj == context.index:
            continue
        other_tri = shg.Polygon(other.tree.nodes[other.tree.root].points)
        region = _clip_halfplane(region, *_bisector_halfplane(tri_sh, other_tri))
    for u in unknown_sh:
        region = _clip_halfplane(region, *_bisector_halfplane(tri_sh, u))
    return _finish_collar(region, tri_sh)


def _root_boundary_collar(obs, ni, context, eps, unknown_sh) -> ConvexPolygon:
    x1, x2, x3 = obs.tree.oriented[ni]
    c = obs.tree.center[ni]
    gamma = _gamma_quad(x1, x2, x3, c)
    gamma_sh = gamma.to_shapely()
    region = dilate(gamma, eps).to_shapely()
    for pt, n in _wedge_halfplanes(x1, x2, x3, c):
        region = _clip_halfplane(region, pt, n)
    for pt, n in _fe_edge_halfplanes(context.fe, skip_line=(x1, x2)):
        region = _clip_halfplane(region, pt, n)
    for cj, other in enumerate(context.obstacles):
        if cj == context.index:
            continue
        other_tri = shg.Polygon(other.tree.nodes[other.tree.root].points)
        region = _clip_halfplane(region, *_bisector_halfplane(gamma_sh, other_tri))
    for u in unknown_sh:
        region = _clip_halfplane(region, *_bisector_halfplane(gamma_sh, u))
    return _finish_collar(region, gamma_sh)


def _leaf_collar(obs, ni, context, eps, rank, unknown_sh) -> ConvexPolygon:
    x1, x2, x3 = obs.tree.oriented[ni]
    c = obs.tree.center[ni]
    gamma = _gamma_quad(x1, x2, x3, c)
    gamma_sh = gamma.to_shapely()
    region = dilate(gamma, eps).to_shapely()
    for pt, n in _wedge_halfplanes(x1, x2, x3, c):
        region = _clip_halfplane(region, pt, n)
    for pt, n in _fe_edge_halfplanes(context.fe):
        region = _clip_halfplane(region, pt, n)
    my_rank = rank[(context.index, ni)]
    parent = obs.tree.parent[ni]
    cut = []
    for cj, other in enumerate(context.obstacles):
        for nj in range(len(other.tree.nodes)):
            if cj == context.index and nj in (ni, parent):
                continue
            # other obstacles are cut at every rank: once purged, their
            # boundary becomes a disk inside the root triangle and must
            # still not be deformed by this collar
            if cj != context.index or rank[(cj, nj)] > my_rank:
                cut.append(shg.Polygon(other.tree.nodes[nj].points))
    cut.extend(unknown_sh)
    if cut:
        region = region.difference(shapely.unary_union(cut))
    return _finish_collar(region, gamma_sh, decompose=True)


def _finish_collar(region, gamma_sh, decompose: bool = False) -> ConvexPolygon:
    """Select the convex piece of `region` containing gamma."""
    pieces = [g for g in getattr(region, "geoms", [region])
              if isinstance(g, shg.Polygon) and not g.is_empty]
    host = next((g for g in pieces if _contains_polygon(g, gamma_sh, tol=1e-9)), None)
    if host is None:
        raise InadmissibleCollar("clipped collar region no longer contains gamma")
    if host.interiors:
        raise InadmissibleCollar("collar region has holes")
    host_poly = from_shapely(host)
    candidates = convex_decompose(host_poly) if decompose else [
        ConvexPolygon(host_poly.vertices, validate=False)]
    for piece in candidates:
        piece_sh = shg.Polygon(piece.vertices)
        if not piece_sh.is_valid:
            continue
        if _contains_polygon(piece_sh, gamma_sh, tol=1e-9):
            if not is_convex(piece.vertices, 1e-7):
                raise InadmissibleCollar("selected collar piece is not convex")
            return piece
    raise InadmissibleCollar("no convex piece of the collar region contains gamma")


# -- assembly ----------------------------------------------------------------

def build_snapshot(obstacles, mode, params: DiffeoParams) -> DiffeoSnapshot:
    """Assemble the ordered purge steps for all obstacles of one hybrid mode."""
    steps = []
    for ci, ni in global_purge_order(obstacles):
        obs = obstacles[ci]
        tree = obs.tree
        x1, x2, x3 = tree.oriented[ni]
        collar = tree.collar[ni]
        if collar is None:
            raise InadmissibleCollar(f"missing collar for node {ni}")
        if ni != tree.root:
            kind, radius = "leaf", None
        elif obs.kind == "disk":
            kind, radius = "root-disk", tree.radius
        else:
            kind, radius = "root-boundary", None
        steps.append(PurgeStep(kind, x1, x2, x3, tree.center[ni], collar,
                               params, radius=radius))
    disks = tuple((tuple(o.tree.center[o.tree.root]), o.tree.radius)
                  for o in obstacles if o.kind == "disk")
    return DiffeoSnapshot(steps=tuple(steps), mode=frozenset(mode),
                          model_disks=disks,
                          obstacles=tuple(o.polygon for o in obstacles))


# ---------------------------------------------------------------------------
# Full-map evaluation
# ---------------------------------------------------------------------------

def diffeo_eval(snap: DiffeoSnapshot, x, check_domain: bool = False) -> np.ndarray:
    """Phi(x): composition of all purge steps in snapshot order."""
    y = np.asarray(x, float).copy()
    if check_domain:
        for poly in snap.obstacles:
            if point_in_polygon(y, poly) == "inside":
                raise OutOfDomain("point lies inside a mapped obstacle")
    for s in snap.steps:
        y = purge_map(s, y)
    return y


def diffeo_jacobian(snap: DiffeoSnapshot, x, second: bool = True):
    """(Phi(x), D_x Phi, second-partial tensor T[m,l,n] = d[J]_ml / dx_n)."""
    y = np.asarray(x, float).copy()
    J = _I2.copy()
    T = np.zeros((2, 2, 2)) if second else None
    for s in snap.steps:
        for v in (s.x1, s.x2, s.x3):
            if abs(y[0] - v[0]) <= DEFAULT_EPS and abs(y[1] - v[1]) <= DEFAULT_EPS:
                raise SingularPoint("Jacobian queried at a triangle vertex")
        h, Dh, S = _step_jacobian(s, y, second)
        if Dh is None:
            continue  # identity step at this point
        if second:
            T = (np.einsum("mr,rln->mln", Dh, T)
                 + np.einsum("rl,sn,mrs->mln", J, J, S))
        J = Dh @ J
        y = h
    return y, J, T


def diffeo_inverse(snap: DiffeoSnapshot, y, x0=None, tol: float = 1e-12,
                   max_iter: int = 100) -> np.ndarray:
    """Invert Phi numerically by damped Newton iteration (diagnostic only)."""
    y = np.asarray(y, float)

    def in_domain(p):
        # the formulas extend inside the obstacles but are only injective on
        # the freespace, so keep the iterates out of the obstacle interiors
        return all(point_in_polygon(p, ob) == "outside" for ob in snap.obstacles)

    if x0 is not None:
        x = np.asarray(x0, float).copy()
    else:
        # seed from whichever candidate already sits closest in image space:
        # y itself, plus points just outside every obstacle boundary
        candidates = [y.copy()]
        for ob in snap.obstacles:
            centroid = ob.vertices.mean(axis=0)
            for a, b in ob.edges():
                for p in (a, 0.5 * (a + b)):
                    d = p - centroid
                    candidates.append(p + d / max(float(np.hypot(*d)), 1e-12)
                                      * 1e-3)
        candidates = [c for c in candidates if in_domain(c)]
        x = min(candidates,
                key=lambda c: float(np.sum((diffeo_eval(snap, c) - y) ** 2)))

    for _ in range(max_iter):
        fx, J, _ = diffeo_jacobian(snap, x, second=False)
        r = fx - y
        if float(r @ r) < tol * tol:
            return x
        step = np.linalg.solve(J, r)
        lam = 1.0
        base = float(r @ r)
        for _ in range(40):
            xn = x - lam * step
            fn = diffeo_eval(snap, xn)
            if float((fn - y) @ (fn - y)) < base and in_domain(xn):
                x = xn
                break
            lam *= 0.5
        else:
            break
    return x


def compute_saddles(snap: DiffeoSnapshot, goal) -> list:
    """Model-space saddle points antipodal to the goal on each model disk."""
    yg = diffeo_eval(snap, np.asarray(goal, float))
    out = []
    for center, radius in snap.model_disks:
        c = np.asarray(center, float)
        dvec = yg - c
        n = float(np.linalg.norm(dvec))
        if n <= DEFAULT_EPS:
            raise GoalAtCenter("transformed goal coincides with a disk center")
        out.append(c - radius * dvec / n)
    return out


def grid_eval(snap: DiffeoSnapshot, bounds, n: int):
    """(x, y, det J, Phi_x, Phi_y) rows over an n-by-n grid (NaN off-domain)."""
    (xmin, ymin), (xmax, ymax) = bounds
    xs = np.linspace(xmin, xmax, n)
    ys = np.linspace(ymin, ymax, n)
    rows = []
    for yv in ys:
        for xv in xs:
            p = np.array([xv, yv])
            if any(point_in_polygon(p, poly) != "outside" for poly in snap.obstacles):
                rows.append((xv, yv, math.nan, math.nan, math.nan))
                continue
            try:
                img, J, _ = diffeo_jacobian(snap, p, second=False)
                rows.append((xv, yv, float(np.linalg.det(J)), img[0], img[1]))
            except (SingularPoint, SingularDenominator):
                rows.append((xv, yv, math.nan, math.nan, math.nan))
    return rows
