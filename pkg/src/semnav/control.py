"""Reactive control laws in model space and their pullback through the map.

The model-space law moves toward the projection of the transformed goal onto
a convex local freespace cell (a Voronoi-style cell bounded by bisectors to
the nearest obstacle points). Fully actuated robots pull the law back through
the map Jacobian; differential-drive robots use an SE(2) lift whose angular
component needs second partials of the map. Adaptive gains keep both inputs
inside hard bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffeo import DiffeoSnapshot, compute_saddles, diffeo_eval, diffeo_jacobian
from .errors import EmptyCell, SingularJacobian
from .geometry import ConvexPolygon, project_to_convex
from .world import ControllerParams

_CIRCLE_SEGS = 32
_UNIT_CIRCLE = np.stack(
    [np.cos(np.linspace(0, 2 * math.pi, _CIRCLE_SEGS, endpoint=False)),
     np.sin(np.linspace(0, 2 * math.pi, _CIRCLE_SEGS, endpoint=False))], axis=1)


def _clip_halfplane(verts: np.ndarray, n: np.ndarray, d: float) -> np.ndarray:
    """Clip a convex CCW polygon by {q : n . q <= d}.

    Convexity means the kept vertices form one contiguous arc, so the result
    is that arc plus (at most) two edge crossing points.
    """
    if len(verts) == 0:
        return verts
    val = verts @ n - d
    inside = val <= 0.0
    if inside.all():
        return verts
    if not inside.any():
        return verts[:0]
    m = len(verts)
    prev = np.empty_like(inside)
    prev[0] = inside[-1]
    prev[1:] = inside[:-1]
    starts = np.nonzero(inside & ~prev)[0]
    if len(starts) != 1:  # numerically degenerate boundary grazing
        return _clip_halfplane_slow(verts, val)
    j = int(starts[0])
    idx = np.arange(j, j + m) % m
    k = int(np.argmin(inside[idx]))  # length of the kept arc
    arc = verts[idx[:k]]
    ja, jb = (j - 1) % m, j
    ea, eb = int(idx[k - 1]), int(idx[k])
    pieces = [arc]
    if val[ja] != val[jb]:
        t = val[ja] / (val[ja] - val[jb])
        pieces.insert(0, (verts[ja] + t * (verts[jb] - verts[ja]))[None, :])
    if val[ea] != val[eb]:
        t = val[ea] / (val[ea] - val[eb])
        pieces.append((verts[ea] + t * (verts[eb] - verts[ea]))[None, :])
    out = np.concatenate(pieces, axis=0)
    # drop near-duplicate consecutive vertices to keep the cell small
    diff = out - out[np.arange(-1, len(out) - 1)]
    keep = np.einsum("ij,ij->i", diff, diff) > 1e-24
    return out[keep] if keep.any() else out[:1]


def _clip_halfplane_slow(verts: np.ndarray, val: np.ndarray) -> np.ndarray:
    out = []
    m = len(verts)
    for i in range(m):
        a, b = verts[i], verts[(i + 1) % m]
        va, vb = val[i], val[(i + 1) % m]
        if va <= 0:
            out.append(a)
        if (va < 0) != (vb < 0) and va != vb:
            t = va / (va - vb)
            if 0.0 < t < 1.0:
                out.append(a + t * (b - a))
    return np.asarray(out).reshape(-1, 2)


def local_freespace(y, model_disks, unknown_points, r_model: float,
                    fe: ConvexPolygon) -> ConvexPolygon:
    """Convex cell around y bounded by obstacle bisectors, the sensing disk
    (32-gon of radius r_model / 2) and the enclosing freespace."""
    y = np.asarray(y, float)
    verts = y[None, :] + 0.5 * r_model * _UNIT_CIRCLE
    fv = fe.vertices
    for i in range(len(fv)):
        a, b = fv[i], fv[(i + 1) % len(fv)]
        e = b - a
        n = np.array([e[1], -e[0]])  # outward for CCW
        verts = _clip_halfplane(verts, n, float(n @ a))
        if len(verts) < 3:
            raise EmptyCell("local freespace collapsed at the boundary")

    proj_pts = []
    for center, radius in model_disks:
        c = np.asarray(center, float)
        dvec = y - c
        dist = float(np.linalg.norm(dvec))
        if dist - radius >= r_model or dist <= 1e-12:
            continue
        proj_pts.append(c + radius * dvec / dist)
    if unknown_points is not None and len(unknown_points):
        pts = np.asarray(unknown_points, float)
        close = np.linalg.norm(pts - y, axis=1) < r_model
        proj_pts.extend(pts[close])
    if len(proj_pts) > 1:
        # nearest bisectors first: most later ones then miss the shrunk cell
        proj_pts.sort(key=lambda p: (p[0] - y[0]) ** 2 + (p[1] - y[1]) ** 2)
    for p in proj_pts:
        n = p - y
        d = float(n @ (0.5 * (p + y)))
        verts = _clip_halfplane(verts, n, d)
        if len(verts) < 3:
            raise EmptyCell("local freespace collapsed against an obstacle")
    e = np.roll(verts, -1, axis=0) - verts
    rel = y[None, :] - verts
    if np.any(e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0] < -1e-12):
        raise EmptyCell("robot position left its local freespace cell")
    return ConvexPolygon(verts, validate=False)


def fully_actuated_model_input(y, goal_model, lf: ConvexPolygon) -> np.ndarray:
    """Model-space law: move toward the projected goal inside the cell."""
    y = np.asarray(y, float)
    return project_to_convex(np.asarray(goal_model, float), lf) - y


def fully_actuated_input(x, snap: DiffeoSnapshot, goal, fe: ConvexPolygon,
                         unknown_points, r_model: float,
                         params: ControllerParams, goal_model=None) -> np.ndarray:
    """Bounded physical-space input u = k uhat / (|uhat| + eps_u)."""
    x = np.asarray(x, float)
    y, J, _ = diffeo_jacobian(snap, x, second=False)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if abs(det) < 1e-14:
        raise SingularJacobian("map Jacobian numerically singular")
    if goal_model is None:
        goal_model = diffeo_eval(snap, np.asarray(goal, float))
    lf = local_freespace(y, snap.model_disks, unknown_points, r_model, fe)
    v = fully_actuated_model_input(y, goal_model, lf)
    uhat = np.linalg.solve(J, v)
    return params.k * uhat / (float(np.linalg.norm(uhat)) + params.eps_u)


# ---------------------------------------------------------------------------
# Differential drive
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelLift:
    """SE(2) lift of the unicycle state through the map."""

    y: np.ndarray       # Phi(x)
    phi: float          # model-space heading xi(x, psi)
    e: np.ndarray       # D_x Phi [cos psi, sin psi]
    J: np.ndarray
    T: np.ndarray       # T[m, l, n] = d J[m, l] / d x_n
    psi: float


def se2_lift(state, snap: DiffeoSnapshot, second: bool = True) -> ModelLift:
    """Lift (x, psi) to (Phi(x), xi) with the Jacobian data the law needs."""
    state = np.asarray(state, float)
    x, psi = state[:2], float(state[2])
    y, J, T = diffeo_jacobian(snap, x, second=second)
    heading = np.array([math.cos(psi), math.sin(psi)])
    e = J @ heading
    return ModelLift(y=y, phi=math.atan2(e[1], e[0]), e=e, J=J, T=T, psi=psi)


def _line_cell_projection(y, direction, target, lf: ConvexPolygon) -> float:
    """Signed offset along `direction` of the projection of `target` onto the
    segment (line through y along direction) intersected with the cell."""
    v = lf.vertices
    e = np.roll(v, -1, axis=0) - v
    n = np.stack([e[:, 1], -e[:, 0]], axis=1)  # outward
    dn = n @ direction
    rhs = np.einsum("ij,ij->i", v - y[None, :], n)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = rhs / dn
    pos = dn > 1e-15
    neg = dn < -1e-15
    t_hi = float(np.min(t[pos])) if pos.any() else math.inf
    t_lo = float(np.max(t[neg])) if neg.any() else -math.inf
    t_star = float((np.asarray(target, float) - y) @ direction)
    return min(max(t_star, min(t_lo, 0.0)), max(t_hi, 0.0))


def diffdrive_model_inputs(lift: ModelLift, goal_model, lf: ConvexPolygon):
    """Reference linear and angular model inputs (vhat, omegahat)."""
    y = lift.y
    yd = np.asarray(goal_model, float)
    heading = np.array([math.cos(lift.phi), math.sin(lift.phi)])
    normal = np.array([-heading[1], heading[0]])

    vhat = _line_cell_projection(y, heading, yd, lf)

    gvec = yd - y
    gnorm = float(np.linalg.norm(gvec))
    if gnorm <= 1e-12:
        return vhat, 0.0
    t_goal = _line_cell_projection(y, gvec / gnorm, yd, lf)
    y_goal_line = y + t_goal * gvec / gnorm
    y_cell = project_to_convex(yd, lf)
    y_omega = 0.5 * (y_goal_line + y_cell)
    rel = y_omega - y
    para = float(heading @ rel)
    perp = float(normal @ rel)
    if para == 0.0 and perp == 0.0:
        return vhat, 0.0
    if para == 0.0:
        omegahat = math.copysign(0.5 * math.pi, perp)
    else:
        omegahat = math.atan(perp / para)
    return vhat, omegahat


def diffdrive_inputs(state, snap: DiffeoSnapshot, goal, fe: ConvexPolygon,
                     unknown_points, r_model: float,
                     params: ControllerParams, goal_model=None):
    """Bounded physical inputs (v, omega) for a differential-drive robot."""
    lift = se2_lift(state, snap, second=True)
    e2 = float(lift.e @ lift.e)
    if e2 <= 1e-24:
        raise SingularJacobian("degenerate lift: zero pushforward of heading")
    det = (lift.J[0, 0] * lift.J[1, 1] - lift.J[0, 1] * lift.J[1, 0])
    dxi_dpsi = det / e2

    if goal_model is None:
        goal_model = diffeo_eval(snap, np.asarray(goal, float))
    lf = local_freespace(lift.y, snap.model_disks, unknown_points, r_model, fe)
    vhat, omegahat = diffdrive_model_inputs(lift, goal_model, lf)

    c = np.array([math.cos(lift.psi), math.sin(lift.psi)])
    alpha1 = -(lift.J[1, 0] * c[0] + lift.J[1, 1] * c[1])
    alpha2 = lift.J[0, 0] * c[0] + lift.J[0, 1] * c[1]
    alpha3 = float(c @ (lift.T[0] @ c))
    alpha4 = float(c @ (lift.T[1] @ c))
    theta = (alpha1 * alpha3 + alpha2 * alpha4) / e2  # D_x xi . heading

    enorm = math.sqrt(e2)
    lam = params.gain_split
    k_v = params.k_v_nom
    if vhat != 0.0:
        k_v = min(k_v, enorm * params.v_max / abs(vhat))
        if theta != 0.0:
            k_v = min(k_v, lam * dxi_dpsi * enorm * params.omega_max
                      / (abs(vhat) * abs(theta)))
    k_omega = params.k_omega_nom
    if omegahat != 0.0:
        k_omega = min(k_omega, (1.0 - lam) * dxi_dpsi * params.omega_max
                      / abs(omegahat))

    v = k_v * vhat / enorm
    omega = (k_omega * omegahat - v * theta) / dxi_dpsi
    v = float(np.clip(v, -params.v_max, params.v_max))
    omega = float(np.clip(omega, -params.omega_max, params.omega_max))
    return v, omega


# ---------------------------------------------------------------------------
# Baseline arm: the model-space law applied to raw range data, no map
# ---------------------------------------------------------------------------

def baseline_fully_actuated(x, goal, fe: ConvexPolygon, lidar_points,
                            r_model: float, params: ControllerParams) -> np.ndarray:
    """Doubly-reactive law on raw range returns with no semantic map.

    Uses the plain proportional law (magnitude-clipped, not normalized) so
    that its speed vanishes at stall points instead of chattering into them.
    """
    x = np.asarray(x, float)
    lf = local_freespace(x, (), lidar_points, r_model, fe)
    u = params.k * fully_actuated_model_input(x, goal, lf)
    n = float(np.linalg.norm(u))
    if n > params.u_max:
        u *= params.u_max / n
    return u


def baseline_diffdrive(state, goal, fe: ConvexPolygon, lidar_points,
                       r_model: float, params: ControllerParams):
    """Raw-data unicycle law: the identity-map reduction of the full law."""
    state = np.asarray(state, float)
    x, psi = state[:2], float(state[2])
    lift = ModelLift(y=x, phi=psi, e=np.array([math.cos(psi), math.sin(psi)]),
                     J=np.eye(2), T=np.zeros((2, 2, 2)), psi=psi)
    lf = local_freespace(x, (), lidar_points, r_model, fe)
    vhat, omegahat = diffdrive_model_inputs(lift, goal, lf)
    k_v = min(params.k_v_nom, params.v_max / abs(vhat)) if vhat else params.k_v_nom
    k_omega = (min(params.k_omega_nom, params.omega_max / abs(omegahat))
               if omegahat else params.k_omega_nom)
    v = float(np.clip(k_v * vhat, -params.v_max, params.v_max))
    omega = float(np.clip(k_omega * omegahat, -params.omega_max, params.omega_max))
    return v, omega


__all__ = [
    "ControllerParams", "ModelLift", "local_freespace",
    "fully_actuated_model_input", "fully_actuated_input", "se2_lift",
    "diffdrive_model_inputs", "diffdrive_inputs", "compute_saddles",
    "baseline_fully_actuated", "baseline_diffdrive",
]
