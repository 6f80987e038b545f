"""Ground-truth world model, semantic sensor, and mapped-space recovery.

A scenario describes the physical world: a workspace, familiar obstacles drawn
from a catalogue of known shapes placed at initially unknown poses, and
completely unknown convex obstacles. The robot permanently instantiates a
familiar obstacle the moment any part of it intersects the sensor footprint;
unknown obstacles are only ever seen as per-step range returns.

Recovery consolidates the dilated instantiated obstacles into disjoint
components, classifies them as interior or boundary-touching, triangulates
them and delegates center/collar computation to the diffeomorphism module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
import shapely.geometry as shg

from .diffeo import (
    CollarContext,
    DiffeoParams,
    DiffeoSnapshot,
    ObstacleData,
    build_snapshot,
    compute_centers,
    compute_collars,
)
from .errors import InadmissibleCollar, ParseError, TopologyError
from .geometry import (
    ConvexPolygon,
    Polygon,
    build_triangle_tree,
    convex_hull,
    dilate,
    distance_to_polygon,
    from_shapely,
    point_in_polygon,
)

DEFAULT_CLEARANCE = 0.3
DEFAULT_LIDAR_RAYS = 360


@dataclass
class ControllerParams:
    """Gains and bounds of the reactive control laws."""

    k: float = 0.4
    k_v_nom: float = 0.4
    k_omega_nom: float = 0.4
    u_max: float = 0.4
    v_max: float = 0.4
    omega_max: float = 0.4
    # Asymmetric split of the angular-rate budget between the v and omega
    # terms: at 0.5 the two saturated terms can cancel exactly and freeze
    # the robot at a spurious equilibrium near an obstacle face.
    gain_split: float = 0.4
    eps_u: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.k <= self.u_max):
            raise ParseError("controller gain k must satisfy 0 < k <= u_max")
        if not (0.0 < self.gain_split < 1.0):
            raise ParseError("gain_split must lie strictly in (0, 1)")
        if min(self.u_max, self.v_max, self.omega_max,
               self.k_v_nom, self.k_omega_nom, self.eps_u) <= 0.0:
            raise ParseError("controller bounds and gains must be positive")


@dataclass
class IntegratorParams:
    """Fixed-step integration settings for episodes."""

    dt: float = 0.01
    max_time: float = 120.0
    goal_tolerance: float = 0.05
    method: str = "rk4"

    def __post_init__(self):
        if self.dt <= 0.0 or self.goal_tolerance <= 0.0 or self.max_time <= 0.0:
            raise ParseError("integrator parameters must be positive")
        if self.method not in ("rk4", "euler"):
            raise ParseError("integrator method must be 'rk4' or 'euler'")


@dataclass
class Scenario:
    """Immutable world description loaded from a scenario file."""

    workspace: Polygon
    familiar_polys: list          # ground-truth placed polygons (incl. intrusions)
    familiar_clearances: list     # collar clearance per familiar obstacle
    unknown_obstacles: list       # strictly convex ground-truth polygons
    robot_radius: float
    robot_type: str               # 'fully-actuated' | 'diffdrive'
    start: np.ndarray             # (x, y, psi)
    goal: np.ndarray
    sensor_range: float
    model_sensor_range: float
    controller: ControllerParams
    diffeo: DiffeoParams
    obstacle_power: int
    integrator: IntegratorParams
    lidar_rays: int
    enclosing_freespace: ConvexPolygon = field(init=False)
    _unknown_dilated: list = field(init=False)

    def __post_init__(self):
        we = convex_hull(self.workspace.vertices)
        fe_sh = we.to_shapely().buffer(
            -self.robot_radius, join_style="mitre", mitre_limit=100.0)
        if fe_sh.is_empty:
            raise ParseError("workspace too small for the robot radius")
        self.enclosing_freespace = ConvexPolygon(
            from_shapely(fe_sh).vertices, validate=False)
        self._unknown_dilated = [dilate(u, self.robot_radius)
                                 for u in self.unknown_obstacles]

    @property
    def all_physical_obstacles(self) -> list:
        return self.familiar_polys + self.unknown_obstacles

    def in_freespace(self, x, slack: float = 1e-9) -> bool:
        """True if the robot disk at x avoids all obstacles and the workspace."""
        x = np.asarray(x, float)
        if point_in_polygon(x, self.enclosing_freespace) == "outside":
            return False
        r = self.robot_radius - slack
        return all(distance_to_polygon(x, p) > r
                   and point_in_polygon(x, p) == "outside"
                   for p in self.all_physical_obstacles)


def _as_poly(obj, name: str) -> Polygon:
    try:
        return Polygon(np.asarray(obj, float))
    except Exception as err:
        raise ParseError(f"invalid polygon for {name!r}: {err}") from err


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file (JSON; lengths in meters)."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as err:
        raise ParseError(f"cannot read scenario file: {err}") from err
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> Scenario:
    try:
        workspace = _as_poly(raw["workspace"], "workspace")
        catalogue = {name: _as_poly(v, f"catalogue[{name}]")
                     for name, v in raw.get("familiar_catalogue", {}).items()}
        robot = raw["robot"]
        radius = float(robot["radius"])
        rtype = robot.get("type", "fully-actuated")
        start = np.asarray(robot["start"], float)
        goal = np.asarray(robot["goal"], float)
        sensor_range = float(raw["sensor_range"])
    except KeyError as err:
        raise ParseError(f"missing scenario field: {err}") from err
    except (TypeError, ValueError) as err:
        raise ParseError(f"malformed scenario field: {err}") from err
    if rtype not in ("fully-actuated", "diffdrive"):
        raise ParseError(f"unknown robot type {rtype!r}")
    if start.shape == (2,):
        start = np.array([start[0], start[1], 0.0])
    if start.shape != (3,) or goal.shape != (2,):
        raise ParseError("robot start must be (x, y[, psi]) and goal (x, y)")
    if radius <= 0 or sensor_range <= 0:
        raise ParseError("robot radius and sensor range must be positive")

    default_clear = float(raw.get("clearance", DEFAULT_CLEARANCE))
    familiar_polys, clearances = [], []
    for i, pl in enumerate(raw.get("familiar_placements", [])):
        try:
            cls = pl["class"]
            pose = np.asarray(pl.get("pose", [0.0, 0.0, 0.0]), float)
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError(f"malformed placement {i}: {err}") from err
        if cls not in catalogue:
            raise ParseError(f"placement {i} references unknown class {cls!r}")
        familiar_polys.append(catalogue[cls].transformed(pose))
        clearances.append(float(pl.get("clearance", default_clear)))

    unknown = [_as_poly(u, f"unknown[{i}]")
               for i, u in enumerate(raw.get("unknown_obstacles", []))]

    # boundary intrusions conv(W) \ W become familiar obstacles of the world
    we = convex_hull(workspace.vertices)
    gap = we.to_shapely().difference(workspace.to_shapely())
    for g in getattr(gap, "geoms", [gap]):
        if isinstance(g, shg.Polygon) and g.area > 1e-12:
            familiar_polys.append(from_shapely(g))
            clearances.append(default_clear)

    model_range = raw.get("model_sensor_range")
    model_range = float(model_range) if model_range is not None else 0.8 * sensor_range
    if not model_range < sensor_range:
        raise ParseError("model_sensor_range must be smaller than sensor_range")

    try:
        controller = ControllerParams(**raw.get("controller", {}))
        diffeo_raw = dict(raw.get("diffeo", {}))
        obstacle_power = int(diffeo_raw.pop("obstacle_power", 20))
        diffeo = DiffeoParams(**diffeo_raw)
        integrator = IntegratorParams(**raw.get("integrator", {}))
    except TypeError as err:
        raise ParseError(f"unknown parameter field: {err}") from err

    scen = Scenario(
        workspace=workspace, familiar_polys=familiar_polys,
        familiar_clearances=clearances, unknown_obstacles=unknown,
        robot_radius=radius, robot_type=rtype, start=start, goal=goal,
        sensor_range=sensor_range, model_sensor_range=model_range,
        controller=controller, diffeo=diffeo, obstacle_power=obstacle_power,
        integrator=integrator, lidar_rays=int(raw.get("lidar_rays", DEFAULT_LIDAR_RAYS)))
    if not scen.in_freespace(scen.goal):
        raise ParseError("goal is not in the freespace")
    return scen


def validate_scenario(scen: Scenario) -> list:
    """Numerical checks of the standing assumptions; returns violation strings."""
    problems = []
    r = scen.robot_radius
    for i in range(len(scen.unknown_obstacles)):
        for j in range(i + 1, len(scen.unknown_obstacles)):
            d = scen.unknown_obstacles[i].to_shapely().distance(
                scen.unknown_obstacles[j].to_shapely())
            if d <= 2 * r:
                problems.append(
                    f"unknown obstacles {i} and {j} violate the separation "
                    f"assumption: distance {d:.4f} <= 2r = {2 * r:.4f}")
    if not scen.in_freespace(scen.start[:2]):
        problems.append("start position is not in the freespace")
    try:
        full_mode = frozenset(range(len(scen.familiar_polys)))
        mapped = mapped_space_recovery(SemanticMapState(mode=set(full_mode)), scen)
        for comp in mapped.dset + mapped.bset:
            for k, u in enumerate(scen._unknown_dilated):
                d = comp.polygon.to_shapely().distance(u.to_shapely())
                if d <= 0:
                    problems.append(
                        f"dilated familiar component overlaps dilated unknown "
                        f"obstacle {k}: clearance assumption violated")
    except (TopologyError, InadmissibleCollar) as err:
        problems.append(f"full-mode recovery failed: {err}")
    return problems


# ---------------------------------------------------------------------------
# Semantic map and recovery
# ---------------------------------------------------------------------------

@dataclass
class SemanticMapState:
    """Monotonically growing set of instantiated familiar-obstacle indices."""

    mode: set = field(default_factory=set)

    def instantiate(self, indices):
        self.mode |= set(indices)


@dataclass(frozen=True)
class MappedSpace:
    """Consolidated obstacle geometry ready for snapshot construction."""

    dset: tuple   # interior ObstacleData components
    bset: tuple   # boundary-touching ObstacleData components (clipped)
    enclosing_freespace: ConvexPolygon

    @property
    def obstacles(self) -> list:
        return list(self.dset) + list(self.bset)


def mapped_space_recovery(semantic: SemanticMapState, scen: Scenario) -> MappedSpace:
    """Consolidate instantiated obstacles and prepare their purge data."""
    fe = scen.enclosing_freespace
    mode = sorted(semantic.mode)
    if not mode:
        return MappedSpace(dset=(), bset=(), enclosing_freespace=fe)
    dilated = [dilate(scen.familiar_polys[i], scen.robot_radius) for i in mode]
    merged = shapely.unary_union([p.to_shapely() for p in dilated])
    components = [g for g in getattr(merged, "geoms", [merged])
                  if isinstance(g, shg.Polygon)]
    components.sort(key=lambda g: (g.centroid.x, g.centroid.y))

    fe_sh = fe.to_shapely()
    fe_boundary = fe_sh.exterior
    obstacles = []
    for comp in components:
        if comp.interiors:
            raise TopologyError("consolidated obstacle has a hole")
        clearance = min(scen.familiar_clearances[i]
                        for i, dil in zip(mode, dilated)
                        if dil.to_shapely().intersects(comp))
        if comp.distance(fe_boundary) <= 1e-9:
            clipped = comp.intersection(fe_sh)
            if clipped.geom_type != "Polygon" or clipped.interiors:
                raise TopologyError("boundary clipping produced bad topology")
            poly = from_shapely(clipped)
            tree = build_triangle_tree(poly, mode="boundary-touching", boundary=fe)
            obstacles.append(ObstacleData(polygon=poly, tree=tree,
                                          kind="boundary", clearance=clearance))
        else:
            poly = from_shapely(comp)
            tree = build_triangle_tree(poly, mode="interior")
            obstacles.append(ObstacleData(polygon=poly, tree=tree,
                                          kind="disk", clearance=clearance))

    for obs in obstacles:
        compute_centers(obs, fe)
    for idx, obs in enumerate(obstacles):
        ctx = CollarContext(fe=fe, obstacles=obstacles, index=idx,
                            unknown=scen._unknown_dilated)
        compute_collars(obs, ctx)
    dset = tuple(o for o in obstacles if o.kind == "disk")
    bset = tuple(o for o in obstacles if o.kind == "boundary")
    return MappedSpace(dset=dset, bset=bset, enclosing_freespace=fe)


def snapshot_from_mapped(mapped: MappedSpace, mode, params: DiffeoParams) -> DiffeoSnapshot:
    """Assemble the purge-step snapshot for the current hybrid mode."""
    return build_snapshot(mapped.obstacles, mode=mode, params=params)


# ---------------------------------------------------------------------------
# Idealized semantic sensor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LidarScan:
    """First-hit range returns in freespace coordinates: ranges are shortened
    by the robot radius, so each point lies on a dilated obstacle surface."""

    points: np.ndarray    # (k, 2) hit points within range
    familiar: np.ndarray  # (k,) bool, True if the hit is on a familiar obstacle


def _ray_hits(origin: np.ndarray, dirs: np.ndarray, poly: Polygon) -> np.ndarray:
    """Per-ray first-hit parameter t >= 0 against a polygon (inf if missed)."""
    v = poly.vertices
    a = v
    e = np.roll(v, -1, axis=0) - v
    # solve origin + t*d = a + s*e for each (ray, edge)
    dx, dy = dirs[:, 0][:, None], dirs[:, 1][:, None]
    ex, ey = e[:, 0][None, :], e[:, 1][None, :]
    det = dx * (-ey) - dy * (-ex)
    wx = (a[:, 0][None, :] - origin[0])
    wy = (a[:, 1][None, :] - origin[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * (-ey) - wy * (-ex)) / det
        s = (dx * wy - dy * wx) / det
    valid = (np.abs(det) > 1e-15) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    t = np.where(valid, t, np.inf)
    return t.min(axis=1)


def sensor_scan(scen: Scenario, position, mode=()) -> tuple:
    """(newly sensed familiar indices, LIDAR scan) at the given position."""
    x = np.asarray(position, float)[:2]
    R = scen.sensor_range
    new_familiar = [i for i, p in enumerate(scen.familiar_polys)
                    if i not in mode and distance_to_polygon(x, p) <= R]

    n = scen.lidar_rays
    ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    best = np.full(n, np.inf)
    fam = np.zeros(n, dtype=bool)
    for p in scen.familiar_polys:
        t = _ray_hits(x, dirs, p)
        closer = t < best
        best = np.where(closer, t, best)
        fam |= closer
    for p in scen.unknown_obstacles:
        t = _ray_hits(x, dirs, p)
        closer = t < best
        best = np.where(closer, t, best)
        fam &= ~closer
    hit = best <= R
    ranges = np.maximum(best[hit] - scen.robot_radius, 0.0)
    points = x[None, :] + ranges[:, None] * dirs[hit]
    return new_familiar, LidarScan(points=points, familiar=fam[hit])


def guard_check(mode, position, scen: Scenario):
    """New mode I' = I union newly sensed familiar indices, or None."""
    new, _ = sensor_scan(scen, position, mode=mode)
    if not new:
        return None
    return frozenset(mode) | frozenset(new)


def lidar_filter(scan: LidarScan, mapped: MappedSpace) -> np.ndarray:
    """Unknown-obstacle hit points, identity-transferred to model space."""
    if scan.points.size == 0:
        return np.empty((0, 2))
    return scan.points[~scan.familiar]
