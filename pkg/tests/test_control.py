"""Local freespace cells and the bounded reactive laws."""

import math

import numpy as np
import pytest

from semnav.control import (
    ModelLift,
    baseline_diffdrive,
    baseline_fully_actuated,
    diffdrive_inputs,
    diffdrive_model_inputs,
    fully_actuated_input,
    fully_actuated_model_input,
    local_freespace,
    se2_lift,
)
from semnav.diffeo import DiffeoParams, build_snapshot, diffeo_eval
from semnav.geometry import ConvexPolygon, point_in_polygon, project_to_convex
from semnav.world import ControllerParams
from conftest import full_snapshot, load_bundled

FE = ConvexPolygon([[-4, -4], [4, -4], [4, 4], [-4, 4]])
NO_PTS = np.empty((0, 2))
PARAMS = ControllerParams()
IDENTITY = build_snapshot([], mode=frozenset(), params=DiffeoParams())


def test_cell_without_obstacles_is_clipped_ball():
    y = np.array([0.0, 0.0])
    lf = local_freespace(y, (), NO_PTS, 1.6, FE)
    r = np.linalg.norm(lf.vertices - y, axis=1)
    assert np.all(r <= 0.8 + 1e-9)
    assert np.min(r) > 0.7  # full polygonal ball, nothing clipped away


def test_cell_clipped_by_enclosing_boundary():
    y = np.array([3.9, 0.0])
    lf = local_freespace(y, (), NO_PTS, 1.6, FE)
    assert np.max(lf.vertices[:, 0]) <= 4.0 + 1e-9
    assert point_in_polygon(y, lf) != "outside"


def test_cell_respects_disk_bisectors():
    y = np.array([0.0, 0.0])
    disks = ((np.array([0.6, 0.0]), 0.2), (np.array([-0.6, 0.0]), 0.2))
    lf = local_freespace(y, disks, NO_PTS, 1.6, FE)
    for c, r in disks:
        surf = c - r * (c - y) / np.linalg.norm(c - y)
        mid = 0.5 * (y + surf)
        n = (surf - y) / np.linalg.norm(surf - y)
        assert np.all((lf.vertices - mid) @ n <= 1e-9)


def test_cell_respects_point_bisectors():
    y = np.array([0.0, 0.0])
    pts = np.array([[0.5, 0.5], [-0.4, 0.3]])
    lf = local_freespace(y, (), pts, 1.6, FE)
    for p in pts:
        mid = 0.5 * (y + p)
        n = (p - y) / np.linalg.norm(p - y)
        assert np.all((lf.vertices - mid) @ n <= 1e-9)


def test_model_input_points_at_projected_goal():
    y = np.array([0.0, 0.0])
    pts = np.array([[0.6, 0.0]])
    lf = local_freespace(y, (), pts, 1.6, FE)
    goal = np.array([3.0, 0.0])  # behind the bisector
    v = fully_actuated_model_input(y, goal, lf)
    target = project_to_convex(goal, lf)
    assert np.allclose(v, target - y)


def test_fully_actuated_zero_at_goal():
    goal = np.array([1.0, -1.0])
    u = fully_actuated_input(goal, IDENTITY, goal, FE, NO_PTS, 1.6, PARAMS)
    assert np.linalg.norm(u) < 1e-6


def test_fully_actuated_bounded_everywhere():
    scen = load_bundled("mixed")
    _, snap = full_snapshot(scen)
    rng = np.random.default_rng(30)
    done = 0
    while done < 50:
        x = rng.uniform([-3.5, -3.5], [3.5, 3.5])
        if not scen.in_freespace(x, slack=-1e-3):
            continue
        done += 1
        u = fully_actuated_input(x, snap, scen.goal, scen.enclosing_freespace,
                                 NO_PTS, scen.model_sensor_range,
                                 scen.controller)
        assert np.linalg.norm(u) <= scen.controller.u_max + 1e-12


def test_identity_lift():
    state = np.array([0.3, -0.2, 0.7])
    lift = se2_lift(state, IDENTITY)
    assert lift.phi == pytest.approx(0.7)
    assert np.allclose(lift.e, [math.cos(0.7), math.sin(0.7)])


def test_vhat_zero_when_goal_perpendicular():
    y = np.array([0.0, 0.0])
    lf = local_freespace(y, (), NO_PTS, 1.6, FE)
    lift = ModelLift(y=y, phi=0.0, e=np.array([1.0, 0.0]), J=np.eye(2),
                     T=np.zeros((2, 2, 2)), psi=0.0)
    vhat, omegahat = diffdrive_model_inputs(lift, np.array([0.0, 0.5]), lf)
    assert vhat == pytest.approx(0.0, abs=1e-12)
    assert omegahat != 0.0


def test_diffdrive_zero_speed_at_goal():
    goal = np.array([1.0, -1.0])
    v, _ = diffdrive_inputs(np.array([1.0, -1.0, 0.3]), IDENTITY, goal, FE,
                            NO_PTS, 1.6, PARAMS)
    assert abs(v) < 1e-6


def test_diffdrive_bounded_everywhere():
    scen = load_bundled("mixed")
    _, snap = full_snapshot(scen)
    rng = np.random.default_rng(31)
    done = 0
    while done < 50:
        x = rng.uniform([-3.5, -3.5], [3.5, 3.5])
        if not scen.in_freespace(x, slack=-1e-3):
            continue
        done += 1
        state = np.array([x[0], x[1], rng.uniform(-math.pi, math.pi)])
        v, w = diffdrive_inputs(state, snap, scen.goal,
                                scen.enclosing_freespace, NO_PTS,
                                scen.model_sensor_range, scen.controller)
        assert abs(v) <= scen.controller.v_max + 1e-12
        assert abs(w) <= scen.controller.omega_max + 1e-12


def test_baseline_speed_vanishes_at_stall():
    # a wall of range returns straight ahead, goal directly behind it:
    # the projected goal converges to the robot and the command decays
    goal = np.array([2.0, 0.0])
    wall = np.array([[0.5, yy] for yy in np.linspace(-1.0, 1.0, 41)])
    near = baseline_fully_actuated(np.array([0.0, 0.0]), goal, FE, wall,
                                   1.6, PARAMS)
    closer = baseline_fully_actuated(np.array([0.24, 0.0]), goal, FE, wall,
                                     1.6, PARAMS)
    assert np.linalg.norm(closer) < np.linalg.norm(near) < PARAMS.u_max + 1e-12


def test_baseline_diffdrive_bounded():
    rng = np.random.default_rng(32)
    pts = rng.uniform([-2, -2], [2, 2], size=(30, 2))
    for _ in range(20):
        state = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3),
                          rng.uniform(-math.pi, math.pi)])
        v, w = baseline_diffdrive(state, np.array([3.0, 0.0]), FE, pts,
                                  1.6, PARAMS)
        assert abs(v) <= PARAMS.v_max + 1e-12
        assert abs(w) <= PARAMS.omega_max + 1e-12
