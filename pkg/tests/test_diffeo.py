"""Construction and differential correctness of the disk-world map."""

import math

import numpy as np
import pytest
import shapely.geometry as shg

from semnav.diffeo import (
    DiffeoParams,
    build_snapshot,
    compute_saddles,
    diffeo_eval,
    diffeo_inverse,
    diffeo_jacobian,
    eta,
    global_purge_order,
    switch_eval,
    zeta,
    zeta_prime,
)
from semnav.geometry import point_in_polygon
from conftest import fd_jacobian, full_snapshot, make_scenario

L_VERTS = [[-0.8, -0.6], [0.8, -0.6], [0.8, 0.6], [0.2, 0.6],
           [0.2, 0.0], [-0.8, 0.0]]


def l_world(**kw):
    return make_scenario(
        familiar_catalogue={"ell": L_VERTS},
        familiar_placements=[{"class": "ell", "pose": [0.0, 0.0, 0.0],
                              "clearance": 0.3}],
        diffeo={"mu_gamma": 2.0, "mu_delta": 0.05, "eps_gamma": 1.0}, **kw)


@pytest.fixture(scope="module")
def l_snapshot():
    scen = l_world()
    mapped, snap = full_snapshot(scen)
    return scen, mapped, snap


def test_zeta_and_eta_shapes():
    assert zeta(2.0, -1.0) == 0.0 and zeta(2.0, 0.0) == 0.0
    assert 0.0 < zeta(2.0, 1.0) < 1.0
    # derivative matches finite differences on the smooth side
    for chi in (0.5, 1.0, 3.0):
        fd = (zeta(2.0, chi + 1e-6) - zeta(2.0, chi - 1e-6)) / 2e-6
        assert zeta_prime(2.0, chi) == pytest.approx(fd, rel=1e-6)
    assert eta(2.0, 1.0, 0.0) == pytest.approx(1.0)
    assert eta(2.0, 1.0, 1.0) == 0.0
    assert 0.0 < eta(2.0, 1.0, 0.5) < 1.0


def test_empty_mode_is_identity():
    snap = build_snapshot([], mode=frozenset(), params=DiffeoParams())
    assert snap.is_identity()
    x = np.array([0.3, -1.2])
    assert np.array_equal(diffeo_eval(snap, x), x)
    y, J, T = diffeo_jacobian(snap, x)
    assert np.array_equal(J, np.eye(2))
    assert not T.any()


def test_purge_order_leaves_before_roots(l_snapshot):
    _, mapped, snap = l_snapshot
    order = global_purge_order(mapped.obstacles)
    roots = [(ci, ni) for ci, ni in order
             if ni == mapped.obstacles[ci].tree.root]
    assert roots == order[len(order) - len(roots):]
    assert len(snap.steps) == len(order)
    assert snap.steps[-1].kind in ("root-disk", "root-boundary")


def test_boundary_maps_to_model_circle(l_snapshot):
    _, mapped, snap = l_snapshot
    (center, radius), = snap.model_disks
    poly = mapped.obstacles[0].polygon
    for a, b in poly.edges():
        for t in np.linspace(0.05, 0.95, 25):
            y = diffeo_eval(snap, a + t * (b - a))
            assert abs(np.linalg.norm(y - center) - radius) < 1e-6


def test_identity_outside_collars(l_snapshot):
    _, mapped, snap = l_snapshot
    collars = shg.MultiPolygon(
        [shg.Polygon(s.collar.vertices) for s in snap.steps])
    rng = np.random.default_rng(20)
    n = 0
    while n < 200:
        x = rng.uniform([-3.5, -3.5], [3.5, 3.5])
        if collars.distance(shg.Point(x)) < 1e-6:
            continue
        n += 1
        assert np.array_equal(diffeo_eval(snap, x), x)


def test_jacobian_matches_finite_differences(l_snapshot):
    scen, mapped, snap = l_snapshot
    rng = np.random.default_rng(21)
    poly = mapped.obstacles[0].polygon
    verts = np.concatenate([t for t in mapped.obstacles[0].tree.oriented])
    checked = 0
    while checked < 60:
        x = rng.uniform([-2.0, -2.0], [2.0, 2.0])
        if point_in_polygon(x, poly) != "outside":
            continue
        if np.min(np.linalg.norm(verts - x, axis=1)) < 1e-2:
            continue
        checked += 1
        y, J, T = diffeo_jacobian(snap, x)
        assert np.array_equal(y, diffeo_eval(snap, x))
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        assert det > 0.0
        J_fd = fd_jacobian(lambda p: diffeo_eval(snap, p), x)
        assert (np.linalg.norm(J - J_fd) / max(1.0, np.linalg.norm(J))) < 1e-5
        T_fd = fd_jacobian(lambda p: diffeo_jacobian(snap, p, second=False)[1],
                           x, h=1e-5)
        assert (np.linalg.norm(T - T_fd) / max(1.0, np.linalg.norm(T))) < 1e-4


def test_inverse_roundtrip(l_snapshot):
    _, mapped, snap = l_snapshot
    rng = np.random.default_rng(22)
    poly = mapped.obstacles[0].polygon
    done = 0
    while done < 30:
        x = rng.uniform([-3.0, -3.0], [3.0, 3.0])
        if point_in_polygon(x, poly) != "outside":
            continue
        done += 1
        y = diffeo_eval(snap, x)
        x_back = diffeo_inverse(snap, y)
        assert np.allclose(x_back, x, atol=1e-9)


def test_switch_is_one_on_gamma_zero_elsewhere(l_snapshot):
    _, mapped, snap = l_snapshot
    step = snap.steps[0]
    # the purged region's shared-edge endpoints sit at full switch
    assert switch_eval(step, step.x1) == pytest.approx(1.0)
    assert switch_eval(step, step.x2) == pytest.approx(1.0)
    # far away the switch vanishes identically
    assert switch_eval(step, np.array([3.5, 3.5])) == 0.0


def test_collars_avoid_unpurged_triangles(l_snapshot):
    """When a purge runs, its collar must not touch any triangle that still
    exists, other than the one being collapsed and its parent target."""
    _, mapped, snap = l_snapshot
    tree = mapped.obstacles[0].tree
    order = tree.purge_order
    for k, ni in enumerate(order[:-1]):
        collar = shg.Polygon(tree.collar[ni].vertices)
        for mj in order[k + 1:]:
            if mj == tree.parent[ni]:
                continue
            overlap = collar.intersection(
                shg.Polygon(tree.nodes[mj].points)).area
            assert overlap < 1e-9


def test_saddle_lies_behind_disk(l_snapshot):
    scen, mapped, snap = l_snapshot
    (center, radius), = snap.model_disks
    goal_model = diffeo_eval(snap, scen.goal)
    saddles = compute_saddles(snap, scen.goal)
    assert len(saddles) == 1
    s = saddles[0]
    assert np.linalg.norm(s - center) == pytest.approx(radius)
    # antipodal to the goal as seen from the disk center
    d = (goal_model - center) / np.linalg.norm(goal_model - center)
    assert (s - center) @ d == pytest.approx(-radius)
