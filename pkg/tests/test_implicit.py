"""Implicit polygon representations built from smooth blending of halfplanes."""

import math

import numpy as np
import pytest

from semnav.errors import SingularPoint
from semnav.geometry import Polygon, distance_to_polygon, point_in_polygon
from semnav.implicit import (
    Leaf,
    build_polygon_implicit,
    halfplane_eval,
    implicit_eval,
    implicit_grad,
    implicit_vgh,
    r_combine,
)
from conftest import fd_jacobian, star_polygon

UNIT_SQUARE = Polygon([[0, 0], [1, 0], [1, 1], [0, 1]])
L_SHAPE = Polygon([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]])


def test_halfplane_eval_trivial():
    h = Leaf(anchor=np.array([0.0, 0.0]), normal=np.array([1.0, 0.0]))
    assert halfplane_eval(h, [1.0, 0.0]) == pytest.approx(1.0)
    assert halfplane_eval(h, [0.0, 3.0]) == pytest.approx(0.0)
    assert halfplane_eval(h, [-2.0, 5.0]) == pytest.approx(-2.0)


def test_r_combine_values():
    assert r_combine("or", 3, 4, 2) == pytest.approx(12.0)
    assert r_combine("and", 3, 4, 2) == pytest.approx(2.0)
    assert r_combine("not", 5) == pytest.approx(-5.0)


def test_sign_agreement_with_point_in_polygon():
    rng = np.random.default_rng(10)
    for poly in (UNIT_SQUARE, L_SHAPE, star_polygon(rng, 9, [0.0, 0.0], 0.4, 1.0)):
        tree = build_polygon_implicit(poly, power=2)
        lo = poly.vertices.min(axis=0) - 1.0
        hi = poly.vertices.max(axis=0) + 1.0
        pts = rng.uniform(lo, hi, size=(10_000, 2))
        for p in pts:
            if distance_to_polygon(p, poly) < 1e-3:
                continue
            v = implicit_eval(tree, p)
            if point_in_polygon(p, poly) == "inside":
                assert v < 0.0
            else:
                assert v > 0.0


def test_square_interior_is_negative():
    tree = build_polygon_implicit(UNIT_SQUARE, power=2)
    assert implicit_eval(tree, [0.5, 0.5]) < 0.0


def test_near_field_distance_approximation():
    """Sharp blending tracks the true distance close to the polygon."""
    rng = np.random.default_rng(11)
    for poly in (UNIT_SQUARE, L_SHAPE):
        tree = build_polygon_implicit(poly, power=20)
        diam = poly.diameter
        count = 0
        while count < 300:
            p = rng.uniform(poly.vertices.min(axis=0) - 0.4 * diam,
                            poly.vertices.max(axis=0) + 0.4 * diam)
            d = distance_to_polygon(p, poly)
            if not (0.01 * diam <= d <= 0.3 * diam):
                continue
            if point_in_polygon(p, poly) != "outside":
                continue
            # stay away from the corner fans where the blend rounds off
            nearest_vertex = np.min(np.linalg.norm(poly.vertices - p, axis=1))
            if nearest_vertex < 1.5 * d:
                continue
            count += 1
            assert implicit_eval(tree, p) == pytest.approx(d, rel=0.10)


def test_gradient_and_hessian_match_finite_differences():
    rng = np.random.default_rng(12)
    tree = build_polygon_implicit(L_SHAPE, power=2)
    checked = 0
    while checked < 40:
        p = rng.uniform([-0.6, -0.6], [2.6, 2.6])
        if np.min(np.linalg.norm(L_SHAPE.vertices - p, axis=1)) < 0.05:
            continue
        checked += 1
        v, g, h = implicit_vgh(tree, p)
        assert v == pytest.approx(implicit_eval(tree, p))
        g_fd = fd_jacobian(lambda x: implicit_eval(tree, x), p)
        assert np.allclose(g, g_fd, rtol=1e-5, atol=1e-8)
        h_fd = fd_jacobian(lambda x: implicit_grad(tree, x), p, h=1e-5)
        assert np.allclose(h, 0.5 * (h_fd + h_fd.T), rtol=1e-4, atol=1e-6)
        assert np.allclose(h, h.T)


def test_gradient_rejects_vertex():
    tree = build_polygon_implicit(UNIT_SQUARE, power=2)
    with pytest.raises(SingularPoint):
        implicit_grad(tree, [0.0, 0.0])


def test_single_halfplane_gradient_is_negated_normal():
    tri = Polygon([[0, 0], [1, 0], [0.5, 1]])
    tree = build_polygon_implicit(tri, power=2)
    # far along an edge's outward normal, the gradient follows that edge
    g = implicit_grad(tree, [0.5, -3.0])
    assert g[1] < 0.0  # increases away from the triangle
