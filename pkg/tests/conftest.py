"""Shared helpers for the test suite."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from semnav.diffeo import build_snapshot
from semnav.geometry import Polygon
from semnav.world import (
    SemanticMapState,
    load_scenario,
    mapped_space_recovery,
    scenario_from_dict,
)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.json"


def load_bundled(name: str):
    return load_scenario(scenario_path(name))


def scenario_dict(name: str) -> dict:
    with open(scenario_path(name)) as f:
        return json.load(f)


def full_snapshot(scen):
    """Snapshot with every familiar obstacle instantiated."""
    semantic = SemanticMapState()
    semantic.instantiate(range(len(scen.familiar_polys)))
    mapped = mapped_space_recovery(semantic, scen)
    return mapped, build_snapshot(mapped.obstacles, semantic.mode, scen.diffeo)


def star_polygon(rng, n_verts: int, center, r_lo=0.25, r_hi=0.6) -> Polygon:
    """Random star-shaped simple polygon around a center point."""
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, n_verts))
    while np.min(np.diff(angles, append=angles[0] + 2 * math.pi)) < 0.15:
        angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, n_verts))
    radii = rng.uniform(r_lo, r_hi, n_verts)
    pts = np.stack([np.cos(angles), np.sin(angles)], axis=1) * radii[:, None]
    return Polygon(pts + np.asarray(center, float))


def simple_world_dict(**overrides) -> dict:
    """Minimal square world with no obstacles; override fields as needed."""
    d = {
        "workspace": [[-4, -4], [4, -4], [4, 4], [-4, 4]],
        "familiar_catalogue": {},
        "familiar_placements": [],
        "unknown_obstacles": [],
        "robot": {"radius": 0.2, "type": "fully-actuated",
                  "start": [-3.0, 0.0, 0.0], "goal": [3.0, 0.0]},
        "sensor_range": 2.0,
        "integrator": {"dt": 0.05, "max_time": 60.0, "goal_tolerance": 0.1},
    }
    d.update(overrides)
    return d


def make_scenario(**overrides):
    return scenario_from_dict(simple_world_dict(**overrides))


def fd_jacobian(fn, x, h=1e-6):
    """Central-difference Jacobian of a vector map."""
    x = np.asarray(x, float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)
