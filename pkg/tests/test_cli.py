"""Command-line interface: exit codes, file outputs, render purity."""

import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import scenario_path, simple_world_dict

CLI = [sys.executable, "-m", "semnav.cli"]


def run_cli(*args):
    return subprocess.run(CLI + list(args), capture_output=True, text=True)


def test_check_valid_scenario():
    r = run_cli("check", str(scenario_path("comparison_convex")))
    assert r.returncode == 0


def test_check_reports_separation_violation(tmp_path):
    d = simple_world_dict(unknown_obstacles=[
        [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]],
        [[0.6, -0.5], [1.6, -0.5], [1.6, 0.5], [0.6, 0.5]]])
    f = tmp_path / "bad.json"
    f.write_text(json.dumps(d))
    r = run_cli("check", str(f))
    assert r.returncode == 2
    assert "separation" in (r.stdout + r.stderr)


def test_check_malformed_file(tmp_path):
    f = tmp_path / "broken.json"
    f.write_text("{not json")
    r = run_cli("check", str(f))
    assert r.returncode == 4


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "run"
    r = run_cli("simulate", str(scenario_path("comparison_convex")),
                "--robot", "fa", "--controller", "ours",
                "--starts", "start", "--out", str(out))
    assert r.returncode == 0
    assert (out / "trajectory_000.csv").exists()
    assert (out / "events_000.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["success_rate"] == 1.0
    data = np.loadtxt(out / "trajectory_000.csv", delimiter=",", skiprows=1)
    cmd = np.linalg.norm(data[:, 4:6], axis=1)
    assert np.max(cmd) <= 0.4 + 1e-9


def test_svg_is_a_pure_view(tmp_path):
    plain = tmp_path / "plain"
    withsvg = tmp_path / "svg"
    r1 = run_cli("simulate", str(scenario_path("comparison_convex")),
                 "--robot", "fa", "--controller", "ours",
                 "--starts", "start", "--out", str(plain))
    r2 = run_cli("simulate", str(scenario_path("comparison_convex")),
                 "--robot", "fa", "--controller", "ours",
                 "--starts", "start", "--out", str(withsvg), "--svg")
    assert r1.returncode == 0 and r2.returncode == 0
    assert (withsvg / "world.svg").exists()
    assert ((plain / "trajectory_000.csv").read_bytes()
            == (withsvg / "trajectory_000.csv").read_bytes())


def test_inspect_diffeo_outputs(tmp_path):
    out = tmp_path / "diffeo"
    r = run_cli("inspect-diffeo", str(scenario_path("merge_two")),
                "--grid", "24", "--out", str(out))
    assert r.returncode == 0
    assert (out / "detjac.svg").exists()
    data = np.loadtxt(out / "detjac.csv", delimiter=",", skiprows=1)
    det = data[:, 2]
    assert np.nanmin(det[det > 0]) > 0.0
    assert not np.any(det[~np.isnan(det)] <= 0)


def test_unknown_subcommand_fails():
    r = run_cli("frobnicate")
    assert r.returncode != 0
