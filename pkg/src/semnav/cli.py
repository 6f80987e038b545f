"""Command-line front end: scenario validation, simulation, map inspection.

Exit codes: 0 success, 2 validation failure, 3 episode failure, 4 parse error.
The geometric tolerance can be overridden with the SEMNAV_EPS environment
variable (read once at import).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .diffeo import build_snapshot, grid_eval
from .errors import ParseError, SemnavError
from .render import render_heatmap, render_world
from .sim import EpisodeConfig, grid_starts, run_batch
from .world import SemanticMapState, load_scenario, mapped_space_recovery, validate_scenario

_ROBOT_TYPES = {"fa": "fully-actuated", "dd": "diffdrive"}


def cmd_check(args) -> int:
    scen = load_scenario(args.scenario)
    problems = validate_scenario(scen)
    if problems:
        for p in problems:
            print(f"VIOLATION: {p}")
        return 2
    print("scenario OK")
    return 0


def _parse_starts(spec: str, scen):
    if spec == "start":
        return [scen.start]
    if spec.startswith("grid "):
        try:
            nx, ny = (int(t) for t in spec[5:].lower().split("x"))
        except ValueError as err:
            raise ParseError(f"bad --starts grid spec {spec!r}") from err
        return grid_starts(scen, nx, ny)
    raise ParseError(f"unknown --starts spec {spec!r} (use 'start' or 'grid NxM')")


def cmd_simulate(args) -> int:
    scen = load_scenario(args.scenario)
    if args.robot:
        scen.robot_type = _ROBOT_TYPES[args.robot]
    starts = _parse_starts(args.starts, scen)
    if not starts:
        print("no valid start states", file=sys.stderr)
        return 2
    config = EpisodeConfig(controller=args.controller)
    summary = run_batch(scen, starts, config)
    os.makedirs(args.out, exist_ok=True)
    for i, traj in enumerate(summary["trajectories"]):
        traj.write_csv(os.path.join(args.out, f"trajectory_{i:03d}.csv"))
        traj.write_events_csv(os.path.join(args.out, f"events_{i:03d}.csv"))
    report = {k: v for k, v in summary.items() if k != "trajectories"}
    report["min_clearance"] = (None if math.isinf(report["min_clearance"])
                               else report["min_clearance"])
    with open(os.path.join(args.out, "summary.json"), "w") as f:
        json.dump(report, f, indent=2)
    print(json.dumps(report, indent=2))
    if args.svg:
        render_world(scen, summary["trajectories"],
                     os.path.join(args.out, "world.svg"))
    if any(o.startswith("failed") for o in summary["outcomes"]):
        return 3
    return 0


def cmd_inspect_diffeo(args) -> int:
    scen = load_scenario(args.scenario)
    semantic = SemanticMapState(mode=set(range(len(scen.familiar_polys))))
    mapped = mapped_space_recovery(semantic, scen)
    snap = build_snapshot(mapped.obstacles, semantic.mode, scen.diffeo)
    fv = scen.enclosing_freespace.vertices
    bounds = ((fv[:, 0].min(), fv[:, 1].min()), (fv[:, 0].max(), fv[:, 1].max()))
    rows = grid_eval(snap, bounds, args.grid)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "detjac.csv"), "w") as f:
        f.write("x,y,detJ,phi_x,phi_y\n")
        for r in rows:
            f.write(",".join(f"{v:.12g}" for v in r) + "\n")
    render_heatmap(rows, args.grid, bounds,
                   os.path.join(args.out, "detjac.svg"))
    dets = np.array([r[2] for r in rows])
    finite = dets[np.isfinite(dets)]
    print(f"grid {args.grid}x{args.grid}: min det "
          f"{finite.min():.6g}, max det {finite.max():.6g}")
    return 0 if (len(finite) == 0 or finite.min() > 0) else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="semnav",
        description="Reactive navigation among partially familiar obstacles")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="validate a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="run episodes and write CSV/SVG output")
    p.add_argument("scenario")
    p.add_argument("--robot", choices=sorted(_ROBOT_TYPES), default=None,
                   help="override the scenario robot type")
    p.add_argument("--controller", choices=["ours", "baseline"], default="ours")
    p.add_argument("--starts", default="start",
                   help="'start' (scenario start) or 'grid NxM'")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect-diffeo",
                       help="grid-evaluate det of the map Jacobian")
    p.add_argument("scenario")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect_diffeo)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as err:
        print(f"parse error: {err}", file=sys.stderr)
        return 4
    except SemnavError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
