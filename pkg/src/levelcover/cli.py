"""Command-line front end.

Exit codes: 0 success (or coverage predicate true), 1 predicate false,
2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .config import FleetConfig
from .coverage import verify_full_coverage
from .dubins import plan_dubins_3d
from .engine import Scenario, initial_deploy, run
from .exceptions import LevelCoverError, ScenarioError
from .fleet import DROPPED, UavState
from .geometry import Circle, Point2, Pose3
from .packing import CLASSIFICATIONS, build_packing
from .protocol import POLICIES, UNRECOVERABLE
from .svg import render_dubins, render_keyframe, render_packing, render_transitions

EXIT_OK, EXIT_FALSE, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise _UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise _UsageError(f"{path}: invalid JSON ({exc})") from exc


def _write(path, text):
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def load_scenario(path, args=None) -> Scenario:
    """Read a scenario file; a bare ``{"x": [...], "y": [...]}`` polygon is accepted too."""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    if "polygon" not in data and "x" in data and "y" in data:
        data = {"polygon": data}
    overrides = {}
    if args is not None:
        for flag, key in (("classification", "classification"), ("policy", "policy"), ("seed", "seed"),
                          ("dt", "dt"), ("resolution", "grid_resolution")):
            v = getattr(args, flag, None)
            if v is not None:
                overrides[key] = v
    data = dict(data, **overrides)
    return Scenario.from_dict(data)


def cmd_pack(args) -> int:
    sc = load_scenario(args.scenario, args)
    packing = build_packing(sc.polygon, sc.config, sc.classification, sc.anchor)
    out = Path(args.out or ".")
    target = out if out.suffix == ".json" else out / "packing.json"
    _write(target, packing.to_json(indent=1) + "\n")
    if args.svg:
        _write(args.svg, render_packing(packing, title=f"{sc.name}: {len(packing.base_squares)} base squares"))
    print(json.dumps({"base_count": len(packing.base_squares), "packing": str(target)}, sort_keys=True))
    return EXIT_OK


def _first_snapshot_at(snaps, t):
    for s in snaps:
        if s.time >= t - 1e-9:
            return s
    return snaps[-1]


def _frames(result, out: Path):
    snaps = result.snapshots
    drops = [r for r in result.trace if r["type"] == "event"]
    decisions = [r for r in result.trace if r["type"] == "decision"]
    paths = []
    failed = set()
    by_id = {a.id: a for a in snaps[0].fleet}
    for r in drops:
        failed |= {by_id[i].assigned_square for i in r["uav_ids"]}
    if drops:
        s = _first_snapshot_at(snaps, drops[0]["t"])
        paths.append(("frame_post_drop.svg", render_keyframe(result.packing, s.fleet, failed, (), "after drop-out")))
    if decisions:
        s = _first_snapshot_at(snaps, decisions[0]["t"])
        rec = {d["decision"]["target_square"] for d in decisions if d["decision"]["kind"] != UNRECOVERABLE}
        paths.append(("frame_post_decision.svg",
                      render_keyframe(result.packing, s.fleet, failed, rec, "recovery decisions", show_circles=False)))
    rec = {a.assigned_square for a in result.fleet if a.mode != DROPPED and a.level > 1}
    paths.append(("frame_final.svg", render_keyframe(result.packing, result.fleet, failed, rec, "final")))
    for name, text in paths:
        _write(out / name, text)
    return [str(out / n) for n, _ in paths]


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario, args)
    result = run(sc)
    out = Path(args.out or "out")
    written = {k: str(v) for k, v in result.write(out).items()}
    if args.frames:
        written["frames"] = _frames(result, out)
    if args.transitions:
        _write(out / "transitions.svg", render_transitions(result.plans, result.packing))
        written["transitions"] = str(out / "transitions.svg")
    rep = result.report
    summary = {k: rep[k] for k in ("initial", "lost", "promotions", "lendings", "unrecoverable")}
    summary["final_coverage"] = rep["final_coverage"]["fraction_covered"]
    summary["outputs"] = written
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _load_fleet(path, velocity):
    """Fleet from a JSON list, an object with a ``fleet`` key, or the last snapshot of a trace."""
    p = Path(path)
    if p.suffix == ".jsonl":
        last = None
        try:
            with open(p) as fh:
                for line in fh:
                    rec = json.loads(line)
                    if rec.get("type") == "snapshot":
                        last = rec
        except OSError as exc:
            raise _UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
        if last is None:
            raise _UsageError(f"{path}: no snapshot record")
        data = last["fleet"]
    else:
        data = _read_json(path)
        if isinstance(data, dict):
            data = data.get("fleet")
    if not isinstance(data, list):
        raise _UsageError(f"{path}: expected a fleet list")
    try:
        return [UavState.from_dict(d, velocity) for d in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise _UsageError(f"{path}: malformed fleet entry ({exc})") from exc


def cmd_verify_coverage(args) -> int:
    sc = load_scenario(args.scenario, args)
    if args.fleet:
        fleet = _load_fleet(args.fleet, sc.config.velocity)
    else:
        fleet = initial_deploy(build_packing(sc.polygon, sc.config, sc.classification, sc.anchor), sc.config)
    rep = verify_full_coverage(fleet, sc.polygon, sc.grid_resolution, sc.config)
    text = json.dumps(dict(rep.to_dict(), schema_version=1), sort_keys=True, indent=1) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if rep.fully_covered else EXIT_FALSE


def _parse_pose(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise _UsageError(f"pose {text!r} must be x,y,h,heading") from exc
    if len(vals) != 4:
        raise _UsageError(f"pose {text!r} must be x,y,h,heading")
    return Pose3(*vals)


def _circle(d):
    return None if d is None else Circle(Point2(float(d["x"]), float(d["y"])), float(d["r"]))


def cmd_plan_dubins(args) -> int:
    spec = _read_json(args.spec) if args.spec else {}
    try:
        start = Pose3.from_dict(spec["start"]) if "start" in spec else None
        goal = Pose3.from_dict(spec["goal"]) if "goal" in spec else None
        start_c, goal_c = _circle(spec.get("start_circle")), _circle(spec.get("goal_circle"))
    except (KeyError, TypeError, ValueError) as exc:
        raise _UsageError(f"invalid plan spec ({exc})") from exc
    if args.start:
        start = _parse_pose(args.start)
    if args.goal:
        goal = _parse_pose(args.goal)
    if start is None or goal is None:
        raise _UsageError("plan-dubins needs a start and a goal pose (--start/--goal or --spec)")
    r_turn = float(args.r_turn if args.r_turn is not None else spec.get("r_turn", FleetConfig().r_l_min))
    speed = float(args.speed if args.speed is not None else spec.get("speed", 1.0))
    climb = args.max_climb_rate if args.max_climb_rate is not None else spec.get("max_climb_rate", math.inf)
    denied = args.deny.split(",") if args.deny else spec.get("denied", [])
    path = plan_dubins_3d(start, goal, r_turn, speed, float(climb), [w for w in denied if w])
    text = json.dumps(path.to_dict(), sort_keys=True, indent=1) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.svg:
        _write(args.svg, render_dubins(path, start_c, goal_c, r_turn, f"{path.word_string} path"))
    return EXIT_OK


def cmd_render(args) -> int:
    if not args.trace and not args.scenario:
        raise _UsageError("render needs --trace or --scenario")
    if not args.svg:
        raise _UsageError("render needs --svg")
    snap = None
    if args.trace:
        header = None
        try:
            with open(args.trace) as fh:
                for line in fh:
                    rec = json.loads(line)
                    if rec.get("type") == "header":
                        header = rec
                    elif rec.get("type") == "snapshot" and (args.time is None or rec["t"] <= args.time + 1e-9):
                        snap = rec
        except OSError as exc:
            raise _UsageError(f"cannot read {args.trace}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise _UsageError(f"{args.trace}: invalid JSON line ({exc})") from exc
        if header is None:
            raise _UsageError(f"{args.trace}: no header record")
        sc = Scenario.from_dict(header["scenario"])
    else:
        sc = load_scenario(args.scenario, args)
    packing = build_packing(sc.polygon, sc.config, sc.classification, sc.anchor)
    if snap is None:
        text = render_packing(packing, title=sc.name)
    else:
        fleet = [UavState.from_dict(d, sc.config.velocity) for d in snap["fleet"]]
        failed = {a.assigned_square for a in fleet if a.mode == DROPPED}
        rec = {a.assigned_square for a in fleet if a.mode != DROPPED and a.level > 1}
        text = render_keyframe(packing, fleet, failed, rec, f"{sc.name} t={snap['t']:g}")
    _write(args.svg, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levelcover", description="Level-homogeneous loitering coverage tools")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=True):
        sp.add_argument("--scenario", required=scenario_required, help="scenario or polygon JSON file")
        sp.add_argument("--classification", choices=CLASSIFICATIONS)
        sp.add_argument("--resolution", type=float, help="coverage grid resolution in metres")

    sp = sub.add_parser("pack", help="build the square packing")
    common(sp)
    sp.add_argument("--out", help="output directory or .json file")
    sp.add_argument("--svg", help="write an SVG of the packing")
    sp.set_defaults(func=cmd_pack)

    sp = sub.add_parser("simulate", help="run a scenario")
    common(sp)
    sp.add_argument("--out", help="output directory (default ./out)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--policy", choices=POLICIES)
    sp.add_argument("--frames", action="store_true", help="write SVG keyframes")
    sp.add_argument("--transitions", action="store_true", help="write an SVG of transition paths")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify-coverage", help="check per-cycle full coverage")
    common(sp)
    sp.add_argument("--fleet", help="fleet JSON or trace JSONL (last snapshot); default is the initial deployment")
    sp.add_argument("--out", help="report JSON path (default stdout)")
    sp.set_defaults(func=cmd_verify_coverage)

    sp = sub.add_parser("plan-dubins", help="plan one 3D Dubins path")
    sp.add_argument("--spec", help="JSON with start, goal, r_turn and optional circles")
    sp.add_argument("--start", help="x,y,h,heading")
    sp.add_argument("--goal", help="x,y,h,heading")
    sp.add_argument("--r-turn", type=float, dest="r_turn")
    sp.add_argument("--speed", type=float)
    sp.add_argument("--max-climb-rate", type=float, dest="max_climb_rate")
    sp.add_argument("--deny", help="comma-separated words to exclude, e.g. RLR,LRL")
    sp.add_argument("--out", help="path JSON (default stdout)")
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_plan_dubins)

    sp = sub.add_parser("render", help="render a packing or a trace snapshot")
    common(sp, scenario_required=False)
    sp.add_argument("--trace", help="trace JSONL written by simulate")
    sp.add_argument("--time", type=float, help="render the last snapshot at or before this time")
    sp.add_argument("--svg", help="output SVG path")
    sp.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (_UsageError, LevelCoverError) as exc:
        print(f"levelcover {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
