"""Command line entry point: run, attack, replay, defend, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .defense import DefenseConfig
from .harness.report import render_plots, write_summary
from .harness.scenarios import BudgetError, SuiteConfig, load_suite, suite_scenarios
from .harness.suite import (ROW_HEADER, attack_rng, evaluate_rows, read_rows, row_seed, run_attack, run_suite,
                            write_detections, write_rows)
from .lidar import AdvObject, Board, Cluster
from .scene import SceneSim
from .world import ConfigError, ScenarioConfig, load_yaml

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3


def _suite(args) -> SuiteConfig:
    suite = load_suite(args.config)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "budget", None) is not None:
        updates["budget"] = args.budget
    if getattr(args, "method", None):
        updates["methods"] = (args.method, "none")
    if getattr(args, "defense", None):
        updates["defense"] = args.defense == "on"
    if getattr(args, "repeats", None) is not None:
        updates["repeats"] = args.repeats
    return replace(suite, **updates) if updates else suite


def _scene(args) -> ScenarioConfig:
    """A scenario file, or scene ``--scene`` of a suite file (or of the default suite)."""
    data = load_yaml(args.config) if args.config else {}
    if "adv_pose" in data:
        cfg = ScenarioConfig.from_dict(data)
    else:
        suite = SuiteConfig.from_dict(data)
        if args.seed is not None:
            suite = replace(suite, seed=args.seed)
        if not 0 <= args.scene < (len(suite.scenarios) or suite.n_scenes):
            raise ConfigError(f"scene index {args.scene} outside the suite")
        cfg = suite_scenarios(suite)[args.scene]
    if getattr(args, "budget", None) is not None:
        cfg = replace(cfg, query_budget=args.budget)
    return cfg


def _objects(payload) -> list[AdvObject]:
    items = payload["final"] if isinstance(payload, dict) else payload
    out = []
    for it in items:
        model = Board() if it.get("model") == "board" else Cluster(it.get("radius", 0.2), it.get("points", 4))
        out.append(AdvObject(tuple(it["location"]), model, int(it.get("seed", 0))))
    return out


def _dump_objects(objs) -> list[dict]:
    out = []
    for o in objs:
        d = {"location": [round(c, 6) for c in o.location], "seed": o.seed}
        if isinstance(o.model, Board):
            d["model"] = "board"
        else:
            d.update(model="cluster", radius=o.model.radius, points=o.model.n_points)
        out.append(d)
    return out


# --------------------------------------------------------------------------- commands

def cmd_run(args) -> int:
    suite = _suite(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_suite(suite, jobs=args.jobs)
    write_rows(rows, out / "rows.csv")
    write_summary(rows, out / "summary.csv")
    if suite.defense:
        write_detections(rows, out / "detections.csv")
    render_plots(rows, out / "plots", suite.budget)
    errors = sum(r.is_error for r in rows)
    print(f"{len(rows)} rows ({errors} errors) -> {out}")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _scene(args)
    budget = cfg.query_budget
    method = args.method or "inverse"
    if method == "inverse" and budget < len(cfg.velocity_multipliers):
        raise BudgetError(f"budget {budget} below the {len(cfg.velocity_multipliers)} clean-plan queries")
    if budget < 1 and method == "bruteforce":
        raise BudgetError("brute force needs a budget of at least 1")
    sim = SceneSim(cfg)
    # same stream as the suite's first repeat, so replaying reproduces its rows
    objs, used = run_attack(sim, method, budget, attack_rng(row_seed(cfg), method, budget))
    payload = {"scenario_id": cfg.scenario_id, "method": method, "budget": budget, "queries": used,
               "final": _dump_objects(objs)}
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _replay(args, defense) -> int:
    cfg = _scene(args)
    try:
        objs = _objects(json.loads(Path(args.locations).read_text()))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read locations {args.locations}: {exc}") from exc
    sim = SceneSim(cfg)
    rows = evaluate_rows(sim, objs, "replay" if defense is None else "replay+defense", 0, row_seed(cfg),
                         cfg.scenario_id, defense)
    if args.out:
        write_rows(rows, args.out)
    header = ROW_HEADER + (["flagged", "violations"] if defense else [])
    print(",".join(header))
    for r in rows:
        extra = [str(r.flagged).lower(), str(r.violations)] if defense else []
        print(",".join(r.csv_fields() + extra))
    return EXIT_OK


def cmd_replay(args) -> int:
    return _replay(args, DefenseConfig() if args.defense == "on" else None)


def cmd_defend(args) -> int:
    return _replay(args, DefenseConfig())


def cmd_report(args) -> int:
    try:
        rows = read_rows(args.rows)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary(rows, out / "summary.csv")
    paths = render_plots(rows, out / "plots", args.budget)
    print(f"summary and {len(paths)} plots -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inverse-attack", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scene=False):
        sp.add_argument("--config", type=str, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--budget", type=int, default=None)
        if scene:
            sp.add_argument("--scene", type=int, default=0, help="scene index when --config is a suite")

    sp = sub.add_parser("run", help="run a suite and write rows.csv, summary.csv and plots")
    common(sp)
    sp.add_argument("--method", choices=["inverse", "bruteforce", "random"], default=None)
    sp.add_argument("--out", default="out")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--defense", choices=["on", "off"], default=None)
    sp.add_argument("--repeats", type=int, default=None)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("attack", help="attack one scene and print the location set")
    common(sp, scene=True)
    sp.add_argument("--method", choices=["inverse", "bruteforce", "random"], default="inverse")
    sp.add_argument("--out", default=None, help="also write the JSON here")
    sp.set_defaults(func=cmd_attack)

    for name, fn, hlp in (("replay", cmd_replay, "evaluate a stored location set"),
                          ("defend", cmd_defend, "evaluate a stored location set with the defense")):
        sp = sub.add_parser(name, help=hlp)
        common(sp, scene=True)
        sp.add_argument("--locations", required=True)
        sp.add_argument("--out", default=None, help="write rows.csv here")
        if name == "replay":
            sp.add_argument("--defense", choices=["on", "off"], default="off")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("report", help="summary.csv and plots from an existing rows.csv")
    sp.add_argument("--rows", required=True)
    sp.add_argument("--out", default="report")
    sp.add_argument("--budget", type=int, default=None, help="budget of the unsuffixed method rows")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
