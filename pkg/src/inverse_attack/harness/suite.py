"""Suite runner: attacks every scene, evaluates at every velocity multiplier and
writes one row per (scene, method variant, multiplier)."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..attack import (InverseConfig, QueryLedger, SearchRegion, baseline_random, bruteforce_trace,
                      inverse_attack)
from ..defense import DefenseConfig, heading_violations
from ..lidar import AdvObject, Board, Cluster, points_for_size
from ..scene import SceneSim
from ..world import ScenarioConfig
from .scenarios import SuiteConfig, derive_seed, suite_scenarios

log = logging.getLogger(__name__)

ROW_HEADER = ["scenario", "method", "multiplier", "atd_m", "pre_m", "collision", "label", "queries", "seed"]
# stream ids for derive_seed, fixed so adding a method never shifts another's draws
_STREAM = {"inverse": 1, "bruteforce": 2, "random": 3, "none": 4, "shift": 5, "size": 6}


@dataclass
class Row:
    scenario: str
    method: str
    multiplier: float
    atd_m: float
    pre_m: float
    collision: bool
    label: str
    queries: int
    seed: int
    # not written to rows.csv
    flagged: bool = False
    violations: int = 0

    @property
    def is_error(self) -> bool:
        return self.label.startswith("error")

    def csv_fields(self) -> list[str]:
        return [self.scenario, self.method, f"{self.multiplier:.2f}", _num(self.atd_m), _num(self.pre_m),
                "true" if self.collision else "false", self.label, str(self.queries), str(self.seed)]

    def sort_key(self):
        return (self.scenario, self.method, self.multiplier, self.seed)


def _num(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.4f}"


def attack_rng(row_seed: int, method: str, budget: int) -> np.random.Generator:
    """Generator for a scene's attack. Brute force draws one stream for all budgets."""
    if method == "bruteforce":
        return np.random.default_rng(derive_seed(row_seed, _STREAM[method]))
    return np.random.default_rng(derive_seed(row_seed, _STREAM[method], budget))


def row_seed(cfg: ScenarioConfig, repeat: int = 0) -> int:
    return derive_seed(cfg.seed, repeat)


def parse_method(method: str) -> tuple[str, int | None, str]:
    """'inverse@100' -> ('inverse', 100, ''); 'inverse+shift0.10' -> ('inverse', None, 'shift0.10')."""
    name, _, variant = method.partition("+")
    base, _, budget = name.partition("@")
    return base, (int(budget) if budget else None), variant


# --------------------------------------------------------------------------- one scene

def region_of(cfg: ScenarioConfig) -> SearchRegion:
    lo, hi = cfg.search_region
    return SearchRegion(lo, hi, cfg.adv_pose)


def object_model(cfg: ScenarioConfig):
    return Board() if cfg.object_model == "board" else Cluster(cfg.cluster_radius, cfg.cluster_points)


def run_attack(sim: SceneSim, method: str, budget: int, rng: np.random.Generator, model=None,
               inverse_cfg: InverseConfig = InverseConfig(), trace=None) -> tuple[list[AdvObject], int]:
    """Location set planned at the base speed, and the queries it used.

    Brute force can be handed a precomputed ``trace``; its first ``budget``
    draws are then used instead of sampling afresh."""
    cfg = sim.cfg
    region = region_of(cfg)
    model = object_model(cfg) if model is None else model
    if method == "inverse":
        res = inverse_attack(sim, region, budget, rng, inverse_cfg, model, cfg.n_objects)
        if res.note:
            log.debug("%s: %s", cfg.scenario_id, res.note)
        return res.locations, res.ledger.total
    if method == "bruteforce":
        if trace is None or len(trace.sets) < budget:
            trace = bruteforce_trace(sim, region, budget, cfg.n_objects, QueryLedger(budget), rng, model)
        objs, _, used = trace.best(budget)
        return objs, used
    if method == "random":
        return baseline_random(region, cfg.n_objects, rng, model), 0
    if method == "none":
        return [], 0
    raise ValueError(f"unknown method {method!r}")


def evaluate_rows(sim: SceneSim, objects: Sequence[AdvObject], method: str, queries: int, seed: int,
                  scenario: str, defense: DefenseConfig | None = None) -> list[Row]:
    rows = []
    for m in sim.cfg.velocity_multipliers:
        o = sim.evaluate(objects, m, defense)
        n_viol = 0
        if defense is not None:
            n_viol = len(heading_violations(sim.track(objects, m), defense, sim.cfg.dt))
        rows.append(Row(scenario, method, m, o.atd, o.pre, o.collision, o.label.value, queries, seed,
                        o.flagged, n_viol))
    return rows


def error_rows(cfg: ScenarioConfig, method: str, seed: int, scenario: str, exc: BaseException) -> list[Row]:
    label = f"error:{type(exc).__name__}"
    return [Row(scenario, method, m, math.nan, math.nan, False, label, 0, seed)
            for m in cfg.velocity_multipliers]


def _shifted(objects: Sequence[AdvObject], directions: np.ndarray, shift: float) -> list[AdvObject]:
    return [o.moved(shift * d) for o, d in zip(objects, directions)]


def run_scene(suite: SuiteConfig, cfg: ScenarioConfig, repeat: int = 0) -> list[Row]:
    """All rows for one scene and repeat. Failures become error rows."""
    seed = row_seed(cfg, repeat)
    scenario = cfg.scenario_id if suite.repeats == 1 else f"{cfg.scenario_id}/r{repeat}"
    sim = SceneSim(cfg)
    defense = DefenseConfig() if suite.defense else None
    rows: list[Row] = []

    def guarded(method, fn):
        try:
            rows.extend(fn())
        except Exception as exc:  # one bad variant must not sink the suite
            log.warning("%s %s failed: %s", scenario, method, exc)
            rows.extend(error_rows(cfg, method, seed, scenario, exc))

    for method in suite.methods:
        stream = _STREAM[method]
        state: dict = {}
        budgets = [suite.budget, *suite.budget_sweep.get(method, ())]
        if method == "bruteforce":
            # one stream of draws; every budget takes its prefix
            rng = attack_rng(seed, method, max(budgets))
            try:
                state["trace"] = bruteforce_trace(sim, region_of(cfg), max(budgets), cfg.n_objects,
                                                  QueryLedger(max(budgets)), rng, object_model(cfg))
            except Exception as exc:
                log.warning("%s bruteforce sampling failed: %s", scenario, exc)

        def primary(method=method, stream=stream, state=state):
            objs, q = run_attack(sim, method, suite.budget, attack_rng(seed, method, suite.budget),
                                 trace=state.get("trace"))
            state["objs"], state["q"] = objs, q
            return evaluate_rows(sim, objs, method, q, seed, scenario)

        guarded(method, primary)
        for b in suite.budget_sweep.get(method, ()):
            if b == suite.budget:
                continue
            tag = f"{method}@{b}"

            def swept(method=method, stream=stream, b=b, tag=tag, state=state):
                objs, q = run_attack(sim, method, b, attack_rng(seed, method, b), trace=state.get("trace"))
                return evaluate_rows(sim, objs, tag, q, seed, scenario)

            guarded(tag, swept)
        if "objs" not in state:
            continue
        objs, q = state["objs"], state["q"]
        if defense is not None:
            guarded(f"{method}+defense",
                    lambda method=method, objs=objs, q=q: evaluate_rows(sim, objs, f"{method}+defense", q, seed,
                                                                        scenario, defense))
        if method == "none" or method not in suite.sweep_methods:
            continue
        if suite.shifts:
            # the same directions at every magnitude, several draws per scene
            rng = np.random.default_rng(derive_seed(seed, _STREAM["shift"], stream))
            dirs = rng.normal(size=(suite.shift_draws, len(objs), 3))
            dirs /= np.maximum(np.linalg.norm(dirs, axis=2, keepdims=True), 1e-12)
            for s in suite.shifts:
                tag = f"{method}+shift{s:.2f}"
                guarded(tag, lambda tag=tag, s=s, objs=objs, q=q:
                        [r for d in dirs for r in evaluate_rows(sim, _shifted(objs, d, s), tag, q, seed, scenario)])
        if suite.sizes and method != "random":
            for size in suite.sizes:
                tag = f"{method}+size{size:.2f}"

                def sized(method=method, stream=stream, size=size, tag=tag):
                    model = Cluster(size, points_for_size(size))
                    rng = np.random.default_rng(derive_seed(seed, _STREAM["size"], stream, int(round(size * 1000))))
                    o, qq = run_attack(sim, method, suite.budget, rng, model)
                    return evaluate_rows(sim, o, tag, qq, seed, scenario)

                guarded(tag, sized)
    return rows


def _scene_task(args):
    suite, cfg, repeat = args
    return run_scene(suite, cfg, repeat)


def run_suite(suite: SuiteConfig, configs: Sequence[ScenarioConfig] | None = None, jobs: int = 1) -> list[Row]:
    """Rows for every scene and repeat, sorted by (scenario, method, multiplier)."""
    configs = suite_scenarios(suite) if configs is None else list(configs)
    tasks = [(suite, cfg, r) for cfg in configs for r in range(suite.repeats)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_scene_task, tasks))
    else:
        chunks = [_scene_task(t) for t in tasks]
    rows = [r for c in chunks for r in c]
    rows.sort(key=Row.sort_key)
    return rows


# --------------------------------------------------------------------------- csv

def write_rows(rows: Iterable[Row], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_HEADER)
        for r in rows:
            w.writerow(r.csv_fields())


def write_detections(rows: Iterable[Row], path: str | Path) -> None:
    """Defense outcomes for the '+defense' rows (not part of rows.csv)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "method", "multiplier", "flagged", "violations"])
        for r in rows:
            if parse_method(r.method)[2] == "defense" and not r.is_error:
                w.writerow([r.scenario, r.method, f"{r.multiplier:.2f}", "true" if r.flagged else "false",
                            r.violations])


def read_rows(path: str | Path) -> list[Row]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ROW_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        out = []
        for rec in reader:
            s, meth, m, atd, pre, col, label, q, seed = rec
            out.append(Row(s, meth, float(m), float(atd), float(pre), col == "true", label, int(q), int(seed)))
    return out
