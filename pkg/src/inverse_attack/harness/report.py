"""Aggregation of suite rows into summary.csv and SVG figures."""

from __future__ import annotations

import csv
import re
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..planning import ManeuverLabel  # noqa: E402
from .metrics import format_ratio, is_success, metric_cr  # noqa: E402
from .suite import Row, parse_method  # noqa: E402

LABELS = [m.value for m in ManeuverLabel]
SUMMARY_HEADER = (["method", "multiplier", "rows", "errors", "atd_mean_m", "atd_std_m", "pre_mean_m", "pre_std_m",
                   "cr", "success_rate"] + [f"n_{lab}" for lab in LABELS])


def _group_stats(method: str, mult: str, rows: Sequence[Row]) -> list[str]:
    ok = [r for r in rows if not r.is_error]
    out = [method, mult, str(len(rows)), str(len(rows) - len(ok))]
    if not ok:
        return out + [""] * (len(SUMMARY_HEADER) - len(out))
    atd = np.array([r.atd_m for r in ok])
    pre = np.array([r.pre_m for r in ok])
    out += [f"{atd.mean():.4f}", f"{atd.std():.4f}", f"{pre.mean():.4f}", f"{pre.std():.4f}",
            format_ratio(metric_cr(r.collision for r in ok)),
            format_ratio(metric_cr(is_success(r.pre_m) for r in ok))]
    counts = defaultdict(int)
    for r in ok:
        counts[r.label] += 1
    return out + [str(counts[lab]) for lab in LABELS]


def summarize(rows: Sequence[Row]) -> list[list[str]]:
    """One line per method over all multipliers, then one per (method, multiplier)."""
    by_method: dict[str, list[Row]] = defaultdict(list)
    by_mult: dict[tuple[str, float], list[Row]] = defaultdict(list)
    for r in rows:
        by_method[r.method].append(r)
        by_mult[(r.method, r.multiplier)].append(r)
    lines = [_group_stats(m, "all", by_method[m]) for m in sorted(by_method)]
    lines += [_group_stats(m, f"{v:.2f}", by_mult[(m, v)]) for m, v in sorted(by_mult)]
    return lines


def write_summary(rows: Sequence[Row], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        w.writerows(summarize(rows))


def collision_rates(rows: Sequence[Row]) -> dict[str, float]:
    groups: dict[str, list[bool]] = defaultdict(list)
    for r in rows:
        if not r.is_error:
            groups[r.method].append(r.collision)
    return {m: float(metric_cr(v)) for m, v in groups.items()}


def _variant_curve(rates: dict[str, float], base: str, prefix: str) -> tuple[list[float], list[float]]:
    pts = []
    for m, cr in rates.items():
        b, budget, variant = parse_method(m)
        if b == base and budget is None and variant.startswith(prefix):
            pts.append((float(variant[len(prefix):]), cr))
    pts.sort()
    return [p[0] for p in pts], [p[1] for p in pts]


def _budget_curve(rates: dict[str, float], base: str, primary: int | None) -> tuple[list[int], list[float]]:
    pts = []
    for m, cr in rates.items():
        b, budget, variant = parse_method(m)
        if b != base or variant:
            continue
        if budget is None:
            if primary is None:
                continue
            budget = primary
        pts.append((budget, cr))
    pts.sort()
    return [p[0] for p in pts], [p[1] for p in pts]


def _save(fig, path: Path) -> None:
    # fixed metadata keeps the SVG bytes reproducible
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def render_plots(rows: Sequence[Row], out_dir: str | Path, primary_budget: int | None = None) -> list[Path]:
    """Write the figures that the rows support; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "inverse-attack"
    rates = collision_rates(rows)
    written = []
    bases = sorted({parse_method(m)[0] for m in rates})

    plain = [m for m in sorted(rates) if parse_method(m)[1] is None and not parse_method(m)[2]]
    if plain:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.bar(plain, [rates[m] for m in plain], color="0.4")
        ax.set_ylabel("collision rate")
        ax.set_ylim(0, 1)
        fig.tight_layout()
        written.append(out / "cr_by_method.svg")
        _save(fig, written[-1])

    curves = {b: _budget_curve(rates, b, primary_budget) for b in bases}
    curves = {b: c for b, c in curves.items() if len(c[0]) > 1}
    if curves:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for b, (x, y) in curves.items():
            ax.plot(x, y, marker="o", label=b)
        ax.set_xlabel("query budget")
        ax.set_ylabel("collision rate")
        ax.legend(frameon=False)
        fig.tight_layout()
        written.append(out / "cr_vs_budget.svg")
        _save(fig, written[-1])

    for prefix, xlabel, name in (("shift", "displacement (m)", "cr_vs_shift.svg"),
                                 ("size", "object size (m)", "cr_vs_size.svg")):
        curves = {b: _variant_curve(rates, b, prefix) for b in bases}
        curves = {b: c for b, c in curves.items() if c[0]}
        if not curves:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for b, (x, y) in curves.items():
            ax.plot(x, y, marker="o", label=b)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("collision rate")
        ax.legend(frameon=False)
        fig.tight_layout()
        written.append(out / name)
        _save(fig, written[-1])

    by_mult: dict[str, dict[float, list[bool]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if not r.is_error and r.method in plain:
            by_mult[r.method][r.multiplier].append(r.collision)
    if by_mult:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for m in sorted(by_mult):
            xs = sorted(by_mult[m])
            ax.plot(xs, [np.mean(by_mult[m][x]) for x in xs], marker="o", label=m)
        ax.set_xlabel("velocity multiplier")
        ax.set_ylabel("collision rate")
        ax.legend(frameon=False)
        fig.tight_layout()
        written.append(out / "cr_vs_velocity.svg")
        _save(fig, written[-1])

    hazards = [lab for lab in LABELS if lab != ManeuverLabel.UNCHANGED.value]
    attacked = [m for m in plain if m != "none"]
    if attacked:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        bottom = np.zeros(len(attacked))
        for lab in hazards:
            h = np.array([sum(1 for r in rows if r.method == m and r.collision and r.label == lab)
                          for m in attacked], dtype=float)
            ax.bar(attacked, h, bottom=bottom, label=re.sub("_", " ", lab))
            bottom += h
        ax.set_ylabel("colliding rows")
        ax.legend(frameon=False, fontsize="small")
        fig.tight_layout()
        written.append(out / "maneuvers.svg")
        _save(fig, written[-1])
    return written
