"""Trajectory metrics and collision rate."""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

import numpy as np

SUCCESS_PRE = 1.0


def _xy(t) -> np.ndarray:
    return np.asarray(getattr(t, "positions", getattr(t, "xy", t)), dtype=float).reshape(-1, 2)


def metric_atd(pred, planned) -> float:
    """Mean per-step distance between prediction and plan over the shared steps."""
    a, b = _xy(pred), _xy(planned)
    n = min(len(a), len(b))
    if n == 0:
        raise ValueError("trajectories do not overlap")
    return float(np.mean(np.linalg.norm(a[:n] - b[:n], axis=1)))


def metric_pre(plan_clean, plan_attacked) -> float:
    a, b = _xy(plan_clean), _xy(plan_attacked)
    if len(a) != len(b):
        raise ValueError("plans must share the horizon")
    if len(a) == 0:
        raise ValueError("empty plans")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def metric_cr(collisions: Iterable[bool]) -> Fraction:
    """Exact collision rate; format with ``format_ratio``."""
    flags = [bool(c) for c in collisions]
    if not flags:
        raise ValueError("collision rate of no rows")
    return Fraction(sum(flags), len(flags))


def format_ratio(r: Fraction) -> str:
    return f"{float(r):.4f}"


def is_success(pre: float) -> bool:
    return pre > SUCCESS_PRE
