"""Kinematic heading-consistency check on tracked states, and state repair."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .perception import Track, smoothed_rates
from .world import max_heading_change, wrap_angle


@dataclass(frozen=True)
class DefenseConfig:
    wheelbase: float = 2.5
    theta_max: float = 1.0
    min_violations: int = 2
    # slack on the bound, absorbs detector heading jitter on static vehicles
    heading_tolerance: float = 0.05

    def __post_init__(self):
        if self.wheelbase <= 0 or self.theta_max <= 0 or self.min_violations < 1:
            raise ValueError("defense parameters must be positive")
        if self.heading_tolerance < 0:
            raise ValueError("heading_tolerance must be non-negative")


@dataclass
class Detection:
    flagged: bool
    violating_frames: list[int] = field(default_factory=list)


def heading_violations(track: Track, cfg: DefenseConfig, dt: float) -> list[int]:
    """Indices i whose heading change from i-1 exceeds the bicycle-model bound."""
    out = []
    for i in range(1, len(track)):
        bound = max_heading_change(max(float(track.speed[i]), 0.0), dt, cfg.theta_max, cfg.wheelbase)
        if abs(wrap_angle(track.heading[i] - track.heading[i - 1])) > bound + cfg.heading_tolerance:
            out.append(i)
    return out


def detect_adversarial(track: Track, cfg: DefenseConfig = DefenseConfig(), dt: float | None = None) -> Detection:
    if len(track) < 2:
        raise ValueError("track needs at least two states")
    v = heading_violations(track, cfg, track.dt if dt is None else dt)
    return Detection(len(v) >= cfg.min_violations, v)


def repair_states(track: Track, violating_frames, cfg: DefenseConfig = DefenseConfig(),
                  dt: float | None = None) -> tuple[Track, bool]:
    """Replace violating states by straight constant-speed propagation of the
    nearest preceding clean state. Returns (track, warning) where the warning
    marks a violation at the first frame, which is left as is."""
    dt = track.dt if dt is None else dt
    bad = sorted(set(int(i) for i in violating_frames))
    out = track.copy()
    if not bad:
        return out, False
    warn = False
    bad_set = set(bad)
    for i in bad:
        j = i - 1
        while j >= 0 and j in bad_set:
            j -= 1
        if j < 0:
            warn = True
            continue
        steps = i - j
        h = out.heading[j]
        v = max(float(out.speed[j]), 0.0)
        out.xy[i] = out.xy[j] + steps * v * dt * np.array([math.cos(h), math.sin(h)])
        out.heading[i] = h
    out.speed, out.accel = smoothed_rates(out.xy, dt, getattr(track, "alpha", 0.5))
    return out, warn
