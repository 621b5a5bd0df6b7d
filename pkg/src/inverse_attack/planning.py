"""Sampling planner over nine maneuver candidates, collision test and
maneuver categorization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .prediction import PredictedTrajectory
from .world import AgentState, Pose2D, Trajectory, VehicleDims, bicycle_step


class ManeuverLabel(str, Enum):
    UNCHANGED = "unchanged"
    SUDDEN_BRAKE = "sudden_brake"
    SUDDEN_ACCELERATION = "sudden_acceleration"
    LANE_CHANGE_LEFT = "lane_change_left"
    LANE_CHANGE_RIGHT = "lane_change_right"


@dataclass(frozen=True)
class PlannerConfig:
    accel_options: tuple[float, ...] = (-2.0, 0.0, 2.0)
    lateral_offsets: tuple[float, ...] = (-3.5, 0.0, 3.5)
    collision_weight: float = 100.0
    path_weight: float = 1.0
    speed_weight: float = 0.5
    safety_margin: float = 0.0
    ego_dims: VehicleDims = field(default_factory=VehicleDims)
    other_dims: VehicleDims = field(default_factory=VehicleDims)

    def __post_init__(self):
        if min(self.collision_weight, self.path_weight, self.speed_weight) <= 0:
            raise ValueError("planner weights must be positive")
        if self.safety_margin < 0:
            raise ValueError("safety_margin must be non-negative")


LONGITUDINAL_THRESHOLD = 2.0
LATERAL_THRESHOLD = 1.0


# --------------------------------------------------------------------------- reference path

class Polyline:
    """Arc-length parameterized reference path."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(self.points) < 2:
            raise ValueError("reference path needs two points")
        seg = np.diff(self.points, axis=0)
        self.lengths = np.linalg.norm(seg, axis=1)
        if np.any(self.lengths <= 0):
            raise ValueError("reference path has repeated points")
        self.tangents = seg / self.lengths[:, None]
        self.cum = np.r_[0.0, np.cumsum(self.lengths)]

    def project(self, xy) -> tuple[float, float]:
        """(arc length, signed lateral offset, left positive) of the nearest point."""
        p = np.asarray(xy, dtype=float)
        rel = p - self.points[:-1]
        along = np.clip((rel * self.tangents).sum(axis=1), 0.0, self.lengths)
        foot = self.points[:-1] + along[:, None] * self.tangents
        i = int(np.argmin(np.linalg.norm(p - foot, axis=1)))
        t = self.tangents[i]
        lat = float(t[0] * rel[i, 1] - t[1] * rel[i, 0])
        return float(self.cum[i] + along[i]), lat

    def frame_at(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Points and unit tangents at arc lengths ``s`` (extrapolated at the ends)."""
        s = np.asarray(s, dtype=float)
        i = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.lengths) - 1)
        t = self.tangents[i]
        return self.points[i] + (s - self.cum[i])[:, None] * t, t


# --------------------------------------------------------------------------- candidates

def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def candidate_order(cfg: PlannerConfig) -> list[tuple[float, float]]:
    """(accel, offset) pairs; the keep-lane constant-speed candidate comes first,
    then pure longitudinal changes, then lane changes."""
    accs = sorted(cfg.accel_options, key=lambda a: (abs(a) > 0, a))
    offs = sorted(cfg.lateral_offsets, key=lambda o: (abs(o) > 0, -o))
    return [(a, o) for o in offs for a in accs]


def rollout(ego: AgentState, accel: float, offset: float, path: Polyline, T: int, dt: float,
            wheelbase: float = 2.5) -> tuple[Trajectory, np.ndarray]:
    """Candidate trajectory for steps 1..T and its lateral offsets from the path."""
    s0, lat0 = path.project(ego.pose.xy)
    state = AgentState(Pose2D(0.0, 0.0, 0.0), ego.speed, 0.0, 0)
    s, v = np.empty(T), np.empty(T)
    for k in range(T):
        state = bicycle_step(state, 0.0, accel, dt, wheelbase)
        s[k], v[k] = state.pose.x, state.speed
    horizon = T * dt
    tk = dt * np.arange(1, T + 1)
    lat = lat0 + (offset - lat0) * _smoothstep(tk / horizon)
    base, tan = path.frame_at(s0 + s)
    normal = np.stack([-tan[:, 1], tan[:, 0]], axis=1)
    xy = base + lat[:, None] * normal
    prev = np.vstack([ego.pose.xy, xy[:-1]])
    step = xy - prev
    heading = np.where(np.linalg.norm(step, axis=1) > 1e-9, np.arctan2(step[:, 1], step[:, 0]),
                       np.arctan2(tan[:, 1], tan[:, 0]))
    acc = np.full(T, accel)
    return Trajectory(xy, heading, v, dt, acc, t0=1), lat


def _as_traj(p) -> Trajectory:
    return p.as_trajectory() if isinstance(p, PredictedTrajectory) else p


def candidate_rollouts(ego: AgentState, reference, cfg: PlannerConfig, T: int, dt: float) -> list:
    """((accel, offset), trajectory, lateral offsets) for every candidate, in order.

    Independent of the predictions, so callers planning repeatedly from the
    same ego state can compute this once and pass it to ``plan``."""
    path = reference if isinstance(reference, Polyline) else Polyline(reference)
    return [((a, o), *rollout(ego, a, o, path, T, dt)) for a, o in candidate_order(cfg)]


def plan_costs(ego: AgentState, predicted: Sequence, reference, cfg: PlannerConfig, T: int, dt: float,
               target_speed: float | None = None, candidates: list | None = None):
    """All candidates with their costs, in tie-breaking order."""
    if candidates is None:
        candidates = candidate_rollouts(ego, reference, cfg, T, dt)
    vref = ego.speed if target_speed is None else target_speed
    others = [_as_traj(p) for p in predicted]
    out = []
    for (a, o), traj, lat in candidates:
        hits = sum(collision_check(traj, cfg.ego_dims, q, cfg.other_dims, cfg.safety_margin) for q in others)
        cost = (cfg.collision_weight * hits + cfg.path_weight * float(np.mean(np.abs(lat)))
                + cfg.speed_weight * float(np.mean(np.abs(traj.speed - vref))))
        out.append(((a, o), traj, cost))
    return out


def plan(ego: AgentState, predicted: Sequence, reference, cfg: PlannerConfig = PlannerConfig(),
         T: int = 6, dt: float = 0.5, target_speed: float | None = None,
         candidates: list | None = None) -> Trajectory:
    """Lowest-cost candidate; the first in candidate order wins ties.

    ``target_speed`` defaults to the ego's current speed."""
    if T < 1:
        raise ValueError("T must be at least 1")
    cands = plan_costs(ego, predicted, reference, cfg, T, dt, target_speed, candidates)
    best = min(range(len(cands)), key=lambda i: (cands[i][2], i))
    return cands[best][1]


# --------------------------------------------------------------------------- collision and labels

def _overlap(a: Trajectory, b: Trajectory):
    lo, hi = max(a.t0, b.t0), min(a.t0 + len(a), b.t0 + len(b))
    if hi <= lo:
        return np.empty((0, 2)), np.empty((0, 2))
    return a.xy[lo - a.t0:hi - a.t0], b.xy[lo - b.t0:hi - b.t0]


def min_clearance(a: Trajectory, dims_a: VehicleDims, b: Trajectory, dims_b: VehicleDims) -> float:
    """Smallest center distance minus the summed circle radii over shared steps."""
    pa, pb = _overlap(a, b)
    if len(pa) == 0:
        return math.inf
    d = np.linalg.norm(pa - pb, axis=1)
    return float(d.min() - dims_a.circle_radius - dims_b.circle_radius)


def collision_check(a, dims_a: VehicleDims, b, dims_b: VehicleDims, margin: float = 0.0) -> bool:
    """True iff the circumscribed circles overlap at any shared timestep."""
    a, b = _as_traj(a), _as_traj(b)
    if not math.isclose(a.dt, b.dt):
        raise ValueError("trajectories must share dt")
    return min_clearance(a, dims_a, b, dims_b) < margin


def deviations(plan_clean: Trajectory, plan_attacked: Trajectory) -> tuple[float, float]:
    """Signed max longitudinal and lateral deviation in the clean plan's frame."""
    n = min(len(plan_clean), len(plan_attacked))
    if n == 0:
        return 0.0, 0.0
    d = plan_attacked.xy[:n] - plan_clean.xy[:n]
    h = plan_clean.heading[:n]
    lon = d[:, 0] * np.cos(h) + d[:, 1] * np.sin(h)
    lat = -d[:, 0] * np.sin(h) + d[:, 1] * np.cos(h)
    return float(lon[np.argmax(np.abs(lon))]), float(lat[np.argmax(np.abs(lat))])


def categorize(plan_clean: Trajectory, plan_attacked: Trajectory) -> ManeuverLabel:
    if len(plan_clean) != len(plan_attacked):
        raise ValueError("plans must share the horizon")
    mlod, mlad = deviations(plan_clean, plan_attacked)
    if abs(mlad) > LATERAL_THRESHOLD:
        return ManeuverLabel.LANE_CHANGE_LEFT if mlad > 0 else ManeuverLabel.LANE_CHANGE_RIGHT
    if mlod > LONGITUDINAL_THRESHOLD:
        return ManeuverLabel.SUDDEN_ACCELERATION
    if mlod < -LONGITUDINAL_THRESHOLD:
        return ManeuverLabel.SUDDEN_BRAKE
    return ManeuverLabel.UNCHANGED


__all__ = ["ManeuverLabel", "PlannerConfig", "Polyline", "plan", "plan_costs", "rollout", "collision_check",
           "min_clearance", "categorize", "deviations", "candidate_order", "candidate_rollouts"]
