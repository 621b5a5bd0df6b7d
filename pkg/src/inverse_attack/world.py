"""Planar world model: poses, vehicle kinematics and scenario description."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import yaml

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario/suite configuration."""


def wrap_angle(a):
    """Map angle(s) into (-pi, pi]. Works on scalars and arrays."""
    if np.ndim(a) == 0:
        a = float(a)
        w = a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)
        # ceil can land on -pi through rounding for values just above -pi
        return math.pi if w <= -math.pi else w
    a = np.asarray(a, dtype=float)
    w = a - TWO_PI * np.ceil((a - np.pi) / TWO_PI)
    return np.where(w <= -np.pi, np.pi, w)


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite input: {v!r}")


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class AgentState:
    pose: Pose2D
    speed: float = 0.0
    accel: float = 0.0
    t: int = 0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be non-negative")


@dataclass(frozen=True)
class VehicleDims:
    length: float = 4.7
    width: float = 1.85
    height: float = 1.44

    def __post_init__(self):
        if not (self.length >= self.width > 0):
            raise ValueError("vehicle dims need length >= width > 0")

    @property
    def circle_radius(self) -> float:
        """Radius of the circumscribed circle of the footprint."""
        return 0.5 * math.hypot(self.length, self.width)


@dataclass
class Trajectory:
    """Uniformly sampled planar trajectory.

    Stored column-wise; ``states`` gives the per-frame :class:`AgentState` view.
    """

    xy: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    dt: float
    accel: np.ndarray | None = None
    t0: int = 0

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        n = len(self.xy)
        self.heading = wrap_angle(np.asarray(self.heading, dtype=float).reshape(n))
        self.speed = np.asarray(self.speed, dtype=float).reshape(n)
        if self.accel is None:
            self.accel = np.zeros(n)
        else:
            self.accel = np.asarray(self.accel, dtype=float).reshape(n)
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return len(self.xy)

    @property
    def states(self) -> list[AgentState]:
        return [
            AgentState(Pose2D(x, y, h), max(float(v), 0.0), float(a), self.t0 + i)
            for i, (x, y, h, v, a) in enumerate(
                zip(self.xy[:, 0], self.xy[:, 1], self.heading, self.speed, self.accel)
            )
        ]

    @classmethod
    def from_states(cls, states: Sequence[AgentState], dt: float) -> "Trajectory":
        if not states:
            raise ValueError("empty state sequence")
        ts = [s.t for s in states]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frame indices must be strictly increasing")
        return cls(
            xy=[(s.pose.x, s.pose.y) for s in states],
            heading=[s.pose.heading for s in states],
            speed=[s.speed for s in states],
            accel=[s.accel for s in states],
            dt=dt,
            t0=ts[0],
        )

    def copy(self) -> "Trajectory":
        return Trajectory(self.xy.copy(), self.heading.copy(), self.speed.copy(), self.dt,
                          self.accel.copy(), self.t0)


def bicycle_step(state: AgentState, steering: float, accel: float, dt: float,
                 wheelbase: float = 2.5) -> AgentState:
    """Advance one step of the rear-axle kinematic bicycle model."""
    p = state.pose
    _check_finite(p.x, p.y, p.heading, state.speed, steering, accel, dt, wheelbase)
    if dt <= 0 or wheelbase <= 0:
        raise ValueError("dt and wheelbase must be positive")
    if abs(steering) > math.pi / 2:
        raise ValueError("|steering| must not exceed pi/2")
    v = state.speed
    x = p.x + v * math.cos(p.heading) * dt
    y = p.y + v * math.sin(p.heading) * dt
    h = p.heading + v * math.tan(steering) / wheelbase * dt
    return AgentState(Pose2D(x, y, h), max(v + accel * dt, 0.0), accel, state.t + 1)


def backtrack_history(current: AgentState, v: float, dt: float, H: int) -> Trajectory:
    """H states ending at ``current``, reached by constant-speed straight motion."""
    p = current.pose
    _check_finite(p.x, p.y, p.heading, v, dt)
    if H < 1 or dt <= 0 or v < 0:
        raise ValueError("need H >= 1, dt > 0, v >= 0")
    back = v * dt * np.arange(H - 1, -1, -1, dtype=float)
    u = np.array([math.cos(p.heading), math.sin(p.heading)])
    xy = p.xy[None, :] - back[:, None] * u[None, :]
    xy[-1] = p.xy
    return Trajectory(xy, np.full(H, p.heading), np.full(H, v), dt, t0=current.t - H + 1)


def max_heading_change(v: float, dt: float, theta_max: float, wheelbase: float) -> float:
    """Largest heading change over ``dt`` the bicycle model allows at speed ``v``."""
    if v < 0 or dt <= 0 or theta_max <= 0 or wheelbase <= 0:
        raise ValueError("max_heading_change needs v >= 0 and positive dt, theta_max, wheelbase")
    if theta_max >= math.pi / 2:
        raise ValueError("theta_max must be below pi/2")
    return v * dt * math.tan(theta_max) / wheelbase


# --------------------------------------------------------------------------- scenarios

DEFAULT_MULTIPLIERS = (0.5, 0.75, 1.0, 1.25, 1.5)


def _pose(v) -> Pose2D:
    if isinstance(v, Pose2D):
        return v
    if isinstance(v, dict):
        return Pose2D(float(v["x"]), float(v["y"]), float(v.get("heading", 0.0)))
    x, y, *h = v
    return Pose2D(float(x), float(y), float(h[0]) if h else 0.0)


@dataclass
class ScenarioConfig:
    """Everything needed to simulate one attack scene.

    The victim drives along ``reference_path`` and reaches ``attack_point`` at
    frame 0; the adversarial vehicle is parked and does not move.
    """

    adv_pose: Pose2D
    attack_point: Pose2D
    victim_start: Pose2D
    adv_dims: VehicleDims = field(default_factory=VehicleDims)
    ego_dims: VehicleDims = field(default_factory=VehicleDims)
    lane_width: float = 3.5
    reference_path: np.ndarray = field(
        default_factory=lambda: np.array([[-200.0, 0.0], [400.0, 0.0]]))
    base_speed: float = 9.0
    velocity_multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS
    dt: float = 0.5
    H: int = 5
    T: int = 6
    n_objects: int = 3
    query_budget: int = 200
    seed: int = 0
    scenario_id: str = "scene-0000"
    object_model: str = "cluster"
    cluster_radius: float = 0.2
    cluster_points: int = 4
    # search region relative to the adversarial vehicle frame: (lo xyz, hi xyz)
    search_region: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None

    def __post_init__(self):
        self.adv_pose = _pose(self.adv_pose)
        self.attack_point = _pose(self.attack_point)
        self.victim_start = _pose(self.victim_start)
        if isinstance(self.adv_dims, dict):
            self.adv_dims = VehicleDims(**self.adv_dims)
        if isinstance(self.ego_dims, dict):
            self.ego_dims = VehicleDims(**self.ego_dims)
        self.reference_path = np.asarray(self.reference_path, dtype=float).reshape(-1, 2)
        self.velocity_multipliers = tuple(float(m) for m in self.velocity_multipliers)
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        if self.search_region is None:
            self.search_region = default_search_region(self.adv_dims)
        lo, hi = (tuple(float(c) for c in b) for b in self.search_region)
        self.search_region = (lo, hi)
        self.validate()

    def validate(self) -> None:
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.H < 2 or self.T < 1:
            raise ConfigError("need H >= 2 and T >= 1")
        if self.victim_start.distance(self.adv_pose) < 20.0:
            raise ConfigError("victim must start at least 20 m from the adversarial vehicle")
        if self.attack_point.distance(self.adv_pose) >= 10.0:
            raise ConfigError("attack point must lie within 10 m of the adversarial vehicle")
        if len(self.reference_path) < 2:
            raise ConfigError("reference_path needs at least two vertices")
        if self.base_speed <= 0 or not self.velocity_multipliers:
            raise ConfigError("base_speed must be positive and multipliers non-empty")
        if any(m <= 0 for m in self.velocity_multipliers):
            raise ConfigError("velocity multipliers must be positive")
        if self.n_objects < 1 or self.query_budget < 0:
            raise ConfigError("n_objects >= 1 and query_budget >= 0 required")
        if self.object_model not in ("cluster", "board"):
            raise ConfigError(f"unknown object_model {self.object_model!r}")
        if self.cluster_radius <= 0 or self.cluster_points < 1:
            raise ConfigError("cluster_radius > 0 and cluster_points >= 1 required")
        lo, hi = self.search_region
        if any(b < a for a, b in zip(lo, hi)):
            raise ConfigError("search_region hi must be >= lo")

    def to_dict(self) -> dict:
        p = lambda q: {"x": q.x, "y": q.y, "heading": q.heading}  # noqa: E731
        d = lambda v: {"length": v.length, "width": v.width, "height": v.height}  # noqa: E731
        return {
            "scenario_id": self.scenario_id,
            "adv_pose": p(self.adv_pose),
            "adv_dims": d(self.adv_dims),
            "ego_dims": d(self.ego_dims),
            "attack_point": p(self.attack_point),
            "victim_start": p(self.victim_start),
            "lane_width": self.lane_width,
            "reference_path": self.reference_path.tolist(),
            "base_speed": self.base_speed,
            "velocity_multipliers": list(self.velocity_multipliers),
            "dt": self.dt,
            "H": self.H,
            "T": self.T,
            "n_objects": self.n_objects,
            "query_budget": self.query_budget,
            "seed": self.seed,
            "object_model": self.object_model,
            "cluster_radius": self.cluster_radius,
            "cluster_points": self.cluster_points,
            "search_region": [list(self.search_region[0]), list(self.search_region[1])],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


def default_search_region(dims: VehicleDims):
    """4 x 4 x 1 m cube sitting on the roof, in the vehicle frame."""
    return ((-2.0, -2.0, dims.height), (2.0, 2.0, dims.height + 1.0))


def load_yaml(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_scenario(path: str | Path) -> ScenarioConfig:
    return ScenarioConfig.from_dict(load_yaml(path))


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def to_vehicle_frame(points: np.ndarray, pose: Pose2D) -> np.ndarray:
    """World xy(z) -> frame of ``pose`` (x forward, y left)."""
    pts = np.asarray(points, dtype=float)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dx = pts[..., 0] - pose.x
    dy = pts[..., 1] - pose.y
    out = pts.copy()
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    return out


def to_world_frame(points: np.ndarray, pose: Pose2D) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    out = pts.copy()
    out[..., 0] = pose.x + c * pts[..., 0] - s * pts[..., 1]
    out[..., 1] = pose.y + s * pts[..., 0] + c * pts[..., 1]
    return out


def iter_frames(H: int) -> Iterator[int]:
    """Frame indices -H+1 .. 0."""
    return iter(range(-H + 1, 1))
