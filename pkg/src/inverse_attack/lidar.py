"""Point-cloud generation: ray casting against the parked vehicle and boards,
plus the abstract point-cluster object model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .world import Pose2D, VehicleDims


@dataclass(frozen=True)
class Cluster:
    radius: float = 0.2
    n_points: int = 4

    def __post_init__(self):
        if self.radius <= 0 or self.n_points < 1:
            raise ValueError("cluster needs radius > 0 and n_points >= 1")


@dataclass(frozen=True)
class Board:
    """Flat rectangle. ``yaw`` is the horizontal direction the face points to,
    ``tilt`` leans the top edge away from that direction."""

    width: float = 0.3
    height: float = 0.42
    tilt: float = math.pi / 4
    yaw: float = 0.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("board needs positive width and height")

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(width axis, height axis, unit normal) in world coordinates."""
        f = np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])
        a = np.array([-math.sin(self.yaw), math.cos(self.yaw), 0.0])
        b = math.cos(self.tilt) * np.array([0.0, 0.0, 1.0]) - math.sin(self.tilt) * f
        n = np.cross(a, b)
        return a, b, n / np.linalg.norm(n)


ObjectModel = Union[Cluster, Board]


@dataclass(frozen=True)
class AdvObject:
    """One placed object. ``seed`` fixes the cluster's internal point layout so a
    displaced object keeps its shape."""

    location: tuple[float, float, float]
    model: ObjectModel = field(default_factory=Cluster)
    seed: int = 0

    def __post_init__(self):
        loc = tuple(float(c) for c in self.location)
        if len(loc) != 3 or not all(math.isfinite(c) for c in loc):
            raise ValueError("location must be three finite coordinates")
        object.__setattr__(self, "location", loc)

    def moved(self, offset: Sequence[float]) -> "AdvObject":
        return replace(self, location=tuple(np.add(self.location, offset)))


@dataclass(frozen=True)
class SensorModel:
    mount_height: float = 1.6
    n_beams: int = 32
    azimuth_resolution: float = math.radians(0.2)
    max_range: float = 80.0
    vertical_fov: tuple[float, float] = (math.radians(-16.0), math.radians(15.0))
    # range at which a cluster returns all of its nominal points
    cluster_ref_range: float = 9.0
    # clusters yielding fewer returns than this are dropped as isolated noise
    min_cluster_returns: int = 3

    def __post_init__(self):
        if self.mount_height <= 0 or self.n_beams < 1 or self.azimuth_resolution <= 0:
            raise ValueError("invalid sensor model")
        if self.cluster_ref_range <= 0:
            raise ValueError("cluster_ref_range must be positive")

    @property
    def elevations(self) -> np.ndarray:
        lo, hi = self.vertical_fov
        if self.n_beams == 1:
            return np.array([0.0])
        return np.linspace(lo, hi, self.n_beams)


@dataclass
class PointCloud:
    points: np.ndarray
    frame: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.points)

    def merged(self, extra: np.ndarray) -> "PointCloud":
        extra = np.asarray(extra, dtype=float).reshape(-1, 3)
        return PointCloud(np.vstack([self.points, extra]), self.frame)


# --------------------------------------------------------------------------- clusters

def sample_cluster(obj: AdvObject, rng: np.random.Generator) -> np.ndarray:
    """``n_points`` points uniform in the ball around the object's location."""
    if not isinstance(obj.model, Cluster):
        raise ValueError("sample_cluster needs a Cluster object")
    n, r = obj.model.n_points, obj.model.radius
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = r * rng.random(n) ** (1.0 / 3.0)
    return np.asarray(obj.location) + d * rad[:, None]


def object_points(obj: AdvObject) -> np.ndarray:
    """Deterministic point layout of a cluster object (seeded by the object)."""
    return sample_cluster(obj, np.random.default_rng(obj.seed))


def points_for_size(size: float, base_size: float = 0.2, base_n: int = 4) -> int:
    """Point count growing with the square of the object size (at least 1)."""
    if size <= 0 or base_size <= 0:
        raise ValueError("sizes must be positive")
    return max(1, int(math.floor(base_n * (size / base_size) ** 2 + 0.5)))


def cluster_cloud(objects: Iterable[AdvObject]) -> np.ndarray:
    pts = [object_points(o) for o in objects if isinstance(o.model, Cluster)]
    return np.vstack(pts) if pts else np.empty((0, 3))


def visible_cluster_points(obj: AdvObject, sensor_pose: Pose2D, sensor: SensorModel,
                           vehicle: tuple[Pose2D, VehicleDims] | None = None) -> np.ndarray:
    """Returns of a cluster seen from ``sensor_pose``.

    The number of returns of a small object falls with its solid angle, so a
    cluster keeps ``n * (ref / r)^2`` of its points (rounded, capped at n).
    Points whose line of sight crosses the vehicle body are dropped."""
    pts = object_points(obj)
    r = math.hypot(obj.location[0] - sensor_pose.x, obj.location[1] - sensor_pose.y)
    k = len(pts) if r <= 0 else min(len(pts), int(math.floor(len(pts) * (sensor.cluster_ref_range / r) ** 2 + 0.5)))
    if k < sensor.min_cluster_returns:
        k = 0
    pts = pts[:k]
    if vehicle is None or k == 0:
        return pts
    o = np.array([sensor_pose.x, sensor_pose.y, sensor.mount_height])
    d = pts - o
    dist = np.linalg.norm(d, axis=1)
    t = _hit_box(o, d / dist[:, None], *vehicle)
    return pts[t >= dist - 1e-9]


def frame_object_points(objects: Iterable[AdvObject], sensor_pose: Pose2D, sensor: SensorModel,
                        vehicle: tuple[Pose2D, VehicleDims] | None = None) -> np.ndarray:
    """Visible cluster returns of all objects for one frame."""
    pts = [visible_cluster_points(o, sensor_pose, sensor, vehicle)
           for o in objects if isinstance(o.model, Cluster)]
    return np.vstack(pts) if pts else np.empty((0, 3))


# --------------------------------------------------------------------------- ray casting

def _box_corners(pose: Pose2D, dims: VehicleDims) -> np.ndarray:
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    hl, hw = dims.length / 2, dims.width / 2
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    return np.column_stack([pose.x + c * local[:, 0] - s * local[:, 1],
                            pose.y + s * local[:, 0] + c * local[:, 1]])


def _board_corners(obj: AdvObject) -> np.ndarray:
    a, b, _ = obj.model.axes()
    c = np.asarray(obj.location)
    hw, hh = obj.model.width / 2, obj.model.height / 2
    return np.array([c + sa * hw * a + sb * hh * b for sa in (-1, 1) for sb in (-1, 1)])


def _ray_directions(sensor_pose: Pose2D, sensor: SensorModel, targets_xy: np.ndarray):
    """Unit ray directions restricted to the azimuth sector covering the targets.

    Azimuths lie on the sensor's fixed grid, so the subset is exactly the rays of a
    full sweep that could reach any target."""
    rel = targets_xy - np.array([sensor_pose.x, sensor_pose.y])
    bearings = np.arctan2(rel[:, 1], rel[:, 0]) - sensor_pose.heading
    bearings = np.angle(np.exp(1j * bearings))
    res = sensor.azimuth_resolution
    n_full = int(round(2 * math.pi / res))
    if np.ptp(bearings) > math.pi:
        # sector straddles the rear seam; unwrap into [0, 2pi)
        bearings = np.mod(bearings, 2 * math.pi)
    if np.ptp(bearings) > math.pi or np.min(np.hypot(rel[:, 0], rel[:, 1])) < 1e-6:
        ks = np.arange(n_full)
    else:
        ks = np.arange(math.floor(bearings.min() / res) - 1, math.ceil(bearings.max() / res) + 2)
    az = sensor_pose.heading + ks * res
    el = sensor.elevations
    ce = np.cos(el)
    d = np.stack([
        np.outer(ce, np.cos(az)).ravel(),
        np.outer(ce, np.sin(az)).ravel(),
        np.repeat(np.sin(el), len(az)),
    ], axis=1)
    return d


def _hit_box(o: np.ndarray, d: np.ndarray, pose: Pose2D, dims: VehicleDims) -> np.ndarray:
    """Ray parameter of the first hit with the solid box (inf for misses)."""
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    ox, oy = o[0] - pose.x, o[1] - pose.y
    lo_ = np.array([c * ox + s * oy, -s * ox + c * oy, o[2]])
    ld = np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]])
    bmin = np.array([-dims.length / 2, -dims.width / 2, 0.0])
    bmax = np.array([dims.length / 2, dims.width / 2, dims.height])
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / ld
        t1 = (bmin - lo_) * inv
        t2 = (bmax - lo_) * inv
    # rays parallel to a slab: inside -> (-inf, inf), outside -> empty
    par = ld == 0
    inside = (lo_ >= bmin) & (lo_ <= bmax)
    tmin_ax = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    tmax_ax = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    tn = tmin_ax.max(axis=1)
    tf = tmax_ax.min(axis=1)
    hit = (tn <= tf) & (tn > 1e-9)
    return np.where(hit, tn, np.inf)


def _hit_board(o: np.ndarray, d: np.ndarray, obj: AdvObject) -> np.ndarray:
    a, b, n = obj.model.axes()
    c = np.asarray(obj.location)
    denom = d @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((c - o) @ n) / denom
    q = o[None, :] + t[:, None] * d - c[None, :]
    ok = (np.abs(denom) > 1e-12) & (t > 1e-9)
    ok &= np.abs(q @ a) <= obj.model.width / 2
    ok &= np.abs(q @ b) <= obj.model.height / 2
    return np.where(ok, t, np.inf)


def raycast_frame(sensor_pose: Pose2D, sensor: SensorModel, vehicle: tuple[Pose2D, VehicleDims] | None,
                  boards: Sequence[AdvObject] = (), frame: int = 0) -> PointCloud:
    """Nearest-hit returns of every beam against the vehicle box and the boards."""
    boards = [b for b in boards if isinstance(b.model, Board)]
    targets = []
    if vehicle is not None:
        targets.append(_box_corners(*vehicle))
    targets += [_board_corners(b)[:, :2] for b in boards]
    if not targets:
        return PointCloud(np.empty((0, 3)), frame)
    o = np.array([sensor_pose.x, sensor_pose.y, sensor.mount_height])
    d = _ray_directions(sensor_pose, sensor, np.vstack(targets))
    t = np.full(len(d), np.inf)
    if vehicle is not None:
        t = np.minimum(t, _hit_box(o, d, *vehicle))
    for b in boards:
        t = np.minimum(t, _hit_board(o, d, b))
    keep = t <= sensor.max_range
    return PointCloud(o[None, :] + t[keep, None] * d[keep], frame)


def dump_xyz(cloud: PointCloud, path: str | Path) -> None:
    np.savetxt(path, cloud.points, fmt="%.6f", delimiter=" ")
