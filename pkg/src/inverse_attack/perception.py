"""Surrogate detector and tracker for the parked vehicle.

The detector fits a planar oriented box to every point inside an inflated
footprint of the vehicle, so nearby foreign points drag the box around.
Its orientation head compares second moments along the two box axes and
gives returns above the roof line extra weight, which is what lets a few
well-placed objects turn the reported heading by a right angle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .lidar import PointCloud
from .world import Pose2D, Trajectory, VehicleDims, to_vehicle_frame, wrap_angle

ROI_MARGIN = 1.0
VOXEL = 0.1
MIN_POINTS = 8
# weight of returns above the roof line in the orientation head
ELEVATED_GAIN = 24.0
ELEVATED_RAMP = 0.2
HEADING_SNAP = math.radians(20.0)


class NoTrackError(RuntimeError):
    pass


@dataclass(frozen=True)
class OrientedBox:
    center: Pose2D
    length: float
    width: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.length >= self.width > 0):
            raise ValueError("box needs length >= width > 0")

    @property
    def cx(self) -> float:
        return self.center.x

    @property
    def cy(self) -> float:
        return self.center.y

    @property
    def heading(self) -> float:
        return self.center.heading


@dataclass(frozen=True)
class Perturbation:
    dx: float = 0.0
    dy: float = 0.0
    dh: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "dh", wrap_angle(float(self.dh)))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dh])

    @classmethod
    def from_array(cls, a) -> "Perturbation":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass
class Track(Trajectory):
    id: int = 0
    alpha: float = 0.5

    def copy(self) -> "Track":
        return Track(self.xy.copy(), self.heading.copy(), self.speed.copy(), self.dt,
                     self.accel.copy(), self.t0, self.id, self.alpha)


# --------------------------------------------------------------------------- detection

def voxel_downsample(cloud: PointCloud, cell: float = VOXEL) -> PointCloud:
    """Replace the points of every occupied voxel by their centroid.

    Points are put in a canonical order before reduction, which makes the
    output bit-identical under any permutation of the input."""
    if cell <= 0:
        raise ValueError("cell must be positive")
    pts = cloud.points
    if len(pts) == 0:
        return PointCloud(pts.copy(), cloud.frame)
    keys = np.floor(pts / cell).astype(np.int64)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], keys[:, 2], keys[:, 1], keys[:, 0]))
    pts, keys = pts[order], keys[order]
    starts = np.flatnonzero(np.r_[True, np.any(keys[1:] != keys[:-1], axis=1)])
    counts = np.diff(np.r_[starts, len(pts)])
    sums = np.add.reduceat(pts, starts, axis=0)
    return PointCloud(sums / counts[:, None], cloud.frame)


def roi_mask(points_xy: np.ndarray, roi: tuple[Pose2D, VehicleDims], margin: float = ROI_MARGIN):
    pose, dims = roi
    local = to_vehicle_frame(points_xy[:, :2], pose)
    return (np.abs(local[:, 0]) <= dims.length / 2 + margin) & \
        (np.abs(local[:, 1]) <= dims.width / 2 + margin)


def _closeness(proj: np.ndarray, d0: float = 0.01) -> np.ndarray:
    """L-shape closeness score for projections of shape (n_angles, n_points, 2)."""
    lo = proj.min(axis=1, keepdims=True)
    hi = proj.max(axis=1, keepdims=True)
    d = np.minimum(hi - proj, proj - lo)
    dmin = np.maximum(np.minimum(d[..., 0], d[..., 1]), d0)
    return (1.0 / dmin).sum(axis=1)


def _project(xy: np.ndarray, angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    p1 = c[:, None] * xy[None, :, 0] + s[:, None] * xy[None, :, 1]
    p2 = -s[:, None] * xy[None, :, 0] + c[:, None] * xy[None, :, 1]
    return np.stack([p1, p2], axis=-1)


def fit_box_2d(xy: np.ndarray) -> tuple[float, float, float, float, float]:
    """Oriented rectangle around planar points: (cx, cy, axis angle, extent1, extent2).

    The axis angle comes from the principal axis and is then refined by an
    L-shape closeness search over +-45 degrees around it."""
    mean = xy.mean(axis=0)
    q = xy - mean
    cov = q.T @ q / len(q)
    w, v = np.linalg.eigh(cov)
    major = v[:, np.argmax(w)]
    theta0 = math.atan2(major[1], major[0])
    coarse = theta0 + np.radians(np.arange(-45.0, 45.0, 1.0))
    best = coarse[np.argmax(_closeness(_project(q, coarse)))]
    fine = best + np.radians(np.arange(-1.0, 1.0001, 0.05))
    theta = float(fine[np.argmax(_closeness(_project(q, fine)))])
    proj = _project(q, np.array([theta]))[0]
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    mid = (lo + hi) / 2
    c, s = math.cos(theta), math.sin(theta)
    cx = mean[0] + c * mid[0] - s * mid[1]
    cy = mean[1] + s * mid[0] + c * mid[1]
    return cx, cy, theta, float(hi[0] - lo[0]), float(hi[1] - lo[1])


def canonical_heading(theta: float, sensor_heading: float = 0.0,
                      prior: Optional[float] = None) -> float:
    """Resolve the 180-degree ambiguity of a box axis.

    With a prior the representative closest to it wins; otherwise the one
    pointing forward (non-negative x) in the sensor frame."""
    if prior is not None:
        a, b = wrap_angle(theta), wrap_angle(theta + math.pi)
        return a if abs(wrap_angle(a - prior)) <= abs(wrap_angle(b - prior)) else b
    rel = wrap_angle(theta - sensor_heading)
    if rel > math.pi / 2 or rel <= -math.pi / 2:
        rel = wrap_angle(rel + math.pi)
    return wrap_angle(rel + sensor_heading)


def pillarize(points: np.ndarray, cell: float = VOXEL) -> tuple[np.ndarray, np.ndarray]:
    """Collapse points into bird's-eye cells: (centroid xy, max z) per cell."""
    keys = np.floor(points[:, :2] / cell).astype(np.int64)
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0], keys[:, 1], keys[:, 0]))
    pts, keys = points[order], keys[order]
    starts = np.flatnonzero(np.r_[True, np.any(keys[1:] != keys[:-1], axis=1)])
    counts = np.diff(np.r_[starts, len(pts)])
    xy = np.add.reduceat(pts[:, :2], starts, axis=0) / counts[:, None]
    return xy, np.maximum.reduceat(pts[:, 2], starts)


def elevated_weights(zmax: np.ndarray, roof: float, gain: float = ELEVATED_GAIN) -> np.ndarray:
    return 1.0 + (gain - 1.0) * np.clip((zmax - roof) / ELEVATED_RAMP, 0.0, 1.0)


def orientation_axis(xy: np.ndarray, weights: np.ndarray, theta: float, snap: float = HEADING_SNAP) -> float:
    """Heading axis from the point spread in the frame of the fitted box.

    Every point contributes its spread along and across the box axes; the
    extra weight of elevated points also contributes their cross moment, so
    only those can rotate the axis. The result snaps to a box edge (theta or
    theta + pi/2) when within ``snap`` of it."""
    q = xy - xy.mean(axis=0)
    c, s = math.cos(theta), math.sin(theta)
    along = q[:, 0] * c + q[:, 1] * s
    across = -q[:, 0] * s + q[:, 1] * c
    extra = weights - 1.0
    saa = (weights * along ** 2).sum()
    scc = (weights * across ** 2).sum()
    sac = (extra * along * across).sum()
    phi = 0.5 * math.atan2(2.0 * sac, saa - scc)
    if abs(phi) <= snap:
        return theta
    if abs(phi) >= math.pi / 2 - snap:
        return theta + math.pi / 2
    return theta + phi


def _fit_voxels(vox: np.ndarray, roi: tuple[Pose2D, VehicleDims], sensor_heading: float,
                min_points: int, gain: float) -> Optional[OrientedBox]:
    vox = vox[roi_mask(vox, roi)]
    if len(vox) < min_points:
        return None
    xy, zmax = pillarize(vox)
    if len(xy) < 3:
        return None
    cx, cy, theta, e1, e2 = fit_box_2d(xy)
    theta = orientation_axis(xy, elevated_weights(zmax, roi[1].height, gain), theta)
    length, width = max(e1, e2, 1e-3), max(min(e1, e2), 1e-3)
    heading = canonical_heading(theta, sensor_heading)
    local = to_vehicle_frame(xy, Pose2D(cx, cy, theta if e1 >= e2 else theta + math.pi / 2))
    inside = (np.abs(local[:, 0]) <= length / 2 + 0.1) & (np.abs(local[:, 1]) <= width / 2 + 0.1)
    return OrientedBox(Pose2D(cx, cy, heading), length, width, float(inside.mean()))


def detect_obb(cloud: PointCloud, roi: tuple[Pose2D, VehicleDims], sensor_heading: float = 0.0,
               cell: float = VOXEL, min_points: int = MIN_POINTS,
               elevated_gain: float = ELEVATED_GAIN) -> Optional[OrientedBox]:
    """Fit the vehicle box, or return None when too few points fall in the ROI."""
    down = voxel_downsample(cloud, cell).points
    if len(down) == 0:
        return None
    return _fit_voxels(down, roi, sensor_heading, min_points, elevated_gain)


class FrameDetector:
    """detect_obb for one fixed background cloud plus varying extra points.

    The background voxels are computed once; extra points are merged into
    them, so a query costs little more than the box fit itself."""

    def __init__(self, background: PointCloud, roi: tuple[Pose2D, VehicleDims],
                 sensor_heading: float = 0.0, cell: float = VOXEL,
                 min_points: int = MIN_POINTS, elevated_gain: float = ELEVATED_GAIN):
        self.roi, self.sensor_heading, self.cell = roi, sensor_heading, cell
        self.min_points, self.gain = min_points, elevated_gain
        pts = background.points
        keys = np.floor(pts / cell).astype(np.int64)
        order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], keys[:, 2], keys[:, 1], keys[:, 0]))
        pts, keys = pts[order], keys[order]
        starts = np.flatnonzero(np.r_[True, np.any(keys[1:] != keys[:-1], axis=1)]) if len(pts) else np.array([], int)
        self._counts = np.diff(np.r_[starts, len(pts)]).astype(float)
        self._sums = np.add.reduceat(pts, starts, axis=0) if len(pts) else np.empty((0, 3))
        self._index = {tuple(k): i for i, k in enumerate(keys[starts])}
        self.clean = _fit_voxels(self._sums / self._counts[:, None], roi, sensor_heading,
                                 min_points, elevated_gain) if len(pts) else None

    def detect(self, extra: np.ndarray) -> Optional[OrientedBox]:
        extra = np.asarray(extra, dtype=float).reshape(-1, 3)
        if len(extra) == 0:
            return self.clean
        sums, counts = self._sums.copy(), self._counts.copy()
        new: dict[tuple, list] = {}
        for p, k in zip(extra, map(tuple, np.floor(extra / self.cell).astype(np.int64))):
            i = self._index.get(k)
            if i is not None:
                sums[i] += p
                counts[i] += 1
            else:
                new.setdefault(k, []).append(p)
        vox = sums / counts[:, None]
        if new:
            vox = np.vstack([vox] + [np.mean(v, axis=0, keepdims=True) for _, v in sorted(new.items())])
        return _fit_voxels(vox, self.roi, self.sensor_heading, self.min_points, self.gain)


def box_perturbation(clean: OrientedBox, attacked: OrientedBox) -> Perturbation:
    return Perturbation(attacked.cx - clean.cx, attacked.cy - clean.cy,
                        wrap_angle(attacked.heading - clean.heading))


# --------------------------------------------------------------------------- tracking

def smoothed_rates(xy: np.ndarray, dt: float, alpha: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially smoothed speed and acceleration from positions.

    The first frame borrows the first finite difference so constant motion is
    reproduced exactly."""
    n = len(xy)
    raw = np.zeros(n)
    if n > 1:
        raw[1:] = np.linalg.norm(np.diff(xy, axis=0), axis=1) / dt
        raw[0] = raw[1]
    speed = raw.copy()
    for i in range(1, n):
        speed[i] = alpha * raw[i] + (1 - alpha) * speed[i - 1]
    raw_acc = np.zeros(n)
    if n > 1:
        raw_acc[1:] = np.diff(speed) / dt
        raw_acc[0] = raw_acc[1]
    acc = raw_acc.copy()
    for i in range(1, n):
        acc[i] = alpha * raw_acc[i] + (1 - alpha) * acc[i - 1]
    return speed, acc


def unwrap_headings(headings: Sequence[float]) -> np.ndarray:
    """Pick, frame by frame, the representative (h or h+pi) nearest the previous one."""
    out = np.empty(len(headings))
    prev = None
    for i, h in enumerate(headings):
        out[i] = canonical_heading(h, prior=prev) if prev is not None else wrap_angle(h)
        prev = out[i]
    return out


def track_boxes(boxes: Sequence[Optional[OrientedBox]], dt: float, alpha: float = 0.5,
                t0: int = 0, track_id: int = 0) -> Track:
    """Turn per-frame detections (None = missed) into a smoothed track."""
    if len(boxes) < 2:
        raise ValueError("tracking needs at least two frames")
    seen = [i for i, b in enumerate(boxes) if b is not None]
    if not seen:
        raise NoTrackError("no detections in any frame")
    n = len(boxes)
    xy = np.zeros((n, 2))
    raw_h = np.zeros(n)
    for i in seen:
        xy[i] = (boxes[i].cx, boxes[i].cy)
        raw_h[i] = boxes[i].heading
    first = seen[0]
    xy[:first] = xy[first]
    raw_h[:first] = raw_h[first]
    for i in range(first + 1, n):
        if boxes[i] is None:
            # constant-velocity fill from the (possibly filled) previous frames
            vel = xy[i - 1] - xy[i - 2] if i - 2 >= first else np.zeros(2)
            xy[i] = xy[i - 1] + vel
            raw_h[i] = raw_h[i - 1]
    heading = unwrap_headings(raw_h)
    speed, acc = smoothed_rates(xy, dt, alpha)
    return Track(xy, heading, speed, dt, acc, t0, track_id, alpha)


def dump_boxes_csv(boxes: Sequence[Optional[OrientedBox]], path: str | Path, t0: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "cx", "cy", "h", "l", "w", "score"])
        for i, b in enumerate(boxes):
            if b is None:
                continue
            w.writerow([t0 + i, f"{b.cx:.6f}", f"{b.cy:.6f}", f"{b.heading:.6f}",
                        f"{b.length:.6f}", f"{b.width:.6f}", f"{b.score:.6f}"])
