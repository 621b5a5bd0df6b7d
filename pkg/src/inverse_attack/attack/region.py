"""Axis-aligned search box expressed in the adversarial vehicle's frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lidar import AdvObject, Cluster, ObjectModel
from ..world import Pose2D, to_vehicle_frame, to_world_frame


@dataclass(frozen=True)
class SearchRegion:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    pose: Pose2D = Pose2D(0.0, 0.0, 0.0)

    def __post_init__(self):
        if np.any(np.asarray(self.hi) < np.asarray(self.lo)):
            raise ValueError("region needs hi >= lo on every axis")

    @property
    def center_local(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` uniform points, world coordinates."""
        return to_world_frame(rng.uniform(self.lo, self.hi, size=(n, 3)), self.pose)

    def local(self, pts) -> np.ndarray:
        return to_vehicle_frame(np.asarray(pts, dtype=float).reshape(-1, 3), self.pose)

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        q = self.local(pts)
        return np.all((q >= np.asarray(self.lo) - tol) & (q <= np.asarray(self.hi) + tol), axis=1)

    def clip(self, pts) -> np.ndarray:
        return to_world_frame(np.clip(self.local(pts), self.lo, self.hi), self.pose)


def sample_objects(region: SearchRegion, n: int, rng: np.random.Generator,
                   model: ObjectModel = Cluster()) -> list[AdvObject]:
    locs = region.sample(rng, n)
    seeds = rng.integers(0, 2 ** 31 - 1, size=n)
    return [AdvObject(tuple(l), model, int(s)) for l, s in zip(locs, seeds)]
