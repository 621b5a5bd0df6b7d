"""End-to-end victim pipeline for one scenario: sensing, detection, tracking,
prediction and planning, with per-frame caches for repeated queries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .defense import DefenseConfig, detect_adversarial, repair_states
from .lidar import AdvObject, Board, Cluster, SensorModel, frame_object_points, raycast_frame
from .perception import (FrameDetector, OrientedBox, Perturbation, Track, box_perturbation,
                         track_boxes)
from .planning import (ManeuverLabel, PlannerConfig, Polyline, candidate_rollouts, categorize,
                       collision_check, plan)
from .prediction import PredictedTrajectory, PredictorParams, predict
from .world import AgentState, Pose2D, ScenarioConfig, Trajectory, backtrack_history, to_world_frame


@dataclass
class Outcome:
    multiplier: float
    atd: float
    pre: float
    collision: bool
    label: ManeuverLabel
    prediction: PredictedTrajectory
    plan_clean: Trajectory
    plan_attacked: Trajectory
    track: Track
    flagged: bool = False


def mean_distance(a: np.ndarray, b: np.ndarray) -> float:
    n = min(len(a), len(b))
    if n == 0:
        raise ValueError("no overlapping steps")
    return float(np.mean(np.linalg.norm(np.asarray(a)[:n] - np.asarray(b)[:n], axis=1)))


class SceneSim:
    """Victim pipeline around one parked adversarial vehicle.

    Multipliers scale the scenario's base speed; the victim is at the attack
    point at frame 0 for every multiplier, so only the history viewpoints
    change with speed."""

    def __init__(self, cfg: ScenarioConfig, sensor: SensorModel = SensorModel(),
                 params: Optional[PredictorParams] = None, planner: Optional[PlannerConfig] = None,
                 alpha: float = 0.5):
        self.cfg = cfg
        self.sensor = sensor
        self.params = params or PredictorParams(T=cfg.T, dt=cfg.dt, H=cfg.H)
        self.planner = planner or PlannerConfig(ego_dims=cfg.ego_dims, other_dims=cfg.adv_dims)
        self.alpha = alpha
        self.path = Polyline(cfg.reference_path)
        self.vehicle = (cfg.adv_pose, cfg.adv_dims)
        self._detectors: dict = {}
        self._clean: dict = {}
        self._rollouts: dict = {}

    # ------------------------------------------------------------------ geometry
    def speed(self, mult: float) -> float:
        return mult * self.cfg.base_speed

    def sensor_poses(self, mult: float) -> list[Pose2D]:
        ap = self.cfg.attack_point
        hist = backtrack_history(AgentState(ap, self.speed(mult)), self.speed(mult), self.cfg.dt, self.cfg.H)
        return [Pose2D(float(x), float(y), float(h)) for (x, y), h in zip(hist.xy, hist.heading)]

    def ego_state(self, mult: float) -> AgentState:
        return AgentState(self.cfg.attack_point, self.speed(mult))

    def region_world(self, local: np.ndarray) -> np.ndarray:
        """Search-region samples (vehicle frame) to world coordinates."""
        return to_world_frame(np.asarray(local, dtype=float).reshape(-1, 3), self.cfg.adv_pose)

    def _plan(self, mult: float, pred: PredictedTrajectory) -> Trajectory:
        if mult not in self._rollouts:
            self._rollouts[mult] = candidate_rollouts(self.ego_state(mult), self.path, self.planner,
                                                      self.cfg.T, self.cfg.dt)
        return plan(self.ego_state(mult), [pred], self.path, self.planner, self.cfg.T, self.cfg.dt,
                    candidates=self._rollouts[mult])

    # ------------------------------------------------------------------ perception
    def _detector(self, pose: Pose2D) -> FrameDetector:
        key = (round(pose.x, 9), round(pose.y, 9), round(pose.heading, 9))
        det = self._detectors.get(key)
        if det is None:
            cloud = raycast_frame(pose, self.sensor, self.vehicle)
            det = FrameDetector(cloud, self.vehicle, pose.heading)
            self._detectors[key] = det
        return det

    def detect_frame(self, pose: Pose2D, objects: Sequence[AdvObject]) -> Optional[OrientedBox]:
        boards = [o for o in objects if isinstance(o.model, Board)]
        det = self._detector(pose)
        if boards:
            # boards occlude the vehicle, so the background has to be re-cast
            cloud = raycast_frame(pose, self.sensor, self.vehicle, boards)
            extra = frame_object_points([o for o in objects if isinstance(o.model, Cluster)],
                                        pose, self.sensor, self.vehicle)
            fresh = FrameDetector(cloud, self.vehicle, pose.heading)
            return fresh.detect(extra)
        return det.detect(frame_object_points(objects, pose, self.sensor, self.vehicle))

    def clean_current_box(self) -> OrientedBox:
        return self._detector(self.cfg.attack_point).clean

    def current_perturbation(self, objects: Sequence[AdvObject]) -> Optional[Perturbation]:
        """Box deviation at frame 0 caused by the objects (same for every speed)."""
        box = self.detect_frame(self.cfg.attack_point, objects)
        if box is None:
            return None
        return box_perturbation(self.clean_current_box(), box)

    def boxes(self, objects: Sequence[AdvObject], mult: float) -> list[Optional[OrientedBox]]:
        return [self.detect_frame(p, objects) for p in self.sensor_poses(mult)]

    def track(self, objects: Sequence[AdvObject], mult: float) -> Track:
        return track_boxes(self.boxes(objects, mult), self.cfg.dt, self.alpha, t0=1 - self.cfg.H)

    # ------------------------------------------------------------------ clean references
    def clean(self, mult: float, defense: Optional[DefenseConfig] = None):
        """(track, prediction, plan) without objects."""
        key = (mult, defense)
        if key not in self._clean:
            tr = self._defended(self.track((), mult), defense)[0]
            pred = predict(tr, self.params)
            pl = self._plan(mult, pred)
            self._clean[key] = (tr, pred, pl)
        return self._clean[key]

    def clean_plan(self, mult: float) -> Trajectory:
        return self.clean(mult)[2]

    def clean_track(self, mult: float) -> Track:
        return self.clean(mult)[0]

    def _defended(self, tr: Track, defense: Optional[DefenseConfig]) -> tuple[Track, bool]:
        if defense is None:
            return tr, False
        det = detect_adversarial(tr, defense, self.cfg.dt)
        if not det.flagged:
            return tr, False
        return repair_states(tr, det.violating_frames, defense, self.cfg.dt)[0], True

    # ------------------------------------------------------------------ evaluation
    def evaluate(self, objects: Sequence[AdvObject], mult: float,
                 defense: Optional[DefenseConfig] = None) -> Outcome:
        tr, flagged = self._defended(self.track(objects, mult), defense)
        pred = predict(tr, self.params)
        _, _, p_clean = self.clean(mult, defense)
        p_att = self._plan(mult, pred)
        return Outcome(
            multiplier=mult,
            atd=mean_distance(pred.positions, p_clean.xy),
            pre=mean_distance(p_clean.xy, p_att.xy),
            collision=collision_check(pred, self.cfg.adv_dims, p_clean, self.cfg.ego_dims),
            label=categorize(p_clean, p_att),
            prediction=pred,
            plan_clean=p_clean,
            plan_attacked=p_att,
            track=tr,
            flagged=flagged,
        )

