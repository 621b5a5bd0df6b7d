import math

import numpy as np
import pytest

from inverse_attack.lidar import PointCloud, SensorModel, raycast_frame
from inverse_attack.perception import (FrameDetector, NoTrackError, OrientedBox, Perturbation, box_perturbation,
                                       canonical_heading, detect_obb, track_boxes, unwrap_headings,
                                       voxel_downsample)
from inverse_attack.world import Pose2D, VehicleDims, wrap_angle

CAR = VehicleDims(4.7, 1.85, 1.44)


def _rect_outline(length, width, heading=0.0, center=(0.0, 0.0), step=0.05, z=(0.3, 0.6, 0.9)):
    """Dense points on the vertical faces of a length x width rectangle."""
    xs = np.arange(-length / 2, length / 2 + 1e-9, step)
    ys = np.arange(-width / 2, width / 2 + 1e-9, step)
    ring = np.vstack([np.c_[xs, np.full_like(xs, -width / 2)], np.c_[xs, np.full_like(xs, width / 2)],
                      np.c_[np.full_like(ys, -length / 2), ys], np.c_[np.full_like(ys, length / 2), ys]])
    c, s = math.cos(heading), math.sin(heading)
    ring = ring @ np.array([[c, s], [-s, c]]) + center
    return np.vstack([np.c_[ring, np.full(len(ring), zz)] for zz in z])


def _rotate(points, theta):
    c, s = math.cos(theta), math.sin(theta)
    out = points.copy()
    out[:, 0] = c * points[:, 0] - s * points[:, 1]
    out[:, 1] = s * points[:, 0] + c * points[:, 1]
    return out


def _box(x, y, h, length=4.7, width=1.85):
    return OrientedBox(Pose2D(x, y, h), length, width)


class TestVoxel:
    def test_centroid_per_cell(self):
        cloud = PointCloud([[0.01, 0.01, 0.01], [0.03, 0.05, 0.07], [0.5, 0.5, 0.5]])
        out = voxel_downsample(cloud, 0.1).points
        assert out == pytest.approx(np.array([[0.02, 0.03, 0.04], [0.5, 0.5, 0.5]]))

    def test_close_pair_merges_to_midpoint(self):
        out = voxel_downsample(PointCloud([[0.02, 0.02, 0.02], [0.03, 0.02, 0.02]]), 0.1).points
        assert out == pytest.approx(np.array([[0.025, 0.02, 0.02]]))

    def test_voxel_centres_unchanged(self):
        pts = np.array([[0.05, 0.05, 0.05], [0.15, 0.05, 0.05], [0.05, 0.25, 0.35]])
        out = voxel_downsample(PointCloud(pts), 0.1).points
        assert len(out) == 3 and sorted(map(tuple, out)) == pytest.approx(sorted(map(tuple, pts)))

    def test_unit_cube_count(self, rng):
        out = voxel_downsample(PointCloud(rng.uniform(0, 1, size=(1000, 3))), 0.1).points
        assert 1 <= len(out) <= 1000

    def test_empty(self):
        assert len(voxel_downsample(PointCloud(np.empty((0, 3))))) == 0

    def test_bad_cell(self):
        with pytest.raises(ValueError):
            voxel_downsample(PointCloud([[0, 0, 0]]), 0.0)

    def test_order_independent(self, rng):
        pts = rng.uniform(-2, 2, size=(500, 3))
        a = voxel_downsample(PointCloud(pts)).points
        for _ in range(5):
            b = voxel_downsample(PointCloud(rng.permutation(pts))).points
            assert np.array_equal(a, b)


class TestDetect:
    def test_axis_aligned_rectangle(self):
        dims = VehicleDims(4.0, 2.0, 1.5)
        box = detect_obb(PointCloud(_rect_outline(4, 2)), (Pose2D(0, 0, 0), dims))
        assert (box.cx, box.cy) == pytest.approx((0, 0), abs=0.05)
        assert box.length == pytest.approx(4.0, abs=0.1)
        assert box.width == pytest.approx(2.0, abs=0.1)
        assert abs(wrap_angle(box.heading)) < 0.02

    def test_rotated_rectangle(self):
        dims = VehicleDims(4.0, 2.0, 1.5)
        pts = _rect_outline(4, 2, heading=0.3, center=(1.0, -2.0))
        box = detect_obb(PointCloud(pts), (Pose2D(1.0, -2.0, 0.3), dims))
        assert (box.cx, box.cy) == pytest.approx((1.0, -2.0), abs=0.05)
        assert box.heading == pytest.approx(0.3, abs=0.02)
        assert box.length == pytest.approx(4.0, abs=0.1)

    def test_filled_rectangle(self):
        xs, ys = np.meshgrid(np.arange(-2, 2.001, 0.1), np.arange(-1, 1.001, 0.1))
        pts = np.c_[xs.ravel(), ys.ravel(), np.full(xs.size, 0.5)]
        box = detect_obb(PointCloud(pts), (Pose2D(0, 0, 0), VehicleDims(4.0, 2.0, 1.5)))
        assert (box.cx, box.cy) == pytest.approx((0, 0), abs=0.05)
        assert abs(wrap_angle(box.heading)) < 0.02

    def test_extra_cluster_pulls_centre(self):
        dims = VehicleDims(4.0, 2.0, 1.5)
        pts = _rect_outline(4, 2)
        a = detect_obb(PointCloud(pts), (Pose2D(0, 0, 0), dims))
        extra = np.array([[x, 2.0, 0.6] for x in (-0.3, -0.1, 0.1, 0.3)])
        b = detect_obb(PointCloud(np.vstack([pts, extra])), (Pose2D(0, 0, 0), dims))
        assert b.cy > a.cy

    def test_too_few_points(self):
        assert detect_obb(PointCloud(np.zeros((3, 3))), (Pose2D(0, 0, 0), CAR)) is None

    def test_points_outside_roi_ignored(self):
        dims = VehicleDims(4.0, 2.0, 1.5)
        pts = _rect_outline(4, 2)
        far = np.array([[20.0, 20.0, 0.5], [-30.0, 5.0, 1.0]])
        a = detect_obb(PointCloud(pts), (Pose2D(0, 0, 0), dims))
        b = detect_obb(PointCloud(np.vstack([pts, far])), (Pose2D(0, 0, 0), dims))
        assert a == b

    def test_shifted_cloud_shifts_box(self):
        dims = VehicleDims(4.0, 2.0, 1.5)
        pts = _rect_outline(4, 2)
        a = detect_obb(PointCloud(pts), (Pose2D(0, 0, 0), dims))
        b = detect_obb(PointCloud(pts + [0.5, 0.0, 0.0]), (Pose2D(0.5, 0, 0), dims))
        assert b.cx - a.cx == pytest.approx(0.5, abs=0.02)
        assert b.cy == pytest.approx(a.cy, abs=0.02)

    def test_rotation_equivariance(self):
        pose = Pose2D(8.0, -5.5, 0.0)
        base = raycast_frame(Pose2D(0, 0, 0), SensorModel(), (pose, CAR)).points
        ref = detect_obb(PointCloud(base), (pose, CAR))
        for theta in np.linspace(-math.pi, math.pi, 20, endpoint=False):
            rot = _rotate(base, theta)
            rpose = Pose2D(*_rotate(np.array([[pose.x, pose.y, 0.0]]), theta)[0, :2], theta)
            box = detect_obb(PointCloud(rot), (rpose, CAR), sensor_heading=theta)
            diff = wrap_angle(box.heading - ref.heading - theta)
            # equal up to the box's 180-degree symmetry
            assert min(abs(diff), math.pi - abs(diff)) < 0.02

    def test_frame_detector_matches_detect_obb(self, rng):
        pose = Pose2D(8.0, -5.5, 0.0)
        bg = raycast_frame(Pose2D(0, 0, 0), SensorModel(), (pose, CAR))
        det = FrameDetector(bg, (pose, CAR))
        assert det.detect(np.empty((0, 3))) == detect_obb(bg, (pose, CAR))
        for _ in range(5):
            extra = rng.uniform([6, -7, 1.3], [10, -4, 1.8], size=(12, 3))
            a = det.detect(extra)
            b = detect_obb(PointCloud(np.vstack([bg.points, extra])), (pose, CAR))
            assert a.cx == pytest.approx(b.cx) and a.heading == pytest.approx(b.heading)


class TestHeading:
    def test_forward_representative(self):
        assert canonical_heading(math.pi - 0.1) == pytest.approx(-0.1)
        assert canonical_heading(0.2) == pytest.approx(0.2)

    def test_prior_wins(self):
        assert canonical_heading(0.1, prior=math.pi) == pytest.approx(0.1 - math.pi)


class TestPerturbation:
    def test_translation(self):
        p = box_perturbation(_box(1, 2, 0.1), _box(1.5, 1.75, 0.1))
        assert p.as_array() == pytest.approx([0.5, -0.25, 0.0])

    def test_heading_wraps(self):
        p = box_perturbation(_box(0, 0, 3.0), _box(0, 0, -3.0))
        assert p.dh == pytest.approx(2 * math.pi - 6.0)

    def test_flip_maps_to_plus_pi(self):
        p = box_perturbation(_box(0, 0, 0.0), _box(0, 0, math.pi))
        assert p.dh == pytest.approx(math.pi)

    def test_example(self):
        d = box_perturbation(_box(0, 0, 0), _box(0.4, -0.2, 0.9))
        assert d.as_array() == pytest.approx([0.4, -0.2, 0.9])

    def test_identity(self):
        b = _box(3, -1, 0.7)
        assert np.all(box_perturbation(b, b).as_array() == 0)

    def test_array_roundtrip(self):
        p = Perturbation(0.1, -0.2, 4.0)
        assert Perturbation.from_array(p.as_array()) == p


class TestTracking:
    def test_constant_velocity(self):
        boxes = [_box(2.0 * i, 0.0, 0.0) for i in range(5)]
        tr = track_boxes(boxes, 0.5)
        assert tr.speed == pytest.approx(np.full(5, 4.0))
        assert tr.accel == pytest.approx(np.zeros(5))
        assert tr.heading == pytest.approx(np.zeros(5))

    def test_static(self):
        tr = track_boxes([_box(1, 1, 0.3)] * 4, 0.5)
        assert np.all(tr.speed == 0) and tr.heading == pytest.approx(np.full(4, 0.3))

    def test_half_metre_step(self):
        tr = track_boxes([_box(0, 0, 0), _box(0.5, 0, 0)], 0.5)
        assert np.linalg.norm(tr.xy[1] - tr.xy[0]) / 0.5 == pytest.approx(1.0)
        assert tr.speed[1] == pytest.approx(1.0)

    def test_flipped_heading_unwrapped(self):
        tr = track_boxes([_box(0, 0, 0), _box(0, 0, math.pi), _box(0, 0, 0)], 0.5)
        assert tr.heading == pytest.approx([0, 0, 0])

    def test_missed_frames_filled(self):
        boxes = [None, _box(0, 0, 0), _box(1, 0, 0), None, _box(3, 0, 0)]
        tr = track_boxes(boxes, 0.5)
        assert tr.xy[:, 0] == pytest.approx([0, 0, 1, 2, 3])

    def test_no_detections(self):
        with pytest.raises(NoTrackError):
            track_boxes([None, None], 0.5)
        with pytest.raises(ValueError):
            track_boxes([_box(0, 0, 0)], 0.5)

    def test_unwrap_keeps_continuity(self):
        out = unwrap_headings([0.1, math.pi + 0.15, 0.2, -math.pi + 0.25])
        assert out == pytest.approx([0.1, 0.15, 0.2, 0.25])
