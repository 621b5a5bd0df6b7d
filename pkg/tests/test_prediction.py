import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inverse_attack.perception import Perturbation, Track, smoothed_rates
from inverse_attack.prediction import (PredictorParams, apply_state_perturbation, grad_adv_loss, predict,
                                       predict_perturbed, recency_weights, speed_weight0)
from inverse_attack.world import Trajectory

P = PredictorParams()


def _track(xy, heading=None, dt=0.5):
    xy = np.asarray(xy, dtype=float)
    heading = np.zeros(len(xy)) if heading is None else np.asarray(heading, dtype=float)
    speed, acc = smoothed_rates(xy, dt)
    return Track(xy, heading, speed, dt, acc)


def _line(v=2.0, n=5, heading=0.0, start=(0.0, 0.0), dt=0.5):
    d = np.array([math.cos(heading), math.sin(heading)])
    xy = np.asarray(start) + np.outer(np.arange(n) * v * dt, d)
    return _track(xy, np.full(n, heading), dt)


def _random_track(rng, n=5):
    steps = rng.uniform(0.5, 3.0, size=(n - 1, 1)) * np.c_[np.cos(rng.uniform(-0.5, 0.5, n - 1)),
                                                             np.sin(rng.uniform(-0.5, 0.5, n - 1))]
    xy = np.vstack([[0, 0], np.cumsum(steps, axis=0)]) + rng.uniform(-20, 20, 2)
    return _track(xy, rng.uniform(-1, 1, n))


def test_recency_weights():
    w = recency_weights(0.2, 3)
    assert w == pytest.approx(np.array([1, 0.2, 0.04]) / 1.24)


def test_leading_speed_weight():
    assert speed_weight0(0.2, 5) == pytest.approx(0.801, abs=1e-3)
    assert recency_weights(0.2, 4)[0] == pytest.approx(speed_weight0(0.2, 5))


def test_static_history():
    pred = predict(_track(np.tile([3.0, 4.0], (5, 1))), P)
    assert len(pred) == P.T
    assert pred.positions == pytest.approx(np.tile([3.0, 4.0], (P.T, 1)))
    assert pred.speed == 0


def test_constant_velocity():
    pred = predict(_line(2.0), P)
    last = 4 * 2.0 * 0.5
    assert pred.positions[:, 0] == pytest.approx(last + np.arange(1, 7))
    assert pred.positions[:, 1] == pytest.approx(np.zeros(6), abs=1e-12)
    assert pred.speed == pytest.approx(2.0)


def test_tiny_gamma_uses_latest_heading():
    tr = _line(2.0)
    tr.heading[:] = [0.0, 0.0, 0.0, 0.0, 0.5]
    pred = predict(tr, PredictorParams(gamma=1e-6))
    assert pred.heading == pytest.approx(0.5, abs=1e-6)


def test_displaced_current_frame():
    static = _track(np.zeros((5, 2)))
    pred = predict_perturbed(static, Perturbation(0.5, 0.0, 0.0), P)
    assert pred.speed == pytest.approx(speed_weight0(0.2, 5), abs=1e-9)
    assert pred.speed == pytest.approx(0.801, abs=1e-3)
    step = np.diff(np.vstack([[0.5, 0.0], pred.positions]), axis=0)
    assert step[:, 1] == pytest.approx(np.zeros(len(step)), abs=1e-12)
    assert np.all(step[:, 0] > 0)


def test_short_history_padded():
    tr = Trajectory(np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros(2), np.full(2, 2.0), 0.5)
    pred = predict(tr, P)
    assert pred.positions[0] == pytest.approx([2.0, 0.0])


def test_invalid_params():
    for kw in (dict(gamma=0.0), dict(gamma=1.0), dict(T=0), dict(H=1), dict(dt=0.0)):
        with pytest.raises(ValueError):
            PredictorParams(**kw)


@settings(max_examples=40, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.integers(0, 2 ** 31))
def test_translation_equivariance(ox, oy, seed):
    tr = _random_track(np.random.default_rng(seed))
    moved = tr.copy()
    moved.xy += (ox, oy)
    a, b = predict(tr, P), predict(moved, P)
    assert b.positions - a.positions == pytest.approx(np.tile([ox, oy], (P.T, 1)), abs=1e-9)


class TestStatePerturbation:
    def test_current_frame(self):
        tr = _line(2.0)
        out = apply_state_perturbation(tr, Perturbation(0.5, -0.2, 0.1))
        assert out.xy[-1] == pytest.approx(tr.xy[-1] + [0.5, -0.2])
        assert out.heading[-1] == pytest.approx(0.1)
        assert np.array_equal(out.xy[:-1], tr.xy[:-1])
        assert np.array_equal(tr.xy, _line(2.0).xy)   # input untouched

    def test_past_frame(self):
        tr = _line(2.0)
        out = apply_state_perturbation(tr, Perturbation(0.0, 1.0, 0.0), frame=-2)
        assert out.xy[2] == pytest.approx(tr.xy[2] + [0, 1])
        assert not np.allclose(out.speed, tr.speed)

    def test_static_history_gains_speed(self):
        out = apply_state_perturbation(_track(np.zeros((5, 2))), Perturbation(0.5, 0.0, 0.0))
        assert np.linalg.norm(out.xy[-1] - out.xy[-2]) / out.dt == pytest.approx(1.0)

    def test_half_turn(self):
        out = apply_state_perturbation(_line(2.0), Perturbation(0.0, 0.0, math.pi))
        assert abs(out.heading[-1]) == pytest.approx(math.pi)

    def test_heading_wraps(self):
        tr = _line(2.0)
        tr.heading[-1] = 3.0
        out = apply_state_perturbation(tr, Perturbation(0, 0, 0.5))
        assert out.heading[-1] == pytest.approx(3.5 - 2 * math.pi)

    def test_frame_range(self):
        with pytest.raises(IndexError):
            apply_state_perturbation(_line(), Perturbation(), frame=-5)
        with pytest.raises(IndexError):
            apply_state_perturbation(_line(), Perturbation(), frame=1)

    def test_consistent_with_predict_perturbed(self, rng):
        tr = _random_track(rng)
        d = Perturbation(0.3, -0.4, 0.2)
        for frame in range(-4, 1):
            a = predict(apply_state_perturbation(tr, d, frame), P)
            b = predict_perturbed(tr, d, P, frame)
            assert a.positions == pytest.approx(b.positions)


def test_gradient_vanishes_at_exact_fit(rng):
    tr = _random_track(rng)
    d = Perturbation(0.2, -0.1, 0.05)
    target = predict_perturbed(tr, d, P)
    planned = Trajectory(target.positions, np.zeros(P.T), np.zeros(P.T), P.dt, t0=1)
    assert np.linalg.norm(grad_adv_loss(tr, d, planned, P)) < 1e-6


def test_heading_gradient_zero_without_speed():
    static = _track(np.tile([2.0, 1.0], (5, 1)))
    angles = np.linspace(0, 2 * math.pi, P.T, endpoint=False)
    planned = Trajectory(np.c_[2 + 3 * np.cos(angles), 1 + 3 * np.sin(angles)], np.zeros(P.T),
                         np.zeros(P.T), P.dt, t0=1)
    assert grad_adv_loss(static, Perturbation(), planned, P)[2] == 0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    eps = 1e-6
    worst = 0.0
    for _ in range(100):
        tr = _random_track(rng)
        planned = Trajectory(rng.uniform(-20, 20, size=(P.T, 2)), np.zeros(P.T), np.zeros(P.T), 0.5, t0=1)
        frame = int(rng.integers(-4, 1))
        d = rng.uniform(-0.5, 0.5, 3)

        def loss(v):
            y = predict_perturbed(tr, Perturbation.from_array(v), P, frame).positions
            return float(np.linalg.norm(y - planned.xy))

        g = grad_adv_loss(tr, Perturbation.from_array(d), planned, P, frame)
        fd = np.array([(loss(d + eps * e) - loss(d - eps * e)) / (2 * eps) for e in np.eye(3)])
        worst = max(worst, float(np.max(np.abs(g - fd))))
    assert worst < 1e-5
