import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inverse_attack.defense import DefenseConfig, detect_adversarial, heading_violations, repair_states
from inverse_attack.perception import Track, smoothed_rates
from inverse_attack.scene import SceneSim
from inverse_attack.world import AgentState, Pose2D, bicycle_step, max_heading_change


def _track(xy, heading, dt=0.5):
    xy = np.asarray(xy, dtype=float)
    speed, acc = smoothed_rates(xy, dt)
    return Track(xy, np.asarray(heading, dtype=float), speed, dt, acc)


def _static(headings):
    return _track(np.zeros((len(headings), 2)), headings)


def _line(n=5, v=2.0, dt=0.5):
    return _track(np.c_[np.arange(n) * v * dt, np.zeros(n)], np.zeros(n), dt)


def _bicycle(x, y, h, v, steering, dt=0.5):
    s = AgentState(Pose2D(x, y, h), v)
    states = [s]
    for d in steering:
        s = bicycle_step(s, d, 0.0, dt)
        states.append(s)
    return _track([s.pose.xy for s in states], [s.pose.heading for s in states], dt)


class TestDetect:
    def test_static_track_clean(self):
        det = detect_adversarial(_static([0.3] * 5))
        assert not det.flagged and det.violating_frames == []

    def test_heading_jumps_flagged(self):
        det = detect_adversarial(_static([0.0, 3.0, 0.0, 0.0, 0.0]))
        assert det.flagged and det.violating_frames == [1, 2]

    def test_single_violation_not_flagged(self):
        det = detect_adversarial(_static([0.0, 0.0, 0.0, 0.0, 3.0]))
        assert not det.flagged and det.violating_frames == [4]

    def test_tolerance_absorbs_jitter(self):
        assert not detect_adversarial(_static([0.0, 0.04, 0.0, -0.04, 0.0])).flagged
        assert detect_adversarial(_static([0.0, 0.06, 0.0, 0.0, 0.0])).flagged

    def test_bound_follows_speed(self):
        # 0.2 rad per step is fine at 2 m/s but not when the track is static
        tr = _line()
        tr.heading[:] = [0.0, 0.2, 0.4, 0.6, 0.8]
        assert heading_violations(tr, DefenseConfig(), 0.5) == []
        assert len(heading_violations(_static(tr.heading), DefenseConfig(), 0.5)) == 4

    def test_bound_at_one_metre_per_second(self):
        # at 1 m/s the bicycle allows about 0.3115 rad per half-second step
        assert max_heading_change(1.0, 0.5, DefenseConfig().theta_max, DefenseConfig().wheelbase) == \
            pytest.approx(0.3115, abs=1e-4)
        tr = _line(v=1.0)
        tr.heading[:] = [0.0, 0.3, 0.6, 0.9, 1.2]
        assert heading_violations(tr, DefenseConfig(), 0.5) == []
        tr.heading[:] = [0.0, 3.0, 0.0, 0.0, 0.0]
        det = detect_adversarial(tr)
        assert det.flagged and det.violating_frames == [1, 2]

    def test_short_track(self):
        with pytest.raises(ValueError):
            detect_adversarial(_static([0.0]))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            DefenseConfig(min_violations=0)
        with pytest.raises(ValueError):
            DefenseConfig(heading_tolerance=-0.1)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-3.1, 3.1), st.floats(0.0, 30.0),
           st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=8))
    def test_no_false_positives_on_bicycle_tracks(self, x, y, h, v, steering):
        tr = _bicycle(x, y, h, v, steering)
        assert heading_violations(tr, DefenseConfig(heading_tolerance=1e-9), 0.5) == []

    def test_no_false_positives_on_clean_scene_tracks(self, scenes):
        for cfg in scenes:
            sim = SceneSim(cfg)
            for m in cfg.velocity_multipliers:
                assert not detect_adversarial(sim.clean_track(m)).flagged


class TestRepair:
    def test_replaces_violating_state(self):
        tr = _line()
        bad = tr.copy()
        bad.xy[3] += (0.0, 1.0)
        bad.heading[3] = 2.0
        out, warn = repair_states(bad, [3])
        assert not warn
        assert out.xy[3] == pytest.approx(tr.xy[3])
        assert out.heading[3] == pytest.approx(0.0)
        assert np.array_equal(out.xy[4], bad.xy[4])

    def test_consecutive_frames_use_last_clean_state(self):
        tr = _line()
        bad = tr.copy()
        bad.xy[2:4] += 5.0
        out, _ = repair_states(bad, [2, 3])
        assert out.xy[2:4] == pytest.approx(tr.xy[2:4])

    def test_first_frame_warns(self):
        tr = _static([2.0, 0.0, 0.0])
        out, warn = repair_states(tr, [0])
        assert warn and out.heading[0] == 2.0

    def test_no_violations_is_identity(self):
        tr = _line()
        out, warn = repair_states(tr, [])
        assert not warn and out is not tr
        assert np.array_equal(out.xy, tr.xy) and np.array_equal(out.heading, tr.heading)

    def test_repair_is_idempotent(self):
        bad = _static([0.0, 3.0, 0.0, 3.0, 0.0])
        det = detect_adversarial(bad)
        once, _ = repair_states(bad, det.violating_frames)
        assert heading_violations(once, DefenseConfig(), 0.5) == []
        twice, _ = repair_states(once, heading_violations(once, DefenseConfig(), 0.5))
        assert np.array_equal(once.xy, twice.xy) and np.array_equal(once.heading, twice.heading)

    def test_input_untouched(self):
        bad = _static([0.0, 3.0, 0.0])
        before = bad.heading.copy()
        repair_states(bad, [1])
        assert np.array_equal(bad.heading, before)
