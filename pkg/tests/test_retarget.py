import math

import numpy as np
import pytest

from manusim.errors import DomainError, ValidationError
from manusim.hand import JointId, angle_to_normalized
from manusim.retarget import (
    CompletionDetector,
    DegenerateGeometry,
    MarkerFrame,
    MissingMarker,
    RetargetPipeline,
    intent_to_frame,
    joint_angles,
    load_marker_csv,
    load_marker_jsonl,
    load_markers,
)

from synth import (
    deviated_middle_markers,
    flexed_finger_markers,
    make_mimicry_stream,
    neutral_markers,
)


def mf(t, markers):
    return MarkerFrame(t=t, markers=markers)


def thumb_dip_markers(dip_deg: float) -> dict:
    """Thumb tip lowered dip_deg below the palm plane about its base."""
    e = math.radians(dip_deg)
    yaw = math.radians(-40.0)
    base = (40.0, -40.0, 0.0)
    reach = 50.0 * math.cos(e)
    return {
        "thumb_base": base,
        "thumb_tip": (
            base[0] + reach * math.cos(yaw),
            base[1] + reach * math.sin(yaw),
            -50.0 * math.sin(e),
        ),
    }


class TestJointAngles:
    def test_neutral_pose(self, specs):
        angles = joint_angles(mf(0.0, neutral_markers()), specs)
        for f in (JointId.INDEX, JointId.MIDDLE, JointId.RING, JointId.LITTLE):
            assert angles[f] == pytest.approx(180.0)
        assert angles[JointId.WRIST_DEVIATION] == pytest.approx(0.0, abs=1e-9)
        assert angles[JointId.THUMB] == pytest.approx(-10.0)
        assert angles[JointId.WRIST_ROTATION] == 0.0

    def test_right_angle_finger(self, specs):
        markers = neutral_markers()
        markers.update(flexed_finger_markers("index", 90.0))
        angles = joint_angles(mf(0.0, markers), specs)
        assert angles[JointId.INDEX] == pytest.approx(90.0, abs=1e-6)

    @pytest.mark.parametrize("interior", [170.0, 140.0, 103.7, 77.0, 31.0])
    def test_interior_angle_sweep(self, specs, interior):
        markers = neutral_markers()
        markers.update(flexed_finger_markers("middle", interior))
        angles = joint_angles(mf(0.0, markers), specs)
        assert angles[JointId.MIDDLE] == pytest.approx(interior, abs=1e-6)

    def test_finger_clamped_to_range(self, specs):
        markers = neutral_markers()
        markers.update(flexed_finger_markers("ring", 8.0))
        angles = joint_angles(mf(0.0, markers), specs)
        assert angles[JointId.RING] == 15.0

    @pytest.mark.parametrize("deviation", [20.0, -20.0, 7.5])
    def test_deviation_signed(self, specs, deviation):
        markers = neutral_markers()
        markers.update(deviated_middle_markers(deviation))
        angles = joint_angles(mf(0.0, markers), specs)
        assert angles[JointId.WRIST_DEVIATION] == pytest.approx(deviation, abs=1e-9)

    def test_deviation_clamped(self, specs):
        markers = neutral_markers()
        markers.update(deviated_middle_markers(45.0))
        angles = joint_angles(mf(0.0, markers), specs)
        assert angles[JointId.WRIST_DEVIATION] == 30.0

    @pytest.mark.parametrize("dip,expected", [(0.0, -10.0), (50.0, 40.0), (30.0, 20.0)])
    def test_thumb_elevation_mapping(self, specs, dip, expected):
        markers = neutral_markers()
        markers.update(thumb_dip_markers(dip))
        angles = joint_angles(mf(0.0, markers), specs)
        assert angles[JointId.THUMB] == pytest.approx(expected, abs=1e-9)

    def test_thumb_raised_clamps_at_extended(self, specs):
        markers = neutral_markers()
        markers.update(thumb_dip_markers(-20.0))
        angles = joint_angles(mf(0.0, markers), specs)
        assert angles[JointId.THUMB] == -10.0

    def test_rotation_reports_neutral(self, specs):
        markers = neutral_markers()
        markers.update(deviated_middle_markers(-15.0))
        markers.update(flexed_finger_markers("index", 60.0))
        angles = joint_angles(mf(0.0, markers), specs)
        assert angles[JointId.WRIST_ROTATION] == 0.0

    def test_missing_marker(self, specs):
        markers = neutral_markers()
        del markers["middle_pip"]
        with pytest.raises(MissingMarker, match="middle_pip"):
            joint_angles(mf(0.0, markers), specs)

    def test_degenerate_finger(self, specs):
        markers = neutral_markers()
        markers["index_tip"] = markers["index_pip"]
        with pytest.raises(DegenerateGeometry):
            joint_angles(mf(0.0, markers), specs)

    def test_degenerate_palm_line(self, specs):
        markers = neutral_markers()
        markers["middle_mcp"] = (0.0, 0.0, 5.0)  # directly above the wrist
        with pytest.raises(DegenerateGeometry):
            joint_angles(mf(0.0, markers), specs)

    def test_marker_frame_coerces_and_validates(self):
        frame = mf(0.0, {"wrist": [1, 2, 3]})
        assert frame.get("wrist").dtype == float
        with pytest.raises(DomainError):
            mf(0.0, {"wrist": [1.0, 2.0]})


class TestCompletionDetector:
    def ramp_then_hold(self, detector, start, end, ramp_s=0.3, hold_s=0.5,
                       dt=0.01, t0=0.0):
        events = []
        t = t0
        n_ramp = int(ramp_s / dt)
        n_hold = int(hold_s / dt)
        for i in range(n_ramp + 1):
            angle = start + (end - start) * i / n_ramp
            event = detector.update(t, angle)
            if event:
                events.append(event)
            t += dt
        for _ in range(n_hold):
            event = detector.update(t, end)
            if event:
                events.append(event)
            t += dt
        return events

    def test_single_motion_single_event(self):
        det = CompletionDetector(JointId.INDEX)
        events = self.ramp_then_hold(det, 180.0, 150.0)
        assert len(events) == 1
        event = events[0]
        assert event.joint is JointId.INDEX
        assert event.settled_angle_deg == pytest.approx(150.0)
        assert event.peak_velocity_dps == pytest.approx(100.0, rel=0.01)
        # settle hold is 0.15 s after the ramp ends (plus one quiet sample)
        assert 0.45 <= event.completed_at_s <= 0.50

    def test_small_excursion_ignored(self):
        det = CompletionDetector(JointId.INDEX, min_excursion_deg=8.0)
        events = self.ramp_then_hold(det, 180.0, 175.0)
        assert events == []

    def test_two_motions_two_events(self):
        det = CompletionDetector(JointId.WRIST_DEVIATION)
        first = self.ramp_then_hold(det, 0.0, 20.0)
        second = self.ramp_then_hold(det, 20.0, -10.0, t0=1.0)
        assert len(first) == 1 and len(second) == 1
        assert second[0].settled_angle_deg == pytest.approx(-10.0)

    def test_never_settles_never_fires(self):
        det = CompletionDetector(JointId.INDEX)
        t = 0.0
        for i in range(500):
            assert det.update(t, 180.0 - i * 0.5) is None  # 50 dps forever
            t += 0.01

    def test_stationary_never_fires(self):
        det = CompletionDetector(JointId.INDEX)
        for i in range(200):
            assert det.update(i * 0.01, 180.0) is None

    def test_timestamps_must_increase(self):
        det = CompletionDetector(JointId.INDEX)
        det.update(0.0, 180.0)
        with pytest.raises(DomainError):
            det.update(0.0, 179.0)


class TestIntentToFrame:
    def make_event(self, joint, angle, peak, t=1.0):
        from manusim.retarget import IntentEvent
        return IntentEvent(joint=joint, settled_angle_deg=angle,
                           peak_velocity_dps=peak, completed_at_s=t)

    def test_target_and_pwm(self, specs):
        event = self.make_event(JointId.INDEX, 90.0, 206.25)
        frame = intent_to_frame([event], specs)
        assert frame.flagged_slots() == (1,)
        assert frame.targets[1] == angle_to_normalized(90.0, specs[JointId.INDEX])
        assert frame.pwms[1] == 128  # 255 * 206.25 / 412.5, half-up

    def test_pwm_floor_and_cap(self, specs):
        slow = self.make_event(JointId.MIDDLE, 120.0, 5.0)
        assert intent_to_frame([slow], specs).pwms[2] == 30
        fast = self.make_event(JointId.MIDDLE, 120.0, 2000.0)
        assert intent_to_frame([fast], specs).pwms[2] == 255

    def test_angle_clamped_to_spec(self, specs):
        event = self.make_event(JointId.WRIST_ROTATION, 500.0, 100.0)
        frame = intent_to_frame([event], specs)
        assert frame.targets[6] == 255

    def test_batch_sets_multiple_slots(self, specs):
        events = [
            self.make_event(JointId.INDEX, 120.0, 100.0),
            self.make_event(JointId.WRIST_DEVIATION, 15.0, 80.0),
        ]
        frame = intent_to_frame(events, specs)
        assert frame.flagged_slots() == (1, 5)

    def test_duplicate_joint_rejected(self, specs):
        events = [
            self.make_event(JointId.INDEX, 120.0, 100.0),
            self.make_event(JointId.INDEX, 90.0, 100.0),
        ]
        with pytest.raises(ValidationError, match="duplicate"):
            intent_to_frame(events, specs)


class TestPipeline:
    def test_mimicry_stream_yields_two_frames(self, cfg, specs):
        frames, truth = make_mimicry_stream(cfg)
        pipeline = RetargetPipeline(specs)
        dispatched = []
        for frame in frames:
            dispatched += pipeline.push(frame)
        dispatched += pipeline.flush()

        assert pipeline.skipped_frames == 0
        assert len(dispatched) == 2
        flex, dev = dispatched

        assert flex.frame.flagged_slots() == (1,)
        want_target = angle_to_normalized(
            truth["index_interior_deg"], specs[JointId.INDEX]
        )
        assert abs(flex.frame.targets[1] - want_target) <= 1
        want_pwm = int(255 * truth["index_peak_dps"] / 412.5 + 0.5)
        assert abs(flex.frame.pwms[1] - want_pwm) <= 2
        assert flex.dispatch_at_s == pytest.approx(
            flex.events[0].completed_at_s + 0.05
        )

        assert dev.frame.flagged_slots() == (5,)
        want_dev = angle_to_normalized(
            truth["deviation_deg"], specs[JointId.WRIST_DEVIATION]
        )
        assert abs(dev.frame.targets[5] - want_dev) <= 1
        want_dev_pwm = int(255 * truth["deviation_peak_dps"] / 412.5 + 0.5)
        assert abs(dev.frame.pwms[5] - want_dev_pwm) <= 2

    def test_synchronized_joints_share_a_frame(self, specs):
        from synth import smoothstep

        pipeline = RetargetPipeline(specs)
        dispatched = []
        dt = 0.01
        for i in range(81):
            t = i * dt
            markers = neutral_markers()
            if t >= 0.1:
                u = smoothstep((t - 0.1) / 0.15)
                interior = 180.0 - 40.0 * u
                markers.update(flexed_finger_markers("index", interior))
                markers.update(flexed_finger_markers("middle", interior))
            dispatched += pipeline.push(mf(t, markers))
        dispatched += pipeline.flush()

        assert len(dispatched) == 1
        assert dispatched[0].frame.flagged_slots() == (1, 2)
        assert len(dispatched[0].events) == 2

    def test_degenerate_frames_skipped_not_fatal(self, specs):
        pipeline = RetargetPipeline(specs)
        good = neutral_markers()
        bad = neutral_markers()
        bad["index_tip"] = bad["index_pip"]
        pipeline.push(mf(0.0, good))
        pipeline.push(mf(0.01, bad))
        pipeline.push(mf(0.02, good))
        assert pipeline.skipped_frames == 1

    def test_no_motion_no_frames(self, specs):
        pipeline = RetargetPipeline(specs)
        for i in range(100):
            assert pipeline.push(mf(i * 0.01, neutral_markers())) == []
        assert pipeline.flush() == []
        assert pipeline.events_seen == []


CSV_HEADER = "t,name,x,y,z\n"


class TestLoaders:
    def test_csv_groups_rows_by_timestamp(self, tmp_path):
        path = tmp_path / "markers.csv"
        path.write_text(
            CSV_HEADER
            + "0.0,wrist,0,0,0\n"
            + "0.0, elbow ,-300,0,0\n"
            + "0.05,wrist,1,2,3\n"
        )
        frames = load_marker_csv(path)
        assert len(frames) == 2
        assert set(frames[0].markers) == {"wrist", "elbow"}
        assert frames[1].t == 0.05
        assert np.allclose(frames[1].markers["wrist"], [1.0, 2.0, 3.0])

    def test_csv_missing_column(self, tmp_path):
        path = tmp_path / "markers.csv"
        path.write_text("t,name,x,y\n0.0,wrist,0,0\n")
        with pytest.raises(ValidationError, match="missing columns"):
            load_marker_csv(path)

    def test_csv_malformed_row_is_line_numbered(self, tmp_path):
        path = tmp_path / "markers.csv"
        path.write_text(CSV_HEADER + "0.0,wrist,0,0,0\n0.01,wrist,abc,0,0\n")
        with pytest.raises(ValidationError, match="line 3"):
            load_marker_csv(path)

    def test_csv_decreasing_timestamps(self, tmp_path):
        path = tmp_path / "markers.csv"
        path.write_text(CSV_HEADER + "1.0,wrist,0,0,0\n0.5,wrist,0,0,0\n")
        with pytest.raises(ValidationError, match="line 3"):
            load_marker_csv(path)

    def test_jsonl_round_trip(self, tmp_path):
        path = tmp_path / "markers.jsonl"
        path.write_text(
            '{"t": 0.0, "markers": {"wrist": [0, 0, 0]}}\n'
            "\n"
            '{"t": 0.1, "markers": {"wrist": [4, 5, 6]}}\n'
        )
        frames = load_marker_jsonl(path)
        assert [f.t for f in frames] == [0.0, 0.1]
        assert np.allclose(frames[1].markers["wrist"], [4.0, 5.0, 6.0])

    def test_jsonl_error_is_line_numbered(self, tmp_path):
        path = tmp_path / "markers.jsonl"
        path.write_text('{"t": 0.0, "markers": {}}\n{not json}\n')
        with pytest.raises(ValidationError, match="line 2"):
            load_marker_jsonl(path)

    def test_dispatch_by_extension(self, tmp_path):
        csv_path = tmp_path / "a.csv"
        csv_path.write_text(CSV_HEADER + "0.0,wrist,0,0,0\n")
        jsonl_path = tmp_path / "a.jsonl"
        jsonl_path.write_text('{"t": 0.0, "markers": {"wrist": [0, 0, 0]}}\n')
        assert len(load_markers(csv_path)) == 1
        assert len(load_markers(jsonl_path)) == 1
