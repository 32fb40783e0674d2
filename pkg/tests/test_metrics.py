import numpy as np
import pytest

from manusim.errors import DomainError, ValidationError
from manusim.metrics import (
    CONDITIONS,
    PressInterval,
    Session,
    displacement_rate,
    segment_presses,
    splay_stats,
    summarize,
    usage_heatmap,
    write_pgm,
)
from manusim.sessionlog import make_header

from synth import make_metrics_records


def make_session(**kwargs) -> Session:
    return Session.from_records(make_metrics_records(**kwargs))


def iv(key="f", finger="index", t0=0.0, dur=1.0):
    return PressInterval(key, finger, t0, t0 + dur, t0 + 0.5)


class TestSegmentation:
    def test_full_sessions_segment_cleanly(self):
        session = make_session(n_presses=5)
        intervals, dropped = segment_presses(session)
        assert dropped == 0
        assert len(intervals) == 5
        for i, interval in enumerate(intervals):
            t0 = 1.0 + 2.0 * i
            assert interval.key == "f"
            assert interval.finger == "index"
            assert interval.t_start == t0          # command dispatch time
            assert interval.press_t == t0 + 0.6
            assert interval.t_end == t0 + 1.0
            assert interval.duration == pytest.approx(1.0)

    def test_press_without_command_dropped(self):
        records = [
            make_header("typing", "full", 1, "synthetic", 0, {}),
            {"t": 1.0, "type": "key", "action": "press", "key": "f",
             "finger": "index", "force_n": 0.7},
            {"t": 1.5, "type": "key", "action": "release", "key": "f",
             "finger": "index", "force_n": 0.0},
        ]
        intervals, dropped = segment_presses(Session.from_records(records))
        assert intervals == []
        assert dropped == 1

    def test_unreleased_press_dropped(self):
        records = make_metrics_records(n_presses=2)
        records = [r for r in records
                   if not (r.get("action") == "release" and r["t"] >= 4.0)]
        intervals, dropped = segment_presses(Session.from_records(records))
        assert len(intervals) == 1
        assert dropped == 1

    def test_release_without_press_ignored(self):
        records = [
            make_header("typing", "full", 1, "synthetic", 0, {}),
            {"t": 1.0, "type": "key", "action": "release", "key": "f",
             "finger": "index", "force_n": 0.0},
        ]
        intervals, dropped = segment_presses(Session.from_records(records))
        assert intervals == []
        assert dropped == 0

    def test_command_for_other_slot_does_not_count(self):
        frame = {"flags": 1 << 2, "targets": [0] * 7, "pwms": [0] * 7}
        records = [
            make_header("typing", "full", 1, "synthetic", 0, {}),
            {"t": 0.5, "type": "command", "frame": frame},
            {"t": 1.0, "type": "key", "action": "press", "key": "f",
             "finger": "index", "force_n": 0.7},
            {"t": 1.5, "type": "key", "action": "release", "key": "f",
             "finger": "index", "force_n": 0.0},
        ]
        intervals, dropped = segment_presses(Session.from_records(records))
        assert intervals == []
        assert dropped == 1

    def test_latest_command_wins(self):
        frame = {"flags": 1 << 1, "targets": [0] * 7, "pwms": [0] * 7}
        records = [
            make_header("typing", "full", 1, "synthetic", 0, {}),
            {"t": 0.2, "type": "command", "frame": frame},
            {"t": 0.8, "type": "command", "frame": frame},
            {"t": 1.0, "type": "key", "action": "press", "key": "f",
             "finger": "index", "force_n": 0.7},
            {"t": 1.5, "type": "key", "action": "release", "key": "f",
             "finger": "index", "force_n": 0.0},
        ]
        intervals, _ = segment_presses(Session.from_records(records))
        assert intervals[0].t_start == 0.8

    def test_headerless_records_rejected(self):
        with pytest.raises(ValidationError):
            Session.from_records([{"t": 0.0, "type": "key"}])

    def test_session_accessors(self):
        session = make_session(task="piano", condition="splay_only", splay_level=4)
        assert session.task == "piano"
        assert session.condition == "splay_only"
        assert session.splay_level == 4
        assert "splay_only" in CONDITIONS


class TestDisplacementRate:
    def test_rate_is_exact_for_synthetic_path(self):
        for scale in (1.0, 0.9, 0.81):
            session = make_session(path_scale=scale)
            intervals, _ = segment_presses(session)
            rates, excluded = displacement_rate(session, intervals)
            assert excluded == 0
            assert len(rates) == 5
            for rate in rates:
                assert rate == pytest.approx(0.4 * scale, rel=1e-12)

    def test_stationary_arm_rates_zero(self):
        session = make_session(path_scale=0.0)
        intervals, _ = segment_presses(session)
        rates, _ = displacement_rate(session, intervals)
        assert rates == [0.0] * 5

    def test_no_marker_samples_excluded(self):
        records = [r for r in make_metrics_records(n_presses=3)
                   if r.get("type") != "marker"]
        session = Session.from_records(records)
        intervals, _ = segment_presses(session)
        rates, excluded = displacement_rate(session, intervals)
        assert rates == []
        assert excluded == 3

    def test_zero_duration_interval_excluded(self):
        session = make_session(n_presses=1)
        degenerate = PressInterval("f", "index", 2.0, 2.0, 2.0)
        rates, excluded = displacement_rate(session, [degenerate])
        assert rates == []
        assert excluded == 1

    def test_single_sample_in_window_excluded(self):
        session = make_session(n_presses=1)
        # only the k=0 marker sample falls in [1.0, 1.04]
        narrow = PressInterval("f", "index", 1.0, 1.04, 1.02)
        rates, excluded = displacement_rate(session, [narrow])
        assert excluded == 1


class TestHeatmap:
    def test_pooled_counts_and_normalization(self):
        session_a = [iv("f", "index"), iv("f", "index"), iv("g", "middle")]
        session_b = [iv("f", "index"), iv("f", "thumb")]
        result = usage_heatmap([session_a, session_b])
        f_col = result.keys.index("f")
        g_col = result.keys.index("g")
        index_row = result.fingers.index("index")
        thumb_row = result.fingers.index("thumb")
        middle_row = result.fingers.index("middle")
        assert result.counts[index_row, f_col] == 3
        assert result.counts[thumb_row, f_col] == 1
        assert result.counts[middle_row, g_col] == 1
        assert result.normalized[index_row, f_col] == pytest.approx(0.75)
        assert result.normalized[thumb_row, f_col] == pytest.approx(0.25)
        assert result.normalized[:, g_col].sum() == pytest.approx(1.0)

    def test_unused_key_column_stays_zero(self):
        result = usage_heatmap([[iv("f", "index")], []])
        assert result.normalized.sum(axis=0)[result.keys.index("f")] == 1.0
        assert (result.counts >= 0).all()

    def test_unknown_finger_ignored(self):
        result = usage_heatmap([[iv("f", "elbow")]])
        assert result.counts.sum() == 0

    def test_to_dict_shapes(self):
        result = usage_heatmap([[iv("f", "index")]])
        d = result.to_dict()
        assert d["fingers"] == result.fingers
        assert d["keys"] == ["f"]
        assert isinstance(d["counts"][0][0], int)


class TestSplayStats:
    def test_mean_and_se(self):
        sessions = [
            make_session(condition="full", splay_level=2),
            make_session(condition="full", splay_level=4),
        ]
        stats = splay_stats(sessions)
        entry = stats[("typing", "full")]
        assert entry["mean"] == pytest.approx(3.0)
        assert entry["se"] == pytest.approx(1.0)
        assert entry["n"] == 2

    def test_single_session_se_zero(self):
        stats = splay_stats([make_session(condition="splay_only", splay_level=5)])
        entry = stats[("typing", "splay_only")]
        assert entry["mean"] == 5.0
        assert entry["se"] == 0.0

    def test_baseline_condition_pins_level_one(self):
        stats = splay_stats(
            [make_session(condition="no_splay_no_wrist", splay_level=4)]
        )
        assert stats[("typing", "no_splay_no_wrist")]["mean"] == 1.0


class TestSummarize:
    def test_groups_and_heatmap(self):
        sessions = [
            make_session(condition="full", path_scale=0.81, splay_level=3),
            make_session(condition="full", path_scale=0.81, splay_level=5),
            make_session(condition="no_splay_no_wrist", path_scale=1.0),
        ]
        out = summarize(sessions)
        assert set(out["groups"]) == {"typing/full", "typing/no_splay_no_wrist"}
        full = out["groups"]["typing/full"]
        base = out["groups"]["typing/no_splay_no_wrist"]
        assert full["sessions"] == 2
        assert full["presses"] == 10
        assert full["dropped"] == 0
        assert full["displacement_rate_mean_m_per_s"] == pytest.approx(0.4 * 0.81)
        assert base["displacement_rate_mean_m_per_s"] == pytest.approx(0.4)
        assert full["splay"]["mean"] == pytest.approx(4.0)
        assert base["splay"]["mean"] == 1.0
        assert out["heatmap"]["keys"] == ["f"]

    def test_condition_ordering_dataset(self):
        scales = {"no_splay_no_wrist": 1.0, "splay_only": 0.9, "full": 0.81}
        sessions = [
            make_session(condition=cond, path_scale=scale)
            for cond, scale in scales.items()
        ]
        out = summarize(sessions)
        rates = {
            cond: out["groups"][f"typing/{cond}"]["displacement_rate_mean_m_per_s"]
            for cond in scales
        }
        assert rates["full"] < rates["splay_only"] < rates["no_splay_no_wrist"]
        assert rates["splay_only"] / rates["no_splay_no_wrist"] == pytest.approx(0.9)
        assert rates["full"] / rates["no_splay_no_wrist"] == pytest.approx(0.81)

    def test_group_without_rates_reports_none(self):
        records = [r for r in make_metrics_records(n_presses=1)
                   if r.get("type") != "marker"]
        out = summarize([Session.from_records(records)])
        group = out["groups"]["typing/full"]
        assert group["displacement_rate_mean_m_per_s"] is None
        assert group["displacement_excluded"] == 1


class TestWritePgm:
    def test_header_and_scaling(self, tmp_path):
        path = tmp_path / "heat.pgm"
        write_pgm(np.array([[0.0, 1.0, 2.0], [4.0, 0.0, 0.0]]), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "P2"
        assert lines[1] == "3 2"
        assert lines[2] == "255"
        assert lines[3].split() == ["0", "63", "127"]
        assert lines[4].split() == ["255", "0", "0"]

    def test_zero_matrix(self, tmp_path):
        path = tmp_path / "zero.pgm"
        write_pgm(np.zeros((2, 2)), path)
        assert path.read_text().splitlines()[3:] == ["0 0", "0 0"]

    def test_requires_2d(self, tmp_path):
        with pytest.raises(DomainError):
            write_pgm(np.zeros(3), tmp_path / "bad.pgm")
