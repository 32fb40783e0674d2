"""End-to-end runs of every CLI subcommand through real files."""

import json

import pytest
from click.testing import CliRunner

from manusim.cli import main
from manusim.sessionlog import read_log, validate_log

from synth import make_mimicry_stream

SCRIPT = "\n".join(
    [
        '{"t": 0.0, "op": "move", "moves": [{"joint": "index", "target": 255, "pwm": 255}]}',
        '{"t": 1.2, "op": "move", "moves": [{"joint": "index", "target": 0, "pwm": 255}]}',
        '{"t": 3.0, "op": "end"}',
    ]
)


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def session_log(tmp_path, runner):
    script = tmp_path / "script.jsonl"
    script.write_text(SCRIPT + "\n")
    log = tmp_path / "session.jsonl"
    result = runner.invoke(
        main, ["--seed", "7", "--out", str(log), "simulate", "--script", str(script)]
    )
    assert result.exit_code == 0, result.output
    return log


class TestSimulate:
    def test_writes_valid_log_and_summary(self, session_log, runner):
        records = read_log(session_log)
        assert validate_log(records) == []
        # stdout carries the run summary as JSON
        result = runner.invoke(
            main,
            ["--seed", "7", "--out", str(session_log), "simulate",
             "--script", str(session_log.parent / "script.jsonl")],
        )
        summary = json.loads(result.output[: result.output.rindex("}") + 1])
        assert [p["key"] for p in summary["key_presses"]] == ["f"]
        assert summary["calibration"] == {str(s): "ok" for s in range(7)}

    def test_marker_driven_run(self, tmp_path, runner, cfg):
        frames, _ = make_mimicry_stream(cfg)
        markers = tmp_path / "markers.jsonl"
        markers.write_text(
            "".join(
                json.dumps({"t": f.t, "markers": {k: list(map(float, v)) for k, v in f.markers.items()}}) + "\n"
                for f in frames
            )
        )
        log = tmp_path / "mimic.jsonl"
        result = runner.invoke(
            main, ["--seed", "5", "--out", str(log), "simulate", "--markers", str(markers)]
        )
        assert result.exit_code == 0, result.output
        records = read_log(log)
        assert any(r["type"] == "intent" for r in records)

    def test_bad_config_exits_2(self, tmp_path, runner):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"latency": {"min_s": 0.5, "max_s": 0.1}}))
        result = runner.invoke(main, ["--config", str(bad), "mech-report"])
        assert result.exit_code == 2
        assert "config error" in result.output

    def test_config_override_applies(self, tmp_path, runner):
        override = tmp_path / "cfg.json"
        override.write_text(
            json.dumps({"mechanics": {"wrist_deviation": {"driven_teeth": 24}}})
        )
        result = runner.invoke(main, ["--config", str(override), "mech-report", "--json"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["wrist_deviation"]["gear_ratio"] == 2.0


class TestReplay:
    def test_round_trip_has_zero_divergence(self, session_log, runner):
        result = runner.invoke(main, ["replay", str(session_log)])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["max_divergence_deg"] == 0.0
        assert report["missing_records"] == 0

    def test_seed_override_diverges(self, session_log, runner):
        result = runner.invoke(main, ["replay", str(session_log), "--seed-override", "0"])
        report = json.loads(result.output)
        assert report["max_divergence_deg"] > 0.5


class TestRetarget:
    def test_emits_frames_and_intents(self, tmp_path, runner, cfg):
        frames, _ = make_mimicry_stream(cfg)
        markers = tmp_path / "markers.csv"
        lines = ["t,name,x,y,z"]
        for f in frames:
            for name, xyz in f.markers.items():
                lines.append(f"{f.t},{name},{xyz[0]},{xyz[1]},{xyz[2]}")
        markers.write_text("\n".join(lines) + "\n")
        out = tmp_path / "rt"
        result = runner.invoke(
            main, ["--out", str(out), "retarget", "--markers", str(markers)]
        )
        assert result.exit_code == 0, result.output
        frame_lines = (tmp_path / "rt_frames.jsonl").read_text().splitlines()
        intent_lines = (tmp_path / "rt_intents.jsonl").read_text().splitlines()
        assert len(frame_lines) == 2
        assert {json.loads(line)["joint"] for line in intent_lines} == {
            "index", "wrist_deviation",
        }


class TestMetrics:
    def test_writes_summary_heatmaps_and_csv(self, session_log, tmp_path, runner):
        out_dir = tmp_path / "report"
        result = runner.invoke(
            main, ["--out", str(out_dir), "metrics", str(session_log)]
        )
        assert result.exit_code == 0, result.output
        names = {p.name for p in out_dir.iterdir()}
        assert names == {
            "summary.json", "groups.csv",
            "usage_counts.pgm", "usage_counts.csv",
            "usage_normalized.pgm", "usage_normalized.csv",
        }
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["groups"]["typing/full"]["presses"] == 1
        counts = (out_dir / "usage_counts.csv").read_text().splitlines()
        assert counts[0] == "finger,f"
        assert "index,1" in counts
        assert (out_dir / "usage_counts.pgm").read_text().startswith("P2")


class TestMechReport:
    def test_table_on_stdout(self, runner):
        result = runner.invoke(main, ["mech-report"])
        assert result.exit_code == 0
        assert "1725.900" in result.output

    def test_help_lists_all_commands(self, runner):
        result = runner.invoke(main, ["--help"])
        for command in ("simulate", "replay", "retarget", "metrics", "mech-report", "serve"):
            assert command in result.output
