"""Operations shared by the CLI and the HTTP endpoints.

Both front ends call these functions in-process; the service adds
transport, the CLI adds argument handling, nothing else.
"""

import csv
import json
from pathlib import Path

from ..config import load_config
from ..errors import ValidationError
from ..mechanics import mech_report, render_report_table
from ..metrics import Session, summarize, usage_heatmap, segment_presses, write_pgm
from ..retarget import IntentEvent, RetargetPipeline, load_markers, MarkerFrame
from ..sessionlog import read_log, to_json, validate_log
from ..sim import Action, ReplayReport, parse_script, replay, run_simulation


def do_mech_report(cfg: dict) -> tuple[dict, str]:
    report = mech_report(cfg["mechanics"])
    return report, render_report_table(report)


def do_simulate(
    cfg: dict,
    script_lines: list[str] | None = None,
    markers: list[MarkerFrame] | None = None,
    seed: int | None = None,
    log_path: str | Path | None = None,
) -> tuple[list[dict], dict]:
    actions = parse_script(script_lines, cfg) if script_lines is not None else []
    session = run_simulation(
        cfg, actions=actions, markers=markers, seed=seed, log_path=log_path
    )
    records = session.log.records
    return records, summarize_run(records)


def summarize_run(records: list[dict]) -> dict:
    presses = [r for r in records if r.get("type") == "key" and r.get("action") == "press"]
    completions = [r for r in records if r.get("type") == "completion"]
    calibrations = [r for r in records if r.get("type") == "calibration"]
    return {
        "records": len(records),
        "duration_s": max((r.get("t", 0.0) for r in records[1:]), default=0.0),
        "key_presses": [{"t": r["t"], "key": r["key"], "finger": r["finger"]} for r in presses],
        "completions": len(completions),
        "stalls": sum(1 for r in completions if r.get("status") == "stalled"),
        "calibration": {
            str(r["slot"]): r["status"] for r in calibrations
        },
    }


def do_replay(records: list[dict], seed_override: int | None = None) -> ReplayReport:
    errors = validate_log(records)
    # a truncated log may be schema-incomplete; replay what parses
    if errors and records and records[0].get("type") != "header":
        raise ValidationError(errors)
    return replay(records, seed_override=seed_override)


def do_retarget(
    cfg: dict, markers: list[MarkerFrame]
) -> tuple[list[dict], list[IntentEvent]]:
    """Run the retarget pipeline offline; returns dispatchable frames and
    the intent audit trail."""
    from ..config import joint_specs
    from ..protocol import encode

    pipeline = RetargetPipeline(
        joint_specs(cfg),
        reference_velocity_dps=float(cfg["plant"]["omega_max_dps"]["index"]),
    )
    frames = []
    intents: list[IntentEvent] = []
    for marker_frame in sorted(markers, key=lambda m: m.t):
        for dispatched in pipeline.push(marker_frame):
            frames.append(_dispatched_dict(dispatched))
            intents.extend(dispatched.events)
    for dispatched in pipeline.flush():
        frames.append(_dispatched_dict(dispatched))
        intents.extend(dispatched.events)
    return frames, intents


def _dispatched_dict(dispatched) -> dict:
    from ..protocol import encode

    return {
        "t": dispatched.dispatch_at_s,
        "flags": dispatched.frame.flags,
        "targets": list(dispatched.frame.targets),
        "pwms": list(dispatched.frame.pwms),
        "raw_hex": encode(dispatched.frame).hex(),
    }


def do_metrics(session_records: list[list[dict]], out_dir: str | Path | None = None) -> dict:
    sessions = [Session.from_records(records) for records in session_records]
    summary = summarize(sessions)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        heatmap = usage_heatmap([segment_presses(s)[0] for s in sessions])
        for name, matrix, cell in (
            ("counts", heatmap.counts, lambda v: int(v)),
            ("normalized", heatmap.normalized, lambda v: round(float(v), 6)),
        ):
            write_pgm(matrix, out / f"usage_{name}.pgm")
            with (out / f"usage_{name}.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["finger", *heatmap.keys])
                for finger, row in zip(heatmap.fingers, matrix):
                    writer.writerow([finger, *(cell(v) for v in row)])
        with (out / "groups.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["task", "condition", "sessions", "presses", "dropped",
                 "displacement_rate_mean_m_per_s", "splay_mean", "splay_se"]
            )
            for key, group in sorted(summary["groups"].items()):
                task, condition = key.split("/", 1)
                writer.writerow(
                    [task, condition, group["sessions"], group["presses"], group["dropped"],
                     group["displacement_rate_mean_m_per_s"],
                     group["splay"]["mean"], group["splay"]["se"]]
                )
    return summary
