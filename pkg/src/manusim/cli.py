"""Command-line interface; a thin client over the shared ops layer."""

import json
import sys
from pathlib import Path

import click

from .config import load_config
from .errors import ManusimError, ValidationError
from .retarget import load_markers
from .service import ops
from .sessionlog import read_log, to_json


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file merged over the defaults.")
@click.option("--seed", type=int, default=None, help="Session seed override.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output path (or directory, command dependent).")
@click.pass_context
def main(ctx, config_path, seed, out_path):
    """Desk-scale control stack for a seven-DOF prosthetic hand."""
    ctx.ensure_object(dict)
    try:
        ctx.obj["cfg"] = load_config(config_path)
    except ValidationError as exc:
        for line in exc.errors:
            click.echo(f"config error: {line}", err=True)
        ctx.exit(2)
    ctx.obj["seed"] = seed
    ctx.obj["out"] = out_path


def _fail(exc: ManusimError) -> None:
    if isinstance(exc, ValidationError):
        for line in exc.errors:
            click.echo(f"error: {line}", err=True)
    else:
        click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@main.command()
@click.option("--script", "script_path", type=click.Path(exists=True), default=None,
              help="JSONL action script.")
@click.option("--markers", "markers_path", type=click.Path(exists=True), default=None,
              help="Marker stream (CSV t,name,x,y,z or JSONL) driven through retargeting.")
@click.pass_context
def simulate(ctx, script_path, markers_path):
    """Run a deterministic simulated session and write its log."""
    cfg = ctx.obj["cfg"]
    out = ctx.obj["out"] or "session.jsonl"
    try:
        script_lines = (
            Path(script_path).read_text().splitlines() if script_path else None
        )
        markers = load_markers(markers_path) if markers_path else None
        records, summary = ops.do_simulate(
            cfg,
            script_lines=script_lines,
            markers=markers,
            seed=ctx.obj["seed"],
            log_path=out,
        )
    except ManusimError as exc:
        _fail(exc)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(f"log written to {out}", err=True)


@main.command()
@click.argument("log_path", type=click.Path(exists=True))
@click.option("--seed-override", type=int, default=None,
              help="Replay under a different latency seed to measure divergence.")
@click.pass_context
def replay(ctx, log_path, seed_override):
    """Re-execute a recorded session and report divergence."""
    try:
        records = read_log(log_path)
        report = ops.do_replay(records, seed_override=seed_override)
    except ManusimError as exc:
        _fail(exc)
    payload = report.to_dict()
    click.echo(json.dumps(payload, indent=2, sort_keys=True))
    if ctx.obj["out"]:
        Path(ctx.obj["out"]).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@main.command()
@click.option("--markers", "markers_path", type=click.Path(exists=True), required=True)
@click.pass_context
def retarget(ctx, markers_path):
    """Convert a marker stream into command frames plus an intent audit log."""
    cfg = ctx.obj["cfg"]
    out = ctx.obj["out"] or "retarget"
    try:
        markers = load_markers(markers_path)
        frames, intents = ops.do_retarget(cfg, markers)
    except ManusimError as exc:
        _fail(exc)
    frames_path = Path(f"{out}_frames.jsonl")
    intents_path = Path(f"{out}_intents.jsonl")
    frames_path.write_text("".join(to_json(f) + "\n" for f in frames))
    intents_path.write_text("".join(to_json(e.to_dict()) + "\n" for e in intents))
    click.echo(f"{len(frames)} frames -> {frames_path}")
    click.echo(f"{len(intents)} intents -> {intents_path}")


@main.command()
@click.argument("logs", nargs=-1, required=True, type=click.Path(exists=True))
@click.pass_context
def metrics(ctx, logs):
    """Analyze one or more session logs; writes summary.json and heatmaps."""
    out_dir = ctx.obj["out"] or "metrics_out"
    try:
        sessions = [read_log(path) for path in logs]
        summary = ops.do_metrics(sessions, out_dir=out_dir)
    except ManusimError as exc:
        _fail(exc)
    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(f"metrics written to {out_dir}", err=True)


@main.command(name="mech-report")
@click.option("--json", "as_json", is_flag=True, help="Emit JSON instead of the table.")
@click.pass_context
def mech_report_cmd(ctx, as_json):
    """Print the drivetrain force/torque budget."""
    cfg = ctx.obj["cfg"]
    try:
        report, table = ops.do_mech_report(cfg)
    except ManusimError as exc:
        _fail(exc)
    if as_json:
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    else:
        click.echo(table)
    if ctx.obj["out"]:
        Path(ctx.obj["out"]).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8750, show_default=True)
@click.option("--ui-dir", type=click.Path(), default=None,
              help="Directory of built UI assets to serve at /ui.")
@click.pass_context
def serve(ctx, host, port, ui_dir):
    """Serve the REST API and the live teleoperation WebSocket."""
    import uvicorn

    from .service.app import create_app

    cfg = ctx.obj["cfg"]
    if ctx.obj["seed"] is not None:
        cfg = dict(cfg)
        cfg["session"] = {**cfg["session"], "seed": ctx.obj["seed"]}
    record = ctx.obj["out"]
    app = create_app(cfg, record_path=record, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
