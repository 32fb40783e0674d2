"""Lockstep session driver: firmware + plant + latency channel + log.

One firmware control tick equals one plant step; the only asynchrony is
the seeded latency channel between command dispatch and firmware
delivery, so a (config, seed, input) triple fully determines the log.
"""

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .config import joint_specs
from .errors import DomainError, ValidationError
from .firmware import FirmwareConfig, FirmwareController
from .hand import JointId, NUM_SLOTS, angle_to_normalized
from .plant import LatencyChannel, PlantWorld
from .protocol import CommandFrame, encode
from .retarget import MarkerFrame, RetargetPipeline
from .sessionlog import SessionLogWriter, make_header


@dataclass(frozen=True)
class Action:
    """One timed input to the session."""

    t: float
    kind: str                   # frame | splay | hand | task | end
    frame: CommandFrame | None = None
    payload: dict = field(default_factory=dict)


def parse_script(source: str | Path | list[str], cfg: dict) -> list[Action]:
    """Parse a JSONL script into actions; errors carry line numbers.

    Line forms:
      {"t": 0.5, "op": "move", "moves": [{"joint": "index", "target": 255, "pwm": 255}]}
      {"t": 0.5, "op": "move", "moves": [{"joint": "index", "target_angle": 90, "pwm": 200}]}
      {"t": 0.0, "op": "splay", "level": 3}
      {"t": 0.0, "op": "hand", "x_mm": 0, "y_mm": -10}
      {"t": 0.0, "op": "task", "task": "typing"}
      {"t": 9.0, "op": "end"}
    """
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        lines = Path(source).read_text().splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = list(source)
    specs = joint_specs(cfg)
    actions: list[Action] = []
    errors: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(f"line {lineno}: invalid JSON ({exc})")
            continue
        try:
            t = float(obj["t"])
            op = str(obj["op"])
            if op == "move":
                moves = {}
                for move in obj["moves"]:
                    joint = JointId.from_name(str(move["joint"]))
                    if "target" in move:
                        target = int(move["target"])
                    else:
                        target = angle_to_normalized(
                            float(move["target_angle"]), specs[joint]
                        )
                    moves[joint.slot] = (target, int(move["pwm"]))
                actions.append(Action(t, "frame", frame=CommandFrame.for_moves(moves)))
            elif op == "splay":
                actions.append(Action(t, "splay", payload={"level": int(obj["level"])}))
            elif op == "hand":
                actions.append(
                    Action(
                        t,
                        "hand",
                        payload={"x_mm": float(obj["x_mm"]), "y_mm": float(obj["y_mm"])},
                    )
                )
            elif op == "task":
                actions.append(Action(t, "task", payload={"task": str(obj["task"])}))
            elif op == "end":
                actions.append(Action(t, "end"))
            else:
                errors.append(f"line {lineno}: unknown op {op!r}")
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"line {lineno}: {exc}")
        except (DomainError, ValidationError) as exc:
            errors.append(f"line {lineno}: {exc}")
    if errors:
        raise ValidationError(errors)
    actions.sort(key=lambda a: a.t)
    return actions


class _CalibrationIO:
    """DriveIO that advances the whole lockstep world during calibration."""

    def __init__(self, session: "SimSession"):
        self.session = session
        self.drives: list[tuple[int, int]] = [(0, 0)] * NUM_SLOTS

    def apply(self, slot: int, pwm: int, direction: int) -> None:
        self.drives[slot] = (pwm, direction)

    def counts(self) -> list[int]:
        return self.session.world.encoder_counts()

    def tick(self) -> None:
        self.session.advance_plant(self.drives)


class SimSession:
    """Owns one simulated session end to end."""

    def __init__(
        self,
        cfg: dict,
        seed: int | None = None,
        log_path: str | Path | None = None,
        created_at: str | None = None,
    ):
        self.cfg = cfg
        session_cfg = cfg["session"]
        self.seed = int(session_cfg["seed"] if seed is None else seed)
        self.specs = joint_specs(cfg)
        self.world = PlantWorld.from_config(cfg, self.specs)
        self.firmware = FirmwareController(
            FirmwareConfig.from_dict(cfg["firmware"]), self.specs
        )
        self.channel = LatencyChannel(
            float(cfg["latency"]["min_s"]),
            float(cfg["latency"]["max_s"]),
            random.Random(self.seed),
        )
        self.dt = self.firmware.config.dt
        self.tick = 0
        self._telemetry_every = max(
            1, round(cfg["firmware"]["control_rate_hz"] / session_cfg["telemetry_rate_hz"])
        )
        self._world_every = max(
            1, round(cfg["firmware"]["control_rate_hz"] / session_cfg["world_rate_hz"])
        )
        self.last_event_t = 0.0
        self.log = SessionLogWriter(
            make_header(
                task=str(session_cfg["task"]),
                condition=str(session_cfg["condition"]),
                splay_level=int(session_cfg["splay_level"]),
                subject=str(session_cfg["subject"]),
                seed=self.seed,
                config=cfg,
                created_at=created_at,
            ),
            path=log_path,
        )

    @property
    def time(self) -> float:
        # product of an int tick and dt, rounded so timestamps read clean
        return round(self.tick * self.dt, 9)

    # -- plumbing ----------------------------------------------------------

    def advance_plant(self, drives: list[tuple[int, int]]) -> None:
        """One plant step plus periodic log records (used by calibration
        sweeps and the main loop alike, so time never skips)."""
        self.tick += 1
        events = self.world.step(drives, self.dt, now=self.time)
        for event in events:
            self.log.write(event.to_dict())
            self.last_event_t = self.time
        if self.tick % self._telemetry_every == 0:
            telem = self.firmware.telemetry()
            telem["t"] = self.time
            telem["type"] = "telemetry"
            self.log.write(telem)
        if self.tick % self._world_every == 0:
            self.log.write(self.world.snapshot())

    def calibrate(self) -> dict[int, tuple[int, int]]:
        io = _CalibrationIO(self)
        results = self.firmware.calibrate_all(io)
        for slot in range(NUM_SLOTS):
            ch = self.firmware.channels[slot]
            self.log.write(
                {
                    "t": self.time,
                    "type": "calibration",
                    "slot": slot,
                    "joint": JointId.from_slot(slot).key,
                    "status": "ok" if ch.calibrated else "failed",
                    "min_count": ch.min_count,
                    "max_count": ch.max_count,
                    "failure": ch.failure,
                }
            )
        # calibration ran at the stow pose; move over the keybed
        session_cfg = self.cfg["session"]
        start = (
            float(session_cfg.get("start_x_mm", 0.0)),
            float(session_cfg.get("start_y_mm", 0.0)),
        )
        if (self.world.hand_x, self.world.hand_y) != start:
            self.world.set_hand(*start)
            self.log.write(
                {"t": self.time, "type": "hand", "x_mm": start[0], "y_mm": start[1]}
            )
        self.last_event_t = self.time
        return results

    def dispatch(self, frame: CommandFrame) -> None:
        """Hand a frame to the wireless channel and log the dispatch."""
        self.channel.send(frame, self.time)
        self.log.write(
            {
                "t": self.time,
                "type": "command",
                "frame": {
                    "flags": frame.flags,
                    "targets": list(frame.targets),
                    "pwms": list(frame.pwms),
                },
                "raw_hex": encode(frame).hex(),
            }
        )
        self.last_event_t = self.time

    def apply_action(self, action: Action) -> None:
        if action.kind == "frame":
            self.dispatch(action.frame)
        elif action.kind == "splay":
            self.world.set_splay(action.payload["level"])
            self.log.write({"t": self.time, "type": "splay", **action.payload})
            self.last_event_t = self.time
        elif action.kind == "hand":
            self.world.set_hand(action.payload["x_mm"], action.payload["y_mm"])
            self.log.write({"t": self.time, "type": "hand", **action.payload})
            self.last_event_t = self.time
        elif action.kind == "task":
            self.log.write({"t": self.time, "type": "task", **action.payload})
            self.last_event_t = self.time

    def deliver_due(self) -> None:
        for frame in self.channel.poll(self.time):
            result = self.firmware.execute(frame)
            self.log.write(
                {
                    "t": self.time,
                    "type": "delivery",
                    "frame": {
                        "flags": frame.flags,
                        "targets": list(frame.targets),
                        "pwms": list(frame.pwms),
                    },
                    "accepted": list(result.accepted),
                    "immediate": list(result.immediate),
                    "rejected": {
                        str(s): r.value for s, r in sorted(result.rejected.items())
                    },
                }
            )
            self.last_event_t = self.time

    def control_step(self) -> tuple:
        counts = self.world.encoder_counts()
        result = self.firmware.control_tick(counts)
        for completion in result.completions:
            self.log.write(
                {
                    "t": self.time,
                    "type": "completion",
                    "slot": completion.slot,
                    "joint": JointId.from_slot(completion.slot).key,
                    "status": completion.status.value,
                    "count": completion.position,
                }
            )
            self.last_event_t = self.time
        self.advance_plant(list(result.drives))
        return result.completions

    def close(self) -> None:
        self.log.close()


def run_simulation(
    cfg: dict,
    actions: list[Action] | None = None,
    markers: list[MarkerFrame] | None = None,
    seed: int | None = None,
    log_path: str | Path | None = None,
    created_at: str | None = None,
) -> SimSession:
    """Calibrate, then run scripted actions and/or a marker stream to
    quiescence (or an explicit end action)."""
    session = SimSession(cfg, seed=seed, log_path=log_path, created_at=created_at)
    session.calibrate()
    start_t = session.time

    actions = sorted(actions or [], key=lambda a: a.t)
    end_at: float | None = None
    for action in actions:
        if action.kind == "end":
            end_at = start_t + action.t
    pipeline = None
    marker_queue: list[MarkerFrame] = []
    if markers is not None:
        retarget_cfg = cfg.get("retarget", {})
        pipeline = RetargetPipeline(
            session.specs,
            reference_velocity_dps=float(
                retarget_cfg.get(
                    "reference_velocity_dps",
                    cfg["plant"]["omega_max_dps"]["index"],
                )
            ),
        )
        marker_queue = sorted(markers, key=lambda m: m.t)

    pending = list(actions)
    tail = float(cfg["session"]["idle_tail_s"])
    max_t = start_t + float(cfg["session"]["max_duration_s"])

    while True:
        now = session.time
        rel = now - start_t
        while pending and pending[0].t <= rel + 1e-9:
            session.apply_action(pending.pop(0))
        while marker_queue and marker_queue[0].t <= rel + 1e-9:
            frame = marker_queue.pop(0)
            session.log.write(
                {
                    "t": now,
                    "type": "marker",
                    "markers": {
                        k: [round(float(v), 4) for v in xyz]
                        for k, xyz in sorted(frame.markers.items())
                    },
                }
            )
            for dispatched in pipeline.push(frame):
                for event in dispatched.events:
                    session.log.write({**event.to_dict(), "t": now})
                session.dispatch(dispatched.frame)
        if pipeline is not None and not marker_queue:
            for dispatched in pipeline.flush():
                for event in dispatched.events:
                    session.log.write({**event.to_dict(), "t": now})
                session.dispatch(dispatched.frame)
        session.deliver_due()
        session.control_step()

        now = session.time
        if end_at is not None and now >= end_at:
            break
        if now >= max_t:
            break
        if end_at is None and not pending and not marker_queue and not session.channel.pending:
            if (
                session.firmware.phase.value == "idle"
                and now - session.last_event_t >= tail
            ):
                break
    session.close()
    return session


@dataclass
class ReplayReport:
    """Divergence between a recorded session and its re-execution."""

    compared_records: int
    max_angle_divergence_deg: dict[str, float]
    missing_records: int

    @property
    def max_divergence_deg(self) -> float:
        return max(self.max_angle_divergence_deg.values(), default=0.0)

    def to_dict(self) -> dict:
        return {
            "compared_records": self.compared_records,
            "missing_records": self.missing_records,
            "max_angle_divergence_deg": {
                k: round(v, 9) for k, v in self.max_angle_divergence_deg.items()
            },
            "max_divergence_deg": round(self.max_divergence_deg, 9),
        }


def replay(records: list[dict], seed_override: int | None = None) -> ReplayReport:
    """Re-execute a recorded session from its embedded config and seed and
    report the per-joint worst-case angle divergence against the recorded
    world records.  A truncated log replays as far as it goes."""
    if not records or records[0].get("type") != "header":
        raise ValidationError(["replay needs a log starting with a header"])
    header = records[0]
    cfg = header["config"]
    seed = header["seed"] if seed_override is None else seed_override

    # recorded inputs become the replay script, at their recorded times
    inputs: list[tuple[float, str, dict]] = []
    recorded_worlds: list[dict] = []
    for record in records[1:]:
        rtype = record.get("type")
        if rtype == "command":
            inputs.append((float(record["t"]), "frame", record["frame"]))
        elif rtype in ("splay", "hand"):
            inputs.append((float(record["t"]), rtype, record))
        elif rtype == "world":
            recorded_worlds.append(record)
    inputs.sort(key=lambda item: item[0])
    end_t = max((float(r["t"]) for r in records[1:] if "t" in r), default=0.0)

    session = SimSession(cfg, seed=seed)
    session.calibrate()
    eps = session.dt / 2

    while session.time <= end_t + eps or inputs or session.channel.pending:
        now = session.time
        while inputs and inputs[0][0] <= now + eps:
            _, kind, payload = inputs.pop(0)
            if kind == "frame":
                session.dispatch(
                    CommandFrame(
                        int(payload["flags"]),
                        tuple(int(v) for v in payload["targets"]),
                        tuple(int(v) for v in payload["pwms"]),
                    )
                )
            elif kind == "splay":
                session.world.set_splay(int(payload["level"]))
            elif kind == "hand":
                session.world.set_hand(float(payload["x_mm"]), float(payload["y_mm"]))
        session.deliver_due()
        session.control_step()
        if session.time > end_t + 10.0:
            # runaway guard; a healthy replay never gets here
            break
    session.close()

    # align the two world streams on their shared tick-quantized clock
    replayed_worlds = {
        float(r["t"]): r for r in session.log.records if r.get("type") == "world"
    }
    divergence = {j.key: 0.0 for j in JointId}
    compared = 0
    missing = 0
    for recorded in recorded_worlds:
        twin = replayed_worlds.get(float(recorded["t"]))
        if twin is None:
            missing += 1
            continue
        compared += 1
        for j in JointId:
            divergence[j.key] = max(
                divergence[j.key],
                abs(float(recorded["angles"][j.key]) - float(twin["angles"][j.key])),
            )
    return ReplayReport(compared, divergence, missing)
