"""Live teleoperation bridge: a wall-clock-paced session behind a WebSocket.

One simulated session runs for the lifetime of the server.  The first
client is the operator; later clients observe.  Commands are queued and
never dropped; snapshots are fan-out with per-client buffers that drop
oldest frames on overflow (state updates are disposable, commands are
not).  Every live session is recorded as a standard session log.
"""

import asyncio
import json
import logging
import time
from pathlib import Path

from pydantic import ValidationError as PydanticValidationError

from ..config import joint_specs
from ..hand import JointId, SPLAY_LEVEL_MAX, SPLAY_LEVEL_MIN, angle_to_normalized
from ..protocol import CommandFrame
from ..sim import SimSession
from .models import CommandMessage

log = logging.getLogger(__name__)

CLOSE_PROTOCOL_VIOLATION = 4400


class TeleopBridge:
    def __init__(self, cfg: dict, record_path: str | Path | None = None):
        self.cfg = cfg
        self.record_path = record_path
        self.session: SimSession | None = None
        self.specs = joint_specs(cfg)
        self._commands: asyncio.Queue = asyncio.Queue()
        self._clients: dict[object, asyncio.Queue] = {}
        self._operator: object | None = None
        self._events: list[dict] = []
        self._task: asyncio.Task | None = None
        self._running = False
        self.snapshot_rate_hz = float(cfg["session"]["world_rate_hz"])

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        self.session = SimSession(self.cfg, log_path=self.record_path)
        # calibration is simulated, so fast-forward it before going live
        self.session.calibrate()
        self._running = True
        self._task = asyncio.get_event_loop().create_task(self._run())

    async def stop(self) -> None:
        self._running = False
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
        if self.session is not None:
            self.session.close()

    async def _run(self) -> None:
        session = self.session
        dt = session.dt
        ticks_per_snapshot = max(1, round(session.firmware.config.control_rate_hz / self.snapshot_rate_hz))
        next_tick = time.monotonic()
        tick_index = 0
        while self._running:
            now = time.monotonic()
            if now < next_tick:
                await asyncio.sleep(next_tick - now)
            elif now - next_tick > 0.25:
                # the loop fell badly behind (blocked loop, suspended host):
                # drop the lost wall time instead of fast-forwarding the
                # session at an unbounded rate
                next_tick = now
            else:
                # catching up a small backlog: still yield so clients are served
                await asyncio.sleep(0)
            next_tick += dt

            while not self._commands.empty():
                command = self._commands.get_nowait()
                self._apply_command(command)
            session.deliver_due()
            pressed_before = dict(session.world.pressed)
            completions = session.control_step()
            self._emit_key_events(pressed_before)
            for completion in completions:
                self._broadcast_event(
                    "completion",
                    {
                        "joint": JointId.from_slot(completion.slot).key,
                        "status": completion.status.value,
                    },
                )
            tick_index += 1
            if tick_index % ticks_per_snapshot == 0:
                self._broadcast(self.snapshot())

    # -- command handling --------------------------------------------------

    def _apply_command(self, command: CommandMessage) -> None:
        session = self.session
        if command.kind == "move" and command.moves:
            moves = {}
            for move in command.moves:
                joint = JointId.from_name(move.joint)
                target = move.target
                if target is None:
                    target = angle_to_normalized(
                        float(move.target_angle), self.specs[joint]
                    )
                moves[joint.slot] = (target, move.pwm)
            session.dispatch(CommandFrame.for_moves(moves))
        elif command.kind == "splay" and command.level is not None:
            session.world.set_splay(command.level)
            session.log.write({"t": session.time, "type": "splay", "level": command.level})
        elif command.kind == "hand" and command.x_mm is not None and command.y_mm is not None:
            session.world.set_hand(command.x_mm, command.y_mm)
            session.log.write(
                {"t": session.time, "type": "hand", "x_mm": command.x_mm, "y_mm": command.y_mm}
            )
        elif command.kind == "task" and command.task:
            session.log.write({"t": session.time, "type": "task", "task": command.task})

    def _emit_key_events(self, pressed_before: dict) -> None:
        session = self.session
        after = session.world.pressed
        for label, digit in after.items():
            if label not in pressed_before:
                self._broadcast_event("key_press", {"key": label, "finger": digit.key})
        for label, digit in pressed_before.items():
            if label not in after:
                self._broadcast_event("key_release", {"key": label, "finger": digit.key})

    # -- fan-out -----------------------------------------------------------

    def register(self, client) -> str:
        queue: asyncio.Queue = asyncio.Queue(maxsize=8)
        self._clients[client] = queue
        if self._operator is None:
            self._operator = client
            return "operator"
        return "observer"

    def unregister(self, client) -> None:
        self._clients.pop(client, None)
        if self._operator is client:
            self._operator = None
            # promote the oldest remaining client, if any
            for other in self._clients:
                self._operator = other
                break

    def queue_for(self, client) -> asyncio.Queue:
        return self._clients[client]

    def is_operator(self, client) -> bool:
        return client is self._operator

    async def submit(self, command: CommandMessage) -> None:
        await self._commands.put(command)

    def _broadcast(self, message: dict) -> None:
        for queue in self._clients.values():
            if queue.full():
                try:
                    queue.get_nowait()   # drop the stalest snapshot
                except asyncio.QueueEmpty:
                    pass
            queue.put_nowait(message)

    def _broadcast_event(self, event: str, data: dict) -> None:
        self._broadcast(
            {"type": "event", "t": self.session.time, "event": event, "data": data}
        )

    # -- messages ------------------------------------------------------------

    def hello(self, role: str) -> dict:
        keys = [
            {
                "label": k.label,
                "center_mm": k.center_mm,
                "width_mm": k.width_mm,
                "activation_force_n": k.activation_force_n,
                "travel_mm": k.travel_mm,
            }
            for k in self.session.world.keybed.keys
        ]
        return {
            "type": "hello",
            "role": role,
            "protocol": 1,
            "joints": {
                j.key: {
                    "slot": j.slot,
                    "min_angle": self.specs[j].min_angle,
                    "max_angle": self.specs[j].max_angle,
                    "neutral": self.specs[j].neutral,
                }
                for j in JointId
            },
            "splay_levels": list(range(SPLAY_LEVEL_MIN, SPLAY_LEVEL_MAX + 1)),
            "keybed": {"kind": self.session.world.keybed.kind, "keys": keys},
            "snapshot_rate_hz": self.snapshot_rate_hz,
        }

    def snapshot(self) -> dict:
        session = self.session
        world = session.world.snapshot()
        telem = session.firmware.telemetry()
        joints = {}
        stalled = []
        for entry in telem["channels"]:
            joints[entry["joint"]] = {
                "angle": world["angles"][entry["joint"]],
                "count": entry["count"],
                "normalized": entry["normalized"],
                "target": entry["target"],
                "pwm": entry["pwm"],
                "status": entry["status"],
                "calibrated": entry["calibrated"],
            }
            if entry["status"] == "stalled":
                stalled.append(entry["joint"])
        return {
            "type": "snapshot",
            "t": world["t"],
            "phase": telem["phase"],
            "joints": joints,
            "splay": world["splay"],
            "hand": world["hand"],
            "tips_mm": world["tips_mm"],
            "pressed": world["pressed"],
            "stalled": stalled,
        }


async def client_loop(websocket, bridge: TeleopBridge) -> None:
    """Shared WebSocket client handler for the FastAPI route."""
    role = bridge.register(websocket)
    await websocket.send_text(json.dumps(bridge.hello(role)))
    await websocket.send_text(json.dumps(bridge.snapshot()))
    queue = bridge.queue_for(websocket)

    async def sender():
        while True:
            message = await queue.get()
            await websocket.send_text(json.dumps(message))

    send_task = asyncio.create_task(sender())
    try:
        while True:
            raw = await websocket.receive_text()
            try:
                payload = json.loads(raw)
                command = CommandMessage(**payload)
            except (json.JSONDecodeError, PydanticValidationError) as exc:
                await websocket.send_text(
                    json.dumps(
                        {"type": "error", "code": "bad_message", "detail": str(exc)[:200]}
                    )
                )
                await websocket.close(code=CLOSE_PROTOCOL_VIOLATION, reason="bad message")
                break
            if not bridge.is_operator(websocket):
                await websocket.send_text(
                    json.dumps(
                        {
                            "type": "error",
                            "code": "read_only",
                            "detail": "only the operator client may send commands",
                        }
                    )
                )
                continue
            await bridge.submit(command)
    finally:
        send_task.cancel()
        bridge.unregister(websocket)
