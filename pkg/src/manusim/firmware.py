"""Motor-controller firmware: calibration, command execution, stall safety.

The controller is a pure state machine clocked at a fixed control rate.
Each tick it is handed the seven raw encoder readings and returns the
seven drive outputs.  It knows nothing about degrees or the plant's
geometry; positions are encoder counts and commands arrive as normalized
0..255 targets that map linearly onto each channel's calibrated range.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from .errors import DomainError, ManusimError
from .hand import (
    DEFAULT_JOINT_SPECS,
    JointId,
    JointSpec,
    NUM_SLOTS,
    angle_to_normalized,
)
from .protocol import CommandFrame


class Phase(Enum):
    UNCALIBRATED = "uncalibrated"
    CALIBRATING = "calibrating"
    IDLE = "idle"
    EXECUTING = "executing"


class CompletionStatus(Enum):
    REACHED = "reached"
    STALLED = "stalled"


class RejectReason(Enum):
    UNCALIBRATED_CHANNEL = "uncalibrated_channel"
    FAILED_CHANNEL = "failed_channel"


class CommandRejected(ManusimError):
    """A whole frame was refused (wrong phase)."""


class CalibrationError(ManusimError):
    def __init__(self, slot: int, reason: str):
        self.slot = slot
        self.reason = reason
        super().__init__(f"slot {slot}: {reason}")


class StallNeverDetected(CalibrationError):
    def __init__(self, slot: int):
        super().__init__(slot, "no stall within the calibration timeout")


class CalibrationRangeTooSmall(CalibrationError):
    def __init__(self, slot: int, counts: int, minimum: int):
        self.counts = counts
        super().__init__(slot, f"swept range {counts} counts < minimum {minimum}")


@dataclass(frozen=True)
class FirmwareConfig:
    control_rate_hz: float = 100.0
    stall_window: int = 8
    stall_threshold_counts: int = 2
    stall_pwm_floor: int = 30
    deadband_counts: int = 2
    calibration_pwm: int = 120
    calibration_timeout_s: float = 5.0
    min_calibration_range_counts: int = 10
    position_slack_counts: int = 5
    park: str | int = "neutral"

    @classmethod
    def from_dict(cls, section: dict) -> "FirmwareConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in section.items() if k in known})

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate_hz


class DriveIO(Protocol):
    """World access used during blocking calibration sweeps."""

    def apply(self, slot: int, pwm: int, direction: int) -> None: ...
    def counts(self) -> list[int]: ...
    def tick(self) -> None: ...


@dataclass
class MotorCommand:
    target_count: int
    pwm: int
    issued_tick: int


@dataclass
class MotorChannel:
    """Per-motor calibration data and active command state."""

    slot: int
    calibrated: bool = False
    usable: bool = True
    offset: int = 0              # raw encoder reading at the home stop
    min_count: int = 0           # always 0 after calibration (counter zeroed at home)
    max_count: int = 0
    command: MotorCommand | None = None
    last_status: CompletionStatus | None = None
    failure: str | None = None
    # last W samples since the current command started; cleared on every
    # new command so a freshly issued command can never inherit a flat
    # history and trip the stall check on its first tick
    history: deque = field(default_factory=lambda: deque(maxlen=8))
    last_raw: int = 0
    last_drive_pwm: int = 0
    last_drive_direction: int = 0

    def position(self, raw: int) -> int:
        return raw - self.offset


@dataclass(frozen=True)
class ExecuteResult:
    accepted: tuple[int, ...]
    rejected: dict[int, RejectReason]
    immediate: tuple[int, ...]   # accepted slots already within the deadband


@dataclass(frozen=True)
class Completion:
    slot: int
    status: CompletionStatus
    tick: int
    position: int


@dataclass(frozen=True)
class TickResult:
    drives: tuple[tuple[int, int], ...]   # (pwm, direction) per slot
    completions: tuple[Completion, ...]


class FirmwareController:
    def __init__(
        self,
        config: FirmwareConfig | None = None,
        joint_specs: dict[JointId, JointSpec] | None = None,
    ):
        self.config = config or FirmwareConfig()
        specs = joint_specs or DEFAULT_JOINT_SPECS
        self.phase = Phase.UNCALIBRATED
        self.calibrating_slot: int | None = None
        self.tick_count = 0
        self.channels = [MotorChannel(slot=s) for s in range(NUM_SLOTS)]
        for ch in self.channels:
            ch.history = deque(maxlen=self.config.stall_window)
        self._park_normalized: list[int] = []
        for s in range(NUM_SLOTS):
            if self.config.park == "neutral":
                spec = specs[JointId.from_slot(s)]
                self._park_normalized.append(angle_to_normalized(spec.neutral, spec))
            else:
                self._park_normalized.append(int(self.config.park))

    # -- calibration ----------------------------------------------------

    def calibrate_all(self, io: DriveIO) -> dict[int, tuple[int, int]]:
        """Calibrate every channel in slot order; failed channels are
        marked unusable and skipped by later commands."""
        results: dict[int, tuple[int, int]] = {}
        for slot in range(NUM_SLOTS):
            try:
                results[slot] = self.calibrate_channel(slot, io)
            except CalibrationError:
                pass
        self.phase = Phase.IDLE
        self.calibrating_slot = None
        return results

    def calibrate_channel(self, slot: int, io: DriveIO) -> tuple[int, int]:
        """Sweep one motor stop-to-stop and record its count limits.

        Drives toward the home stop until stall, zeroes the counter there,
        drives to the far stop until stall, then parks.  Raises on timeout
        or an implausibly small range and marks the channel unusable.
        """
        cfg = self.config
        ch = self.channels[slot]
        self.phase = Phase.CALIBRATING
        self.calibrating_slot = slot
        ch.calibrated = False
        ch.usable = True
        ch.failure = None
        ch.command = None
        ch.last_status = None

        try:
            raw_home = self._sweep_to_stall(slot, io, direction=-1)
            ch.offset = raw_home
            ch.min_count = 0
            raw_far = self._sweep_to_stall(slot, io, direction=+1)
            ch.max_count = raw_far - raw_home
            if ch.max_count < cfg.min_calibration_range_counts:
                raise CalibrationRangeTooSmall(
                    slot, ch.max_count, cfg.min_calibration_range_counts
                )
        except CalibrationError as exc:
            ch.usable = False
            ch.failure = exc.reason
            io.apply(slot, 0, 0)
            raise

        ch.calibrated = True
        self._park(slot, io)
        return (ch.min_count, ch.max_count)

    def _sweep_to_stall(self, slot: int, io: DriveIO, direction: int) -> int:
        cfg = self.config
        window: deque = deque(maxlen=cfg.stall_window)
        timeout_ticks = int(cfg.calibration_timeout_s * cfg.control_rate_hz)
        for _ in range(timeout_ticks):
            io.apply(slot, cfg.calibration_pwm, direction)
            io.tick()
            self.tick_count += 1
            raw = io.counts()[slot]
            self.channels[slot].last_raw = raw
            window.append(raw)
            if (
                len(window) == cfg.stall_window
                and max(window) - min(window) < cfg.stall_threshold_counts
            ):
                io.apply(slot, 0, 0)
                return raw
        io.apply(slot, 0, 0)
        raise StallNeverDetected(slot)

    def _park(self, slot: int, io: DriveIO) -> None:
        cfg = self.config
        ch = self.channels[slot]
        target = round(
            ch.min_count
            + self._park_normalized[slot] / 255 * (ch.max_count - ch.min_count)
        )
        rate = 0.0
        # generous bound: a park sweep can never exceed one calibration sweep
        for _ in range(int(cfg.calibration_timeout_s * cfg.control_rate_hz)):
            pos = ch.position(io.counts()[slot])
            remaining = target - pos
            if abs(remaining) <= cfg.deadband_counts:
                break
            pwm = cfg.calibration_pwm
            if rate > 0:
                pwm = max(1, min(pwm, int(abs(remaining) / rate)))
            direction = 1 if remaining > 0 else -1
            io.apply(slot, pwm, direction)
            io.tick()
            self.tick_count += 1
            new_pos = ch.position(io.counts()[slot])
            if pwm > 0:
                rate = max(rate, abs(new_pos - pos) / pwm)
            ch.last_raw = io.counts()[slot]
        io.apply(slot, 0, 0)

    # -- command path ---------------------------------------------------

    def execute(self, frame: CommandFrame) -> ExecuteResult:
        """Apply a command frame; flagged slots preempt their channels."""
        if self.phase not in (Phase.IDLE, Phase.EXECUTING):
            raise CommandRejected(f"cannot execute in phase {self.phase.value}")
        cfg = self.config
        accepted: list[int] = []
        immediate: list[int] = []
        rejected: dict[int, RejectReason] = {}
        for slot in frame.flagged_slots():
            ch = self.channels[slot]
            if not ch.usable:
                rejected[slot] = RejectReason.FAILED_CHANNEL
                continue
            if not ch.calibrated:
                rejected[slot] = RejectReason.UNCALIBRATED_CHANNEL
                continue
            target = round(
                ch.min_count + frame.targets[slot] / 255 * (ch.max_count - ch.min_count)
            )
            accepted.append(slot)
            pos = ch.position(ch.last_raw)
            if abs(target - pos) <= cfg.deadband_counts:
                # already there: complete immediately, no motion
                ch.command = None
                ch.last_status = CompletionStatus.REACHED
                immediate.append(slot)
                continue
            ch.command = MotorCommand(target, frame.pwms[slot], self.tick_count)
            ch.history.clear()
        self._refresh_phase()
        return ExecuteResult(tuple(accepted), rejected, tuple(immediate))

    def control_tick(self, raw_counts: list[int]) -> TickResult:
        """One control period: sample encoders, decide drives, detect
        completion and stalls.  Channels without an active command always
        get a zero drive."""
        cfg = self.config
        self.tick_count += 1
        drives: list[tuple[int, int]] = [(0, 0)] * NUM_SLOTS
        completions: list[Completion] = []
        for slot in range(NUM_SLOTS):
            ch = self.channels[slot]
            prev_raw = ch.last_raw
            raw = raw_counts[slot]
            ch.last_raw = raw
            cmd = ch.command
            if cmd is None:
                ch.last_drive_pwm = 0
                ch.last_drive_direction = 0
                continue
            pos = ch.position(raw)
            ch.history.append(pos)
            remaining = cmd.target_count - pos
            if abs(remaining) <= cfg.deadband_counts:
                ch.command = None
                ch.last_status = CompletionStatus.REACHED
                completions.append(
                    Completion(slot, CompletionStatus.REACHED, self.tick_count, pos)
                )
                ch.last_drive_pwm = 0
                ch.last_drive_direction = 0
                continue
            if (
                len(ch.history) == cfg.stall_window
                and max(ch.history) - min(ch.history) < cfg.stall_threshold_counts
                and cmd.pwm >= cfg.stall_pwm_floor
            ):
                ch.command = None
                ch.last_status = CompletionStatus.STALLED
                completions.append(
                    Completion(slot, CompletionStatus.STALLED, self.tick_count, pos)
                )
                ch.last_drive_pwm = 0
                ch.last_drive_direction = 0
                continue
            direction = 1 if remaining > 0 else -1
            pwm = cmd.pwm
            # Final approach: once the measured per-PWM step rate is known,
            # cap PWM so a single tick cannot carry past the deadband.  The
            # rate estimate comes from the channel's own encoder history, so
            # no plant knowledge leaks in.
            if ch.last_drive_pwm > 0:
                step = abs(ch.position(raw) - ch.position(prev_raw))
                rate = step / ch.last_drive_pwm
                if rate > 0:
                    pwm = max(1, min(pwm, int(abs(remaining) / rate)))
            drives[slot] = (pwm, direction)
            ch.last_drive_pwm = pwm
            ch.last_drive_direction = direction
        self._refresh_phase()
        return TickResult(tuple(drives), tuple(completions))

    def _refresh_phase(self) -> None:
        if self.phase in (Phase.IDLE, Phase.EXECUTING):
            active = any(ch.command is not None for ch in self.channels)
            self.phase = Phase.EXECUTING if active else Phase.IDLE

    # -- introspection --------------------------------------------------

    def telemetry(self) -> dict:
        """JSON-shaped snapshot of controller state for logging and the UI."""
        channels = []
        for ch in self.channels:
            pos = ch.position(ch.last_raw)
            entry: dict = {
                "slot": ch.slot,
                "joint": JointId.from_slot(ch.slot).key,
                "calibrated": ch.calibrated,
                "usable": ch.usable,
                "count": pos,
                "min_count": ch.min_count,
                "max_count": ch.max_count,
                "normalized": None,
                "target": None,
                "pwm": 0,
                "direction": ch.last_drive_direction,
                "status": ch.last_status.value if ch.last_status else None,
            }
            if ch.calibrated and ch.max_count > ch.min_count:
                frac = (pos - ch.min_count) / (ch.max_count - ch.min_count)
                entry["normalized"] = max(0, min(255, int(frac * 255 + 0.5)))
            if ch.command is not None:
                entry["target"] = ch.command.target_count
                entry["pwm"] = ch.last_drive_pwm
            if ch.failure:
                entry["failure"] = ch.failure
            channels.append(entry)
        return {
            "phase": self.phase.value,
            "calibrating_slot": self.calibrating_slot,
            "tick": self.tick_count,
            "channels": channels,
        }

    def limits(self) -> dict[int, tuple[int, int]]:
        return {
            ch.slot: (ch.min_count, ch.max_count)
            for ch in self.channels
            if ch.calibrated
        }
