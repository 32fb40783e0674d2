"""Motion retargeting: marker streams to joint intents to command frames.

Marker frames are dicts of labeled 3-D positions in a forearm-aligned
frame (palm plane ~ xy, +x distal, +y toward the little finger, mm or
any consistent unit; angles are scale-free).  The pipeline extracts
joint angles per frame, detects settled motions, and batches them into
wire command frames.
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ManusimError, ValidationError
from .hand import FINGERS, JointId, JointSpec, angle_to_normalized
from .protocol import CommandFrame

FINGER_MARKERS = tuple(
    f"{f.key}_{part}" for f in FINGERS for part in ("mcp", "pip", "tip")
)
REQUIRED_MARKERS = ("elbow", "wrist", "thumb_base", "thumb_tip") + FINGER_MARKERS

_EPS = 1e-6


class MissingMarker(ManusimError):
    pass


class DegenerateGeometry(ManusimError):
    """Markers too close together to define a direction."""


@dataclass(frozen=True)
class MarkerFrame:
    t: float
    markers: dict[str, np.ndarray]

    def __post_init__(self):
        coerced = {
            str(name): np.asarray(pos, dtype=float)
            for name, pos in self.markers.items()
        }
        for name, pos in coerced.items():
            if pos.shape != (3,):
                raise DomainError(f"marker {name!r} is not a 3-vector")
        object.__setattr__(self, "markers", coerced)

    def get(self, name: str) -> np.ndarray:
        try:
            return self.markers[name]
        except KeyError:
            raise MissingMarker(f"marker {name!r} absent at t={self.t}") from None


def _segment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    seg = b - a
    if float(np.linalg.norm(seg)) < _EPS:
        raise DegenerateGeometry("zero-length marker segment")
    return seg


def _interior_angle_deg(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Interior angle at b between segments b->a and b->c; 180 when the
    three markers are collinear and distinct."""
    u = _segment(b, a)
    v = _segment(b, c)
    cosang = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.degrees(math.acos(max(-1.0, min(1.0, cosang))))


def joint_angles(
    frame: MarkerFrame, specs: dict[JointId, JointSpec]
) -> dict[JointId, float]:
    """Joint angles for one marker frame, clamped to the joint ranges.

    Finger flexion is the interior angle at the PIP marker.  Wrist
    deviation is the signed palm-plane angle between the forearm line and
    the wrist-to-middle-knuckle line.  Thumb flexion maps from the thumb
    segment's elevation below the palm plane.  Wrist rotation is not
    observable from this marker set and reports neutral.
    """
    angles: dict[JointId, float] = {}
    for f in FINGERS:
        angle = _interior_angle_deg(
            frame.get(f"{f.key}_mcp"), frame.get(f"{f.key}_pip"), frame.get(f"{f.key}_tip")
        )
        spec = specs[f]
        angles[f] = min(max(angle, spec.min_angle), spec.max_angle)

    fore = _segment(frame.get("elbow"), frame.get("wrist"))[:2]
    hand = _segment(frame.get("wrist"), frame.get("middle_mcp"))[:2]
    if float(np.linalg.norm(fore)) < _EPS or float(np.linalg.norm(hand)) < _EPS:
        raise DegenerateGeometry("forearm or hand line vanishes in the palm plane")
    deviation = math.degrees(
        math.atan2(
            float(fore[0] * hand[1] - fore[1] * hand[0]), float(np.dot(fore, hand))
        )
    )
    dev_spec = specs[JointId.WRIST_DEVIATION]
    angles[JointId.WRIST_DEVIATION] = min(max(deviation, dev_spec.min_angle), dev_spec.max_angle)

    thumb_dir = _segment(frame.get("thumb_base"), frame.get("thumb_tip"))
    planar = float(np.linalg.norm(thumb_dir[:2]))
    elevation = math.degrees(math.atan2(float(thumb_dir[2]), planar))
    thumb_spec = specs[JointId.THUMB]
    # extended thumb (min angle) lies in the palm plane; flexion dips below it
    flex = thumb_spec.min_angle - elevation
    angles[JointId.THUMB] = min(max(flex, thumb_spec.min_angle), thumb_spec.max_angle)

    rot_spec = specs[JointId.WRIST_ROTATION]
    angles[JointId.WRIST_ROTATION] = rot_spec.neutral
    return angles


@dataclass(frozen=True)
class IntentEvent:
    """A settled joint motion extracted from the marker stream."""

    joint: JointId
    settled_angle_deg: float
    peak_velocity_dps: float
    completed_at_s: float

    def to_dict(self) -> dict:
        return {
            "t": self.completed_at_s,
            "type": "intent",
            "joint": self.joint.key,
            "settled_angle_deg": round(self.settled_angle_deg, 4),
            "peak_velocity_dps": round(self.peak_velocity_dps, 4),
        }


class CompletionDetector:
    """Flags a joint motion as complete once velocity stays under the
    settle threshold for the hold window, provided the excursion from the
    last settled angle exceeds the trigger threshold."""

    def __init__(
        self,
        joint: JointId,
        settle_velocity_dps: float = 10.0,
        hold_s: float = 0.15,
        min_excursion_deg: float = 8.0,
    ):
        self.joint = joint
        self.settle_velocity_dps = settle_velocity_dps
        self.hold_s = hold_s
        self.min_excursion_deg = min_excursion_deg
        self._last: tuple[float, float] | None = None     # (t, angle)
        self._settled_angle: float | None = None
        self._quiet_since: float | None = None
        self._peak_velocity = 0.0
        self._moved = False

    def update(self, t: float, angle: float) -> IntentEvent | None:
        if self._last is None:
            self._last = (t, angle)
            self._settled_angle = angle
            return None
        t0, a0 = self._last
        if t <= t0:
            raise DomainError(f"timestamps must increase, got {t0} then {t}")
        velocity = (angle - a0) / (t - t0)
        self._last = (t, angle)

        if abs(velocity) >= self.settle_velocity_dps:
            self._quiet_since = None
            self._moved = True
            self._peak_velocity = max(self._peak_velocity, abs(velocity))
            return None

        if not self._moved:
            return None
        if self._quiet_since is None:
            self._quiet_since = t
            return None
        if t - self._quiet_since < self.hold_s:
            return None

        # settled: emit only if the move was big enough to be deliberate
        event = None
        if abs(angle - self._settled_angle) >= self.min_excursion_deg:
            event = IntentEvent(
                joint=self.joint,
                settled_angle_deg=angle,
                peak_velocity_dps=self._peak_velocity,
                completed_at_s=t,
            )
        self._settled_angle = angle
        self._moved = False
        self._quiet_since = None
        self._peak_velocity = 0.0
        return event


def intent_to_frame(
    events: list[IntentEvent],
    specs: dict[JointId, JointSpec],
    reference_velocity_dps: float = 412.5,
    pwm_floor: int = 30,
) -> CommandFrame:
    """Build one command frame from a batch of intents.

    Target is the settled angle on the wire scale; PWM scales with the
    observed peak velocity relative to the full-speed reference, floored
    so the drive always overcomes the stall-detector's PWM gate.
    """
    seen: set[JointId] = set()
    moves: dict[int, tuple[int, int]] = {}
    for event in events:
        if event.joint in seen:
            raise ValidationError([f"duplicate intent for joint {event.joint.key}"])
        seen.add(event.joint)
        spec = specs[event.joint]
        clamped = min(max(event.settled_angle_deg, spec.min_angle), spec.max_angle)
        target = angle_to_normalized(clamped, spec)
        pwm = int(255 * event.peak_velocity_dps / reference_velocity_dps + 0.5)
        pwm = max(pwm_floor, min(255, pwm))
        moves[event.joint.slot] = (target, pwm)
    return CommandFrame.for_moves(moves)


@dataclass(frozen=True)
class DispatchedFrame:
    dispatch_at_s: float
    frame: CommandFrame
    events: tuple[IntentEvent, ...]


class RetargetPipeline:
    """Streaming retargeter: marker frames in, dispatched frames out.

    Intent events settling within one batch window share a frame, which
    is dispatched when the window closes.  Degenerate marker frames are
    skipped and counted rather than fatal.
    """

    def __init__(
        self,
        specs: dict[JointId, JointSpec],
        batch_window_s: float = 0.05,
        settle_velocity_dps: float = 10.0,
        hold_s: float = 0.15,
        min_excursion_deg: float = 8.0,
        reference_velocity_dps: float = 412.5,
        pwm_floor: int = 30,
    ):
        self.specs = specs
        self.batch_window_s = batch_window_s
        self.reference_velocity_dps = reference_velocity_dps
        self.pwm_floor = pwm_floor
        self.detectors = {
            j: CompletionDetector(j, settle_velocity_dps, hold_s, min_excursion_deg)
            for j in JointId
        }
        self.skipped_frames = 0
        self.events_seen: list[IntentEvent] = []
        self._batch: list[IntentEvent] = []
        self._batch_deadline: float | None = None

    def push(self, frame: MarkerFrame) -> list[DispatchedFrame]:
        out = self._maybe_close(frame.t)
        try:
            angles = joint_angles(frame, self.specs)
        except (DegenerateGeometry, MissingMarker):
            self.skipped_frames += 1
            return out
        for joint, angle in angles.items():
            event = self.detectors[joint].update(frame.t, angle)
            if event is None:
                continue
            self.events_seen.append(event)
            if self._batch_deadline is None:
                self._batch_deadline = event.completed_at_s + self.batch_window_s
            self._batch.append(event)
        return out

    def flush(self) -> list[DispatchedFrame]:
        return self._maybe_close(math.inf)

    def _maybe_close(self, now: float) -> list[DispatchedFrame]:
        if self._batch_deadline is None or now <= self._batch_deadline:
            return []
        events = tuple(self._batch)
        dispatch_at = self._batch_deadline if math.isfinite(self._batch_deadline) else events[-1].completed_at_s
        self._batch = []
        self._batch_deadline = None
        frame = intent_to_frame(
            list(events), self.specs, self.reference_velocity_dps, self.pwm_floor
        )
        return [DispatchedFrame(dispatch_at, frame, events)]


def load_marker_csv(path: str | Path) -> list[MarkerFrame]:
    """CSV columns t,name,x,y,z; rows sharing a timestamp form one frame."""
    frames: list[MarkerFrame] = []
    current_t: float | None = None
    current: dict[str, np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"t", "name", "x", "y", "z"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError([f"marker CSV missing columns: {sorted(missing)}"])
        for i, row in enumerate(reader, start=2):
            try:
                t = float(row["t"])
                pos = np.array([float(row["x"]), float(row["y"]), float(row["z"])])
            except (TypeError, ValueError):
                raise ValidationError([f"marker CSV line {i}: malformed row {row!r}"]) from None
            if current_t is not None and t < current_t:
                raise ValidationError([f"marker CSV line {i}: timestamps must be non-decreasing"])
            if current_t is not None and t != current_t:
                frames.append(MarkerFrame(current_t, current))
                current = {}
            current_t = t
            current[row["name"].strip()] = pos
    if current_t is not None:
        frames.append(MarkerFrame(current_t, current))
    return frames


def load_marker_jsonl(path: str | Path) -> list[MarkerFrame]:
    """JSONL alternative: {"t": .., "markers": {name: [x, y, z]}} per line."""
    frames = []
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            markers = {
                str(name): np.array([float(v) for v in xyz])
                for name, xyz in obj["markers"].items()
            }
            frames.append(MarkerFrame(float(obj["t"]), markers))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ValidationError([f"marker JSONL line {i}: {exc}"]) from None
    return frames


def load_markers(path: str | Path) -> list[MarkerFrame]:
    if str(path).endswith(".csv"):
        return load_marker_csv(path)
    return load_marker_jsonl(path)
