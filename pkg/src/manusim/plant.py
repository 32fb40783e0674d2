"""Simulated electromechanical plant: motors, kinematics, keys, latency.

World frame: +x distal from the wrist toward the fingers, +y lateral
toward the little finger, +z up, key tops at z = 0.  The hand frame is
the same axes attached to the wrist center, hand_height_mm above the key
plane.  Wrist deviation yaws the hand about +z (ulnar positive); wrist
rotation rolls it about +x (supination positive).  Lengths in mm, angles
in degrees, time in seconds.
"""

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .hand import (
    FINGERS,
    JointId,
    JointSpec,
    NUM_SLOTS,
    PRESSING_DIGITS,
    SplayConfig,
    splay_angles,
)
from .mechanics import ForceVoltageModel, force_at_voltage

PWM_MAX = 255


@dataclass
class MotorPlant:
    """First-order kinematic model of one geared joint motor.

    Joint speed is proportional to PWM; hard stops and an optional
    obstruction clamp motion.  The incremental encoder reports counts
    from the home stop, rounding half away from zero.
    """

    joint: JointId
    spec: JointSpec
    omega_max_dps: float
    counts_per_degree: float
    angle: float = 0.0
    obstruction_angle: float | None = None
    encoder_frozen: bool = False

    def __post_init__(self):
        if self.omega_max_dps <= 0:
            raise DomainError(f"{self.joint.key}: omega_max must be > 0")
        if self.counts_per_degree <= 0:
            raise DomainError(f"{self.joint.key}: counts_per_degree must be > 0")
        self.angle = self.spec.neutral
        self._frozen_count = self._count_of(self.angle)
        # drive direction +1 moves toward the far stop (count increasing)
        self._axis_sign = 1.0 if self.spec.far_angle > self.spec.home_angle else -1.0
        # which side of the obstruction is free; 0 = unknown (block both)
        self._free_side = 0.0

    @property
    def stop_min(self) -> float:
        return self.spec.min_angle

    @property
    def stop_max(self) -> float:
        return self.spec.max_angle

    def candidate_angle(self, pwm: int, direction: int, dt: float) -> float:
        """Angle after dt at the given drive, honoring stops and obstruction."""
        if pwm < 0 or pwm > PWM_MAX:
            raise DomainError(f"pwm {pwm} outside [0, {PWM_MAX}]")
        if direction not in (-1, 0, 1):
            raise DomainError(f"direction {direction} not in (-1, 0, 1)")
        step = self.omega_max_dps * (pwm / PWM_MAX) * dt * direction * self._axis_sign
        candidate = self.angle + step
        candidate = min(max(candidate, self.stop_min), self.stop_max)
        obst = self.obstruction_angle
        if obst is not None:
            lo, hi = sorted((self.angle, candidate))
            if lo - 1e-12 <= obst <= hi + 1e-12:
                # one-sided wall: remember which side we approached from
                # and only block motion that would cross to the other side
                if abs(self.angle - obst) > 1e-12:
                    self._free_side = 1.0 if self.angle > obst else -1.0
                if (candidate - obst) * self._free_side <= 0:
                    candidate = obst
        return candidate

    def commit(self, angle: float) -> None:
        self.angle = angle

    def _count_of(self, angle: float) -> int:
        return int(self.counts_per_degree * abs(angle - self.spec.home_angle) + 0.5)

    @property
    def count(self) -> int:
        if self.encoder_frozen:
            return self._frozen_count
        self._frozen_count = self._count_of(self.angle)
        return self._frozen_count

    # -- fault-injection hooks for tests --------------------------------

    def set_obstruction(self, angle: float | None) -> None:
        self.obstruction_angle = angle
        self._free_side = 0.0

    def freeze_encoder(self, frozen: bool = True) -> None:
        if frozen:
            self._frozen_count = self._count_of(self.angle)
        self.encoder_frozen = frozen

    def shift_far_stop(self, delta_deg: float) -> None:
        """Move the far hard stop by delta (mechanical drift injection)."""
        if self.spec.far_angle == self.spec.max_angle:
            new_spec = JointSpec(
                self.spec.joint,
                self.spec.min_angle,
                self.spec.max_angle + delta_deg,
                self.spec.neutral,
            )
        else:
            new_spec = JointSpec(
                self.spec.joint,
                self.spec.min_angle + delta_deg,
                self.spec.max_angle,
                self.spec.neutral,
            )
        self.spec = new_spec
        self.angle = min(max(self.angle, self.stop_min), self.stop_max)


@dataclass(frozen=True)
class FingerChain:
    """Three-link finger: phalanx lengths and the fixed coupling that ties
    all three interior angles to the single actuated distal angle."""

    finger: JointId
    link_lengths_mm: tuple[float, float, float]
    coupling_ratios: tuple[float, float, float]
    base_x_mm: float
    base_y_mm: float

    def __post_init__(self):
        if any(l <= 0 for l in self.link_lengths_mm):
            raise DomainError("link lengths must be > 0")
        if any(r < 0 for r in self.coupling_ratios) or self.coupling_ratios[2] <= 0:
            raise DomainError("coupling ratios must be >= 0 with a positive distal ratio")

    def tip_in_hand(self, distal_angle_deg: float, abduction_deg: float) -> np.ndarray:
        """Fingertip in the hand frame for a distal interior angle and a
        splay abduction about the finger base."""
        flex_total = 180.0 - distal_angle_deg
        scale = flex_total / self.coupling_ratios[2]
        x = 0.0
        z = 0.0
        cum = 0.0
        for length, ratio in zip(self.link_lengths_mm, self.coupling_ratios):
            cum += math.radians(ratio * scale)
            x += length * math.cos(cum)
            z -= length * math.sin(cum)
        yaw = math.radians(abduction_deg)
        return np.array(
            [
                self.base_x_mm + x * math.cos(yaw),
                self.base_y_mm + x * math.sin(yaw),
                z,
            ]
        )


@dataclass(frozen=True)
class ThumbGeometry:
    base_x_mm: float
    base_y_mm: float
    mount_yaw_deg: float
    length_mm: float

    def tip_in_hand(self, angle_deg: float, extended_angle_deg: float) -> np.ndarray:
        flex = math.radians(angle_deg - extended_angle_deg)
        yaw = math.radians(self.mount_yaw_deg)
        reach = self.length_mm * math.cos(flex)
        return np.array(
            [
                self.base_x_mm + reach * math.cos(yaw),
                self.base_y_mm + reach * math.sin(yaw),
                -self.length_mm * math.sin(flex),
            ]
        )


def wrist_rotation_matrix(deviation_deg: float, rotation_deg: float) -> np.ndarray:
    dev = math.radians(deviation_deg)
    rot = math.radians(rotation_deg)
    yaw = np.array(
        [
            [math.cos(dev), -math.sin(dev), 0.0],
            [math.sin(dev), math.cos(dev), 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    roll = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, math.cos(rot), -math.sin(rot)],
            [0.0, math.sin(rot), math.cos(rot)],
        ]
    )
    return roll @ yaw


def fingertip_position(
    chain: FingerChain,
    distal_angle_deg: float,
    splay: SplayConfig,
    deviation_deg: float = 0.0,
    rotation_deg: float = 0.0,
) -> np.ndarray:
    """Fingertip in the hand frame including splay and wrist pose."""
    tip = chain.tip_in_hand(distal_angle_deg, splay.abduction(chain.finger))
    return wrist_rotation_matrix(deviation_deg, rotation_deg) @ tip


@dataclass(frozen=True)
class Key:
    label: str
    center_mm: float
    width_mm: float
    activation_force_n: float
    travel_mm: float

    def __post_init__(self):
        if self.width_mm <= 0 or self.activation_force_n <= 0 or self.travel_mm <= 0:
            raise DomainError(f"key {self.label!r}: width, force, travel must be > 0")

    def contains(self, y_mm: float) -> bool:
        return abs(y_mm - self.center_mm) <= self.width_mm / 2


@dataclass(frozen=True)
class KeyBed:
    """A row of keys along the lateral axis, tops at z = 0."""

    kind: str
    keys: tuple[Key, ...]

    def __post_init__(self):
        ordered = sorted(self.keys, key=lambda k: k.center_mm)
        for a, b in zip(ordered, ordered[1:]):
            if b.center_mm - a.center_mm < (a.width_mm + b.width_mm) / 2 - 1e-9:
                raise ValidationError([f"keys {a.label!r} and {b.label!r} overlap"])

    def key_at(self, y_mm: float) -> Key | None:
        for key in self.keys:
            if key.contains(y_mm):
                return key
        return None

    def key_by_label(self, label: str) -> Key:
        for key in self.keys:
            if key.label == label:
                return key
        raise DomainError(f"no key labeled {label!r}")

    @classmethod
    def qwerty_row(cls) -> "KeyBed":
        labels = "asdfghjkl"
        pitch = 19.05
        return cls(
            kind="keyboard",
            keys=tuple(
                Key(label, (i - 4) * pitch, 18.0, 0.6, 3.0)
                for i, label in enumerate(labels)
            ),
        )

    @classmethod
    def piano_octave(cls) -> "KeyBed":
        labels = ["c4", "d4", "e4", "f4", "g4", "a4", "b4", "c5"]
        pitch = 23.5
        return cls(
            kind="piano",
            keys=tuple(
                Key(label, (i - 3.5) * pitch, 22.0, 0.5, 10.0)
                for i, label in enumerate(labels)
            ),
        )

    @classmethod
    def from_config(cls, section: dict) -> "KeyBed":
        layout = section.get("layout")
        if layout == "qwerty_row":
            return cls.qwerty_row()
        if layout == "piano_octave":
            return cls.piano_octave()
        if "keys" in section:
            keys = tuple(
                Key(
                    str(k["label"]),
                    float(k["center_mm"]),
                    float(k["width_mm"]),
                    float(k["activation_force_n"]),
                    float(k["travel_mm"]),
                )
                for k in section["keys"]
            )
            return cls(kind=str(section.get("kind", "custom")), keys=keys)
        raise ValidationError([f"keybed: unknown layout {layout!r} and no explicit keys"])


@dataclass(frozen=True)
class KeyEvent:
    t: float
    action: str          # "press" | "release"
    key: str
    digit: JointId
    force_n: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "type": "key",
            "action": self.action,
            "key": self.key,
            "finger": self.digit.key,
            "force_n": self.force_n,
        }


class LatencyChannel:
    """Wireless command link with seeded uniform latency.

    Each send draws a delay in [min_s, max_s]; delivery order is FIFO, so
    a draw is floored at the previous delivery time.  Effective latency
    still stays within the draw bounds because sends are time-ordered.
    """

    def __init__(self, min_s: float, max_s: float, rng: random.Random):
        if not 0 <= min_s <= max_s:
            raise DomainError(f"latency bounds ({min_s}, {max_s}) invalid")
        self.min_s = min_s
        self.max_s = max_s
        self._rng = rng
        self._queue: list[tuple[float, object]] = []
        self._last_delivery = -math.inf
        self._last_send = -math.inf

    def send(self, item, now: float) -> float:
        if now < self._last_send:
            raise DomainError("sends must be time-ordered")
        self._last_send = now
        deliver_at = now + self._rng.uniform(self.min_s, self.max_s)
        deliver_at = max(deliver_at, self._last_delivery)
        self._last_delivery = deliver_at
        self._queue.append((deliver_at, item))
        return deliver_at

    def poll(self, now: float) -> list:
        due = [item for at, item in self._queue if at <= now]
        self._queue = [(at, item) for at, item in self._queue if at > now]
        return due

    @property
    def pending(self) -> int:
        return len(self._queue)


def pwm_to_voltage(pwm: int, full_voltage: float = 6.0) -> float:
    return full_voltage * pwm / PWM_MAX


class PlantWorld:
    """The complete simulated scene: seven motors, hand geometry, keybed."""

    def __init__(
        self,
        specs: dict[JointId, JointSpec],
        omega_max_dps: dict[JointId, float],
        counts_per_degree: dict[JointId, float],
        finger_cfg: dict,
        thumb_cfg: dict,
        keybed: KeyBed,
        force_model: ForceVoltageModel,
        splay_open_angles: tuple[float, float, float, float],
        hand_height_mm: float = 40.0,
        pwm_full_voltage: float = 6.0,
        splay_level: int = 1,
        hand_start_xy_mm: tuple[float, float] = (0.0, 0.0),
    ):
        self.specs = specs
        self.time = 0.0
        self.motors = [
            MotorPlant(
                joint=j,
                spec=specs[j],
                omega_max_dps=omega_max_dps[j],
                counts_per_degree=counts_per_degree[j],
            )
            for j in JointId
        ]
        lengths = tuple(float(v) for v in finger_cfg["link_lengths_mm"])
        ratios = tuple(float(v) for v in finger_cfg["coupling_ratios"])
        base_y = finger_cfg["base_y_mm"]
        metacarpal = float(finger_cfg["metacarpal_mm"])
        self.chains = {
            f: FingerChain(f, lengths, ratios, metacarpal, float(base_y[f.key]))
            for f in FINGERS
        }
        self.thumb = ThumbGeometry(
            base_x_mm=float(thumb_cfg["base_xy_mm"][0]),
            base_y_mm=float(thumb_cfg["base_xy_mm"][1]),
            mount_yaw_deg=float(thumb_cfg["mount_yaw_deg"]),
            length_mm=float(thumb_cfg["length_mm"]),
        )
        self.keybed = keybed
        self.force_model = force_model
        self.splay_open_angles = splay_open_angles
        self.hand_height_mm = float(hand_height_mm)
        self.pwm_full_voltage = float(pwm_full_voltage)
        self.splay = SplayConfig.at_level(splay_level, splay_open_angles)
        self.hand_x = float(hand_start_xy_mm[0])
        self.hand_y = float(hand_start_xy_mm[1])
        # key label -> pressing digit
        self.pressed: dict[str, JointId] = {}

    @classmethod
    def from_config(cls, cfg: dict, specs: dict[JointId, JointSpec]) -> "PlantWorld":
        plant = cfg["plant"]
        return cls(
            specs=specs,
            omega_max_dps={j: float(plant["omega_max_dps"][j.key]) for j in JointId},
            counts_per_degree={
                j: float(plant["counts_per_degree"][j.key]) for j in JointId
            },
            finger_cfg=plant["finger"],
            thumb_cfg=plant["thumb"],
            keybed=KeyBed.from_config(cfg["keybed"]),
            force_model=ForceVoltageModel.from_config(cfg["mechanics"]["force_voltage"]),
            splay_open_angles=tuple(float(a) for a in cfg["splay"]["open_angles"]),
            hand_height_mm=float(plant["hand_height_mm"]),
            pwm_full_voltage=float(plant.get("pwm_full_voltage", 6.0)),
            splay_level=int(cfg["session"].get("splay_level", 1)),
            # boot at the stow pose, clear of the key row; the session
            # moves the hand over the keys once calibration is done
            hand_start_xy_mm=(
                float(cfg["session"].get("stow_x_mm", 0.0)),
                float(cfg["session"].get("stow_y_mm", -250.0)),
            ),
        )

    # -- scene controls --------------------------------------------------

    def set_splay(self, level: int) -> None:
        self.splay = SplayConfig.at_level(level, self.splay_open_angles)

    def set_hand(self, x_mm: float, y_mm: float) -> None:
        self.hand_x = float(x_mm)
        self.hand_y = float(y_mm)

    def motor(self, joint: JointId) -> MotorPlant:
        return self.motors[joint.slot]

    def encoder_counts(self) -> list[int]:
        return [m.count for m in self.motors]

    def angles(self) -> dict[JointId, float]:
        return {j: self.motors[j.slot].angle for j in JointId}

    # -- kinematics -------------------------------------------------------

    def tip_world(self, digit: JointId, angles: dict[JointId, float] | None = None) -> np.ndarray:
        a = angles or self.angles()
        rot = wrist_rotation_matrix(a[JointId.WRIST_DEVIATION], a[JointId.WRIST_ROTATION])
        if digit is JointId.THUMB:
            tip = self.thumb.tip_in_hand(a[JointId.THUMB], self.specs[JointId.THUMB].min_angle)
        else:
            tip = self.chains[digit].tip_in_hand(a[digit], self.splay.abduction(digit))
        tip = rot @ tip
        return tip + np.array([self.hand_x, self.hand_y, self.hand_height_mm])

    def tip_depth(self, digit: JointId, angles: dict[JointId, float] | None = None) -> float:
        """Penetration of the digit tip below the key-top plane, mm."""
        return -float(self.tip_world(digit, angles)[2])

    def contact_force_n(self, pwm: int) -> float:
        """Static press force for a drive PWM.

        Within the force model's voltage validity range the model applies
        directly; below it the force ramps linearly to zero so low drives
        exert proportionally small forces rather than none at all.
        """
        volts = pwm_to_voltage(pwm, self.pwm_full_voltage)
        v_min = self.force_model.voltage_min
        if volts >= v_min:
            return force_at_voltage(self.force_model, min(volts, self.force_model.voltage_max))
        return (volts / v_min) * force_at_voltage(self.force_model, v_min)

    # -- integration ------------------------------------------------------

    def step(
        self, drives: list[tuple[int, int]], dt: float, now: float | None = None
    ) -> list[KeyEvent]:
        """Advance the world by dt under per-slot (pwm, direction) drives.

        Wrist and thumb integrate first, then fingers; a fingertip that
        would end below a key's bottom-out depth has its flexion clamped
        to the bottoming angle (solved by bisection), which freezes its
        encoder progress and lets the firmware's stall detector fire.

        `now` pins the post-step clock to an externally kept exact value
        so long runs don't accumulate float drift.
        """
        if dt <= 0:
            raise DomainError(f"dt must be > 0, got {dt}")
        old_angles = self.angles()
        new_angles = dict(old_angles)
        for j in JointId:
            pwm, direction = drives[j.slot]
            new_angles[j] = self.motors[j.slot].candidate_angle(pwm, direction, dt)

        for digit in PRESSING_DIGITS:
            new_angles[digit] = self._resolve_contact(
                digit, old_angles[digit], new_angles[digit], new_angles
            )

        for j in JointId:
            self.motors[j.slot].commit(new_angles[j])
        self.time = self.time + dt if now is None else now
        return self._key_events(drives)

    def _resolve_contact(
        self,
        digit: JointId,
        angle_old: float,
        angle_new: float,
        pose: dict[JointId, float],
    ) -> float:
        probe = dict(pose)
        probe[digit] = angle_new
        tip = self.tip_world(digit, probe)
        key = self.keybed.key_at(float(tip[1]))
        if key is None:
            return angle_new
        depth_new = -float(tip[2])
        if depth_new <= key.travel_mm:
            return angle_new
        probe[digit] = angle_old
        if self.tip_depth(digit, probe) > key.travel_mm + 1e-9:
            # the wrist alone drove the tip below bottom-out; flexion can't
            # resolve it, keep the old flexion (desk-scale simplification)
            return angle_old
        lo, hi = angle_old, angle_new
        for _ in range(48):
            mid = (lo + hi) / 2
            probe[digit] = mid
            if self.tip_depth(digit, probe) > key.travel_mm:
                hi = mid
            else:
                lo = mid
        return lo

    def _key_events(self, drives: list[tuple[int, int]]) -> list[KeyEvent]:
        events: list[KeyEvent] = []
        angles = self.angles()
        contacts: dict[JointId, tuple[Key | None, float]] = {}
        for digit in PRESSING_DIGITS:
            tip = self.tip_world(digit, angles)
            key = self.keybed.key_at(float(tip[1]))
            depth = -float(tip[2])
            in_contact = key is not None and 0.0 < depth <= key.travel_mm + 1e-9
            pwm, direction = drives[digit.slot]
            # force is exerted only while driving into the key (flexion
            # direction); coasting or extending through the contact zone
            # exerts none, so pull-out never retriggers a press
            force = self.contact_force_n(pwm) if in_contact and direction > 0 and pwm > 0 else 0.0
            contacts[digit] = (key if in_contact else None, force)

        for label, owner in list(self.pressed.items()):
            key, force = contacts.get(owner, (None, 0.0))
            threshold = self.keybed.key_by_label(label).activation_force_n
            if key is None or key.label != label or force < 0.5 * threshold:
                events.append(KeyEvent(self.time, "release", label, owner, force))
                del self.pressed[label]

        for digit in PRESSING_DIGITS:
            key, force = contacts[digit]
            if key is None or key.label in self.pressed:
                continue
            if force >= key.activation_force_n:
                events.append(KeyEvent(self.time, "press", key.label, digit, force))
                self.pressed[key.label] = digit
        return events

    # -- snapshots ----------------------------------------------------------

    def snapshot(self) -> dict:
        angles = self.angles()
        tips = {d.key: [round(float(v), 4) for v in self.tip_world(d, angles)] for d in PRESSING_DIGITS}
        return {
            "t": self.time,
            "type": "world",
            "angles": {j.key: round(angles[j], 6) for j in JointId},
            "counts": {j.key: self.motors[j.slot].count for j in JointId},
            "splay": {"level": self.splay.level, "angles": list(self.splay.angles)},
            "hand": {"x_mm": self.hand_x, "y_mm": self.hand_y},
            "tips_mm": tips,
            "pressed": {label: digit.key for label, digit in sorted(self.pressed.items())},
        }
