"""Kinematic structure of the seven-DOF hand.

Seven motor slots: one flexion DOF per digit (thumb plus four fingers)
and two wrist DOFs (radial/ulnar deviation, forearm rotation).  Angles
are degrees throughout.  Finger flexion uses the distal interior angle
convention: 180 deg is a straight finger, smaller is more flexed.
"""

from dataclasses import dataclass
from enum import Enum

from .errors import DomainError


class JointId(Enum):
    """Joint identifiers; enum values are the wire-protocol slot indices."""

    THUMB = 0
    INDEX = 1
    MIDDLE = 2
    RING = 3
    LITTLE = 4
    WRIST_DEVIATION = 5
    WRIST_ROTATION = 6

    @property
    def slot(self) -> int:
        return self.value

    @classmethod
    def from_slot(cls, slot: int) -> "JointId":
        try:
            return cls(slot)
        except ValueError:
            raise DomainError(f"no joint at slot {slot}") from None

    @classmethod
    def from_name(cls, name: str) -> "JointId":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise DomainError(f"unknown joint name {name!r}") from None

    @property
    def key(self) -> str:
        """Lowercase config/log key, e.g. 'wrist_deviation'."""
        return self.name.lower()


NUM_SLOTS = 7
FINGERS = (JointId.INDEX, JointId.MIDDLE, JointId.RING, JointId.LITTLE)
# Digits that can press keys, in slot order.
PRESSING_DIGITS = (JointId.THUMB,) + FINGERS
WRIST_JOINTS = (JointId.WRIST_DEVIATION, JointId.WRIST_ROTATION)


@dataclass(frozen=True)
class JointSpec:
    """Mechanical range of one joint.

    min_angle/max_angle are the hard stops; neutral is the rest pose the
    plant boots at.  The calibration "home" stop is whichever hard stop
    sits nearest neutral (ties go to min_angle), and normalized position
    0 maps to it.
    """

    joint: JointId
    min_angle: float
    max_angle: float
    neutral: float

    def __post_init__(self):
        if not self.min_angle < self.max_angle:
            raise DomainError(
                f"{self.joint.key}: min_angle {self.min_angle} must be < max_angle {self.max_angle}"
            )
        if not self.min_angle <= self.neutral <= self.max_angle:
            raise DomainError(
                f"{self.joint.key}: neutral {self.neutral} outside "
                f"[{self.min_angle}, {self.max_angle}]"
            )

    @property
    def span(self) -> float:
        return self.max_angle - self.min_angle

    @property
    def home_angle(self) -> float:
        if abs(self.neutral - self.min_angle) <= abs(self.max_angle - self.neutral):
            return self.min_angle
        return self.max_angle

    @property
    def far_angle(self) -> float:
        return self.max_angle if self.home_angle == self.min_angle else self.min_angle

    def contains(self, angle: float, tol: float = 1e-9) -> bool:
        return self.min_angle - tol <= angle <= self.max_angle + tol


# Wrist rotation: 190 deg supination + 40 deg pronation about palm-down
# neutral (supination positive).  Deviation: symmetric +/-30 deg, ulnar
# positive.  Fingers: distal interior angle 15..180 deg, straight at 180.
# Thumb: -10 deg fully extended to 90 deg fully flexed.
DEFAULT_JOINT_SPECS: dict[JointId, JointSpec] = {
    JointId.THUMB: JointSpec(JointId.THUMB, -10.0, 90.0, -10.0),
    JointId.INDEX: JointSpec(JointId.INDEX, 15.0, 180.0, 180.0),
    JointId.MIDDLE: JointSpec(JointId.MIDDLE, 15.0, 180.0, 180.0),
    JointId.RING: JointSpec(JointId.RING, 15.0, 180.0, 180.0),
    JointId.LITTLE: JointSpec(JointId.LITTLE, 15.0, 180.0, 180.0),
    JointId.WRIST_DEVIATION: JointSpec(JointId.WRIST_DEVIATION, -30.0, 30.0, 0.0),
    JointId.WRIST_ROTATION: JointSpec(JointId.WRIST_ROTATION, -40.0, 190.0, 0.0),
}

SPLAY_LEVEL_MIN = 1
SPLAY_LEVEL_MAX = 5
# Abduction at full splay for (index, middle, ring, little), degrees about
# the hand's central axis; negative swings toward the thumb side.
SPLAY_OPEN_ANGLES = (-12.0, 0.0, 10.0, 19.0)


def splay_angles(
    level: int, open_angles: tuple[float, float, float, float] = SPLAY_OPEN_ANGLES
) -> tuple[float, float, float, float]:
    """Per-finger abduction (index, middle, ring, little) at a splay level.

    Level 1 is fully closed (all zero), level 5 fully open; intermediate
    levels interpolate linearly.
    """
    if not isinstance(level, int) or isinstance(level, bool):
        raise DomainError(f"splay level must be an integer, got {level!r}")
    if not SPLAY_LEVEL_MIN <= level <= SPLAY_LEVEL_MAX:
        raise DomainError(
            f"splay level {level} outside [{SPLAY_LEVEL_MIN}, {SPLAY_LEVEL_MAX}]"
        )
    frac = (level - 1) / (SPLAY_LEVEL_MAX - 1)
    return tuple(a * frac for a in open_angles)


@dataclass(frozen=True)
class SplayConfig:
    """A splay level together with its realized per-finger abductions."""

    level: int
    angles: tuple[float, float, float, float]

    @classmethod
    def at_level(
        cls,
        level: int,
        open_angles: tuple[float, float, float, float] = SPLAY_OPEN_ANGLES,
    ) -> "SplayConfig":
        return cls(level=level, angles=splay_angles(level, open_angles))

    def abduction(self, finger: JointId) -> float:
        if finger not in FINGERS:
            raise DomainError(f"{finger.key} has no splay abduction")
        return self.angles[FINGERS.index(finger)]


NORMALIZED_MAX = 255


def angle_to_normalized(angle: float, spec: JointSpec) -> int:
    """Map an angle to the 0..255 wire scale (0 = home stop, 255 = far stop)."""
    if not spec.contains(angle):
        raise DomainError(
            f"{spec.joint.key}: angle {angle} outside [{spec.min_angle}, {spec.max_angle}]"
        )
    frac = abs(angle - spec.home_angle) / spec.span
    # floor(x + 0.5): round half away from home, independent of float banker's mode
    return min(NORMALIZED_MAX, int(frac * NORMALIZED_MAX + 0.5))


def normalized_to_angle(value: int, spec: JointSpec) -> float:
    """Inverse of angle_to_normalized; exact at 0 and 255."""
    if not isinstance(value, int) or isinstance(value, bool):
        raise DomainError(f"normalized value must be an integer, got {value!r}")
    if not 0 <= value <= NORMALIZED_MAX:
        raise DomainError(f"normalized value {value} outside [0, {NORMALIZED_MAX}]")
    direction = 1.0 if spec.far_angle > spec.home_angle else -1.0
    return spec.home_angle + direction * (value / NORMALIZED_MAX) * spec.span


@dataclass
class HandState:
    """Snapshot of the full hand pose."""

    timestamp: float
    angles: dict[JointId, float]
    encoder_counts: dict[JointId, int]
    splay: SplayConfig

    def validate(self, specs: dict[JointId, JointSpec]) -> None:
        for joint, angle in self.angles.items():
            spec = specs[joint]
            if not spec.contains(angle, tol=1e-6):
                raise DomainError(
                    f"{joint.key}: angle {angle} outside [{spec.min_angle}, {spec.max_angle}]"
                )
