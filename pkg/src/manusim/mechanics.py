"""Drivetrain mechanics: gear stages, cable drives, tip forces.

Units are fixed: torques in N*mm, lengths in mm, forces in N, voltages
in V.  All relations here are static (quasi-static force budget); the
dynamic behaviour lives in the plant.
"""

from dataclasses import dataclass
from enum import Enum

from .errors import DomainError, ValidationError


class GearKind(Enum):
    BEVEL = "bevel"
    PLANETARY = "planetary"


@dataclass(frozen=True)
class GearStage:
    """One reduction stage driven by a motor of known stall torque.

    For a bevel pair, drive_teeth is the pinion and driven_teeth the large
    gear.  For a planetary stage (sun in, carrier out, ring fixed),
    drive_teeth is the sun and driven_teeth the ring; planet_teeth is
    informational only and does not enter the ratio.
    """

    kind: GearKind
    motor_torque_nmm: float
    drive_teeth: int
    driven_teeth: int
    planet_teeth: int | None = None

    def __post_init__(self):
        if self.motor_torque_nmm <= 0:
            raise DomainError(f"motor torque must be > 0, got {self.motor_torque_nmm}")
        for label, teeth in (("drive", self.drive_teeth), ("driven", self.driven_teeth)):
            if not isinstance(teeth, int) or teeth < 3:
                raise DomainError(f"{label}_teeth must be an integer >= 3, got {teeth}")
        if self.planet_teeth is not None and (
            not isinstance(self.planet_teeth, int) or self.planet_teeth < 3
        ):
            raise DomainError(f"planet_teeth must be an integer >= 3, got {self.planet_teeth}")

    @property
    def ratio(self) -> float:
        if self.kind is GearKind.BEVEL:
            return self.driven_teeth / self.drive_teeth
        return planetary_gear_ratio(self.drive_teeth, self.driven_teeth)

    @property
    def output_torque_nmm(self) -> float:
        return self.motor_torque_nmm * self.ratio


@dataclass(frozen=True)
class CableDrive:
    """Capstan-and-cable transmission from a drive shaft to a fingertip.

    The drive shaft winds the cable on a spool of radius moment_arm_mm;
    the cable pulls at output_arm_mm from the joint axis and the tip sits
    lever_mm from that axis.
    """

    drive_torque_nmm: float
    moment_arm_mm: float
    output_arm_mm: float
    lever_mm: float

    def __post_init__(self):
        if self.drive_torque_nmm < 0:
            raise DomainError(f"drive torque must be >= 0, got {self.drive_torque_nmm}")
        for label, value in (
            ("moment_arm_mm", self.moment_arm_mm),
            ("output_arm_mm", self.output_arm_mm),
            ("lever_mm", self.lever_mm),
        ):
            if value <= 0:
                raise DomainError(f"{label} must be > 0, got {value}")

    @property
    def tension_n(self) -> float:
        return cable_tension(self.drive_torque_nmm, self.moment_arm_mm)

    @property
    def tip_force_n(self) -> float:
        return tip_force(self.tension_n, self.output_arm_mm, self.lever_mm)


def bevel_output_torque(stage: GearStage) -> float:
    """Output torque of a bevel pair: motor torque times driven/drive teeth."""
    if stage.kind is not GearKind.BEVEL:
        raise DomainError(f"expected a bevel stage, got {stage.kind.value}")
    return stage.output_torque_nmm


def planetary_gear_ratio(sun_teeth: int, ring_teeth: int) -> float:
    """Reduction of a sun-in carrier-out planetary stage: 1 + ring/sun."""
    if not isinstance(sun_teeth, int) or sun_teeth < 1:
        raise DomainError(f"sun_teeth must be an integer >= 1, got {sun_teeth}")
    if not isinstance(ring_teeth, int) or ring_teeth < 1:
        raise DomainError(f"ring_teeth must be an integer >= 1, got {ring_teeth}")
    return 1.0 + ring_teeth / sun_teeth


def planetary_output_torque(stage: GearStage) -> float:
    if stage.kind is not GearKind.PLANETARY:
        raise DomainError(f"expected a planetary stage, got {stage.kind.value}")
    return stage.output_torque_nmm


def cable_tension(drive_torque_nmm: float, moment_arm_mm: float) -> float:
    """Cable tension in N from spool torque and spool radius."""
    if moment_arm_mm <= 0:
        raise DomainError(f"moment_arm_mm must be > 0, got {moment_arm_mm}")
    if drive_torque_nmm < 0:
        raise DomainError(f"drive torque must be >= 0, got {drive_torque_nmm}")
    return drive_torque_nmm / moment_arm_mm


def tip_force(tension_n: float, output_arm_mm: float, lever_mm: float) -> float:
    """Fingertip force from cable tension: tension * output arm / tip lever."""
    if tension_n < 0:
        raise DomainError(f"tension must be >= 0, got {tension_n}")
    for label, value in (("output_arm_mm", output_arm_mm), ("lever_mm", lever_mm)):
        if value <= 0:
            raise DomainError(f"{label} must be > 0, got {value}")
    return tension_n * output_arm_mm / lever_mm


@dataclass(frozen=True)
class ForceVoltagePoint:
    voltage: float
    mean_force_n: float
    max_force_n: float


@dataclass(frozen=True)
class ForceVoltageModel:
    """Piecewise-linear grip force versus supply voltage.

    Valid between voltage_min and voltage_max; anchor points must cover
    exactly that range, be strictly increasing in voltage, and be
    non-decreasing in both force curves.
    """

    points: tuple[ForceVoltagePoint, ...]
    voltage_min: float = 2.0
    voltage_max: float = 6.0

    def __post_init__(self):
        if len(self.points) < 2:
            raise DomainError("force/voltage model needs at least two points")
        volts = [p.voltage for p in self.points]
        if any(b <= a for a, b in zip(volts, volts[1:])):
            raise DomainError("force/voltage points must be strictly increasing in voltage")
        if abs(volts[0] - self.voltage_min) > 1e-9 or abs(volts[-1] - self.voltage_max) > 1e-9:
            raise DomainError(
                f"points must span [{self.voltage_min}, {self.voltage_max}] V exactly"
            )
        for curve in ("mean_force_n", "max_force_n"):
            forces = [getattr(p, curve) for p in self.points]
            if any(f < 0 for f in forces):
                raise DomainError(f"{curve} values must be >= 0")
            if any(b < a for a, b in zip(forces, forces[1:])):
                raise DomainError(f"{curve} must be non-decreasing in voltage")

    @classmethod
    def default(cls) -> "ForceVoltageModel":
        # Measured anchor: 3.6 N at the 6 V supply ceiling; low anchor
        # scales proportionally down to the 2 V validity floor.
        return cls(
            points=(
                ForceVoltagePoint(2.0, 1.2, 1.2),
                ForceVoltagePoint(6.0, 3.6, 3.6),
            )
        )

    @classmethod
    def from_config(cls, section: dict) -> "ForceVoltageModel":
        points = tuple(
            ForceVoltagePoint(
                float(p["voltage"]), float(p["mean_force_n"]), float(p["max_force_n"])
            )
            for p in section["points"]
        )
        return cls(
            points=points,
            voltage_min=float(section.get("voltage_min", 2.0)),
            voltage_max=float(section.get("voltage_max", 6.0)),
        )

    def force(self, voltage: float, curve: str = "max") -> float:
        return force_at_voltage(self, voltage, curve)


def force_at_voltage(model: ForceVoltageModel, voltage: float, curve: str = "max") -> float:
    """Interpolated grip force at a supply voltage within the model's range."""
    if curve not in ("max", "mean"):
        raise DomainError(f"curve must be 'max' or 'mean', got {curve!r}")
    if not model.voltage_min - 1e-9 <= voltage <= model.voltage_max + 1e-9:
        raise DomainError(
            f"voltage {voltage} outside [{model.voltage_min}, {model.voltage_max}] V"
        )
    attr = "max_force_n" if curve == "max" else "mean_force_n"
    points = model.points
    for point in points:
        # anchors return their stored force bit-exactly
        if voltage == point.voltage:
            return getattr(point, attr)
    if voltage < points[0].voltage:
        return getattr(points[0], attr)
    for lo, hi in zip(points, points[1:]):
        if voltage < hi.voltage:
            frac = (voltage - lo.voltage) / (hi.voltage - lo.voltage)
            return getattr(lo, attr) + frac * (getattr(hi, attr) - getattr(lo, attr))
    return getattr(points[-1], attr)


def _stage_from_config(path: str, section: dict, errors: list[str]) -> GearStage | None:
    kind = section.get("kind")
    try:
        if kind == "bevel":
            return GearStage(
                GearKind.BEVEL,
                float(section["motor_torque_nmm"]),
                int(section["drive_teeth"]),
                int(section["driven_teeth"]),
            )
        if kind == "planetary":
            return GearStage(
                GearKind.PLANETARY,
                float(section["motor_torque_nmm"]),
                int(section["sun_teeth"]),
                int(section["ring_teeth"]),
                planet_teeth=int(section["planet_teeth"]) if "planet_teeth" in section else None,
            )
        errors.append(f"{path}.kind: expected 'bevel' or 'planetary', got {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"{path}: missing or malformed field ({exc})")
    except DomainError as exc:
        errors.append(f"{path}: {exc}")
    return None


def mech_report(mech_cfg: dict) -> dict:
    """Static force budget for the whole drivetrain.

    Takes the 'mechanics' config section and returns a nested dict of
    torques, tensions, and tip forces.  Invalid parameters raise
    ValidationError with one itemized entry per offending field.
    """
    errors: list[str] = []
    dev_stage = _stage_from_config("wrist_deviation", mech_cfg.get("wrist_deviation", {}), errors)
    rot_stage = _stage_from_config("wrist_rotation", mech_cfg.get("wrist_rotation", {}), errors)

    finger_cfg = mech_cfg.get("finger", {})
    finger_bevel = _stage_from_config("finger.bevel", finger_cfg.get("bevel", {}), errors)
    finger_cable = None
    if finger_bevel is not None:
        try:
            cable_cfg = finger_cfg["cable"]
            finger_cable = CableDrive(
                drive_torque_nmm=finger_bevel.output_torque_nmm,
                moment_arm_mm=float(cable_cfg["moment_arm_mm"]),
                output_arm_mm=float(cable_cfg["output_arm_mm"]),
                lever_mm=float(cable_cfg["lever_mm"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"finger.cable: missing or malformed field ({exc})")
        except DomainError as exc:
            errors.append(f"finger.cable: {exc}")

    thumb_cable = None
    try:
        thumb_cfg = mech_cfg["thumb"]["cable"]
        thumb_cable = CableDrive(
            drive_torque_nmm=float(thumb_cfg["drive_torque_nmm"]),
            moment_arm_mm=float(thumb_cfg["moment_arm_mm"]),
            output_arm_mm=float(thumb_cfg["output_arm_mm"]),
            lever_mm=float(thumb_cfg["lever_mm"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"thumb.cable: missing or malformed field ({exc})")
    except DomainError as exc:
        errors.append(f"thumb.cable: {exc}")

    force_model = None
    try:
        force_model = ForceVoltageModel.from_config(mech_cfg["force_voltage"])
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"force_voltage: missing or malformed field ({exc})")
    except DomainError as exc:
        errors.append(f"force_voltage: {exc}")

    if errors:
        raise ValidationError(errors)

    return {
        "wrist_deviation": {
            "motor_torque_nmm": dev_stage.motor_torque_nmm,
            "gear_ratio": dev_stage.ratio,
            "output_torque_nmm": dev_stage.output_torque_nmm,
        },
        "wrist_rotation": {
            "motor_torque_nmm": rot_stage.motor_torque_nmm,
            "gear_ratio": rot_stage.ratio,
            "output_torque_nmm": rot_stage.output_torque_nmm,
        },
        "finger": {
            "gearbox_ratio": finger_cfg.get("gearbox_ratio"),
            "motor_torque_nmm": finger_bevel.motor_torque_nmm,
            "bevel_ratio": finger_bevel.ratio,
            "bevel_torque_nmm": finger_bevel.output_torque_nmm,
            "cable_tension_n": finger_cable.tension_n,
            "tip_force_n": finger_cable.tip_force_n,
        },
        "thumb": {
            "gearbox_ratio": mech_cfg["thumb"].get("gearbox_ratio"),
            "drive_torque_nmm": thumb_cable.drive_torque_nmm,
            "cable_tension_n": thumb_cable.tension_n,
            "tip_force_n": thumb_cable.tip_force_n,
        },
        "grip_force": {
            "at_voltage_min_n": force_model.force(force_model.voltage_min),
            "at_voltage_max_n": force_model.force(force_model.voltage_max),
            "voltage_min": force_model.voltage_min,
            "voltage_max": force_model.voltage_max,
        },
    }


def render_report_table(report: dict) -> str:
    """Plain-text table of the mech report, one row per quantity."""
    rows = [
        ("wrist deviation output torque", report["wrist_deviation"]["output_torque_nmm"], "N*mm"),
        ("wrist rotation output torque", report["wrist_rotation"]["output_torque_nmm"], "N*mm"),
        ("finger bevel torque", report["finger"]["bevel_torque_nmm"], "N*mm"),
        ("finger cable tension", report["finger"]["cable_tension_n"], "N"),
        ("finger tip force", report["finger"]["tip_force_n"], "N"),
        ("thumb cable tension", report["thumb"]["cable_tension_n"], "N"),
        ("thumb tip force", report["thumb"]["tip_force_n"], "N"),
        ("grip force at supply ceiling", report["grip_force"]["at_voltage_max_n"], "N"),
    ]
    width = max(len(name) for name, _, _ in rows)
    lines = [f"{name:<{width}}  {value:10.3f} {unit}" for name, value, unit in rows]
    return "\n".join(lines)
