"""Configuration: defaults, file loading, deep merge, validation.

A config is a plain nested dict (JSON-shaped).  Every module constructor
takes its own section; see docs/config.md for the schema.
"""

import copy
import json
from pathlib import Path

from .errors import ValidationError
from .hand import DEFAULT_JOINT_SPECS, JointId, JointSpec, SPLAY_OPEN_ANGLES

# Encoder: 12 counts/rev at the motor shaft times the joint's effective
# reduction gives counts per output degree.  The finger drive reduction is
# 75:1; thumb 100:1; wrist stages are chosen so that full-range calibration
# sweeps fit the firmware timeout while keeping a common motor speed.
ENCODER_COUNTS_PER_REV = 12

DEFAULT_CONFIG: dict = {
    "joints": {
        j.key: {
            "min_angle": DEFAULT_JOINT_SPECS[j].min_angle,
            "max_angle": DEFAULT_JOINT_SPECS[j].max_angle,
            "neutral": DEFAULT_JOINT_SPECS[j].neutral,
        }
        for j in JointId
    },
    "splay": {"open_angles": list(SPLAY_OPEN_ANGLES)},
    "mechanics": {
        "wrist_deviation": {
            "kind": "bevel",
            "motor_torque_nmm": 156.9,
            "drive_teeth": 12,
            "driven_teeth": 132,
        },
        "wrist_rotation": {
            "kind": "planetary",
            "motor_torque_nmm": 274.6,
            "sun_teeth": 9,
            "planet_teeth": 13,
            "ring_teeth": 36,
        },
        "finger": {
            "gearbox_ratio": 75,
            "bevel": {
                "kind": "bevel",
                "motor_torque_nmm": 100.0,
                "drive_teeth": 6,
                "driven_teeth": 15,
            },
            "cable": {"moment_arm_mm": 5.5, "output_arm_mm": 0.8, "lever_mm": 7.3},
        },
        "thumb": {
            "gearbox_ratio": 100,
            "cable": {
                "drive_torque_nmm": 156.9,
                "moment_arm_mm": 3.5,
                "output_arm_mm": 3.5,
                "lever_mm": 50.0,
            },
        },
        "force_voltage": {
            "voltage_min": 2.0,
            "voltage_max": 6.0,
            "points": [
                {"voltage": 2.0, "mean_force_n": 1.2, "max_force_n": 1.2},
                {"voltage": 6.0, "mean_force_n": 3.6, "max_force_n": 3.6},
            ],
        },
    },
    "firmware": {
        "control_rate_hz": 100,
        "stall_window": 8,
        "stall_threshold_counts": 2,
        "stall_pwm_floor": 30,
        "deadband_counts": 2,
        "calibration_pwm": 120,
        "calibration_timeout_s": 5.0,
        "min_calibration_range_counts": 10,
        "position_slack_counts": 5,
        # "neutral" or an explicit 0..255 normalized park target
        "park": "neutral",
    },
    "plant": {
        # Peak joint speed at PWM 255, deg/s.  Finger value pins a full
        # 165 deg flexion at 0.40 s; the others scale with their reductions
        # so all calibration sweeps fit the firmware timeout.
        "omega_max_dps": {
            "thumb": 309.375,
            "index": 412.5,
            "middle": 412.5,
            "ring": 412.5,
            "little": 412.5,
            "wrist_deviation": 93.75,
            "wrist_rotation": 206.25,
        },
        "counts_per_degree": {
            "thumb": 1200 / 360,
            "index": 2.5,
            "middle": 2.5,
            "ring": 2.5,
            "little": 2.5,
            "wrist_deviation": 11.0,
            "wrist_rotation": 5.0,
        },
        "finger": {
            # proximal/middle/distal phalanx lengths, mm
            "link_lengths_mm": [45.0, 25.0, 20.0],
            # interior-angle coupling across the three phalanx joints
            "coupling_ratios": [1.0, 1.0, 1.0],
            "metacarpal_mm": 80.0,
            # lateral base offsets, mm; one key pitch apart so a level-1
            # hand at the origin centers the fingers on adjacent keys
            "base_y_mm": {
                "index": -19.05,
                "middle": 0.0,
                "ring": 19.05,
                "little": 38.1,
            },
        },
        "thumb": {
            "base_xy_mm": [40.0, -40.0],
            "mount_yaw_deg": -40.0,
            "length_mm": 50.0,
        },
        # palm height above the key-top plane, mm
        "hand_height_mm": 40.0,
        "pwm_full_voltage": 6.0,
    },
    "keybed": {"layout": "qwerty_row"},
    "latency": {"min_s": 0.05, "max_s": 0.1},
    "session": {
        "seed": 0,
        "world_rate_hz": 20,
        "telemetry_rate_hz": 100,
        "idle_tail_s": 0.5,
        "max_duration_s": 120.0,
        "task": "typing",
        "condition": "full",
        "splay_level": 1,
        "subject": "sim",
        # boot/calibration happens clear of the key row; the session then
        # moves the hand to the start pose
        "stow_x_mm": 0.0,
        "stow_y_mm": -250.0,
        "start_x_mm": 0.0,
        "start_y_mm": 0.0,
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def merge_config(base: dict, override: dict) -> dict:
    """Deep-merge override onto base; dicts merge, everything else replaces."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_config(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    """Defaults, optionally merged with a JSON file and a dict of overrides."""
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValidationError([f"config file {path} must hold a JSON object"])
        cfg = merge_config(cfg, loaded)
    if overrides:
        cfg = merge_config(cfg, overrides)
    validate_config(cfg)
    return cfg


def joint_specs(cfg: dict) -> dict[JointId, JointSpec]:
    specs = {}
    for j in JointId:
        section = cfg["joints"][j.key]
        specs[j] = JointSpec(
            j,
            float(section["min_angle"]),
            float(section["max_angle"]),
            float(section["neutral"]),
        )
    return specs


def _require_number(errors: list[str], section: dict, path: str, key: str, positive=False):
    value = section.get(key)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        errors.append(f"{path}.{key}: expected a number, got {value!r}")
        return None
    if positive and value <= 0:
        errors.append(f"{path}.{key}: must be > 0, got {value}")
    return value


def validate_config(cfg: dict) -> None:
    """Raise ValidationError with an itemized list of every problem found."""
    errors: list[str] = []

    joints = cfg.get("joints")
    if not isinstance(joints, dict):
        errors.append("joints: missing section")
    else:
        for j in JointId:
            section = joints.get(j.key)
            if not isinstance(section, dict):
                errors.append(f"joints.{j.key}: missing section")
                continue
            lo = _require_number(errors, section, f"joints.{j.key}", "min_angle")
            hi = _require_number(errors, section, f"joints.{j.key}", "max_angle")
            mid = _require_number(errors, section, f"joints.{j.key}", "neutral")
            if None not in (lo, hi, mid):
                if not lo < hi:
                    errors.append(f"joints.{j.key}: min_angle must be < max_angle")
                elif not lo <= mid <= hi:
                    errors.append(f"joints.{j.key}: neutral outside range")

    splay = cfg.get("splay", {})
    open_angles = splay.get("open_angles")
    if not (isinstance(open_angles, (list, tuple)) and len(open_angles) == 4):
        errors.append("splay.open_angles: expected 4 numbers")

    fw = cfg.get("firmware", {})
    for key in (
        "control_rate_hz",
        "stall_window",
        "stall_threshold_counts",
        "calibration_pwm",
        "calibration_timeout_s",
        "min_calibration_range_counts",
    ):
        _require_number(errors, fw, "firmware", key, positive=True)
    for key in ("stall_pwm_floor", "deadband_counts", "position_slack_counts"):
        _require_number(errors, fw, "firmware", key)
    pwm = fw.get("calibration_pwm")
    if isinstance(pwm, (int, float)) and not 1 <= pwm <= 255:
        errors.append("firmware.calibration_pwm: outside [1, 255]")

    plant = cfg.get("plant", {})
    for table in ("omega_max_dps", "counts_per_degree"):
        values = plant.get(table)
        if not isinstance(values, dict):
            errors.append(f"plant.{table}: missing section")
            continue
        for j in JointId:
            _require_number(errors, values, f"plant.{table}", j.key, positive=True)

    latency = cfg.get("latency", {})
    lo = _require_number(errors, latency, "latency", "min_s")
    hi = _require_number(errors, latency, "latency", "max_s")
    if None not in (lo, hi) and not 0 <= lo <= hi:
        errors.append("latency: require 0 <= min_s <= max_s")

    if errors:
        raise ValidationError(errors)
