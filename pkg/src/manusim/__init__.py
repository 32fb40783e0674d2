"""manusim: firmware, plant simulation, and analysis for a seven-DOF
cable-driven prosthetic hand."""

__version__ = "0.1.0"

from .hand import (
    DEFAULT_JOINT_SPECS,
    FINGERS,
    HandState,
    JointId,
    JointSpec,
    SplayConfig,
    angle_to_normalized,
    normalized_to_angle,
    splay_angles,
)
from .protocol import CommandFrame, FrameStream, decode, encode

__all__ = [
    "DEFAULT_JOINT_SPECS",
    "FINGERS",
    "HandState",
    "JointId",
    "JointSpec",
    "SplayConfig",
    "angle_to_normalized",
    "normalized_to_angle",
    "splay_angles",
    "CommandFrame",
    "FrameStream",
    "decode",
    "encode",
    "__version__",
]
