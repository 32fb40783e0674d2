"""Pydantic request/response and WebSocket message models."""

from typing import Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from ..errors import DomainError
from ..hand import JointId


class MoveSpec(BaseModel):
    joint: str
    target: int | None = Field(default=None, ge=0, le=255)
    target_angle: float | None = None
    pwm: int = Field(ge=1, le=255)

    @field_validator("joint")
    @classmethod
    def _known_joint(cls, v):
        try:
            JointId.from_name(v)
        except DomainError:
            raise ValueError(f"unknown joint {v!r}") from None
        return v

    @field_validator("target_angle")
    @classmethod
    def _one_of_target(cls, v, info):
        if v is None and info.data.get("target") is None:
            raise ValueError("move needs target or target_angle")
        return v


class ScriptLine(BaseModel):
    t: float = Field(ge=0)
    op: Literal["move", "splay", "hand", "task", "end"]
    moves: list[MoveSpec] | None = None
    level: int | None = Field(default=None, ge=1, le=5)
    x_mm: float | None = None
    y_mm: float | None = None
    task: str | None = None


class SimulateRequest(BaseModel):
    seed: int = 0
    script: list[ScriptLine] = Field(default_factory=list)
    config: dict = Field(default_factory=dict)
    include_records: bool = False


class SimulateResponse(BaseModel):
    summary: dict
    records: list[dict] | None = None


class MechReportRequest(BaseModel):
    config: dict = Field(default_factory=dict)


class MechReportResponse(BaseModel):
    report: dict
    table: str


class ReplayRequest(BaseModel):
    records: list[dict]
    seed_override: int | None = None


class ReplayResponse(BaseModel):
    report: dict


class RetargetRequest(BaseModel):
    # one {"t": .., "markers": {name: [x,y,z]}} object per frame
    frames: list[dict]
    config: dict = Field(default_factory=dict)


class RetargetResponse(BaseModel):
    command_frames: list[dict]
    intents: list[dict]


class MetricsRequest(BaseModel):
    sessions: list[list[dict]]


class MetricsResponse(BaseModel):
    summary: dict


# -- WebSocket teleop messages (see docs/ui-protocol.md) -----------------


class HelloMessage(BaseModel):
    type: Literal["hello"] = "hello"
    role: Literal["operator", "observer"]
    protocol: int = 1
    joints: dict
    splay_levels: list[int]
    keybed: dict
    snapshot_rate_hz: float


class CommandMessage(BaseModel):
    """Client -> server. Exactly one command per message."""

    type: Literal["command"] = "command"
    kind: Literal["move", "splay", "hand", "task"]
    moves: list[MoveSpec] | None = None
    level: int | None = Field(default=None, ge=1, le=5)
    x_mm: float | None = None
    y_mm: float | None = None
    task: str | None = None

    @model_validator(mode="after")
    def _kind_payload(self):
        if self.kind == "move" and not self.moves:
            raise ValueError("move command needs a non-empty moves list")
        if self.kind == "splay" and self.level is None:
            raise ValueError("splay command needs level")
        if self.kind == "hand" and (self.x_mm is None or self.y_mm is None):
            raise ValueError("hand command needs x_mm and y_mm")
        if self.kind == "task" and not self.task:
            raise ValueError("task command needs task")
        return self


class SnapshotMessage(BaseModel):
    type: Literal["snapshot"] = "snapshot"
    t: float
    phase: str
    joints: dict
    splay: dict
    hand: dict
    tips_mm: dict
    pressed: dict
    stalled: list[str]


class EventMessage(BaseModel):
    type: Literal["event"] = "event"
    t: float
    event: str
    data: dict


class ErrorMessage(BaseModel):
    type: Literal["error"] = "error"
    code: str
    detail: str
