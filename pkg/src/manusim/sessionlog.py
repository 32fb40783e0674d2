"""Session logs: JSONL with a header line then time-ordered records.

Every simulator and service entry point records through this module so
all logs share one schema; see docs/log.md.  Serialization is canonical
(sorted keys, no whitespace) so identical runs produce identical bytes.
The header's created_at field is the only wall-clock value in a log.
"""

import datetime
import io
import json
from pathlib import Path

from .errors import ValidationError

LOG_VERSION = 1

RECORD_TYPES = {
    "header",
    "command",      # frame handed to the wireless channel
    "delivery",     # frame arriving at the firmware
    "rejection",    # per-channel command rejections at delivery
    "telemetry",
    "world",
    "key",
    "completion",
    "calibration",
    "splay",
    "hand",
    "task",
    "marker",
    "intent",
    "note",
}

_REQUIRED_FIELDS = {
    "command": ("frame",),
    "delivery": ("frame",),
    "telemetry": ("phase", "channels"),
    "world": ("angles", "splay"),
    "key": ("action", "key", "finger"),
    "completion": ("slot", "status"),
    "calibration": ("slot", "status"),
    "splay": ("level",),
    "hand": ("x_mm", "y_mm"),
    "marker": ("markers",),
}


def to_json(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def make_header(
    task: str,
    condition: str,
    splay_level: int,
    subject: str,
    seed: int,
    config: dict,
    created_at: str | None = None,
) -> dict:
    return {
        "type": "header",
        "version": LOG_VERSION,
        "task": task,
        "condition": condition,
        "splay_level": splay_level,
        "subject": subject,
        "seed": seed,
        "config": config,
        "created_at": created_at
        or datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


class SessionLogWriter:
    """Writes one header then appends records; keeps them in memory too."""

    def __init__(self, header: dict, path: str | Path | None = None):
        if header.get("type") != "header":
            raise ValidationError(["first record must be a header"])
        self.records: list[dict] = []
        self._fh: io.TextIOBase | None = None
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w")
        self._emit(header)

    def write(self, record: dict) -> None:
        rtype = record.get("type")
        if rtype not in RECORD_TYPES or rtype == "header":
            raise ValidationError([f"bad record type {rtype!r}"])
        if "t" not in record:
            raise ValidationError([f"record {rtype!r} missing timestamp"])
        self._emit(record)

    def _emit(self, record: dict) -> None:
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(to_json(record) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_log(source: str | Path | list[str]) -> list[dict]:
    """Parse a log from a path or a list of JSONL lines."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        lines = Path(source).read_text().splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = list(source)
    records = []
    for i, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValidationError([f"line {i}: not valid JSON ({exc})"]) from None
    return records


def validate_log(records: list[dict]) -> list[str]:
    """Schema check; returns an itemized list of problems (empty = valid)."""
    errors: list[str] = []
    if not records:
        return ["log is empty"]
    header = records[0]
    if header.get("type") != "header":
        errors.append("first record is not a header")
    else:
        if header.get("version") != LOG_VERSION:
            errors.append(f"unsupported log version {header.get('version')!r}")
        for field in ("task", "condition", "splay_level", "subject", "seed", "config"):
            if field not in header:
                errors.append(f"header missing {field!r}")
    last_t = None
    for i, record in enumerate(records[1:], start=2):
        rtype = record.get("type")
        if rtype not in RECORD_TYPES:
            errors.append(f"record {i}: unknown type {rtype!r}")
            continue
        if rtype == "header":
            errors.append(f"record {i}: duplicate header")
            continue
        t = record.get("t")
        if not isinstance(t, (int, float)):
            errors.append(f"record {i}: missing or non-numeric t")
            continue
        if last_t is not None and t < last_t - 1e-9:
            errors.append(f"record {i}: timestamp {t} goes backwards")
        last_t = t
        for field in _REQUIRED_FIELDS.get(rtype, ()):
            if field not in record:
                errors.append(f"record {i}: {rtype} missing {field!r}")
    return errors


def strip_wall_clock(records: list[dict]) -> list[dict]:
    """Copy of the records with wall-clock metadata removed (for byte
    comparison between runs)."""
    out = []
    for record in records:
        if record.get("type") == "header":
            record = {k: v for k, v in record.items() if k != "created_at"}
        out.append(record)
    return out
