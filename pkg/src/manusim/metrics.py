"""Session-log analysis: press segmentation, displacement rates, usage.

Works on parsed session logs (lists of record dicts).  Conditions and
tasks are free-form strings in the logs; the canonical study values are
tasks {typing, piano} and conditions {no_splay_no_wrist, splay_only,
full}.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .hand import JointId, PRESSING_DIGITS

TASKS = ("typing", "piano")
CONDITIONS = ("no_splay_no_wrist", "splay_only", "full")
# the baseline condition pins the splay selector at level 1
CONDITION_FIXED_SPLAY = {"no_splay_no_wrist": 1}

DISPLACEMENT_MARKERS = ("elbow", "wrist")


@dataclass(frozen=True)
class PressInterval:
    """One key press attributed to a digit, from command dispatch to release."""

    key: str
    finger: str
    t_start: float
    t_end: float
    press_t: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class Session:
    header: dict
    records: list[dict]

    @classmethod
    def from_records(cls, records: list[dict]) -> "Session":
        if not records or records[0].get("type") != "header":
            raise ValidationError(["session must start with a header record"])
        return cls(records[0], records[1:])

    @property
    def task(self) -> str:
        return str(self.header.get("task", ""))

    @property
    def condition(self) -> str:
        return str(self.header.get("condition", ""))

    @property
    def splay_level(self) -> int:
        return int(self.header.get("splay_level", 1))


def segment_presses(session: Session) -> tuple[list[PressInterval], int]:
    """Extract press intervals from a session.

    An interval starts at the dispatch time of the last command frame that
    flagged the pressing digit's slot before the press event, and ends at
    the matching release.  Presses with no preceding command or no release
    are dropped; the second return value counts the drops.
    """
    slot_by_finger = {d.key: d.slot for d in PRESSING_DIGITS}
    last_command_t: dict[int, float] = {}
    open_presses: dict[tuple[str, str], tuple[float, float]] = {}
    intervals: list[PressInterval] = []
    dropped = 0

    for record in session.records:
        rtype = record.get("type")
        if rtype == "command":
            flags = int(record["frame"]["flags"])
            for slot in range(7):
                if flags >> slot & 1:
                    last_command_t[slot] = float(record["t"])
        elif rtype == "key":
            key = str(record["key"])
            finger = str(record["finger"])
            t = float(record["t"])
            if record["action"] == "press":
                slot = slot_by_finger.get(finger)
                if slot is None or slot not in last_command_t:
                    dropped += 1
                    continue
                open_presses[(key, finger)] = (last_command_t[slot], t)
            elif record["action"] == "release":
                started = open_presses.pop((key, finger), None)
                if started is None:
                    continue
                t_start, press_t = started
                intervals.append(PressInterval(key, finger, t_start, t, press_t))
    dropped += len(open_presses)
    return intervals, dropped


def _marker_track(session: Session, name: str) -> tuple[np.ndarray, np.ndarray]:
    times = []
    points = []
    for record in session.records:
        if record.get("type") != "marker":
            continue
        markers = record.get("markers", {})
        if name in markers:
            times.append(float(record["t"]))
            points.append([float(v) for v in markers[name]])
    return np.array(times), np.array(points)


def displacement_rate(
    session: Session,
    intervals: list[PressInterval],
    marker_names: tuple[str, ...] = DISPLACEMENT_MARKERS,
) -> tuple[list[float], int]:
    """Arm path length per second over each press interval.

    Sums the polyline lengths of the designated markers (mm in, meters
    out) and divides by the interval duration.  Intervals with fewer than
    two marker samples are excluded and counted.
    """
    tracks = {name: _marker_track(session, name) for name in marker_names}
    rates: list[float] = []
    excluded = 0
    for interval in intervals:
        if interval.duration <= 0:
            excluded += 1
            continue
        total_mm = 0.0
        samples_ok = True
        for name in marker_names:
            times, points = tracks[name]
            if len(times) == 0:
                samples_ok = False
                break
            mask = (times >= interval.t_start - 1e-9) & (times <= interval.t_end + 1e-9)
            pts = points[mask]
            if len(pts) < 2:
                samples_ok = False
                break
            total_mm += float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
        if not samples_ok:
            excluded += 1
            continue
        rates.append(total_mm / 1000.0 / interval.duration)
    return rates, excluded


@dataclass
class HeatmapResult:
    fingers: list[str]
    keys: list[str]
    counts: np.ndarray          # fingers x keys press counts
    normalized: np.ndarray      # per-key share; columns sum to 1 where used

    def to_dict(self) -> dict:
        return {
            "fingers": self.fingers,
            "keys": self.keys,
            "counts": self.counts.astype(int).tolist(),
            "normalized": [[round(v, 6) for v in row] for row in self.normalized],
        }


def usage_heatmap(sessions_intervals: list[list[PressInterval]]) -> HeatmapResult:
    """Finger-by-key press counts pooled across sessions, plus the
    per-key distribution over fingers."""
    fingers = [d.key for d in PRESSING_DIGITS]
    keys = sorted({iv.key for ivs in sessions_intervals for iv in ivs})
    counts = np.zeros((len(fingers), len(keys)))
    for intervals in sessions_intervals:
        for iv in intervals:
            if iv.finger not in fingers:
                continue
            counts[fingers.index(iv.finger), keys.index(iv.key)] += 1
    normalized = np.zeros_like(counts)
    sums = counts.sum(axis=0)
    for col, total in enumerate(sums):
        if total > 0:
            normalized[:, col] = counts[:, col] / total
    return HeatmapResult(fingers, keys, counts, normalized)


def splay_stats(sessions: list[Session]) -> dict[tuple[str, str], dict]:
    """Mean and standard error of the selected splay level per
    (task, condition).  The no-splay baseline always contributes level 1.
    Standard error uses the sample standard deviation (ddof=1); a single
    session reports SE 0."""
    groups: dict[tuple[str, str], list[float]] = {}
    for session in sessions:
        level = CONDITION_FIXED_SPLAY.get(session.condition, session.splay_level)
        groups.setdefault((session.task, session.condition), []).append(float(level))
    out = {}
    for group, levels in groups.items():
        arr = np.array(levels)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        out[group] = {"mean": float(arr.mean()), "se": se, "n": len(arr)}
    return out


def summarize(sessions: list[Session]) -> dict:
    """Cross-session study summary: per-(task, condition) press counts,
    mean displacement rates, splay stats, and the pooled usage heatmap."""
    per_group: dict[tuple[str, str], dict] = {}
    all_intervals: list[list[PressInterval]] = []
    for session in sessions:
        intervals, dropped = segment_presses(session)
        rates, excluded = displacement_rate(session, intervals)
        all_intervals.append(intervals)
        group = per_group.setdefault(
            (session.task, session.condition),
            {"presses": 0, "dropped": 0, "rates": [], "excluded": 0, "sessions": 0},
        )
        group["presses"] += len(intervals)
        group["dropped"] += dropped
        group["rates"].extend(rates)
        group["excluded"] += excluded
        group["sessions"] += 1

    heatmap = usage_heatmap(all_intervals)
    splay = splay_stats(sessions)
    groups_out = {}
    for (task, condition), data in sorted(per_group.items()):
        rates = data["rates"]
        groups_out[f"{task}/{condition}"] = {
            "sessions": data["sessions"],
            "presses": data["presses"],
            "dropped": data["dropped"],
            "displacement_rate_mean_m_per_s": (
                float(np.mean(rates)) if rates else None
            ),
            "displacement_intervals": len(rates),
            "displacement_excluded": data["excluded"],
            "splay": splay.get((task, condition)),
        }
    return {"groups": groups_out, "heatmap": heatmap.to_dict()}


def write_pgm(matrix: np.ndarray, path) -> None:
    """Write a matrix as a plain-text PGM image, scaled to the max cell."""
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2:
        raise DomainError("PGM output needs a 2-D matrix")
    peak = float(arr.max()) if arr.size else 0.0
    scaled = (arr / peak * 255).astype(int) if peak > 0 else arr.astype(int)
    lines = [f"P2", f"{arr.shape[1]} {arr.shape[0]}", "255"]
    for row in scaled:
        lines.append(" ".join(str(int(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
