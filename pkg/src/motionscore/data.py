"""Session data model, line-delimited JSON storage, and validation.

A recording is a sequence of per-frame detections: up to six object bounding
boxes (normalized to the frame, so coordinates live in [0, 1]) and up to two
hands, each given as 21 ordered 3D keypoints in camera coordinates. A missing
detection is an explicit null, never a zero box, so downstream gap logic can
tell "static" apart from "absent".

On-disk format (one JSON object per line):

    {"session_id": str, "simulator": str, "fps": float,
     "expert_score": int or null,
     "frames": [{"boxes": {class: [xc, yc, w, h] or null, ...},
                 "left_pose": [[x, y, z] * 21] or null,
                 "right_pose": [[x, y, z] * 21] or null}, ...]}

Field names are normative. Unknown fields are rejected in strict mode and
ignored with a warning otherwise.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OBJECT_CLASSES = (
    "left_hand",
    "right_hand",
    "forceps",
    "needle_driver",
    "scissors",
    "simulator",
)

SIMULATORS = ("suturing", "knot_tying", "fascial_closure")

NUM_KEYPOINTS = 21

_SESSION_KEYS = {"session_id", "simulator", "fps", "expert_score", "frames"}
_FRAME_KEYS = {"boxes", "left_pose", "right_pose"}


class SessionParseError(ValueError):
    """Malformed record; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class SessionValidationError(ValueError):
    """A session violated a model invariant."""

    def __init__(self, session_id: str, violations: list[str]):
        self.session_id = session_id
        self.violations = violations
        super().__init__(
            f"session {session_id!r}: " + "; ".join(violations)
        )


@dataclass
class BoundingBox:
    """Axis-aligned box: center (xc, yc) and size (w, h), all frame fractions."""

    xc: float
    yc: float
    w: float
    h: float

    def center(self) -> tuple[float, float]:
        return (self.xc, self.yc)

    def as_list(self) -> list[float]:
        return [self.xc, self.yc, self.w, self.h]


# A hand pose is a (21, 3) float array of ordered keypoints in camera frame.
HandPose = np.ndarray


@dataclass
class FrameObservation:
    """Detections for one frame; absent objects simply have no entry / None."""

    boxes: dict[str, BoundingBox | None] = field(default_factory=dict)
    left_pose: HandPose | None = None
    right_pose: HandPose | None = None

    def box(self, obj: str) -> BoundingBox | None:
        return self.boxes.get(obj)


@dataclass
class SessionRecording:
    """One recorded task attempt."""

    session_id: str
    simulator: str
    fps: float
    frames: list[FrameObservation]
    expert_score: int | None = None

    @property
    def num_frames(self) -> int:
        return len(self.frames)


@dataclass
class Dataset:
    """A list of sessions from a single simulator with unique ids."""

    sessions: list[SessionRecording]

    @property
    def simulator(self) -> str | None:
        return self.sessions[0].simulator if self.sessions else None

    def __len__(self) -> int:
        return len(self.sessions)

    def __iter__(self):
        return iter(self.sessions)

    def by_id(self, session_id: str) -> SessionRecording:
        for s in self.sessions:
            if s.session_id == session_id:
                return s
        raise KeyError(session_id)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_box(box: BoundingBox, where: str) -> list[str]:
    out = []
    for name in ("xc", "yc", "w", "h"):
        v = getattr(box, name)
        if not _finite(v):
            out.append(f"{where}: non-finite {name}")
    if out:
        return out
    if not (0.0 <= box.xc <= 1.0 and 0.0 <= box.yc <= 1.0):
        out.append(f"{where}: center outside [0,1]")
    if not (0.0 < box.w <= 1.0 and 0.0 < box.h <= 1.0):
        out.append(f"{where}: degenerate or oversized box (w,h must be in (0,1])")
    return out


def validate_pose(pose: HandPose, where: str) -> list[str]:
    arr = np.asarray(pose, dtype=float)
    if arr.shape != (NUM_KEYPOINTS, 3):
        return [f"{where}: keypoint count/shape {arr.shape}, expected (21, 3)"]
    if not np.all(np.isfinite(arr)):
        return [f"{where}: non-finite keypoint coordinate"]
    return []


def validate_session(s: SessionRecording) -> list[str]:
    """Return all invariant violations for one session (empty list = ok)."""
    out: list[str] = []
    if not s.session_id:
        out.append("session_id: empty")
    if s.simulator not in SIMULATORS:
        out.append(f"simulator: unknown value {s.simulator!r}")
    if not (_finite(s.fps) and s.fps > 0):
        out.append("fps: must be finite and positive")
    if s.expert_score is not None:
        if not isinstance(s.expert_score, int) or not (1 <= s.expert_score <= 10):
            out.append(f"expert_score: {s.expert_score!r} outside 1..10")
    if not s.frames:
        out.append("frames: empty")
    for t, fr in enumerate(s.frames):
        for obj, box in fr.boxes.items():
            if obj not in OBJECT_CLASSES:
                out.append(f"frame {t}: unknown object class {obj!r}")
            elif box is not None:
                out.extend(validate_box(box, f"frame {t} {obj}"))
        if fr.left_pose is not None:
            out.extend(validate_pose(fr.left_pose, f"frame {t} left_pose"))
        if fr.right_pose is not None:
            out.extend(validate_pose(fr.right_pose, f"frame {t} right_pose"))
    return out


def validate_dataset(ds: Dataset) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    for s in ds.sessions:
        if s.session_id in seen:
            out.append(f"duplicate session_id {s.session_id!r}")
        seen.add(s.session_id)
    sims = {s.simulator for s in ds.sessions}
    if len(sims) > 1:
        out.append(f"mixed simulators in one dataset: {sorted(sims)}")
    return out


def _parse_pose(raw, where: str, line: int | None) -> HandPose | None:
    if raw is None:
        return None
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as e:
        raise SessionParseError(f"{where}: not a numeric array ({e})", line)
    return arr


def _parse_frame(raw: dict, idx: int, line: int | None, strict: bool) -> FrameObservation:
    if not isinstance(raw, dict):
        raise SessionParseError(f"frame {idx}: expected object", line)
    _check_keys(raw, _FRAME_KEYS, f"frame {idx}", line, strict)
    boxes: dict[str, BoundingBox | None] = {}
    for obj, vals in (raw.get("boxes") or {}).items():
        if vals is None:
            boxes[obj] = None
            continue
        if not isinstance(vals, (list, tuple)) or len(vals) != 4:
            raise SessionParseError(
                f"frame {idx} {obj}: box must be [xc, yc, w, h] or null", line
            )
        boxes[obj] = BoundingBox(*[float(v) for v in vals])
    return FrameObservation(
        boxes=boxes,
        left_pose=_parse_pose(raw.get("left_pose"), f"frame {idx} left_pose", line),
        right_pose=_parse_pose(raw.get("right_pose"), f"frame {idx} right_pose", line),
    )


def _check_keys(raw: dict, allowed: set, where: str, line: int | None, strict: bool):
    unknown = set(raw) - allowed
    if not unknown:
        return
    msg = f"{where}: unknown field(s) {sorted(unknown)}"
    if strict:
        raise SessionParseError(msg, line)
    warnings.warn(msg, stacklevel=2)


def parse_session(raw: dict, line: int | None = None, strict: bool = False) -> SessionRecording:
    """Build a SessionRecording from one decoded JSON object (no validation)."""
    if not isinstance(raw, dict):
        raise SessionParseError("record is not a JSON object", line)
    _check_keys(raw, _SESSION_KEYS, "session", line, strict)
    missing = {"session_id", "simulator", "fps", "frames"} - set(raw)
    if missing:
        raise SessionParseError(f"missing field(s) {sorted(missing)}", line)
    frames_raw = raw["frames"]
    if not isinstance(frames_raw, list):
        raise SessionParseError("frames: expected a list", line)
    score = raw.get("expert_score")
    if score is not None:
        if isinstance(score, float) and score.is_integer():
            score = int(score)
        if not isinstance(score, int):
            raise SessionParseError("expert_score: expected integer or null", line)
    return SessionRecording(
        session_id=str(raw["session_id"]),
        simulator=str(raw["simulator"]),
        fps=float(raw["fps"]),
        frames=[_parse_frame(f, i, line, strict) for i, f in enumerate(frames_raw)],
        expert_score=score,
    )


def session_to_dict(s: SessionRecording) -> dict:
    frames = []
    for fr in s.frames:
        frames.append(
            {
                "boxes": {
                    obj: (None if box is None else box.as_list())
                    for obj, box in fr.boxes.items()
                },
                "left_pose": None if fr.left_pose is None else np.asarray(fr.left_pose).tolist(),
                "right_pose": None if fr.right_pose is None else np.asarray(fr.right_pose).tolist(),
            }
        )
    return {
        "session_id": s.session_id,
        "simulator": s.simulator,
        "fps": s.fps,
        "expert_score": s.expert_score,
        "frames": frames,
    }


def load_sessions(path: str | Path, strict: bool = False) -> Dataset:
    """Load and validate a dataset.

    `path` is one line-delimited session file, or a directory of them
    (``*.jsonl``, read in sorted name order). Raises SessionParseError on
    malformed records and SessionValidationError on invariant violations.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    sessions: list[SessionRecording] = []
    for f in files:
        with open(f, "r", encoding="utf-8") as fh:
            for lineno, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                try:
                    raw = json.loads(text)
                except json.JSONDecodeError as e:
                    raise SessionParseError(f"invalid JSON ({e.msg})", lineno) from e
                s = parse_session(raw, line=lineno, strict=strict)
                violations = validate_session(s)
                if violations:
                    raise SessionValidationError(s.session_id, violations)
                sessions.append(s)
    ds = Dataset(sessions)
    problems = validate_dataset(ds)
    if problems:
        raise SessionValidationError(ds.sessions[0].session_id if ds.sessions else "?", problems)
    return ds


def save_sessions(ds: Dataset, path: str | Path) -> None:
    """Write one session per line; inverse of load_sessions for valid data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds.sessions:
            fh.write(json.dumps(session_to_dict(s)) + "\n")
