"""Video-level motion statistics: the 19 interpretable global features.

All motion statistics derive from bounding-box centers (never keypoints):
stillness and speed/acceleration for the five movable objects, out-of-frame
ratios for the two hands, task completion time, and the lag-0 correlation
between left- and right-hand speed profiles. The fixed feature order defined
by GLOBAL_FEATURE_NAMES is normative; model weights and SHAP outputs index
into it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import SessionRecording

# The simulator box is a fixture, not a moving object; it gets no motion stats.
MOVABLE_OBJECTS = ("left_hand", "right_hand", "forceps", "needle_driver", "scissors")
HANDS = ("left_hand", "right_hand")

GLOBAL_FEATURE_NAMES: tuple[str, ...] = tuple(
    [f"still_ratio_{o}" for o in MOVABLE_OBJECTS]
    + [f"mean_speed_{o}" for o in MOVABLE_OBJECTS]
    + [f"mean_accel_{o}" for o in MOVABLE_OBJECTS]
    + [f"out_of_frame_ratio_{h}" for h in HANDS]
    + ["completion_time", "interhand_correlation"]
)

NUM_GLOBAL_FEATURES = len(GLOBAL_FEATURE_NAMES)  # 19


@dataclass
class GlobalConfig:
    """still_eps is the stillness threshold, as a fraction of the normalized
    frame diagonal (sqrt(2)) travelled per frame transition."""

    still_eps: float = 0.002

    @property
    def displacement_threshold(self) -> float:
        return self.still_eps * math.sqrt(2.0)


@dataclass
class MotionSeries:
    """Per-transition kinematics of one object's box center.

    speed[t] is the center displacement between frames t and t+1 divided by
    the frame interval (frame fractions / s); accel[t] is the speed change
    between consecutive transitions divided by the frame interval. Entries are
    NaN where a detection is missing on either side.
    """

    speed: np.ndarray  # length T-1, non-negative or NaN
    accel: np.ndarray  # length T-2, signed or NaN
    fps: float

    @property
    def displacement(self) -> np.ndarray:
        return self.speed / self.fps


def box_centers(s: SessionRecording, obj: str) -> np.ndarray:
    """(T, 2) array of box centers with NaN rows where the object is absent."""
    out = np.full((len(s.frames), 2), np.nan)
    for t, fr in enumerate(s.frames):
        box = fr.box(obj)
        if box is not None:
            out[t] = box.center()
    return out


def motion_series(centers: np.ndarray, fps: float) -> MotionSeries:
    centers = np.asarray(centers, dtype=float)
    disp = np.linalg.norm(np.diff(centers, axis=0), axis=1)
    speed = disp * fps
    accel = np.diff(speed) * fps
    return MotionSeries(speed=speed, accel=accel, fps=fps)


def still_ratio(centers: np.ndarray, eps_displacement: float) -> float:
    """Fraction of the T-1 transitions that are detected on both sides and
    move the center by less than eps_displacement. Transitions with a missing
    detection count as not-still (they stay in the denominator)."""
    centers = np.asarray(centers, dtype=float)
    if centers.shape[0] < 2:
        raise ValueError("still_ratio needs at least 2 frames")
    disp = np.linalg.norm(np.diff(centers, axis=0), axis=1)
    still = np.isfinite(disp) & (disp < eps_displacement)
    return float(np.count_nonzero(still)) / float(len(disp))


def mean_speed_nonidle(series: MotionSeries, eps_displacement: float) -> float:
    """Mean speed over non-idle transitions (displacement >= eps); 0 if none.

    Transitions with a missing detection have no measurable speed and are
    excluded from the average."""
    disp = series.displacement
    mask = np.isfinite(disp) & (disp >= eps_displacement)
    if not mask.any():
        return 0.0
    return float(np.mean(series.speed[mask]))


def mean_accel_nonidle(series: MotionSeries, eps_displacement: float) -> float:
    """Mean |acceleration| over non-idle samples; 0 if none qualify.

    An acceleration sample sits between two transitions; it counts when both
    are measurable and at least one moved by >= eps (motion was happening
    around it). Magnitudes are averaged: the signed mean of accelerations is
    ~0 for any back-and-forth motion and carries no skill signal."""
    if len(series.accel) == 0:
        return 0.0
    disp = series.displacement
    nonidle = disp >= eps_displacement
    valid = np.isfinite(series.accel) & (nonidle[:-1] | nonidle[1:])
    if not valid.any():
        return 0.0
    return float(np.mean(np.abs(series.accel[valid])))


def out_of_frame_ratio(detected: np.ndarray) -> float:
    """Share of frames with no detection; `detected` is a boolean mask per frame."""
    detected = np.asarray(detected, dtype=bool)
    if detected.size == 0:
        raise ValueError("out_of_frame_ratio needs at least 1 frame")
    return float(np.count_nonzero(~detected)) / float(detected.size)


def completion_time(s: SessionRecording) -> float:
    """Task duration in seconds: frame count / fps."""
    return len(s.frames) / s.fps


def interhand_correlation(left_speed: np.ndarray, right_speed: np.ndarray) -> float:
    """Lag-0 Pearson correlation between the two hands' speed series.

    Pairs where either speed is unmeasurable are dropped. Returns 0.0 when
    fewer than 2 valid pairs remain or either series is constant (the Pearson
    denominator is undefined: no coordination evidence either way)."""
    a = np.asarray(left_speed, dtype=float)
    b = np.asarray(right_speed, dtype=float)
    if a.shape != b.shape:
        raise ValueError("speed series must have equal length")
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok], b[ok]
    if len(a) < 2:
        return 0.0
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return 0.0
    return float(np.clip(float(da @ db) / denom, -1.0, 1.0))


def build_global_vector(s: SessionRecording, cfg: GlobalConfig | None = None) -> np.ndarray:
    """All 19 statistics in GLOBAL_FEATURE_NAMES order.

    Sessions need at least 2 frames. Per-statistic failures are re-raised with
    the statistic name attached."""
    cfg = cfg or GlobalConfig()
    eps = cfg.displacement_threshold
    centers = {obj: box_centers(s, obj) for obj in MOVABLE_OBJECTS}
    series = {obj: motion_series(centers[obj], s.fps) for obj in MOVABLE_OBJECTS}
    values: list[float] = []

    def compute(name: str, fn):
        try:
            values.append(float(fn()))
        except ValueError as e:
            raise ValueError(f"{name}: {e}") from e

    for obj in MOVABLE_OBJECTS:
        compute(f"still_ratio_{obj}", lambda o=obj: still_ratio(centers[o], eps))
    for obj in MOVABLE_OBJECTS:
        compute(f"mean_speed_{obj}", lambda o=obj: mean_speed_nonidle(series[o], eps))
    for obj in MOVABLE_OBJECTS:
        compute(f"mean_accel_{obj}", lambda o=obj: mean_accel_nonidle(series[o], eps))
    for hand in HANDS:
        detected = np.isfinite(centers[hand]).all(axis=1)
        compute(f"out_of_frame_ratio_{hand}", lambda d=detected: out_of_frame_ratio(d))
    compute("completion_time", lambda: completion_time(s))
    compute(
        "interhand_correlation",
        lambda: interhand_correlation(series["left_hand"].speed, series["right_hand"].speed),
    )
    return np.array(values, dtype=float)
