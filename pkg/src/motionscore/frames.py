"""Per-frame feature extraction: gap filling, smoothing, and the 150xT matrix.

Each session becomes a dense 150 x T array: 6 object boxes x 4 coordinates
(xc, yc, w, h), then 21 left-hand keypoints x 3, then 21 right-hand keypoints
x 3. Channels are processed independently: short detection gaps are linearly
interpolated, residual gaps are filled with the nearest observed value (0 if
the channel was never observed), and the result is smoothed with a
Savitzky-Golay filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import NUM_KEYPOINTS, OBJECT_CLASSES, SessionRecording

NUM_CHANNELS = 150  # 6*4 box channels + 2*21*3 keypoint channels

_BOX_COORDS = ("xc", "yc", "w", "h")
_AXES = ("x", "y", "z")


@dataclass
class PreprocessConfig:
    """Knobs for the per-channel pipeline.

    smooth_boxes / smooth_keypoints exist because it is a modelling choice
    whether smoothing applies to box channels, keypoint channels, or both;
    both default to on.
    """

    max_gap: int = 10
    window: int = 9
    polyorder: int = 3
    smooth_boxes: bool = True
    smooth_keypoints: bool = True


def channel_layout() -> list[str]:
    """Names of the 150 rows, in their fixed, release-stable order."""
    names = [f"{obj}_box_{c}" for obj in OBJECT_CLASSES for c in _BOX_COORDS]
    for hand in ("left_hand", "right_hand"):
        names += [f"{hand}_kp{j}_{a}" for j in range(NUM_KEYPOINTS) for a in _AXES]
    return names


def interpolate_gaps(values: np.ndarray, max_gap: int = 10) -> np.ndarray:
    """Linearly fill internal NaN runs of length <= max_gap.

    A run qualifies only if bounded by finite samples on both sides; longer
    runs and runs touching either end of the track are left untouched.
    Idempotent: a second pass is a no-op.
    """
    if max_gap < 0:
        raise ValueError("max_gap must be >= 0")
    v = np.asarray(values, dtype=float).copy()
    missing = ~np.isfinite(v)
    if not missing.any():
        return v
    n = len(v)
    t = 0
    while t < n:
        if not missing[t]:
            t += 1
            continue
        start = t
        while t < n and missing[t]:
            t += 1
        end = t  # run is [start, end)
        if start == 0 or end == n or (end - start) > max_gap:
            continue
        lo, hi = v[start - 1], v[end]
        steps = end - start + 1
        for k in range(start, end):
            frac = (k - start + 1) / steps
            v[k] = lo + (hi - lo) * frac
    return v


def fill_residual_gaps(values: np.ndarray) -> np.ndarray:
    """Replace remaining NaNs with the nearest observed value.

    Internal/trailing gaps take the last observed value (forward fill);
    a leading gap takes the first observed value, which avoids inventing a
    jump from an arbitrary constant. A channel with no observations at all
    becomes all zeros; the out-of-frame global statistic preserves the
    absence signal.
    """
    v = np.asarray(values, dtype=float).copy()
    finite = np.isfinite(v)
    if not finite.any():
        return np.zeros_like(v)
    idx = np.where(finite, np.arange(len(v)), -1)
    last = np.maximum.accumulate(idx)
    first_obs = np.argmax(finite)
    out = np.where(last >= 0, v[np.maximum(last, 0)], v[first_obs])
    return out


def _savgol_center_coeffs(window: int, polyorder: int) -> np.ndarray:
    offsets = np.arange(window) - window // 2
    a = np.vander(offsets, polyorder + 1, increasing=True)
    # Row of the least-squares projection that evaluates the fit at offset 0.
    return (np.linalg.inv(a.T @ a) @ a.T)[0]


def savitzky_golay(values: np.ndarray, window: int = 9, polyorder: int = 3) -> np.ndarray:
    """Least-squares polynomial smoothing with truncated-window boundaries.

    Parameters
    ----------
    values : 1-D array with no missing samples (run the gap fills first).
    window : odd window length, <= len(values).
    polyorder : polynomial degree, < window.

    Each interior sample is replaced by the value at the window center of the
    degree-`polyorder` least-squares fit over the centered window. Near the
    edges the window is truncated to the available samples and the fit degree
    is capped at (number of samples - 1); no mirrored or extrapolated data is
    invented. Sampled polynomials of degree <= polyorder are reproduced
    exactly (up to rounding) everywhere, including the boundaries.
    """
    v = np.asarray(values, dtype=float)
    if window % 2 != 1 or window < 1:
        raise ValueError("window must be a positive odd integer")
    if polyorder >= window:
        raise ValueError("polyorder must be < window")
    if not np.all(np.isfinite(v)):
        raise ValueError("savitzky_golay requires a fully observed track")
    n = len(v)
    if n < window:
        raise ValueError(
            f"track of length {n} is shorter than the smoothing window {window}; "
            f"need at least {window} frames"
        )
    half = window // 2
    out = np.empty_like(v)
    coeffs = _savgol_center_coeffs(window, polyorder)
    # Interior: plain correlation with the center-evaluation coefficients.
    if n >= window:
        interior = np.convolve(v, coeffs[::-1], mode="valid")
        out[half : n - half] = interior
    # Boundaries: refit on the truncated window.
    for t in list(range(half)) + list(range(n - half, n)):
        lo = max(0, t - half)
        hi = min(n, t + half + 1)
        offs = np.arange(lo, hi) - t
        deg = min(polyorder, hi - lo - 1)
        a = np.vander(offs, deg + 1, increasing=True)
        sol, *_ = np.linalg.lstsq(a, v[lo:hi], rcond=None)
        out[t] = sol[0]
    return out


def _box_tracks(s: SessionRecording, obj: str) -> np.ndarray:
    t = len(s.frames)
    arr = np.full((4, t), np.nan)
    for i, fr in enumerate(s.frames):
        box = fr.box(obj)
        if box is not None:
            arr[:, i] = (box.xc, box.yc, box.w, box.h)
    return arr


def _pose_tracks(s: SessionRecording, hand: str) -> np.ndarray:
    t = len(s.frames)
    arr = np.full((NUM_KEYPOINTS * 3, t), np.nan)
    attr = "left_pose" if hand == "left_hand" else "right_pose"
    for i, fr in enumerate(s.frames):
        pose = getattr(fr, attr)
        if pose is not None:
            arr[:, i] = np.asarray(pose, dtype=float).reshape(-1)
    return arr


def raw_channel_matrix(s: SessionRecording) -> np.ndarray:
    """150 x T matrix of raw samples with NaN where nothing was detected."""
    parts = [_box_tracks(s, obj) for obj in OBJECT_CLASSES]
    parts.append(_pose_tracks(s, "left_hand"))
    parts.append(_pose_tracks(s, "right_hand"))
    return np.vstack(parts)


def build_feature_matrix(s: SessionRecording, cfg: PreprocessConfig | None = None) -> np.ndarray:
    """Run the full per-channel pipeline and return the dense 150 x T matrix.

    Deterministic: identical session + config give a bit-identical result.
    Raises ValueError if the session is shorter than the smoothing window.
    """
    cfg = cfg or PreprocessConfig()
    t = len(s.frames)
    if t < cfg.window:
        raise ValueError(
            f"session {s.session_id!r} has {t} frames but the smoothing window "
            f"is {cfg.window}; record at least {cfg.window} frames or shrink the window"
        )
    raw = raw_channel_matrix(s)
    out = np.empty_like(raw)
    for row in range(raw.shape[0]):
        track = fill_residual_gaps(interpolate_gaps(raw[row], cfg.max_gap))
        is_box = row < 24
        if (is_box and cfg.smooth_boxes) or (not is_box and cfg.smooth_keypoints):
            track = savitzky_golay(track, cfg.window, cfg.polyorder)
        out[row] = track
    return out
