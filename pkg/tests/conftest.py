"""Shared builders for hand-rolled sessions."""

import numpy as np
import pytest

from motionscore.data import (
    OBJECT_CLASSES,
    BoundingBox,
    Dataset,
    FrameObservation,
    SessionRecording,
)


def make_pose(center=(0.5, 0.5, 0.5), scale=0.05, seed=0):
    rng = np.random.default_rng(seed)
    pose = np.asarray(center, dtype=float) + scale * rng.standard_normal((21, 3))
    return pose


def make_frame(centers=None, left_pose=None, right_pose=None, size=0.1):
    """Frame with boxes at the given {object: (xc, yc)} centers."""
    boxes = {}
    for obj, c in (centers or {}).items():
        boxes[obj] = None if c is None else BoundingBox(c[0], c[1], size, size)
    return FrameObservation(boxes=boxes, left_pose=left_pose, right_pose=right_pose)


def static_session(n_frames=20, fps=30.0, score=5, session_id="s0", simulator="suturing"):
    """Fully detected, perfectly still session."""
    centers = {obj: (0.3 + 0.08 * i, 0.5) for i, obj in enumerate(OBJECT_CLASSES)}
    pose_l = make_pose((0.3, 0.5, 0.4), seed=1)
    pose_r = make_pose((0.7, 0.5, 0.4), seed=2)
    frames = [
        make_frame(centers, left_pose=pose_l.copy(), right_pose=pose_r.copy())
        for _ in range(n_frames)
    ]
    return SessionRecording(session_id, simulator, fps, frames, expert_score=score)


def session_from_centers(center_tracks, fps=30.0, session_id="s0", score=5):
    """Session whose boxes follow per-object center tracks.

    center_tracks: {object: list of (x, y) or None}; all tracks equal length.
    """
    lengths = {len(v) for v in center_tracks.values()}
    assert len(lengths) == 1
    n = lengths.pop()
    frames = []
    for t in range(n):
        centers = {obj: track[t] for obj, track in center_tracks.items()}
        frames.append(make_frame(centers))
    return SessionRecording(session_id, "suturing", fps, frames, expert_score=score)


@pytest.fixture
def tiny_dataset():
    return Dataset([static_session(session_id="a"), static_session(session_id="b")])
