"""Seeded generator of skill-graded synthetic sessions with planted signals.

Each session gets an integer score 1..10 and motion whose statistics encode
it: task duration shrinks with score, hand jitter shrinks with score, and a
tremor burst inside a fixed mid-task window shrinks with score. The tremor is
a "spread" oscillation — keypoints breathe around the hand center, which
leaves bounding-box centers (and therefore every center-derived global
statistic) untouched. Only the per-frame channels see it, which gives
attention-localization experiments an unambiguous, purely temporal signal.

Hands follow smooth random splines; tools track the hands or sit parked;
boxes derive from keypoint extents so box and keypoint channels stay
mutually consistent. Detection dropout plants short gaps for the
interpolation path and longer out-of-frame episodes for the hands.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .data import (
    BoundingBox,
    Dataset,
    FrameObservation,
    SessionRecording,
)

# 21 keypoint offsets (wrist, palm, finger joints), symmetrized so the box
# midpoint coincides with the hand center regardless of spread.
def _hand_template() -> np.ndarray:
    rng = np.random.default_rng(12345)
    pts = [np.zeros(3)]
    for finger in range(5):
        base = np.array([0.25 + 0.1 * finger, 0.35, 0.0])
        for joint in range(4):
            pts.append(base + np.array([0.02 * finger, 0.2 * (joint + 1), 0.05 * joint]))
    arr = np.array(pts) * 0.12 + rng.normal(0, 0.004, size=(21, 3))
    arr -= (arr.min(axis=0) + arr.max(axis=0)) / 2.0  # center every axis
    return arr


_TEMPLATE = _hand_template()


@dataclass
class GeneratorConfig:
    n_sessions: int = 200
    fps: float = 30.0
    simulator: str = "suturing"
    seed: int = 0
    # score -> mean duration in frames, linear between the two anchors
    frames_at_score1: float = 420.0
    frames_at_score10: float = 190.0
    duration_jitter: float = 0.06  # lognormal sigma on the duration
    min_frames: int = 60
    # score -> hand acceleration-noise scale, linear, non-increasing
    jitter_at_score1: float = 0.004
    jitter_at_score10: float = 0.001
    # gross hand travel: scales the spline control-point spread
    motion_scale: float = 1.0
    # per-session random hand size factor: 1 +- hand_scale_jitter
    hand_scale_jitter: float = 0.1
    # planted event: spread-tremor amplitude inside the window, non-increasing
    event_fraction: float = 0.15  # window width as a fraction of the session
    tremor_at_score1: float = 0.35
    tremor_at_score10: float = 0.03
    tremor_freq_hz: float = 3.0
    # score-independent slow "breathing" of the hand spread over the whole
    # session; rides on the same channels as the tremor so averaging over
    # time cannot separate the two — only localization can
    distractor_amplitude: float = 0.0
    distractor_freq_hz: float = 0.15
    # short score-independent tremor bursts outside the event window; they
    # make whole-video averages of tremor energy uninformative, so only a
    # model that singles out the sustained event can read the score
    decoy_count: int = 0
    decoy_len_range: tuple[int, int] = (4, 10)
    decoy_amp_range: tuple[float, float] = (0.3, 0.9)
    # detection dropout
    dropout_rate: float = 0.02  # iid per object-frame
    gap_start_rate: float = 0.003  # hands: chance per frame to start an episode
    gap_mean_len: float = 8.0

    def validate(self) -> None:
        if self.n_sessions < 1:
            raise ValueError("n_sessions must be >= 1")
        if self.frames_at_score1 <= self.frames_at_score10:
            raise ValueError("duration mapping must be strictly decreasing in score")
        if self.jitter_at_score1 < self.jitter_at_score10:
            raise ValueError("jitter mapping must be non-increasing in score")
        if self.tremor_at_score1 < self.tremor_at_score10:
            raise ValueError("tremor mapping must be non-increasing in score")
        if not 0.0 < self.event_fraction < 1.0:
            raise ValueError("event_fraction must be in (0, 1)")

    def mean_frames(self, score: int) -> float:
        return self.frames_at_score1 + (self.frames_at_score10 - self.frames_at_score1) * (score - 1) / 9.0

    def jitter_scale(self, score: int) -> float:
        return self.jitter_at_score1 + (self.jitter_at_score10 - self.jitter_at_score1) * (score - 1) / 9.0

    def tremor_amplitude(self, score: int) -> float:
        return self.tremor_at_score1 + (self.tremor_at_score10 - self.tremor_at_score1) * (score - 1) / 9.0


def temporal_focus_config(n_sessions: int = 64, seed: int = 0) -> GeneratorConfig:
    """Variant where the planted event is essentially the only signal.

    Durations barely vary, jitter is score-independent, and every
    center-derived global statistic is blind to the spread tremor by
    construction, so a model can only explain the scores through the temporal
    branch. A strong slow breathing distractor rides on the tremor channels
    for the whole session, which makes time-averaged readouts noisy and
    rewards attention that actually finds the event window. Used by the
    attention-localization experiments.
    """
    return GeneratorConfig(
        n_sessions=n_sessions,
        seed=seed,
        frames_at_score1=301.0,
        frames_at_score10=300.0,
        duration_jitter=0.03,
        jitter_at_score1=0.001,
        jitter_at_score10=0.001,
        motion_scale=0.05,
        hand_scale_jitter=0.0,
        tremor_at_score1=0.7,
        tremor_at_score10=0.2,
        decoy_count=5,
        dropout_rate=0.0,
        gap_start_rate=0.0,
    )


def _smooth_path(
    rng: np.random.Generator, t: int, base_xy: tuple[float, float], jitter: float, motion_scale: float = 1.0
) -> np.ndarray:
    """Spline through random control points plus leaky-integrated accel noise."""
    n_ctrl = 8
    knots = np.linspace(0, t - 1, n_ctrl)
    m = motion_scale
    ctrl = np.stack(
        [
            base_xy[0] + rng.uniform(-0.10 * m, 0.10 * m, n_ctrl),
            0.5 + rng.uniform(-0.12 * m, 0.12 * m, n_ctrl),
            0.5 + rng.uniform(-0.05 * m, 0.05 * m, n_ctrl),
        ],
        axis=1,
    )
    path = CubicSpline(knots, ctrl, axis=0)(np.arange(t))
    accel = jitter * rng.standard_normal((t, 3))
    vel = np.zeros(3)
    pos = np.zeros(3)
    for i in range(t):
        vel = 0.85 * vel + accel[i]
        pos = 0.85 * pos + vel
        path[i] += pos
    return path


def _box_from_points(xy: np.ndarray, margin: float = 0.02) -> BoundingBox:
    lo = xy.min(axis=0) - margin
    hi = xy.max(axis=0) + margin
    c = (lo + hi) / 2.0
    size = hi - lo
    return BoundingBox(
        xc=float(np.clip(c[0], 0.0, 1.0)),
        yc=float(np.clip(c[1], 0.0, 1.0)),
        w=float(np.clip(size[0], 0.01, 1.0)),
        h=float(np.clip(size[1], 0.01, 1.0)),
    )


def _center_box(x: float, y: float, w: float, h: float) -> BoundingBox:
    return BoundingBox(
        xc=float(np.clip(x, 0.0, 1.0)), yc=float(np.clip(y, 0.0, 1.0)),
        w=float(np.clip(w, 0.01, 1.0)), h=float(np.clip(h, 0.01, 1.0)),
    )


def _dropout_mask(rng: np.random.Generator, t: int, rate: float, gap_start: float = 0.0, gap_mean: float = 0.0) -> np.ndarray:
    """True where the detection is present."""
    present = rng.random(t) >= rate
    if gap_start > 0:
        i = 0
        while i < t:
            if rng.random() < gap_start:
                gap = 1 + int(rng.geometric(1.0 / gap_mean)) if gap_mean > 1 else 1
                present[i : i + gap] = False
                i += gap
            i += 1
    return present


def _generate_session(cfg: GeneratorConfig, index: int, seed_seq: np.random.SeedSequence) -> tuple[SessionRecording, dict]:
    rng = np.random.default_rng(seed_seq)
    score = int(rng.integers(1, 11))
    t = max(cfg.min_frames, int(round(cfg.mean_frames(score) * np.exp(rng.normal(0.0, cfg.duration_jitter)))))
    tau = np.arange(t) / cfg.fps

    jitter = cfg.jitter_scale(score)
    left = _smooth_path(rng, t, (0.35, 0.5), jitter, cfg.motion_scale)
    right = _smooth_path(rng, t, (0.65, 0.5), jitter, cfg.motion_scale)

    # planted event window: centered, fixed fraction of the session
    width = max(1, int(round(cfg.event_fraction * t)))
    start = (t - width) // 2
    end = start + width
    amp = cfg.tremor_amplitude(score)
    # tremor segments: the score-coded event window plus any score-independent
    # decoy bursts placed clear of it
    segments = [(start, end, amp)]
    halo = 12
    for _ in range(cfg.decoy_count):
        dlen = int(rng.integers(cfg.decoy_len_range[0], cfg.decoy_len_range[1] + 1))
        damp = rng.uniform(*cfg.decoy_amp_range)
        for _attempt in range(20):
            pos = int(rng.integers(0, max(1, t - dlen)))
            if pos + dlen <= start - halo or pos >= end + halo:
                segments.append((pos, pos + dlen, damp))
                break

    # zero-mean oscillation: the tremor leaves every time-averaged quantity
    # untouched and is only visible to models that look at local dynamics
    tremor = np.zeros(t)
    for s0, s1, a in segments:
        seg = np.arange(s0, s1)
        tremor[seg] += a * np.sin(2 * np.pi * cfg.tremor_freq_hz * tau[seg] + rng.uniform(0, 2 * np.pi))

    spread = {}
    z_extra = {}
    for hand in ("left_hand", "right_hand"):
        # slow score-independent breathing on the same channels as the tremor
        breath = cfg.distractor_amplitude * np.sin(
            2 * np.pi * cfg.distractor_freq_hz * tau + rng.uniform(0, 2 * np.pi)
        )
        # spread component: keypoints breathe around the hand center (x, y)
        spread[hand] = np.clip(1.0 + breath + tremor, 0.3, None)
        # rigid depth component: the whole hand moves in z, which no bounding
        # box (and hence no center-derived global statistic) can see
        z = 0.3 * cfg.distractor_amplitude * np.sin(
            2 * np.pi * cfg.distractor_freq_hz * tau + rng.uniform(0, 2 * np.pi)
        )
        z_extra[hand] = z + 0.25 * tremor

    hand_scale = 1.0 + rng.uniform(-cfg.hand_scale_jitter, cfg.hand_scale_jitter)
    present = {
        "left_hand": _dropout_mask(rng, t, cfg.dropout_rate, cfg.gap_start_rate, cfg.gap_mean_len),
        "right_hand": _dropout_mask(rng, t, cfg.dropout_rate, cfg.gap_start_rate, cfg.gap_mean_len),
        "forceps": _dropout_mask(rng, t, cfg.dropout_rate),
        "needle_driver": _dropout_mask(rng, t, cfg.dropout_rate),
        "scissors": _dropout_mask(rng, t, cfg.dropout_rate),
        "simulator": np.ones(t, dtype=bool),
    }

    tool_noise = 0.004
    forceps_path = right[:, :2] + np.array([0.03, 0.08]) + tool_noise * rng.standard_normal((t, 2)).cumsum(axis=0) * 0.05
    driver_path = left[:, :2] + np.array([-0.03, 0.08]) + tool_noise * rng.standard_normal((t, 2)).cumsum(axis=0) * 0.05
    scissors_xy = np.array([0.82, 0.85]) + 0.002 * rng.standard_normal((t, 2))

    frames: list[FrameObservation] = []
    for i in range(t):
        boxes: dict[str, BoundingBox | None] = {}
        left_pose = right_pose = None
        for hand, wrist in (("left_hand", left), ("right_hand", right)):
            if not present[hand][i]:
                boxes[hand] = None
                continue
            pose = wrist[i] + hand_scale * spread[hand][i] * _TEMPLATE
            pose[:, 2] += z_extra[hand][i]
            boxes[hand] = _box_from_points(pose[:, :2])
            if hand == "left_hand":
                left_pose = pose
            else:
                right_pose = pose
        boxes["forceps"] = (
            _center_box(forceps_path[i, 0], forceps_path[i, 1], 0.06, 0.05)
            if present["forceps"][i] else None
        )
        boxes["needle_driver"] = (
            _center_box(driver_path[i, 0], driver_path[i, 1], 0.06, 0.05)
            if present["needle_driver"][i] else None
        )
        boxes["scissors"] = (
            _center_box(scissors_xy[i, 0], scissors_xy[i, 1], 0.05, 0.04)
            if present["scissors"][i] else None
        )
        boxes["simulator"] = _center_box(0.5, 0.62, 0.5, 0.35)
        frames.append(FrameObservation(boxes=boxes, left_pose=left_pose, right_pose=right_pose))

    session = SessionRecording(
        session_id=f"synth-{index:04d}",
        simulator=cfg.simulator,
        fps=cfg.fps,
        frames=frames,
        expert_score=score,
    )
    truth = {
        "score": score,
        "frames": t,
        "event_start": int(start),
        "event_end": int(end),  # exclusive
        "tremor_amplitude": float(amp),
        "jitter_scale": float(jitter),
        "duration_s": t / cfg.fps,
    }
    return session, truth


def generate(cfg: GeneratorConfig | None = None) -> tuple[Dataset, dict]:
    """Produce a dataset plus its ground-truth sidecar. Deterministic in seed."""
    cfg = cfg or GeneratorConfig()
    cfg.validate()
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_sessions)
    sessions = []
    truths = {}
    for i, child in enumerate(children):
        s, truth = _generate_session(cfg, i, child)
        sessions.append(s)
        truths[s.session_id] = truth
    sidecar = {"seed": cfg.seed, "config": asdict(cfg), "sessions": truths}
    return Dataset(sessions), sidecar
