"""Explainability outputs: frame-level importance and Shapley attributions.

Temporal side: the attention distribution from pooling is reported per frame,
plus the top contiguous high-importance segments. Global side: Shapley values
over the 19 interpretable features, estimated by permutation sampling with
paired background draws — for each Monte-Carlo sample a random feature
ordering and one background session are drawn, features flip from the
background value to the instance value in order, and each feature is credited
with the score change it causes. The temporal branch stays frozen at the
instance's pooled representation throughout, so attributions answer "what do
the global statistics contribute given this motion sequence".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, SessionRecording
from .frames import build_feature_matrix
from .global_stats import GLOBAL_FEATURE_NAMES, NUM_GLOBAL_FEATURES, build_global_vector
from .model import SkillModel


@dataclass
class TemporalSegment:
    start: int  # first frame index, inclusive
    end: int  # last frame index, inclusive
    mass: float  # total importance inside [start, end]


@dataclass
class TemporalReport:
    session_id: str
    fps: float
    importance: np.ndarray  # length T, >= 0, sums to 1
    segments: list[TemporalSegment]
    score: float


def top_segments(
    importance: np.ndarray, top_k: int = 3, merge_gap: int = 5, threshold_factor: float = 1.0
) -> list[TemporalSegment]:
    """Contiguous above-baseline runs, merged across short dips, ranked by mass.

    Frames with importance > threshold_factor/T seed the runs; runs separated
    by fewer than merge_gap below-threshold frames are merged; each merged
    segment is scored by its total importance (dips included) and the top_k
    heaviest are returned in rank order.
    """
    w = np.asarray(importance, dtype=float)
    t = len(w)
    above = w > threshold_factor / t
    runs: list[list[int]] = []
    i = 0
    while i < t:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < t and above[j + 1]:
            j += 1
        runs.append([i, j])
        i = j + 1
    merged: list[list[int]] = []
    for run in runs:
        if merged and run[0] - merged[-1][1] - 1 < merge_gap:
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    segments = [TemporalSegment(a, b, float(w[a : b + 1].sum())) for a, b in merged]
    segments.sort(key=lambda s: -s.mass)
    return segments[:top_k]


def temporal_report(
    s: SessionRecording, model: SkillModel, top_k: int = 3, merge_gap: int = 5
) -> TemporalReport:
    """Eval-mode frame importance for one session plus its top segments."""
    feats = build_feature_matrix(s, model.cfg.preprocess)
    gvec = build_global_vector(s, model.cfg.global_cfg)
    score, importance = model.predict_arrays(feats, gvec)
    return TemporalReport(
        session_id=s.session_id,
        fps=s.fps,
        importance=importance,
        segments=top_segments(importance, top_k=top_k, merge_gap=merge_gap),
        score=score,
    )


def write_temporal_csv(report: TemporalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "time_s", "importance"])
        for i, val in enumerate(report.importance):
            w.writerow([i, f"{i / report.fps:.6f}", f"{val:.10g}"])


@dataclass
class ShapConfig:
    n_samples: int = 2000
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class ShapAttribution:
    session_id: str
    values: np.ndarray  # (19,) signed, in units of predicted score
    std_errors: np.ndarray  # (19,) Monte-Carlo standard errors
    base_value: float  # mean model output over the background
    instance_values: np.ndarray  # raw global features of the instance
    prediction: float  # model output at the instance


def shap_from_arrays(
    score_fn,
    background_rows: np.ndarray,
    instance_row: np.ndarray,
    cfg: ShapConfig,
    session_id: str = "",
) -> ShapAttribution:
    """Permutation-sampling Shapley over feature coordinates.

    score_fn maps an (n, 19) array of raw feature rows to n scores. Every
    Monte-Carlo sample draws one feature ordering and one background row;
    features absent from the growing coalition keep the background's values,
    so imputation respects the background joint distribution one draw at a
    time. Attributions average the per-sample marginal contributions.
    """
    cfg.validate()
    bg = np.atleast_2d(np.asarray(background_rows, dtype=float))
    x = np.asarray(instance_row, dtype=float)
    if bg.shape[0] < 1:
        raise ValueError("background must contain at least one row")
    if bg.shape[1] != len(x):
        raise ValueError(f"feature layout mismatch: background {bg.shape}, instance {x.shape}")
    d = len(x)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_samples
    perms = np.array([rng.permutation(d) for _ in range(n)])
    draws = rng.integers(0, len(bg), size=n)
    # Rows visited along each permutation: d+1 states from background to instance.
    states = np.empty((n, d + 1, d), dtype=float)
    for s_i in range(n):
        g = bg[draws[s_i]].copy()
        states[s_i, 0] = g
        for j, feat in enumerate(perms[s_i]):
            g[feat] = x[feat]
            states[s_i, j + 1] = g
    scores = score_fn(states.reshape(-1, d)).reshape(n, d + 1)
    deltas = np.diff(scores, axis=1)  # (n, d): contribution of the j-th flipped feature
    contrib = np.zeros((n, d))
    rows = np.repeat(np.arange(n), d)
    contrib[rows, perms.reshape(-1)] = deltas.reshape(-1)
    values = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(d)
    base = float(np.mean(score_fn(bg)))
    pred = float(score_fn(x[None, :])[0])
    return ShapAttribution(
        session_id=session_id,
        values=values,
        std_errors=se,
        base_value=base,
        instance_values=x.copy(),
        prediction=pred,
    )


def shap_sampling(
    model: SkillModel, background: Dataset, instance: SessionRecording, cfg: ShapConfig | None = None
) -> ShapAttribution:
    """Shapley attributions for one session's 19 global features.

    The instance's pooled temporal representation is computed once and held
    fixed; the background supplies the global-feature rows used to impute
    features outside the coalition.
    """
    cfg = cfg or ShapConfig()
    if len(background.sessions) == 0:
        raise ValueError("empty background dataset")
    feats = build_feature_matrix(instance, model.cfg.preprocess)
    pooled = model.pooled_vector(feats)
    bg_rows = np.array([build_global_vector(s, model.cfg.global_cfg) for s in background])
    inst_row = build_global_vector(instance, model.cfg.global_cfg)
    return shap_from_arrays(
        lambda rows: model.scores_for_globals(pooled, rows),
        bg_rows,
        inst_row,
        cfg,
        session_id=instance.session_id,
    )


def rank_features(attributions: list[ShapAttribution]) -> list[int]:
    """Feature indices ordered by mean |SHAP| across sessions, descending.
    Ties break toward the lower feature index, so ordering is deterministic."""
    if not attributions:
        raise ValueError("no attributions to rank")
    mat = np.array([a.values for a in attributions])
    mean_abs = np.abs(mat).mean(axis=0)
    return list(np.argsort(-mean_abs, kind="stable"))


def export_beeswarm(attributions: list[ShapAttribution], path, svg_path=None) -> list[str]:
    """Write the beeswarm data table; one row per (feature, session).

    Features appear in descending mean-|SHAP| order. Returns the ordered
    feature names. When svg_path is given, a static beeswarm scatter is
    rendered there (requires matplotlib).
    """
    if not attributions:
        raise ValueError("no attributions to export")
    order = rank_features(attributions)
    names = [GLOBAL_FEATURE_NAMES[i] for i in order]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "feature", "session_id", "shap_value", "feature_value"])
        for rank, i in enumerate(order):
            for a in attributions:
                w.writerow([
                    rank, GLOBAL_FEATURE_NAMES[i], a.session_id,
                    f"{a.values[i]:.10g}", f"{a.instance_values[i]:.10g}",
                ])
    if svg_path is not None:
        _render_beeswarm(attributions, order, svg_path)
    return names


def _render_beeswarm(attributions: list[ShapAttribution], order: list[int], svg_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    mat = np.array([a.values for a in attributions])
    raw = np.array([a.instance_values for a in attributions])
    fig, ax = plt.subplots(figsize=(8, 0.42 * len(order) + 1.5))
    rng = np.random.default_rng(0)
    for row, i in enumerate(order):
        y = len(order) - 1 - row + rng.uniform(-0.18, 0.18, size=len(mat))
        vals = raw[:, i]
        spread = vals.max() - vals.min()
        color = (vals - vals.min()) / spread if spread > 0 else np.full(len(vals), 0.5)
        ax.scatter(mat[:, i], y, c=color, cmap="coolwarm", s=14, edgecolors="none")
    ax.axvline(0.0, color="gray", lw=0.8)
    ax.set_yticks(range(len(order)))
    ax.set_yticklabels([GLOBAL_FEATURE_NAMES[i] for i in reversed(order)])
    ax.set_xlabel("contribution to predicted score")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
