"""Soft ordinal training: SORD targets/loss, the training loop, the 70/30
split with 4-fold grid-search cross-validation, and evaluation metrics.

Target distributions put a softmax over negative label distances, so classes
near the true score keep probability mass and the cross-entropy penalizes
predictions by how far they land from the truth, not just whether they hit
it. One model is trained per simulator, batch size 1 (sequences differ in
length), Adam updates, everything seeded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .attention import score_from_logits
from .autodiff import Tape
from .data import Dataset
from .frames import build_feature_matrix
from .global_stats import build_global_vector
from .model import ModelConfig, SkillModel
from .optim import Adam, AdamConfig


@dataclass
class SordConfig:
    num_classes: int = 10
    distance: str = "squared"  # or "absolute"
    alpha: float = 1.0

    def phi(self, true_score: int, classes: np.ndarray) -> np.ndarray:
        d = np.abs(classes - true_score).astype(float)
        if self.distance == "squared":
            return d * d
        if self.distance == "absolute":
            return d
        raise ValueError(f"unknown distance {self.distance!r}")


def sord_targets(true_score: int, cfg: SordConfig | None = None) -> np.ndarray:
    """Soft target distribution: softmax over -alpha * phi(true, k), k=1..K."""
    cfg = cfg or SordConfig()
    if not 1 <= true_score <= cfg.num_classes:
        raise ValueError(f"score {true_score} outside 1..{cfg.num_classes}")
    if not (np.isfinite(cfg.alpha) and cfg.alpha > 0):
        raise ValueError("alpha must be finite and positive")
    classes = np.arange(1, cfg.num_classes + 1)
    z = -cfg.alpha * cfg.phi(true_score, classes)
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def sord_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Cross-entropy of a soft target distribution against the logits."""
    z = np.asarray(logits, dtype=float)
    t = np.asarray(targets, dtype=float)
    if z.shape != t.shape:
        raise ValueError(f"logits {z.shape} vs targets {t.shape}")
    if abs(t.sum() - 1.0) > 1e-6:
        raise ValueError(f"targets must sum to 1, got {t.sum():.8f}")
    z = z - z.max()
    logp = z - np.log(np.exp(z).sum())
    return float(-(t * logp).sum())


@dataclass
class EvalReport:
    pearson_r: float
    rmse: float
    mae: float
    r2: float
    n: int
    degenerate: bool = False  # labels were constant; r and r2 reported as 0
    predictions: list[float] | None = None
    labels: list[float] | None = None

    def summary(self) -> str:
        flag = " (degenerate labels)" if self.degenerate else ""
        return (
            f"n={self.n}  r={self.pearson_r:.4f}  rmse={self.rmse:.4f}  "
            f"mae={self.mae:.4f}  r2={self.r2:.4f}{flag}"
        )


def metrics(preds, labels) -> EvalReport:
    """Pearson r, RMSE, MAE, and R^2 = 1 - SS_res/SS_tot."""
    p = np.asarray(preds, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape or p.ndim != 1 or len(p) == 0:
        raise ValueError("preds and labels must be equal-length non-empty vectors")
    err = p - y
    rmse = float(np.sqrt(np.mean(err * err)))
    mae = float(np.mean(np.abs(err)))
    dy = y - y.mean()
    ss_tot = float(dy @ dy)
    degenerate = ss_tot == 0.0
    if degenerate:
        r = 0.0
        r2 = 0.0
    else:
        dp = p - p.mean()
        denom = np.sqrt(float(dp @ dp) * ss_tot)
        r = 0.0 if denom == 0.0 else float(np.clip(float(dp @ dy) / denom, -1.0, 1.0))
        r2 = 1.0 - float(err @ err) / ss_tot
    return EvalReport(
        pearson_r=r, rmse=rmse, mae=mae, r2=r2, n=len(p), degenerate=degenerate,
        predictions=p.tolist(), labels=y.tolist(),
    )


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    seed: int = 0
    sord: SordConfig = field(default_factory=SordConfig)
    grad_accum: int = 1
    test_fraction: float = 0.3
    n_folds: int = 4
    grid: list[dict] = field(default_factory=list)
    verbose: bool = False


@dataclass
class SessionArrays:
    """Featurized dataset: one (150, T) matrix and one 19-vector per session."""

    session_ids: list[str]
    features: list[np.ndarray]
    globals: np.ndarray  # (n, 19)
    labels: np.ndarray  # (n,) float; NaN where unlabeled


def featurize_dataset(ds: Dataset, cfg: ModelConfig) -> SessionArrays:
    feats, gers, labels, ids = [], [], [], []
    for s in ds:
        ids.append(s.session_id)
        feats.append(build_feature_matrix(s, cfg.preprocess))
        gers.append(build_global_vector(s, cfg.global_cfg))
        labels.append(float(s.expert_score) if s.expert_score is not None else np.nan)
    return SessionArrays(ids, feats, np.asarray(gers), np.asarray(labels))


def _check_trainable(ds: Dataset) -> None:
    unlabeled = [s.session_id for s in ds if s.expert_score is None]
    if unlabeled:
        raise ValueError(f"unlabeled sessions cannot be trained on: {unlabeled[:5]}")
    sims = {s.simulator for s in ds}
    if len(sims) > 1:
        raise ValueError(f"train on one simulator at a time, got {sorted(sims)}")


def train_on_arrays(
    arrays: SessionArrays,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    indices: np.ndarray | None = None,
) -> tuple[SkillModel, list[float]]:
    """Fit a model on the selected sessions; returns (model, per-epoch loss)."""
    idx = np.arange(len(arrays.session_ids)) if indices is None else np.asarray(indices)
    if np.isnan(arrays.labels[idx]).any():
        raise ValueError("all training sessions must be labeled")
    model = SkillModel.init(model_cfg, seed=cfg.seed)
    model.fit_standardization(arrays.globals[idx], [arrays.features[i] for i in idx])
    opt = Adam(model.parameters(), AdamConfig(lr=cfg.lr))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(idx)
        losses = []
        opt.zero_grad()
        pending = 0
        for i in order:
            tape = Tape()
            logits, _ = model.forward(
                tape, arrays.features[i], arrays.globals[i], train=True, rng=rng
            )
            targets = sord_targets(int(arrays.labels[i]), cfg.sord)
            loss = ad.softmax_cross_entropy(tape, logits, targets)
            ad.backward(tape, loss)
            losses.append(float(loss.data))
            pending += 1
            if pending >= cfg.grad_accum:
                if cfg.grad_accum > 1:
                    for p in model.parameters():
                        p.grad /= pending
                opt.step()
                opt.zero_grad()
                pending = 0
        if pending:
            if cfg.grad_accum > 1:
                for p in model.parameters():
                    p.grad /= pending
            opt.step()
            opt.zero_grad()
        history.append(float(np.mean(losses)))
        if cfg.verbose:
            print(f"epoch {epoch + 1}/{cfg.epochs}  loss {history[-1]:.4f}")
    return model, history


def train(ds: Dataset, model_cfg: ModelConfig | None = None, cfg: TrainConfig | None = None):
    """Featurize and fit on every session of `ds`. Deterministic given seed."""
    model_cfg = model_cfg or ModelConfig()
    cfg = cfg or TrainConfig()
    _check_trainable(ds)
    arrays = featurize_dataset(ds, model_cfg)
    return train_on_arrays(arrays, model_cfg, cfg)


def predict_on_arrays(model: SkillModel, arrays: SessionArrays, indices=None) -> np.ndarray:
    idx = np.arange(len(arrays.session_ids)) if indices is None else np.asarray(indices)
    return np.array([
        model.predict_arrays(arrays.features[i], arrays.globals[i])[0] for i in idx
    ])


def apply_grid_point(model_cfg: ModelConfig, cfg: TrainConfig, point: dict):
    """Overlay one grid point onto copies of the configs.

    Recognized keys: hidden_dim, num_layers, kernel_size, dropout (backbone);
    num_heads (attention); fusion_hidden (fusion); lr, epochs, alpha (training).
    """
    bk = {k: point[k] for k in ("hidden_dim", "num_layers", "kernel_size", "dropout") if k in point}
    at = {k: point[k] for k in ("num_heads",) if k in point}
    mc = replace(
        model_cfg,
        backbone=replace(model_cfg.backbone, **bk),
        attention=replace(model_cfg.attention, **at),
        fusion=replace(
            model_cfg.fusion,
            **({"hidden_sizes": tuple(point["fusion_hidden"])} if "fusion_hidden" in point else {}),
        ),
    )
    tr = {k: point[k] for k in ("lr", "epochs") if k in point}
    tc = replace(cfg, **tr)
    if "alpha" in point:
        tc = replace(tc, sord=replace(cfg.sord, alpha=point["alpha"]))
    return mc, tc


@dataclass
class CVResult:
    best_point: dict
    cv_scores: list[tuple[dict, float]]  # (grid point, mean validation r)
    model: SkillModel
    report: EvalReport
    train_ids: list[str]
    test_ids: list[str]
    history: list[float]
    elapsed_s: float


def split_indices(n: int, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Seeded 70/30 split. Test size is round(n * test_fraction), clamped so
    at least one session is held out and n_folds remain for training."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    perm = rng.permutation(n)
    n_test = int(round(n * cfg.test_fraction))
    n_test = max(1, min(n_test, n - cfg.n_folds))
    return perm[n_test:], perm[:n_test]


def split_and_cv(ds: Dataset, model_cfg: ModelConfig | None = None, cfg: TrainConfig | None = None) -> CVResult:
    """70/30 split, grid search with k-fold CV on the training portion scored
    by mean validation Pearson r, retrain of the winner on the full training
    portion, and a final report on the held-out test set."""
    t0 = time.time()
    model_cfg = model_cfg or ModelConfig()
    cfg = cfg or TrainConfig()
    _check_trainable(ds)
    n = len(ds)
    if n < 2 * cfg.n_folds:
        raise ValueError(f"need at least {2 * cfg.n_folds} labeled sessions for {cfg.n_folds}-fold CV, got {n}")
    arrays = featurize_dataset(ds, model_cfg)
    train_idx, test_idx = split_indices(n, cfg)
    if len(train_idx) < cfg.n_folds:
        raise ValueError(f"training portion too small for {cfg.n_folds} folds")
    grid = cfg.grid or [{}]
    folds = np.array_split(train_idx, cfg.n_folds)
    cv_scores: list[tuple[dict, float]] = []
    for point in grid:
        mc, tc = apply_grid_point(model_cfg, cfg, point)
        fold_rs = []
        for k in range(cfg.n_folds):
            val = folds[k]
            tr = np.concatenate([folds[j] for j in range(cfg.n_folds) if j != k])
            m, _ = train_on_arrays(arrays, mc, tc, indices=tr)
            preds = predict_on_arrays(m, arrays, val)
            fold_rs.append(metrics(preds, arrays.labels[val]).pearson_r)
        cv_scores.append((point, float(np.mean(fold_rs))))
        if cfg.verbose:
            print(f"grid {point}  mean val r {cv_scores[-1][1]:.4f}")
    best_point = max(cv_scores, key=lambda pr: pr[1])[0]  # ties: first in grid order
    mc, tc = apply_grid_point(model_cfg, cfg, best_point)
    model, history = train_on_arrays(arrays, mc, tc, indices=train_idx)
    preds = predict_on_arrays(model, arrays, test_idx)
    report = metrics(preds, arrays.labels[test_idx])
    return CVResult(
        best_point=best_point,
        cv_scores=cv_scores,
        model=model,
        report=report,
        train_ids=[arrays.session_ids[i] for i in train_idx],
        test_ids=[arrays.session_ids[i] for i in test_idx],
        history=history,
        elapsed_s=time.time() - t0,
    )
