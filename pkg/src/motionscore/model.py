"""The full scoring model: backbone + attention pooling + fusion head.

A SkillModel owns the architecture configs, every learnable tensor, and the
global-feature standardization statistics fitted on the training set. It can
be saved to / loaded from a single .npz container that embeds a JSON config
snapshot, a shape manifest, and a config hash so stale artifacts are rejected
at load time. Arrays are stored little-endian, so containers move across
platforms.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import (
    NUM_CLASSES,
    AttentionConfig,
    FusionConfig,
    attention_pool,
    fuse_predict,
    init_attention_params,
    init_fusion_params,
    score_from_logits,
)
from .autodiff import Tape, Tensor
from .backbone import BackboneConfig, backbone_forward, init_backbone_params
from .data import SessionRecording
from .frames import PreprocessConfig, build_feature_matrix, channel_layout
from .global_stats import (
    GLOBAL_FEATURE_NAMES,
    NUM_GLOBAL_FEATURES,
    GlobalConfig,
    build_global_vector,
)

FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    global_cfg: GlobalConfig = field(default_factory=GlobalConfig)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        cfg = cls(
            backbone=BackboneConfig(**raw["backbone"]),
            attention=AttentionConfig(**raw["attention"]),
            fusion=FusionConfig(**raw["fusion"]),
            preprocess=PreprocessConfig(**raw["preprocess"]),
            global_cfg=GlobalConfig(**raw["global_cfg"]),
        )
        cfg.fusion.hidden_sizes = tuple(cfg.fusion.hidden_sizes)
        return cfg

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


class SkillModel:
    """Configs, parameters, and standardization stats for one trained model."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor],
                 norm_mean: np.ndarray | None = None, norm_std: np.ndarray | None = None,
                 feat_mean: np.ndarray | None = None, feat_std: np.ndarray | None = None):
        self.cfg = cfg
        self.params = params
        self.norm_mean = norm_mean  # global features
        self.norm_std = norm_std
        self.feat_mean = feat_mean  # per-channel stats of the 150 input rows
        self.feat_std = feat_std

    # -- construction ----------------------------------------------------

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int) -> "SkillModel":
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        for k, v in init_backbone_params(cfg.backbone, rng).items():
            params[f"backbone.{k}"] = v
        for k, v in init_attention_params(cfg.attention, cfg.backbone.hidden_dim, rng).items():
            params[f"attention.{k}"] = v
        for k, v in init_fusion_params(cfg.fusion, cfg.backbone.hidden_dim, rng).items():
            params[f"fusion.{k}"] = v
        return cls(cfg, params)

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def _sub(self, prefix: str) -> dict[str, Tensor]:
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    # -- standardization ---------------------------------------------------

    def fit_standardization(self, global_rows: np.ndarray, features: list[np.ndarray] | None = None) -> None:
        """Zero-mean/unit-variance stats over the training set, for both the
        19 global features and (when feature matrices are given) the 150
        per-frame channels pooled over all training frames. Constant channels
        get std 1 so they pass through unchanged."""
        g = np.asarray(global_rows, dtype=float)
        self.norm_mean = g.mean(axis=0)
        std = g.std(axis=0)
        std[std == 0.0] = 1.0
        self.norm_std = std
        if features is not None:
            stacked = np.hstack([np.asarray(f, dtype=float) for f in features])
            self.feat_mean = stacked.mean(axis=1)
            fstd = stacked.std(axis=1)
            fstd[fstd == 0.0] = 1.0
            self.feat_std = fstd

    def standardize(self, g: np.ndarray) -> np.ndarray:
        if self.norm_mean is None:
            raise ValueError("standardization statistics not fitted; train first")
        return (np.asarray(g, dtype=float) - self.norm_mean) / self.norm_std

    def standardize_features(self, features: np.ndarray) -> np.ndarray:
        if self.feat_mean is None:
            return np.asarray(features, dtype=float)
        return (np.asarray(features, dtype=float) - self.feat_mean[:, None]) / self.feat_std[:, None]

    # -- forward -----------------------------------------------------------

    def forward(
        self,
        tape: Tape,
        features: np.ndarray,
        global_raw: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, np.ndarray]:
        """Full pass from a (150, T) matrix and a raw 19-vector to the logits.
        Returns (logits tensor, frame importance)."""
        x = Tensor(self.standardize_features(features))
        h = backbone_forward(tape, x, self._sub("backbone"), self.cfg.backbone, train, rng)
        pooled, importance = attention_pool(tape, h, self._sub("attention"), self.cfg.attention)
        logits = fuse_predict(
            tape, pooled, self.standardize(global_raw), self._sub("fusion"),
            self.cfg.fusion, train, rng,
        )
        return logits, importance

    def predict_arrays(self, features: np.ndarray, global_raw: np.ndarray) -> tuple[float, np.ndarray]:
        logits, importance = self.forward(Tape(), features, global_raw, train=False)
        return score_from_logits(logits.data), importance

    def predict_session(self, s: SessionRecording) -> tuple[float, np.ndarray]:
        feats = build_feature_matrix(s, self.cfg.preprocess)
        gvec = build_global_vector(s, self.cfg.global_cfg)
        return self.predict_arrays(feats, gvec)

    # -- batched global-feature head (used by the Shapley sampler) ---------

    def pooled_vector(self, features: np.ndarray) -> np.ndarray:
        tape = Tape()
        x = Tensor(self.standardize_features(features))
        h = backbone_forward(tape, x, self._sub("backbone"), self.cfg.backbone)
        pooled, _ = attention_pool(tape, h, self._sub("attention"), self.cfg.attention)
        return pooled.data.copy()

    def scores_for_globals(self, pooled: np.ndarray, global_rows: np.ndarray) -> np.ndarray:
        """Eval-mode scores for many raw global-feature rows with the temporal
        branch frozen at `pooled`. Vectorized over rows."""
        g = np.atleast_2d(np.asarray(global_rows, dtype=float))
        if g.shape[1] != NUM_GLOBAL_FEATURES:
            raise ValueError(f"expected rows of {NUM_GLOBAL_FEATURES} features, got {g.shape}")
        gs = (g - self.norm_mean) / self.norm_std
        x = np.hstack([np.broadcast_to(pooled, (len(gs), len(pooled))), gs])
        fusion = self._sub("fusion")
        n_layers = len([k for k in fusion if k.endswith(".w")])
        for i in range(n_layers):
            x = x @ fusion[f"fc{i}.w"].data.T + fusion[f"fc{i}.b"].data
            if i < n_layers - 1:
                x = np.maximum(x, 0.0)
        z = x - x.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        return p @ np.arange(1, NUM_CLASSES + 1, dtype=float)

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        if self.norm_mean is None or self.norm_std is None:
            raise ValueError("refusing to save an unfitted model (no standardization stats)")
        arrays: dict[str, np.ndarray] = {}
        manifest: dict[str, list[int]] = {}
        for k, t in self.params.items():
            arrays[f"param:{k}"] = t.data.astype("<f8")
            manifest[k] = list(t.data.shape)
        header = {
            "format_version": FORMAT_VERSION,
            "config": json.loads(self.cfg.to_json()),
            "config_hash": self.cfg.hash(),
            "manifest": manifest,
            "global_feature_names": list(GLOBAL_FEATURE_NAMES),
            "channel_layout": channel_layout(),
        }
        arrays["header"] = np.array(json.dumps(header, sort_keys=True))
        arrays["norm_mean"] = self.norm_mean.astype("<f8")
        arrays["norm_std"] = self.norm_std.astype("<f8")
        if self.feat_mean is not None:
            arrays["feat_mean"] = self.feat_mean.astype("<f8")
            arrays["feat_std"] = self.feat_std.astype("<f8")
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "SkillModel":
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header["format_version"] != FORMAT_VERSION:
                raise ValueError(f"unsupported container version {header['format_version']}")
            cfg = ModelConfig.from_json(json.dumps(header["config"]))
            if cfg.hash() != header["config_hash"]:
                raise ValueError("config hash mismatch: container is corrupt or stale")
            if header["global_feature_names"] != list(GLOBAL_FEATURE_NAMES):
                raise ValueError("global feature layout mismatch with this build")
            if header["channel_layout"] != channel_layout():
                raise ValueError("channel layout mismatch with this build")
            params: dict[str, Tensor] = {}
            for k, shape in header["manifest"].items():
                arr = np.asarray(z[f"param:{k}"], dtype=np.float64)
                if list(arr.shape) != shape:
                    raise ValueError(f"array {k} has shape {arr.shape}, manifest says {shape}")
                params[k] = Tensor(arr, requires_grad=True)
            return cls(
                cfg, params,
                norm_mean=np.asarray(z["norm_mean"], dtype=np.float64),
                norm_std=np.asarray(z["norm_std"], dtype=np.float64),
                feat_mean=np.asarray(z["feat_mean"], dtype=np.float64) if "feat_mean" in z else None,
                feat_std=np.asarray(z["feat_std"], dtype=np.float64) if "feat_std" in z else None,
            )
