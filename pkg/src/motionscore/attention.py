"""Attention pooling over the hidden sequence, global-feature fusion, and
the 10-way ordinal output head.

Pooling uses one learned query vector per head (a CLS-style probe): each
frame's hidden vector is projected to keys and values, the query scores every
frame, and a softmax over time turns the scores into a weight distribution.
The weighted sum of values is the pooled representation; the head-averaged
weight distribution doubles as the frame-importance map reported to users.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .global_stats import NUM_GLOBAL_FEATURES

NUM_CLASSES = 10  # expert scores 1..10


@dataclass
class AttentionConfig:
    num_heads: int = 4
    head_dim: int | None = None  # defaults to hidden_dim // num_heads

    def resolved_head_dim(self, hidden_dim: int) -> int:
        if self.head_dim is not None:
            return self.head_dim
        if hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {hidden_dim} not divisible by num_heads {self.num_heads}; "
                "set head_dim explicitly"
            )
        return hidden_dim // self.num_heads


@dataclass
class FusionConfig:
    hidden_sizes: tuple[int, ...] = (64,)
    dropout: float = 0.0


def init_attention_params(
    cfg: AttentionConfig, hidden_dim: int, rng: np.random.Generator
) -> dict[str, Tensor]:
    dh = cfg.resolved_head_dim(hidden_dim)
    bound = 1.0 / np.sqrt(hidden_dim)
    p: dict[str, Tensor] = {}
    for h in range(cfg.num_heads):
        p[f"head{h}.q"] = Tensor(rng.uniform(-bound, bound, size=dh), True)
        p[f"head{h}.wk"] = Tensor(rng.uniform(-bound, bound, size=(hidden_dim, dh)), True)
        p[f"head{h}.wv"] = Tensor(rng.uniform(-bound, bound, size=(hidden_dim, dh)), True)
    cat = cfg.num_heads * dh
    p["out.w"] = Tensor(rng.uniform(-1 / np.sqrt(cat), 1 / np.sqrt(cat), size=(hidden_dim, cat)), True)
    p["out.b"] = Tensor(np.zeros(hidden_dim), True)
    return p


def init_fusion_params(
    cfg: FusionConfig, pooled_dim: int, rng: np.random.Generator
) -> dict[str, Tensor]:
    sizes = [pooled_dim + NUM_GLOBAL_FEATURES, *cfg.hidden_sizes, NUM_CLASSES]
    p: dict[str, Tensor] = {}
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(n_in)
        p[f"fc{i}.w"] = Tensor(rng.uniform(-bound, bound, size=(n_out, n_in)), True)
        p[f"fc{i}.b"] = Tensor(np.zeros(n_out), True)
    return p


def attention_pool(
    tape: Tape, h: Tensor, params: dict[str, Tensor], cfg: AttentionConfig
) -> tuple[Tensor, np.ndarray]:
    """Pool an (F, T) hidden sequence into an F-vector.

    Returns (pooled, importance) where importance is the mean over heads of
    the per-head attention distributions: length T, non-negative, sums to 1.
    """
    f, t = h.data.shape
    dh = cfg.resolved_head_dim(f)
    x = ad.transpose(tape, h)  # (T, F)
    pooled_heads = []
    weights = []
    for head in range(cfg.num_heads):
        k = ad.matmul(tape, x, params[f"head{head}.wk"])  # (T, dh)
        v = ad.matmul(tape, x, params[f"head{head}.wv"])  # (T, dh)
        scores = ad.scale(tape, ad.matmul(tape, k, params[f"head{head}.q"]), 1.0 / np.sqrt(dh))
        alpha = ad.softmax(tape, scores, axis=0)  # (T,)
        pooled_heads.append(ad.weighted_sum(tape, alpha, v))
        weights.append(alpha.data)
    cat = ad.concat(tape, pooled_heads, axis=0)
    pooled = ad.linear(tape, cat, params["out.w"], params["out.b"])
    importance = np.mean(weights, axis=0)
    return pooled, importance


def fuse_predict(
    tape: Tape,
    pooled: Tensor,
    global_features: np.ndarray,
    params: dict[str, Tensor],
    cfg: FusionConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """MLP over [pooled || standardized globals] producing the 10 logits.

    The 19 global features must already be standardized with the training-set
    statistics; their order is the normative GLOBAL_FEATURE_NAMES layout.
    """
    g = np.asarray(global_features, dtype=float)
    if g.shape != (NUM_GLOBAL_FEATURES,):
        raise ValueError(f"expected {NUM_GLOBAL_FEATURES} global features, got {g.shape}")
    x = ad.concat(tape, [pooled, Tensor(g)], axis=0)
    n_layers = len([k for k in params if k.endswith(".w")])
    for i in range(n_layers):
        x = ad.linear(tape, x, params[f"fc{i}.w"], params[f"fc{i}.b"])
        if i < n_layers - 1:
            x = ad.relu(tape, x)
            x = ad.dropout(tape, x, cfg.dropout, train, rng)
    return x


def score_from_logits(logits: np.ndarray) -> float:
    """Softmax-expected score over classes 1..10; always lands in [1, 10]."""
    z = np.asarray(logits, dtype=float)
    if z.shape != (NUM_CLASSES,):
        raise ValueError(f"expected {NUM_CLASSES} logits, got {z.shape}")
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return float(p @ np.arange(1, NUM_CLASSES + 1))
