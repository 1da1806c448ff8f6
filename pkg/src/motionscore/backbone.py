"""Headless temporal-convolution backbone producing an F x T hidden sequence.

A 1x1 projection lifts the 150 input channels to the hidden width, then a
stack of residual layers applies centered dilated convolutions. Each layer l
runs two parallel branches with dilations 2^l and 2^(L-1-l) (one branch grows
its reach with depth, the other shrinks), concatenates them, projects back to
the hidden width with a 1x1 convolution, applies ReLU and dropout, and adds
the layer input. Temporal length is always preserved; there is no
classification head, the output is the representation itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor


@dataclass
class BackboneConfig:
    input_dim: int = 150
    hidden_dim: int = 64
    num_layers: int = 10
    kernel_size: int = 3
    dropout: float = 0.3
    use_dual_dilation: bool = True

    def validate(self) -> None:
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ValueError("hidden_dim and num_layers must be >= 1")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")


def _uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_backbone_params(cfg: BackboneConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fan-in-scaled uniform weights, zero biases. Keys are stable and used
    by the serialized parameter container."""
    cfg.validate()
    f, k = cfg.hidden_dim, cfg.kernel_size
    p: dict[str, Tensor] = {}
    p["in_proj.w"] = Tensor(_uniform_fan_in(rng, (f, cfg.input_dim), cfg.input_dim), True)
    p["in_proj.b"] = Tensor(np.zeros(f), True)
    for layer in range(cfg.num_layers):
        p[f"layer{layer}.conv_a.w"] = Tensor(_uniform_fan_in(rng, (f, f, k), f * k), True)
        p[f"layer{layer}.conv_a.b"] = Tensor(np.zeros(f), True)
        if cfg.use_dual_dilation:
            p[f"layer{layer}.conv_b.w"] = Tensor(_uniform_fan_in(rng, (f, f, k), f * k), True)
            p[f"layer{layer}.conv_b.b"] = Tensor(np.zeros(f), True)
            proj_in = 2 * f
        else:
            proj_in = f
        p[f"layer{layer}.proj.w"] = Tensor(_uniform_fan_in(rng, (f, proj_in), proj_in), True)
        p[f"layer{layer}.proj.b"] = Tensor(np.zeros(f), True)
    return p


def backbone_forward(
    tape: Tape,
    x: Tensor,
    params: dict[str, Tensor],
    cfg: BackboneConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Map a (input_dim, T) tensor to the (hidden_dim, T) hidden sequence."""
    if x.data.ndim != 2 or x.data.shape[0] != cfg.input_dim:
        raise ValueError(
            f"backbone expects ({cfg.input_dim}, T) input, got {x.data.shape}"
        )
    if x.data.shape[1] < 1:
        raise ValueError("empty sequence")
    h = ad.pointwise_conv(tape, x, params["in_proj.w"], params["in_proj.b"])
    last = cfg.num_layers - 1
    for layer in range(cfg.num_layers):
        if cfg.use_dual_dilation:
            a = ad.dilated_conv1d(
                tape, h, params[f"layer{layer}.conv_a.w"], params[f"layer{layer}.conv_a.b"],
                dilation=2**layer,
            )
            b = ad.dilated_conv1d(
                tape, h, params[f"layer{layer}.conv_b.w"], params[f"layer{layer}.conv_b.b"],
                dilation=2 ** (last - layer),
            )
            z = ad.concat(tape, [a, b], axis=0)
        else:
            z = ad.dilated_conv1d(
                tape, h, params[f"layer{layer}.conv_a.w"], params[f"layer{layer}.conv_a.b"],
                dilation=2**layer,
            )
        z = ad.pointwise_conv(tape, z, params[f"layer{layer}.proj.w"], params[f"layer{layer}.proj.b"])
        z = ad.relu(tape, z)
        z = ad.dropout(tape, z, cfg.dropout, train, rng)
        h = ad.residual_add(tape, h, z)
    return h


def receptive_field(cfg: BackboneConfig) -> int:
    """Frames of input that can influence one output column (analytic)."""
    cfg.validate()
    span = 1
    last = cfg.num_layers - 1
    for layer in range(cfg.num_layers):
        d = 2**layer
        if cfg.use_dual_dilation:
            d = max(d, 2 ** (last - layer))
        span += (cfg.kernel_size - 1) * d
    return span
