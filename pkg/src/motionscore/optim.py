"""Adam optimizer over Tensor parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


class Adam:
    """Standard Adam with bias correction:

        m <- b1*m + (1-b1)*g        mhat = m / (1 - b1^t)
        v <- b2*v + (1-b2)*g^2      vhat = v / (1 - b2^t)
        p <- p - lr * mhat / (sqrt(vhat) + eps)
    """

    def __init__(self, params: list[Tensor], cfg: AdamConfig | None = None):
        self.params = list(params)
        self.cfg = cfg or AdamConfig()
        self.state = AdamState(
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        c = self.cfg
        st = self.state
        st.t += 1
        bc1 = 1.0 - c.beta1**st.t
        bc2 = 1.0 - c.beta2**st.t
        for p, m, v in zip(self.params, st.m, st.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            mhat = m / bc1
            vhat = v / bc2
            p.data -= c.lr * mhat / (np.sqrt(vhat) + c.eps)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState, cfg: AdamConfig) -> None:
    """Functional form of one Adam update for externally held gradients."""
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.data.shape}")
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p.data -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
