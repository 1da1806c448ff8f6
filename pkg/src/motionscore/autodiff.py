"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Every primitive records (op name, output, pull closure) on an explicit Tape;
backward walks the records in exact reverse order, accumulating gradients
additively into `Tensor.grad`, so values reused at several fan-out points get
the sum of their downstream gradients. One tape serves one forward/backward
pass and is single-threaded; independent tapes can run in parallel.

Primitives cover exactly what the sequence model needs: 1-D dilated and
pointwise convolutions over (channels, time) arrays, matmul/linear, relu,
inverted dropout, softmax, concat, transpose, weighted sums, residual adds,
constant scaling, dot products and a fused softmax cross-entropy.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DTYPE = np.float64


class Tensor:
    """A dense array plus its accumulated gradient.

    Leaf tensors created with requires_grad=True start with a zero gradient so
    parameters untouched by a forward pass still report a well-defined (zero)
    gradient after backward.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = (
            np.zeros_like(self.data) if requires_grad else None
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad)


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self.records: list[tuple[str, Tensor, tuple[Tensor, ...], Callable[[], None]]] = []

    def record(self, op: str, out: Tensor, parents: tuple[Tensor, ...], pull: Callable[[], None]) -> None:
        self.records.append((op, out, parents, pull))

    def __len__(self) -> int:
        return len(self.records)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _make_out(tape: Tape, op: str, data: np.ndarray, parents: tuple[Tensor, ...], pull_factory) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out.grad = None  # non-leaf: allocated on demand during backward
        tape.record(op, out, parents, pull_factory(out))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Reverse sweep: seed d(loss)/d(loss)=1 and run pulls in reverse order."""
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for _op, out, _parents, pull in reversed(tape.records):
        if out.grad is None:
            continue  # branch never reached the loss
        pull()


# ---------------------------------------------------------------------------
# primitives


def dilated_conv1d(tape: Tape, x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Centered dilated 1-D convolution preserving temporal length.

    x: (C_in, T), w: (C_out, C_in, k) with k odd, b: (C_out,). The input is
    zero-padded by dilation*(k-1)/2 on each side, so output column t sees
    input columns t - d*(k-1)/2 .. t + d*(k-1)/2.
    """
    cin, t = x.data.shape
    cout, cin_w, k = w.data.shape
    if cin_w != cin:
        raise ValueError(f"conv input channels {cin} != weight channels {cin_w}")
    if k % 2 != 1:
        raise ValueError("kernel size must be odd")
    if b.data.shape != (cout,):
        raise ValueError(f"bias shape {b.data.shape} != ({cout},)")
    pad = dilation * (k - 1) // 2
    xp = np.zeros((cin, t + 2 * pad), dtype=DTYPE)
    xp[:, pad : pad + t] = x.data
    cols = np.empty((cin, k, t), dtype=DTYPE)
    for j in range(k):
        cols[:, j, :] = xp[:, j * dilation : j * dilation + t]
    y = np.tensordot(w.data, cols, axes=([1, 2], [0, 1])) + b.data[:, None]

    def pull_factory(out: Tensor):
        def pull():
            g = out.grad
            if b.requires_grad:
                _accum(b, g.sum(axis=1))
            if w.requires_grad:
                _accum(w, np.tensordot(g, cols, axes=([1], [2])))
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                contrib = np.tensordot(w.data, g, axes=([0], [0]))  # (C_in, k, T)
                for j in range(k):
                    gxp[:, j * dilation : j * dilation + t] += contrib[:, j, :]
                _accum(x, gxp[:, pad : pad + t])

        return pull

    return _make_out(tape, "dilated_conv1d", y, (x, w, b), pull_factory)


def pointwise_conv(tape: Tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """1x1 convolution over (C_in, T): y = w @ x + b[:, None]."""
    cout, cin = w.data.shape
    if x.data.shape[0] != cin:
        raise ValueError(f"pointwise input channels {x.data.shape[0]} != {cin}")
    y = w.data @ x.data + b.data[:, None]

    def pull_factory(out: Tensor):
        def pull():
            g = out.grad
            if b.requires_grad:
                _accum(b, g.sum(axis=1))
            if w.requires_grad:
                _accum(w, g @ x.data.T)
            if x.requires_grad:
                _accum(x, w.data.T @ g)

        return pull

    return _make_out(tape, "pointwise_conv", y, (x, w, b), pull_factory)


def linear(tape: Tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map of a vector: y = w @ x + b, with x: (n,), w: (m, n)."""
    if x.data.ndim != 1 or w.data.ndim != 2 or w.data.shape[1] != x.data.shape[0]:
        raise ValueError(f"linear shape mismatch: w {w.data.shape} @ x {x.data.shape}")
    y = w.data @ x.data + b.data

    def pull_factory(out: Tensor):
        def pull():
            g = out.grad
            if b.requires_grad:
                _accum(b, g)
            if w.requires_grad:
                _accum(w, np.outer(g, x.data))
            if x.requires_grad:
                _accum(x, w.data.T @ g)

        return pull

    return _make_out(tape, "linear", y, (x, w, b), pull_factory)


def matmul(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    """a @ b for 2-D a with 2-D or 1-D b."""
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ValueError(f"matmul expects 2-D @ (1|2)-D, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    y = a.data @ b.data

    def pull_factory(out: Tensor):
        def pull():
            g = out.grad
            if b.data.ndim == 1:
                if a.requires_grad:
                    _accum(a, np.outer(g, b.data))
                if b.requires_grad:
                    _accum(b, a.data.T @ g)
            else:
                if a.requires_grad:
                    _accum(a, g @ b.data.T)
                if b.requires_grad:
                    _accum(b, a.data.T @ g)

        return pull

    return _make_out(tape, "matmul", y, (a, b), pull_factory)


def relu(tape: Tape, x: Tensor) -> Tensor:
    mask = x.data > 0

    def pull_factory(out: Tensor):
        def pull():
            if x.requires_grad:
                _accum(x, out.grad * mask)

        return pull

    return _make_out(tape, "relu", x.data * mask, (x,), pull_factory)


def dropout(tape: Tape, x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: in train mode keeps each entry with prob 1-p and
    rescales by 1/(1-p); in eval mode it is the identity (same tensor)."""
    if not train or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)

    def pull_factory(out: Tensor):
        def pull():
            if x.requires_grad:
                _accum(x, out.grad * mask)

        return pull

    return _make_out(tape, "dropout", x.data * mask, (x,), pull_factory)


def softmax(tape: Tape, x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def pull_factory(out: Tensor):
        def pull():
            if x.requires_grad:
                g = out.grad
                dot = (g * y).sum(axis=axis, keepdims=True)
                _accum(x, y * (g - dot))

        return pull

    return _make_out(tape, "softmax", y, (x,), pull_factory)


def concat(tape: Tape, parts: list[Tensor], axis: int = 0) -> Tensor:
    y = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def pull_factory(out: Tensor):
        def pull():
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    idx = [slice(None)] * y.ndim
                    idx[axis] = slice(lo, hi)
                    _accum(p, out.grad[tuple(idx)])

        return pull

    return _make_out(tape, "concat", y, tuple(parts), pull_factory)


def transpose(tape: Tape, x: Tensor) -> Tensor:
    def pull_factory(out: Tensor):
        def pull():
            if x.requires_grad:
                _accum(x, out.grad.T)

        return pull

    return _make_out(tape, "transpose", x.data.T.copy(), (x,), pull_factory)


def weighted_sum(tape: Tape, weights: Tensor, values: Tensor) -> Tensor:
    """sum_t weights[t] * values[t, :] -> vector of length values.shape[1]."""
    if weights.data.ndim != 1 or values.data.ndim != 2 or len(weights.data) != values.data.shape[0]:
        raise ValueError(
            f"weighted_sum shapes: weights {weights.data.shape}, values {values.data.shape}"
        )
    y = weights.data @ values.data

    def pull_factory(out: Tensor):
        def pull():
            g = out.grad
            if weights.requires_grad:
                _accum(weights, values.data @ g)
            if values.requires_grad:
                _accum(values, np.outer(weights.data, g))

        return pull

    return _make_out(tape, "weighted_sum", y, (weights, values), pull_factory)


def residual_add(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"residual_add shapes differ: {a.data.shape} vs {b.data.shape}")

    def pull_factory(out: Tensor):
        def pull():
            if a.requires_grad:
                _accum(a, out.grad)
            if b.requires_grad:
                _accum(b, out.grad)

        return pull

    return _make_out(tape, "residual_add", a.data + b.data, (a, b), pull_factory)


def scale(tape: Tape, x: Tensor, c: float) -> Tensor:
    def pull_factory(out: Tensor):
        def pull():
            if x.requires_grad:
                _accum(x, out.grad * c)

        return pull

    return _make_out(tape, "scale", x.data * c, (x,), pull_factory)


def dot(tape: Tape, a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two 1-D tensors (scalar output, shape ())."""
    if a.data.ndim != 1 or b.data.ndim != 1 or a.data.shape != b.data.shape:
        raise ValueError(f"dot expects equal-length vectors, got {a.data.shape}, {b.data.shape}")
    y = np.asarray(a.data @ b.data)

    def pull_factory(out: Tensor):
        def pull():
            g = out.grad
            if a.requires_grad:
                _accum(a, g * b.data)
            if b.requires_grad:
                _accum(b, g * a.data)

        return pull

    return _make_out(tape, "dot", y, (a, b), pull_factory)


def softmax_cross_entropy(tape: Tape, logits: Tensor, targets: np.ndarray) -> Tensor:
    """-sum_k targets_k * log softmax(logits)_k, with the closed-form
    gradient softmax(logits) - targets. `targets` is a constant distribution."""
    t = np.asarray(targets, dtype=DTYPE)
    if t.shape != logits.data.shape:
        raise ValueError(f"targets shape {t.shape} != logits shape {logits.data.shape}")
    if abs(t.sum() - 1.0) > 1e-6:
        raise ValueError(f"targets must sum to 1 (got {t.sum():.8f})")
    z = logits.data - logits.data.max()
    logp = z - np.log(np.exp(z).sum())
    y = np.asarray(-(t * logp).sum())
    p = np.exp(logp)

    def pull_factory(out: Tensor):
        def pull():
            if logits.requires_grad:
                _accum(logits, out.grad * (p - t))

        return pull

    return _make_out(tape, "softmax_cross_entropy", y, (logits,), pull_factory)


# ---------------------------------------------------------------------------
# gradient verification


def grad_check(
    f: Callable[[Tape], Tensor],
    inputs: list[Tensor] | Tensor,
    step: float = 1e-5,
    only: list[Tensor] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` must rebuild the forward pass from scratch on the tape it is given
    (dropout callers: reseed the rng inside f so every evaluation sees the
    same mask). All requires_grad tensors in `inputs` are checked coordinate
    by coordinate unless `only` narrows the set. Error metric per coordinate:
    |analytic - fd| / max(|analytic|, |fd|, 1e-12).
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    check = [t for t in (only if only is not None else inputs) if t.requires_grad]
    for t in inputs:
        t.zero_grad()
    tape = Tape()
    out = f(tape)
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    backward(tape, out)
    worst = 0.0
    for t in check:
        analytic = t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            y_hi = float(f(Tape()).data)
            flat[i] = keep - step
            y_lo = float(f(Tape()).data)
            flat[i] = keep
            fd = (y_hi - y_lo) / (2.0 * step)
            a = analytic.reshape(-1)[i]
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-12)
            worst = max(worst, err)
    return worst
