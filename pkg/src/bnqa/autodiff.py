"""Minimal dense-tensor library with reverse-mode automatic differentiation.

All tensors are 64-bit float numpy arrays in row-major order. Differentiable
ops record themselves on a per-thread tape; ``backward`` replays the tape in
reverse and accumulates gradients into every tensor that requires them.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# tanh-approximation constant for gelu: sqrt(2/pi)
_GELU_C = math.sqrt(2.0 / math.pi)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


class TapeError(RuntimeError):
    """Raised when backward is called without a recorded forward pass."""


class Tensor:
    """A dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        # asarray keeps 0-d scalars 0-d; ascontiguousarray would promote to 1-d
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


@dataclass
class TapeEntry:
    out: Tensor
    backward_fn: Callable[[np.ndarray], None]


class _TapeState(threading.local):
    def __init__(self):
        self.entries: list[TapeEntry] = []
        self.enabled = True


_state = _TapeState()


def tape_size() -> int:
    return len(_state.entries)


def clear_tape() -> None:
    _state.entries.clear()


@contextmanager
def no_grad():
    """Disable tape recording (inference / finite-difference evaluations)."""
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _record(out: Tensor, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    if _state.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _state.entries.append(TapeEntry(out, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape``, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul requires rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimension mismatch: {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            a.accumulate_grad(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            b.accumulate_grad(_unbroadcast(gb, b.shape))

    return _record(out, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add cannot broadcast shapes {a.shape} + {b.shape}") from None
    out = Tensor(data)

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _record(out, (a, b), backward_fn)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * c)

    return _record(out, (a,), backward_fn)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0.0))

    return _record(out, (a,), backward_fn)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = Tensor(0.5 * x * (1.0 + t))

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
            deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * d_inner
            a.accumulate_grad(g * deriv)

    return _record(out, (a,), backward_fn)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, with max-subtraction for stability."""
    if not np.isfinite(a.data).all():
        raise ValueError("softmax input contains non-finite values")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            dot = (g * y).sum(axis=-1, keepdims=True)
            a.accumulate_grad(y * (g - dot))

    return _record(out, (a,), backward_fn)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    h = a.shape[-1]
    if gain.shape != (h,) or bias.shape != (h,):
        raise ShapeError(
            f"layer_norm gain/bias must have shape ({h},), got {gain.shape} and {bias.shape}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    out = Tensor(gain.data * xhat + bias.data)

    def backward_fn(g: np.ndarray) -> None:
        lead = tuple(range(g.ndim - 1))
        if gain.requires_grad:
            gain.accumulate_grad((g * xhat).sum(axis=lead))
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=lead))
        if a.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            a.accumulate_grad(inv * (dxhat - m1 - xhat * m2))

    return _record(out, (a, gain, bias), backward_fn)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradient scatter-adds into the table."""
    idx = np.asarray(ids, dtype=np.intp)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"embedding id out of range [0, {n}): min={idx.min()}, max={idx.max()}")
    out = Tensor(table.data[idx])

    def backward_fn(g: np.ndarray) -> None:
        if table.requires_grad:
            dt = np.zeros_like(table.data)
            np.add.at(dt, idx, g)
            table.accumulate_grad(dt)

    return _record(out, (table,), backward_fn)


def dropout(a: Tensor, rate: float, training: bool, rng_seed: int) -> Tensor:
    """Inverted dropout. Identity when not training or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    rng = np.random.default_rng(rng_seed)
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * mask)

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return _record(out, (a,), backward_fn)


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Negative log softmax probability of the target index.

    1-D logits with an int target give a scalar loss; 2-D logits with a
    vector of per-row targets give a loss vector of shape (rows,).
    """
    if not np.isfinite(logits.data).all():
        raise ValueError("cross_entropy input contains non-finite values")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse

    if logits.data.ndim == 1:
        t = int(target)
        if not 0 <= t < logits.shape[0]:
            raise ShapeError(f"cross_entropy target {t} out of range for {logits.shape}")
        out = Tensor(-logp[t])

        def backward_fn(g: np.ndarray) -> None:
            if logits.requires_grad:
                d = np.exp(logp)
                d[t] -= 1.0
                logits.accumulate_grad(d * g)

    elif logits.data.ndim == 2:
        t = np.asarray(target, dtype=np.intp)
        rows = logits.shape[0]
        if t.shape != (rows,):
            raise ShapeError(f"cross_entropy targets shape {t.shape} != ({rows},)")
        if t.size and (t.min() < 0 or t.max() >= logits.shape[1]):
            raise ShapeError(f"cross_entropy target out of range for {logits.shape}")
        r = np.arange(rows)
        out = Tensor(-logp[r, t])

        def backward_fn(g: np.ndarray) -> None:
            if logits.requires_grad:
                d = np.exp(logp)
                d[r, t] -= 1.0
                logits.accumulate_grad(d * g[:, None])

    else:
        raise ShapeError(f"cross_entropy expects rank 1 or 2 logits, got {logits.shape}")

    return _record(out, (logits,), backward_fn)


# ---------------------------------------------------------------------------
# structural ops (gradient plumbing for the encoder)
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.shape))

    return _record(out, (a,), backward_fn)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    inverse = tuple(np.argsort(axes))

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g.transpose(inverse))

    return _record(out, (a,), backward_fn)


def index_last(a: Tensor, k: int) -> Tensor:
    """Select index ``k`` along the last axis, dropping that axis."""
    if not 0 <= k < a.shape[-1]:
        raise ShapeError(f"index {k} out of range for last axis of {a.shape}")
    out = Tensor(a.data[..., k])

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            d = np.zeros_like(a.data)
            d[..., k] = g
            a.accumulate_grad(d)

    return _record(out, (a,), backward_fn)


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = Tensor(a.data.sum())

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(np.full(a.shape, float(g)))

    return _record(out, (a,), backward_fn)


# ---------------------------------------------------------------------------
# backward pass and gradient checking
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate gradients of ``loss`` into all tracked tensors.

    The tape is consumed: a second backward without a fresh forward raises.
    """
    if loss.shape != ():
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not _state.entries:
        raise TapeError("backward called with an empty tape (run a forward pass first)")
    entries = _state.entries
    _state.entries = []
    loss.accumulate_grad(np.ones(()))
    for entry in reversed(entries):
        g = entry.out.grad
        if g is not None:
            entry.backward_fn(g)


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    worst_index: tuple[int, ...]

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5, tol: float = 1e-4
) -> GradCheckReport:
    """Compare the analytic gradient of ``f`` at ``x`` against central differences.

    Relative error per element is |a - n| / max(|a|, |n|, 1e-8). ``f`` must be
    a pure scalar-valued function of ``x.data``.
    """
    x.requires_grad = True
    x.grad = None
    clear_tape()
    loss = f(x)
    backward(loss)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f(x).item()
            flat[i] = orig - h
            lo = f(x).item()
            flat[i] = orig
            numeric.reshape(-1)[i] = (hi - lo) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    worst = np.unravel_index(int(rel.argmax()), rel.shape) if rel.size else ()
    return GradCheckReport(float(rel.max()) if rel.size else 0.0, tol, tuple(worst))
