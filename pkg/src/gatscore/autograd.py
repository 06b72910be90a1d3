"""Minimal dense-tensor engine with tape-based reverse-mode differentiation.

Only the operations the scoring model needs are provided, each with a
hand-written backward rule that is checked against central finite
differences in the test suite. Forward math runs on numpy buffers; ops
record onto the innermost active :class:`Tape`, and running with no active
tape is the inference fast path.

A tape is single-threaded; independent tapes on different threads may run
in parallel (the active-tape stack is thread-local).
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_LOCAL = threading.local()


def _stack() -> list["Tape"]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense array with an optional gradient buffer of the same shape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float64):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(data, dtype=np.float64) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


class Tape:
    """Ordered record of operations; backward traverses it in reverse.

    Records are appended in execution order, so inputs always precede their
    consumers (topological order by construction).
    """

    def __init__(self) -> None:
        # (output, inputs, vjp) where vjp(out_grad) returns per-input grads.
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _stack().pop()
        assert popped is self, "tape stack corrupted"

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
        out._tape = self
        self._records.append((out, inputs, vjp))

    def backward(self, loss: Tensor) -> None:
        """Populate ``.grad`` for every requires_grad tensor feeding ``loss``.

        Gradients of tensors used in several places accumulate by summation;
        repeated backward calls keep accumulating into ``.grad``.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ValueError("loss was not produced on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for out, inputs, vjp in reversed(self._records):
            out_grad = grads.pop(id(out), None)
            if out_grad is None:
                continue
            input_grads = vjp(out_grad)
            for tensor, grad in zip(inputs, input_grads):
                if grad is None:
                    continue
                prev = grads.get(id(tensor))
                grads[id(tensor)] = grad if prev is None else prev + grad
                if tensor.requires_grad:
                    leaves[id(tensor)] = tensor

        for key, tensor in leaves.items():
            remaining = grads.get(key)
            if remaining is None:
                continue
            tensor.grad = remaining.copy() if tensor.grad is None else tensor.grad + remaining


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss to its tape's leaves."""
    if loss._tape is None:
        raise ValueError("loss was not recorded on any tape")
    loss._tape.backward(loss)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


def _emit(out_data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    out = Tensor(out_data, dtype=out_data.dtype)
    tape = active_tape()
    if tape is not None:
        tape.record(out, inputs, vjp)
    return out


# --- primitive operations ---------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return (g @ b.data.T, a.data.T @ g)

    return _emit(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose expects a matrix, got shape {a.shape}")
    return _emit(np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ValueError(f"add_bias shape mismatch: {x.shape} + {b.shape}")
    return _emit(x.data + b.data[None, :], (x, b), lambda g: (g, g.sum(axis=0)))


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    if not (0.0 < slope < 1.0):
        raise ValueError(f"leaky_relu slope must be in (0, 1), got {slope}")
    # Derivative at exactly 0 is taken as the slope.
    factor = np.where(x.data > 0.0, 1.0, slope)
    return _emit(x.data * factor, (x,), lambda g: (g * factor,))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ValueError("concat of zero tensors")
    rows = parts[0].shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.shape[0] != rows:
            raise ValueError("concat_cols requires matrices with equal row counts")
    widths = [p.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=1))

    return _emit(np.concatenate([p.data for p in parts], axis=1), tuple(parts), vjp)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ValueError("gather index out of range")

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _emit(x.data[idx], (x,), vjp)


def scatter_add_rows(x: Tensor, idx: np.ndarray, num_rows: int) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[0] != x.shape[0]:
        raise ValueError("scatter index count must match row count")
    if idx.size and (idx.min() < 0 or idx.max() >= num_rows):
        raise ValueError("scatter index out of range")
    out = np.zeros((num_rows,) + x.data.shape[1:], dtype=x.data.dtype)
    np.add.at(out, idx, x.data)
    return _emit(out, (x,), lambda g: (g[idx],))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    if x.data.ndim != 2 or s.data.ndim != 1 or x.shape[0] != s.shape[0]:
        raise ValueError(f"scale_rows shape mismatch: {x.shape} * {s.shape}")

    def vjp(g):
        return (g * s.data[:, None], (g * x.data).sum(axis=1))

    return _emit(x.data * s.data[:, None], (x, s), vjp)


def _segment_counts(segment_of: np.ndarray, num_segments: int) -> np.ndarray:
    counts = np.bincount(segment_of, minlength=num_segments)
    if len(counts) > num_segments:
        raise ValueError("segment id out of range")
    if (counts == 0).any():
        empty = int(np.argmin(counts))
        raise ValueError(f"segment {empty} is empty")
    return counts


def segment_softmax(logits: Tensor, segment_of: np.ndarray, num_segments: int) -> Tensor:
    """Softmax within each segment; every segment must be non-empty.

    The per-segment maximum is subtracted before exponentiation, which is
    mathematically a no-op but keeps exp() bounded.
    """
    if logits.data.ndim != 1:
        raise ValueError(f"segment_softmax expects a vector, got shape {logits.shape}")
    seg = np.asarray(segment_of, dtype=np.int64)
    if seg.shape != logits.shape:
        raise ValueError("segment ids must align with logits")
    _segment_counts(seg, num_segments)

    maxes = np.full(num_segments, -np.inf, dtype=logits.data.dtype)
    np.maximum.at(maxes, seg, logits.data)
    expd = np.exp(logits.data - maxes[seg])
    sums = np.bincount(seg, weights=expd, minlength=num_segments)
    out = expd / sums[seg]

    def vjp(g):
        inner = np.bincount(seg, weights=g * out, minlength=num_segments)
        return (out * (g - inner[seg]),)

    return _emit(out, (logits,), vjp)


def segment_mean(x: Tensor, segment_of: np.ndarray, num_segments: int) -> Tensor:
    """Row-wise arithmetic mean per segment; every segment must be non-empty."""
    if x.data.ndim != 2:
        raise ValueError(f"segment_mean expects a matrix, got shape {x.shape}")
    seg = np.asarray(segment_of, dtype=np.int64)
    if seg.shape[0] != x.shape[0]:
        raise ValueError("segment ids must align with rows")
    counts = _segment_counts(seg, num_segments)

    sums = np.zeros((num_segments, x.shape[1]), dtype=x.data.dtype)
    np.add.at(sums, seg, x.data)
    out = sums / counts[:, None]

    def vjp(g):
        return (g[seg] / counts[seg][:, None],)

    return _emit(out, (x,), vjp)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.data.dtype)
    return _emit(out, (x,), lambda g: (np.full_like(x.data, float(g)),))


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of elementwise squared error over all entries."""
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = np.asarray(np.mean(diff * diff), dtype=pred.data.dtype)

    def vjp(g):
        base = (2.0 / diff.size) * float(g) * diff
        return (base, -base)

    return _emit(out, (pred, target), vjp)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    original = x.data.shape
    return _emit(x.data.reshape(shape).copy(), (x,), lambda g: (g.reshape(original),))


# --- gradient verification ---------------------------------------------------

def finite_diff_check(f: Callable[[], Tensor], params: Iterable[Tensor],
                      eps: float = 1e-5, coords_per_param: Optional[int] = None,
                      seed: int = 0) -> float:
    """Compare tape gradients of ``f()`` against central finite differences.

    ``f`` must rebuild the scalar loss from the parameters' current data on
    every call. Returns the max over checked coordinates of
    ``|g_analytic - g_numeric| / max(1e-8, |g_numeric|)``. With
    ``coords_per_param`` set, at most that many coordinates per parameter are
    sampled (seeded), otherwise all are checked.
    """
    params = list(params)
    zero_grads(params)
    with Tape() as tape:
        loss = f()
        tape.backward(loss)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        if p.grad is None:
            raise ValueError("parameter received no gradient; is it used by f?")
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1)
        if coords_per_param is not None and flat.size > coords_per_param:
            coords = rng.choice(flat.size, size=coords_per_param, replace=False)
        else:
            coords = np.arange(flat.size)
        for i in coords:
            saved = flat[i]
            flat[i] = saved + eps
            plus = f().item()
            flat[i] = saved - eps
            minus = f().item()
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * eps)
            rel = abs(grad[i] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, rel)
    return worst
