"""Minimal reverse-mode autodiff over dense float64 matrices.

Operations record themselves on the active :class:`Tape`; ``backward`` walks
the records in reverse order. The sparse aggregation backward uses the same
SDDMM kernel the forward operators expose, so the gradient of a learned
edge weight ``e = (u, v)`` is exactly ``sddmm(g, G, h)[e]``.
"""
from __future__ import annotations

import struct
import threading
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import kernels

_state = threading.local()


class AutodiffError(ValueError):
    pass


class Var:
    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, value, requires_grad: bool = False, name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents: tuple = ()
        self.backward_fn: Optional[Callable] = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Var(shape={self.shape}, requires_grad={self.requires_grad}, name={self.name!r})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, c):
        return scale(self, c)

    __rmul__ = __mul__


def param(value, name: str = "") -> Var:
    return Var(value, requires_grad=True, name=name)


def constant(value) -> Var:
    return value if isinstance(value, Var) else Var(value)


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.records: list[Var] = []

    def __enter__(self):
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def backward(self, out: Var, grad: Optional[np.ndarray] = None):
        if grad is None:
            if out.value.size != 1:
                raise AutodiffError("backward without grad needs a scalar output")
            grad = np.ones_like(out.value)
        out.grad = np.asarray(grad, dtype=np.float64).reshape(out.shape).copy()
        for node in reversed(self.records):
            if node.grad is None:
                continue
            parent_grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64, copy=True).reshape(parent.shape)
                else:
                    parent.grad += np.reshape(g, parent.shape)


def _active_tape() -> Optional[Tape]:
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


def _record(value, parents: Sequence[Var], backward_fn) -> Var:
    out = Var(value)
    if any(p.requires_grad for p in parents):
        tape = _active_tape()
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
        if tape is not None:
            tape.records.append(out)
    return out


# dense algebra ---------------------------------------------------------------

def matmul(a: Var, b: Var) -> Var:
    a, b = constant(a), constant(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _record(av @ bv, (a, b), lambda g: (g @ bv.T if a.requires_grad else None,
                                               av.T @ g if b.requires_grad else None))


def transpose(a: Var) -> Var:
    return _record(a.value.T, (a,), lambda g: (g.T,))


def add(a: Var, b: Var) -> Var:
    """Elementwise sum; ``b`` may be a row vector broadcast over ``a``'s rows."""
    a, b = constant(a), constant(b)
    out = a.value + b.value

    def back(g):
        gb = g
        if b.shape != out.shape:
            gb = g.sum(axis=0).reshape(b.shape)
        return g, gb

    return _record(out, (a, b), back)


def sub(a: Var, b: Var) -> Var:
    return add(a, scale(b, -1.0))


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return _record(a.value * c, (a,), lambda g: (g * c,))


def mul(a: Var, b: Var) -> Var:
    """Elementwise product of equal shapes."""
    a, b = constant(a), constant(b)
    av, bv = a.value, b.value
    return _record(av * bv, (a, b), lambda g: (g * bv, g * av))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return _record(a.value * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a: Var, slope: float = 0.2) -> Var:
    factor = np.where(a.value > 0, 1.0, slope)
    return _record(a.value * factor, (a,), lambda g: (g * factor,))


def elu(a: Var, alpha: float = 1.0) -> Var:
    x = a.value
    neg = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg)
    deriv = np.where(x > 0, 1.0, neg + alpha)
    return _record(out, (a,), lambda g: (g * deriv,))


def prelu(a: Var, slope: Var) -> Var:
    """Parametric ReLU with one learnable slope per column."""
    x, s = a.value, slope.value.reshape(1, -1)
    pos = x > 0
    out = np.where(pos, x, s * x)

    def back(g):
        return g * np.where(pos, 1.0, s), (g * np.where(pos, 0.0, x)).sum(axis=0).reshape(slope.shape)

    return _record(out, (a, slope), back)


def sigmoid(a: Var) -> Var:
    out = _sigmoid(a.value)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dropout(a: Var, p: float, rng: Optional[np.random.Generator], training: bool) -> Var:
    """Inverted dropout; the identity when ``training`` is false or ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise AutodiffError(f"dropout p must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _record(a.value * mask, (a,), lambda g: (g * mask,))


def concat_cols(parts: Sequence[Var]) -> Var:
    parts = [constant(p) for p in parts]
    widths = np.cumsum([0] + [p.shape[1] for p in parts])
    out = np.concatenate([p.value for p in parts], axis=1)
    return _record(out, parts, lambda g: tuple(g[:, widths[i]:widths[i + 1]] for i in range(len(parts))))


def row_mean_readout(a: Var) -> Var:
    """Mean over rows, a ``1 x d`` summary."""
    n = a.shape[0]
    return _record(a.value.mean(axis=0, keepdims=True), (a,),
                   lambda g: (np.broadcast_to(g / n, a.shape),))


def mean_all(a: Var) -> Var:
    size = a.value.size
    return _record(np.array(a.value.mean()), (a,), lambda g: (np.full(a.shape, float(g) / size),))


def take_rows(a: Var, idx) -> Var:
    """Gather rows ``a[idx]`` (scatter-add backward)."""
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        out = np.zeros(a.shape)
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.value[idx], (a,), back)


def slice_rows(a: Var, stop: int) -> Var:
    def back(g):
        out = np.zeros(a.shape)
        out[:stop] = g
        return (out,)

    return _record(a.value[:stop], (a,), back)


# sparse operators ----------------------------------------------------------

def spmm_var(g, h: Var, edge_weight: Optional[Var] = None) -> Var:
    """``A @ h`` with optional learnable edge weights.

    Backward: ``dh = A^T G`` over the transposed pattern and
    ``dw_e = G[u] . h[v]``, which is ``sddmm(g, G, h)``.
    """
    h = constant(h)
    w = g.weights if edge_weight is None else edge_weight.value.reshape(-1)
    out = kernels.gspmm(g, h.value, weight=w)
    hv = h.value
    parents = (h,) if edge_weight is None else (h, edge_weight)

    def back(G):
        dh = kernels.gspmm_transpose(g, G, weight=w) if h.requires_grad else None
        if edge_weight is None:
            return (dh,)
        dw = kernels.sddmm(g, G, hv) if edge_weight.requires_grad else None
        return dh, (None if dw is None else dw.reshape(edge_weight.shape))

    return _record(out, parents, back)


def aggregate_var(g, h: Var, reduce: str = "sum") -> Var:
    """Unweighted sum or mean over each row's neighbours (``copy_rhs``)."""
    if reduce not in ("sum", "mean"):
        raise AutodiffError("aggregate_var supports sum and mean")
    h = constant(h)
    out = kernels.gspmm(g, h.value, compute="copy_rhs", reduce=reduce)
    counts = g.row_counts.astype(np.float64)
    if reduce == "mean":
        w = 1.0 / np.maximum(counts, 1.0)[g.row_index]
    else:
        w = np.ones(g.num_edges)
    return _record(out, (h,), lambda G: (kernels.gspmm_transpose(g, G, weight=w),))


def multi_head_spmm_var(g, scores: Var, h: Var, heads: int) -> Var:
    scores, h = constant(scores), constant(h)
    sv, hv = scores.value, h.value
    out = kernels.multi_head_spmm(g, sv, hv, heads)

    def back(G):
        ds = kernels.multi_head_sddmm(g, G, hv, heads) if scores.requires_grad else None
        dh = kernels.multi_head_spmm_transpose(g, sv, G, heads) if h.requires_grad else None
        return ds, dh

    return _record(out, (scores, h), back)


def edge_softmax_var(g, logits: Var) -> Var:
    out = kernels.edge_softmax(g, logits.value)
    return _record(out, (logits,), lambda G: (kernels.edge_softmax_backward(g, out, G),))


def head_scores(z: Var, a: Var, heads: int) -> Var:
    """Per-head dot products: ``out[:, k] = z[:, k-th slice] @ a[k]``.

    ``z`` is ``n x (heads * d)``, ``a`` is ``heads x d``.
    """
    n = z.shape[0]
    d = z.shape[1] // heads
    zv = z.value.reshape(n, heads, d)
    av = a.value.reshape(heads, d)
    out = np.einsum("nkd,kd->nk", zv, av)

    def back(G):
        dz = (G[:, :, None] * av[None, :, :]).reshape(n, heads * d)
        da = np.einsum("nkd,nk->kd", zv, G).reshape(a.shape)
        return dz, da

    return _record(out, (z, a), back)


def gather_edges(g, x: Var, side: str) -> Var:
    """Lift per-node values to edges: ``side='row'`` reads ``x[u]``, ``'col'`` reads ``x[v]``."""
    if side == "row":
        idx = g.row_index

        def back(G):
            return (kernels.segment_sum(g, G),)
    elif side == "col":
        idx = g.col_idx
        t_ptr, _, perm = g.transposed

        def back(G):
            G = G.reshape(len(idx), -1)
            out = np.zeros((g.shape[1], G.shape[1]))
            rows = np.flatnonzero(np.diff(t_ptr))
            if len(G):
                out[rows] = np.add.reduceat(G[perm], t_ptr[rows], axis=0)
            return (out,)
    else:
        raise AutodiffError("side must be 'row' or 'col'")
    return _record(x.value[idx], (x,), back)


# losses ------------------------------------------------------------------------

def _mask_index(mask, n):
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if len(idx) == 0:
        raise AutodiffError("loss over an empty mask")
    if idx.max() >= n:
        raise AutodiffError("mask index out of range")
    return idx


def softmax_cross_entropy(logits: Var, labels, mask=None) -> Var:
    """Mean of ``-log softmax(logits)[label]`` over masked rows."""
    n, c = logits.shape
    idx = np.arange(n) if mask is None else _mask_index(mask, n)
    labels = np.asarray(labels, dtype=np.int64)
    y = labels[idx]
    if len(y) and (y.min() < 0 or y.max() >= c):
        raise AutodiffError("label outside [0, num_classes)")
    z = logits.value[idx]
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(len(idx)), y]))

    def back(G):
        probs = np.exp(z - logsum[:, None])
        probs[np.arange(len(idx)), y] -= 1.0
        out = np.zeros((n, c))
        out[idx] = probs * (float(G) / len(idx))
        return (out,)

    return _record(np.array(loss), (logits,), back)


def bce_with_logits(scores: Var, targets) -> Var:
    """Mean binary cross-entropy on raw scores, stable for large ``|s|``."""
    s = scores.value
    t = np.broadcast_to(np.asarray(targets, dtype=np.float64), s.shape)
    loss = np.maximum(s, 0.0) - s * t + np.log1p(np.exp(-np.abs(s)))
    size = s.size
    return _record(np.array(loss.mean()), (scores,), lambda G: ((_sigmoid(s) - t) * (float(G) / size),))


# optimisation -----------------------------------------------------------------

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Adam:
    """Adam with L2 weight decay added to the gradient."""

    def __init__(self, params: Iterable[Var], lr: float = 0.01, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.weight_decay, self.betas, self.eps = lr, weight_decay, betas, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = np.zeros_like(p.value) if p.grad is None else p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.value
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}

    def load_state_dict(self, state):
        self.t = state["t"]
        self.m = [m.copy() for m in state["m"]]
        self.v = [v.copy() for v in state["v"]]


# checkpoints ------------------------------------------------------------------

_MAGIC = b"CSRGLCK1"


def save_checkpoint(path, params: dict[str, np.ndarray]) -> None:
    """Write named f64 tensors: binary blob plus a ``.manifest.txt`` listing."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(params)))
        for name, value in params.items():
            arr = np.asarray(value, dtype="<f8")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes())
    lines = [f"{name}\t{'x'.join(map(str, np.shape(v))) or 'scalar'}" for name, v in params.items()]
    Path(str(path) + ".manifest.txt").write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise AutodiffError(f"{path}: not a checkpoint file")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            out[name] = np.frombuffer(f.read(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    return out
