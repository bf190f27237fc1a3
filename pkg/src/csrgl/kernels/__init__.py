"""Sparse operators over CSR graphs.

The generalised SpMM aggregates, for every node ``u``, the messages
``compute(h[v], w_e)`` over the edges ``e = (u, v)`` in row ``u`` and folds
them with ``reduce``. With ``mul_edge_weight``/``sum`` it is ``A @ h``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import _accel
from ..graph import EdgeList, Graph, build_graph
from . import _numba, _numpy

REDUCE_OPS = {"sum": 0, "mean": 1, "max": 2, "min": 3}
COMPUTE_OPS = ("copy_rhs", "mul_edge_weight")


class KernelError(ValueError):
    pass


def _impl():
    return _numba if _accel.get_backend() == "numba" else _numpy


def _as2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return np.ascontiguousarray(x)


def gspmm(g, h, compute: str = "mul_edge_weight", reduce: str = "sum", weight=None) -> np.ndarray:
    """Generalised SpMM: ``out[u] = reduce_{e=(u,v)} compute(h[v], w_e)``.

    ``weight`` overrides the graph's edge weights (used for learned edge
    scores). Rows without edges produce zeros for every reduce.
    """
    if compute not in COMPUTE_OPS:
        raise KernelError(f"unknown compute op {compute!r}; expected one of {COMPUTE_OPS}")
    if reduce not in REDUCE_OPS:
        raise KernelError(f"unknown reduce op {reduce!r}; expected one of {tuple(REDUCE_OPS)}")
    h = np.asarray(h, dtype=np.float64)
    squeeze = h.ndim == 1
    h = _as2d(h)
    if h.shape[0] != g.shape[1]:
        raise KernelError(f"gspmm: h has {h.shape[0]} rows, graph has {g.shape[1]} columns")
    w = g.weights if weight is None else np.ascontiguousarray(weight, dtype=np.float64)
    if w.shape != (g.num_edges,):
        raise KernelError("gspmm: weight must have one entry per edge")
    out = _impl().spmm(g.row_ptr, g.col_idx, w, h, REDUCE_OPS[reduce], compute == "mul_edge_weight")
    return out[:, 0] if squeeze else out


def gspmm_transpose(g, grad, weight=None) -> np.ndarray:
    """``A^T @ grad`` using the cached transposed pattern (the SpMM backward)."""
    t_ptr, t_col, perm = g.transposed
    w = g.weights if weight is None else np.asarray(weight, dtype=np.float64)
    grad = _as2d(grad)
    return _impl().spmm(t_ptr, t_col, np.ascontiguousarray(w[perm]), grad, 0, True)


def multi_head_spmm(g, edge_scores, h, heads: int | None = None) -> np.ndarray:
    """Per-head SpMM where all heads share ``g``'s sparsity pattern.

    ``edge_scores`` is ``num_edges x heads``; ``h`` holds the heads side by
    side as ``n x (heads * d)``.
    """
    s = _as2d(edge_scores)
    heads = s.shape[1] if heads is None else heads
    if s.shape != (g.num_edges, heads):
        raise KernelError(f"edge_scores must be ({g.num_edges}, {heads}), got {s.shape}")
    h = _as2d(h)
    if h.shape[0] != g.shape[1]:
        raise KernelError("multi_head_spmm: h row count does not match graph")
    if h.shape[1] % heads:
        raise KernelError(f"h width {h.shape[1]} not divisible by heads={heads}")
    return _impl().multi_head_spmm(g.row_ptr, g.col_idx, s, h, heads)


def multi_head_spmm_transpose(g, edge_scores, grad, heads: int) -> np.ndarray:
    t_ptr, t_col, perm = g.transposed
    s = _as2d(edge_scores)[perm]
    return _impl().multi_head_spmm(t_ptr, t_col, np.ascontiguousarray(s), _as2d(grad), heads)


def sddmm(g, p, q) -> np.ndarray:
    """``t_e = p[u] . q[v]`` for each edge ``e = (u, v)``; edge weights are ignored."""
    p, q = _as2d(p), _as2d(q)
    if p.shape[0] != g.shape[0] or q.shape[0] != g.shape[1]:
        raise KernelError("sddmm: p/q row counts do not match graph")
    if p.shape[1] != q.shape[1]:
        raise KernelError("sddmm: p and q need the same column count")
    return _impl().sddmm(g.row_ptr, g.col_idx, p, q)


def multi_head_sddmm(g, p, q, heads: int) -> np.ndarray:
    """Per-head SDDMM returning ``num_edges x heads``."""
    p, q = _as2d(p), _as2d(q)
    if p.shape[1] != q.shape[1] or p.shape[1] % heads:
        raise KernelError("multi_head_sddmm: width mismatch")
    return _impl().multi_head_sddmm(g.row_ptr, g.col_idx, p, q, heads)


def edge_softmax(g, logits) -> np.ndarray:
    """Softmax of edge logits within each row, max-subtracted before ``exp``."""
    x = np.asarray(logits, dtype=np.float64)
    squeeze = x.ndim == 1
    x = _as2d(x)
    if x.shape[0] != g.num_edges:
        raise KernelError(f"edge_softmax: expected {g.num_edges} logits, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise KernelError("edge_softmax: non-finite logit")
    out = _impl().edge_softmax(g.row_ptr, x)
    return out[:, 0] if squeeze else out


def edge_softmax_backward(g, out, grad) -> np.ndarray:
    squeeze = np.ndim(out) == 1
    res = _impl().edge_softmax_backward(g.row_ptr, _as2d(out), _as2d(grad))
    return res[:, 0] if squeeze else res


def segment_sum(g, values) -> np.ndarray:
    """Sum per-edge values into their rows."""
    return _impl().segment_sum(g.row_ptr, _as2d(values))


def ppr_coeffs(alpha: float, K: int) -> np.ndarray:
    """Truncated personalised-PageRank weights ``alpha (1 - alpha)^i``, ``i = 0..K``."""
    if not 0 < alpha <= 1:
        raise KernelError(f"alpha must lie in (0, 1], got {alpha}")
    if K < 0:
        raise KernelError("K must be >= 0")
    return alpha * (1.0 - alpha) ** np.arange(K + 1, dtype=np.float64)


DENSE_DIFFUSION_LIMIT = 4096


def diffusion_matrix(g: Graph, coeffs: Sequence[float], eps: float = 1e-4) -> Graph:
    """``sum_i coeffs[i] * A^i`` as a sparse graph, dropping entries ``|x| < eps``.

    ``A^0`` is the identity. Up to ``DENSE_DIFFUSION_LIMIT`` nodes the powers
    are formed densely (Horner's rule); above that by sparse products with
    pruning after every step to bound fill-in.
    """
    coeffs = [float(c) for c in coeffs]
    if not coeffs:
        raise KernelError("diffusion_matrix needs at least one coefficient")
    n = g.num_nodes
    if n <= DENSE_DIFFUSION_LIMIT:
        a = g.to_dense()
        acc = np.eye(n) * coeffs[-1]
        for c in reversed(coeffs[:-1]):
            acc = a @ acc
            acc[np.diag_indices(n)] += c
        rows, cols = np.nonzero(np.abs(acc) >= eps) if eps > 0 else np.nonzero(acc)
        vals = acc[rows, cols]
    else:
        import scipy.sparse as sp

        a = g.to_scipy()
        acc = sp.identity(n, format="csr") * coeffs[-1]
        for c in reversed(coeffs[:-1]):
            acc = (a @ acc).tocsr()
            acc = acc + sp.identity(n, format="csr") * c
            if eps > 0:
                acc.data[np.abs(acc.data) < eps] = 0.0
                acc.eliminate_zeros()
        coo = acc.tocoo()
        rows, cols, vals = coo.row, coo.col, coo.data
    out = build_graph(n, EdgeList(rows, cols, vals), weighted=True)
    return out.with_data(features=g.features, labels=g.labels, train_mask=g.train_mask,
                         val_mask=g.val_mask, test_mask=g.test_mask, name=g.name)
