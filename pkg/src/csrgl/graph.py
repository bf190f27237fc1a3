"""Immutable CSR graph and the structural manipulations built on it.

Row ``u`` of the CSR holds the edges ``(u, v)`` that node ``u`` aggregates
from, so ``gspmm(g, h)`` with sum/multiply computes ``A @ h``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised on malformed graph input."""


@dataclass(frozen=True)
class EdgeList:
    src: np.ndarray
    dst: np.ndarray
    weight: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "src", np.asarray(self.src, dtype=np.int64).ravel())
        object.__setattr__(self, "dst", np.asarray(self.dst, dtype=np.int64).ravel())
        if self.src.shape != self.dst.shape:
            raise GraphError("src and dst must have equal length")
        if self.weight is not None:
            w = np.asarray(self.weight, dtype=np.float64).ravel()
            if w.shape != self.src.shape:
                raise GraphError("weight must have one entry per edge")
            object.__setattr__(self, "weight", w)

    def __len__(self) -> int:
        return len(self.src)


def csr_transpose(row_ptr: np.ndarray, col_idx: np.ndarray, num_cols: int):
    """Transpose a CSR pattern.

    Returns ``(t_row_ptr, t_col_idx, perm)`` where ``perm[k]`` is the edge id
    in the original ordering of the k-th transposed edge. A stable sort keeps
    the transposed rows in canonical (increasing column) order.
    """
    num_rows = len(row_ptr) - 1
    rows = np.repeat(np.arange(num_rows, dtype=np.int64), np.diff(row_ptr))
    perm = np.argsort(col_idx, kind="stable")
    counts = np.bincount(col_idx, minlength=num_cols)
    t_row_ptr = np.zeros(num_cols + 1, dtype=np.int64)
    np.cumsum(counts, out=t_row_ptr[1:])
    return t_row_ptr, rows[perm], perm


class _CSRMixin:
    """Shared helpers for anything carrying ``row_ptr``/``col_idx``/``edge_weight``."""

    @property
    def num_edges(self) -> int:
        return int(self.col_idx.shape[0])

    @cached_property
    def weights(self) -> np.ndarray:
        """Edge weights with the all-ones default materialised."""
        if self.edge_weight is None:
            return np.ones(self.num_edges, dtype=np.float64)
        return self.edge_weight

    @cached_property
    def row_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.row_ptr))

    @cached_property
    def row_counts(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    @cached_property
    def transposed(self):
        """``(row_ptr, col_idx, perm)`` of the transposed pattern, cached."""
        return csr_transpose(self.row_ptr, self.col_idx, self.shape[1])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.float64)
        np.add.at(out, (self.row_index, self.col_idx), self.weights)
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.weights, self.col_idx, self.row_ptr), shape=self.shape)


@dataclass(frozen=True, eq=False)
class Graph(_CSRMixin):
    num_nodes: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    edge_weight: Optional[np.ndarray] = None
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    train_mask: Optional[np.ndarray] = None
    val_mask: Optional[np.ndarray] = None
    test_mask: Optional[np.ndarray] = None
    name: str = field(default="")

    def __post_init__(self):
        _check_csr(self.num_nodes, self.row_ptr, self.col_idx, self.edge_weight)
        n = self.num_nodes
        if self.features is not None and self.features.shape[0] != n:
            raise GraphError(f"features have {self.features.shape[0]} rows, expected {n}")
        if self.labels is not None and self.labels.shape[0] != n:
            raise GraphError(f"labels have {self.labels.shape[0]} rows, expected {n}")
        for mask_name in ("train_mask", "val_mask", "test_mask"):
            m = getattr(self, mask_name)
            if m is not None and m.shape != (n,):
                raise GraphError(f"{mask_name} must have shape ({n},)")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_nodes, self.num_nodes)

    @property
    def multilabel(self) -> bool:
        return self.labels is not None and self.labels.ndim == 2

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            return 0
        if self.multilabel:
            return int(self.labels.shape[1])
        return int(self.labels.max()) + 1

    @property
    def num_features(self) -> int:
        return 0 if self.features is None else int(self.features.shape[1])

    def degrees(self, weighted: bool = True) -> np.ndarray:
        if not weighted:
            return self.row_counts.astype(np.float64)
        return np.bincount(self.row_index, weights=self.weights, minlength=self.num_nodes)

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[u]:self.row_ptr[u + 1]]

    def edge_list(self) -> EdgeList:
        return EdgeList(self.row_index.copy(), self.col_idx.copy(),
                        None if self.edge_weight is None else self.edge_weight.copy())

    def has_self_loops(self) -> bool:
        return bool(np.any(self.row_index == self.col_idx))

    def with_weights(self, weight: Optional[np.ndarray]) -> "Graph":
        return replace(self, edge_weight=weight)

    def with_data(self, **kwargs) -> "Graph":
        return replace(self, **kwargs)

    def __repr__(self) -> str:
        return (f"Graph(name={self.name!r}, num_nodes={self.num_nodes}, num_edges={self.num_edges}, "
                f"features={self.num_features}, classes={self.num_classes})")


@dataclass(frozen=True, eq=False)
class Block(_CSRMixin):
    """Bipartite message-flow layer produced by neighbour sampling.

    Rows are destination nodes, columns index into ``src_nodes``. The
    destination nodes are always the first ``len(dst_nodes)`` entries of
    ``src_nodes``, so ``h_src[:num_dst]`` is the destination slice.
    """

    row_ptr: np.ndarray
    col_idx: np.ndarray
    edge_weight: Optional[np.ndarray]
    src_nodes: np.ndarray
    dst_nodes: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.dst_nodes), len(self.src_nodes))

    @property
    def num_dst(self) -> int:
        return len(self.dst_nodes)


def _check_csr(n, row_ptr, col_idx, edge_weight):
    if row_ptr.shape != (n + 1,):
        raise GraphError(f"row_ptr must have length {n + 1}")
    if row_ptr[0] != 0 or row_ptr[-1] != len(col_idx):
        raise GraphError("row_ptr must start at 0 and end at num_edges")
    if np.any(np.diff(row_ptr) < 0):
        raise GraphError("row_ptr must be nondecreasing")
    if len(col_idx) and (col_idx.min() < 0 or col_idx.max() >= n):
        raise GraphError("col_idx entry out of range")
    if len(col_idx) > 1:
        same_row = np.ones(len(col_idx) - 1, dtype=bool)
        same_row[row_ptr[1:-1][(row_ptr[1:-1] > 0) & (row_ptr[1:-1] < len(col_idx))] - 1] = False
        if np.any(np.diff(col_idx)[same_row] <= 0):
            raise GraphError("col_idx must be strictly increasing within each row")
    if edge_weight is not None:
        if edge_weight.shape != col_idx.shape:
            raise GraphError("edge_weight must have num_edges entries")
        if not np.all(np.isfinite(edge_weight)):
            raise GraphError("edge_weight must be finite")


def build_graph(n: int, edges: EdgeList | Sequence, undirected: bool = False,
                weighted: Optional[bool] = None, **data) -> Graph:
    """Build a canonical CSR graph from an edge list.

    Rows are sorted, duplicate edges coalesce by summing their weights, and
    an undirected edge ``(i, j)`` is also stored as ``(j, i)``. ``weighted``
    forces whether ``edge_weight`` is kept; by default it is kept only when
    the input carries weights or duplicates were merged.
    """
    if not isinstance(edges, EdgeList):
        edges = _edgelist_from_tuples(edges)
    src, dst, w = edges.src, edges.dst, edges.weight
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
        raise GraphError(f"edge endpoint out of range for n={n}")
    if w is not None:
        if not np.all(np.isfinite(w)):
            raise GraphError("edge weights must be finite")
        if np.any(w < 0):
            raise GraphError("negative edge weight")
    has_weights = w is not None
    if w is None:
        w = np.ones(len(src), dtype=np.float64)
    if undirected:
        off = src != dst
        src, dst, w = (np.concatenate([src, dst[off]]), np.concatenate([dst, src[off]]),
                       np.concatenate([w, w[off]]))

    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    if len(src):
        new = np.ones(len(src), dtype=bool)
        new[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        starts = np.flatnonzero(new)
        merged = len(starts) != len(src)
        w = np.add.reduceat(w, starts)
        src, dst = src[starts], dst[starts]
    else:
        merged = False

    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=row_ptr[1:])
    keep = weighted if weighted is not None else (has_weights or merged)
    return Graph(n, row_ptr, dst.astype(np.int64), w if keep else None, **data)


def _edgelist_from_tuples(edges) -> EdgeList:
    edges = list(edges)
    if not edges:
        return EdgeList(np.zeros(0, np.int64), np.zeros(0, np.int64))
    src = [e[0] for e in edges]
    dst = [e[1] for e in edges]
    if any(len(e) > 2 for e in edges):
        w = [e[2] if len(e) > 2 else 1.0 for e in edges]
        return EdgeList(src, dst, w)
    return EdgeList(src, dst)


def add_self_loops(g: Graph, fill: float = 1.0) -> Graph:
    """Give every node a self-loop of weight ``fill``, replacing existing ones."""
    el = g.edge_list()
    w = g.weights
    keep = el.src != el.dst
    loops = np.arange(g.num_nodes, dtype=np.int64)
    src = np.concatenate([el.src[keep], loops])
    dst = np.concatenate([el.dst[keep], loops])
    weight = np.concatenate([w[keep], np.full(g.num_nodes, float(fill))])
    out = build_graph(g.num_nodes, EdgeList(src, dst, weight), weighted=True)
    if g.edge_weight is None and fill == 1.0:
        out = out.with_weights(None)
    return _carry_data(g, out)


def remove_self_loops(g: Graph) -> Graph:
    keep = g.row_index != g.col_idx
    el = EdgeList(g.row_index[keep], g.col_idx[keep],
                  None if g.edge_weight is None else g.edge_weight[keep])
    return _carry_data(g, build_graph(g.num_nodes, el, weighted=g.edge_weight is not None))


def sym_norm(g: Graph) -> Graph:
    """Replace ``w_uv`` by ``w_uv / sqrt(deg(u) deg(v))``.

    Degrees are weighted row sums. Self-loops are not added here; rows of
    zero-degree nodes stay empty.
    """
    deg = g.degrees()
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = deg[nz] ** -0.5
    w = g.weights * inv_sqrt[g.row_index] * inv_sqrt[g.col_idx]
    return g.with_weights(w)


def row_norm(g: Graph) -> Graph:
    """Row-stochastic ``D^{-1} A``."""
    deg = g.degrees()
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 1.0 / deg[nz]
    return g.with_weights(g.weights * inv[g.row_index])


def induced_subgraph(g: Graph, nodes) -> tuple[Graph, np.ndarray]:
    """Subgraph on ``nodes`` plus an old-to-new index map (``-1`` if dropped).

    New ids follow increasing old id, so the mapping is order-preserving.
    """
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    if len(nodes) and (nodes[0] < 0 or nodes[-1] >= g.num_nodes):
        raise GraphError("induced_subgraph: node index out of range")
    mapping = np.full(g.num_nodes, -1, dtype=np.int64)
    mapping[nodes] = np.arange(len(nodes))
    keep = (mapping[g.row_index] >= 0) & (mapping[g.col_idx] >= 0)
    src = mapping[g.row_index[keep]]
    dst = mapping[g.col_idx[keep]]
    m = len(nodes)
    row_ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=m), out=row_ptr[1:])
    # rows and columns were already canonical; filtering preserves order
    sub = Graph(
        m, row_ptr, dst,
        None if g.edge_weight is None else g.edge_weight[keep],
        features=None if g.features is None else g.features[nodes],
        labels=None if g.labels is None else g.labels[nodes],
        train_mask=None if g.train_mask is None else g.train_mask[nodes],
        val_mask=None if g.val_mask is None else g.val_mask[nodes],
        test_mask=None if g.test_mask is None else g.test_mask[nodes],
        name=g.name,
    )
    return sub, mapping


def sample_neighbors(g, frontier, fanout: int, rng: np.random.Generator) -> EdgeList:
    """Pick ``min(fanout, degree)`` distinct edges per frontier node, uniformly.

    Each candidate edge gets a uniform random key and the ``fanout`` smallest
    keys per row survive, which is uniform sampling without replacement.
    ``fanout < 0`` keeps every edge. Returned edges are ``(frontier node,
    neighbour, weight)`` grouped by frontier node in input order.
    """
    frontier = np.asarray(frontier, dtype=np.int64)
    starts = g.row_ptr[frontier]
    counts = g.row_ptr[frontier + 1] - starts
    total = int(counts.sum())
    owner = np.repeat(np.arange(len(frontier)), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    eids = np.repeat(starts, counts) + offsets
    if fanout == 0:
        raise GraphError("fanout must be >= 1 (or negative for all)")
    if fanout > 0:
        keys = rng.random(total)
        order = np.lexsort((keys, owner))
        rank = np.empty(total, dtype=np.int64)
        rank[order] = offsets  # offsets enumerate 0..count-1 within each owner group
        keep = rank < fanout
        owner, eids = owner[keep], eids[keep]
    weight = g.weights[eids]
    return EdgeList(frontier[owner], g.col_idx[eids], weight)


def partition(g: Graph, k: int, rng: Optional[np.random.Generator] = None,
              seeds: Optional[Sequence[int]] = None) -> np.ndarray:
    """Split nodes into ``k`` clusters by seeded multi-source BFS growth.

    Clusters take turns claiming one unassigned node from their BFS
    frontier. A cluster whose frontier runs dry restarts from the lowest
    unassigned node, so every node ends up assigned even on disconnected
    graphs.
    """
    n = g.num_nodes
    if not 1 <= k <= n:
        raise GraphError(f"partition needs 1 <= k <= n, got k={k}, n={n}")
    if seeds is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        seeds = rng.choice(n, size=k, replace=False)
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != k:
        raise GraphError("partition seeds must be k distinct nodes")

    assign = np.full(n, -1, dtype=np.int64)
    queues = [deque() for _ in range(k)]
    for c, s in enumerate(seeds):
        assign[s] = c
        queues[c].extend(g.neighbors(s).tolist())
    remaining = n - k
    next_free = 0
    while remaining:
        progressed = False
        for c in range(k):
            q = queues[c]
            while q and assign[q[0]] >= 0:
                q.popleft()
            if not q:
                continue
            u = q.popleft()
            assign[u] = c
            q.extend(g.neighbors(u).tolist())
            remaining -= 1
            progressed = True
            if not remaining:
                break
        if not progressed and remaining:
            while assign[next_free] >= 0:
                next_free += 1
            sizes = np.bincount(assign[assign >= 0], minlength=k)
            c = int(np.argmin(sizes))
            assign[next_free] = c
            queues[c].extend(g.neighbors(next_free).tolist())
            remaining -= 1
    return assign


def _carry_data(src: Graph, out: Graph) -> Graph:
    return replace(out, features=src.features, labels=src.labels, train_mask=src.train_mask,
                   val_mask=src.val_mask, test_mask=src.test_mask, name=src.name)
