"""Random-walk corpora and alias sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _accel
from .._accel import njit
from ..graph import Graph


@dataclass
class WalkCorpus:
    """Walks as a padded ``num_walks x walk_length`` array (``-1`` after truncation)."""

    walks: np.ndarray
    walk_length: int
    walks_per_node: int

    def __len__(self) -> int:
        return self.walks.shape[0]

    def sequences(self) -> list[list[int]]:
        return [row[row >= 0].tolist() for row in self.walks]

    @property
    def num_tokens(self) -> int:
        return int((self.walks >= 0).sum())


class AliasTable:
    """Walker's alias method: O(1) draws from a fixed categorical distribution."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0 or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("alias table needs nonnegative weights with positive sum")
        self.prob, self.alias = build_alias(w / w.sum())

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        k = len(self.prob)
        idx = rng.integers(0, k, size=size)
        coin = rng.random(size=size)
        return np.where(coin < self.prob[idx], idx, self.alias[idx])


def build_alias(p: np.ndarray):
    n = len(p)
    scaled = p * n
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] + scaled[s] - 1.0
        (small if scaled[l] < 1.0 else large).append(l)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


# uniform walks -------------------------------------------------------------------

@njit
def _uniform_walks_numba(row_ptr, col_idx, starts, uniforms, walk_length):
    out = np.full((starts.shape[0], walk_length), -1, dtype=np.int64)
    for w in range(starts.shape[0]):
        cur = starts[w]
        out[w, 0] = cur
        for step in range(1, walk_length):
            deg = row_ptr[cur + 1] - row_ptr[cur]
            if deg == 0:
                break
            k = int(uniforms[w, step - 1] * deg)
            if k >= deg:
                k = deg - 1
            cur = col_idx[row_ptr[cur] + k]
            out[w, step] = cur
    return out


def _uniform_walks_numpy(row_ptr, col_idx, starts, uniforms, walk_length):
    out = np.full((len(starts), walk_length), -1, dtype=np.int64)
    cur = starts.copy()
    out[:, 0] = cur
    alive = np.ones(len(starts), dtype=bool)
    for step in range(1, walk_length):
        deg = row_ptr[cur + 1] - row_ptr[cur]
        alive &= deg > 0
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        k = np.minimum((uniforms[idx, step - 1] * deg[idx]).astype(np.int64), deg[idx] - 1)
        cur[idx] = col_idx[row_ptr[cur[idx]] + k]
        out[idx, step] = cur[idx]
    return out


def _round_inputs(n, walks_per_node, walk_length, seed):
    """Per-round start order and step uniforms; round ``r`` uses stream ``(seed, r)``."""
    for r in range(walks_per_node):
        rng = np.random.default_rng([seed, r])
        order = rng.permutation(n)
        uniforms = rng.random((n, max(walk_length - 1, 1)))
        yield order, uniforms


def random_walks(g: Graph, walk_length: int, walks_per_node: int, seed: int = 0) -> WalkCorpus:
    """Truncated uniform random walks, ``walks_per_node`` rounds over all nodes.

    The walk from ``start`` in round ``r`` depends only on ``(seed, r, start)``
    and the graph, on either backend.
    """
    if walk_length < 1:
        raise ValueError("walk_length must be >= 1")
    n = g.num_nodes
    parts = []
    for order, uniforms in _round_inputs(n, walks_per_node, walk_length, seed):
        u = uniforms[order]
        if _accel.get_backend() == "numba":
            parts.append(_uniform_walks_numba(g.row_ptr, g.col_idx, order.astype(np.int64), u, walk_length))
        else:
            parts.append(_uniform_walks_numpy(g.row_ptr, g.col_idx, order.astype(np.int64), u, walk_length))
    walks = np.concatenate(parts) if parts else np.zeros((0, walk_length), dtype=np.int64)
    return WalkCorpus(walks, walk_length, walks_per_node)


# second-order (node2vec) walks ----------------------------------------------------

@njit
def _is_neighbor(row_ptr, col_idx, a, b):
    lo, hi = row_ptr[a], row_ptr[a + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if col_idx[mid] < b:
            lo = mid + 1
        else:
            hi = mid
    return lo < row_ptr[a + 1] and col_idx[lo] == b


@njit
def _biased_walks_numba(row_ptr, col_idx, starts, uniforms, walk_length, inv_p, inv_q):
    out = np.full((starts.shape[0], walk_length), -1, dtype=np.int64)
    max_deg = 0
    for u in range(row_ptr.shape[0] - 1):
        if row_ptr[u + 1] - row_ptr[u] > max_deg:
            max_deg = row_ptr[u + 1] - row_ptr[u]
    cdf = np.empty(max(max_deg, 1))
    for w in range(starts.shape[0]):
        cur = starts[w]
        prev = -1
        out[w, 0] = cur
        for step in range(1, walk_length):
            start, stop = row_ptr[cur], row_ptr[cur + 1]
            deg = stop - start
            if deg == 0:
                break
            u = uniforms[w, step - 1]
            if prev < 0:
                k = int(u * deg)
                if k >= deg:
                    k = deg - 1
                nxt = col_idx[start + k]
            else:
                total = 0.0
                for j in range(deg):
                    x = col_idx[start + j]
                    if x == prev:
                        total += inv_p
                    elif _is_neighbor(row_ptr, col_idx, prev, x):
                        total += 1.0
                    else:
                        total += inv_q
                    cdf[j] = total
                target = u * total
                k = 0
                while k < deg - 1 and cdf[k] <= target:
                    k += 1
                nxt = col_idx[start + k]
            prev = cur
            cur = nxt
            out[w, step] = cur
    return out


def _biased_walks_numpy(row_ptr, col_idx, starts, uniforms, walk_length, inv_p, inv_q):
    n = len(row_ptr) - 1
    edge_keys = np.repeat(np.arange(n), np.diff(row_ptr)) * n + col_idx  # sorted (canonical CSR)
    out = np.full((len(starts), walk_length), -1, dtype=np.int64)
    cur = starts.copy()
    prev = np.full(len(starts), -1, dtype=np.int64)
    out[:, 0] = cur
    alive = np.ones(len(starts), dtype=bool)
    for step in range(1, walk_length):
        deg = row_ptr[cur + 1] - row_ptr[cur]
        alive &= deg > 0
        idx = np.flatnonzero(alive)
        if not len(idx):
            break
        c, p, d = cur[idx], prev[idx], deg[idx]
        u = uniforms[idx, step - 1]
        seg_start = np.cumsum(d) - d
        owner = np.repeat(np.arange(len(idx)), d)
        cand = col_idx[np.repeat(row_ptr[c], d) + (np.arange(d.sum()) - np.repeat(seg_start, d))]
        prev_e = p[owner]
        keys = prev_e * n + cand
        pos = np.minimum(np.searchsorted(edge_keys, keys), len(edge_keys) - 1)
        adjacent = (edge_keys[pos] == keys) if len(edge_keys) else np.zeros(len(keys), bool)
        wts = np.where(cand == prev_e, inv_p, np.where(adjacent, 1.0, inv_q))
        wts = np.where(prev_e < 0, 1.0, wts)
        csum = np.cumsum(wts)
        base = np.concatenate([[0.0], csum])[seg_start]
        local = csum - np.repeat(base, d)
        totals = local[seg_start + d - 1]
        target = np.repeat(u * totals, d)
        # first candidate whose cumulative weight exceeds the target
        hit = np.add.reduceat((local <= target).astype(np.int64), seg_start)
        k = np.minimum(hit, d - 1)
        nxt = cand[seg_start + k]
        prev[idx] = c
        cur[idx] = nxt
        out[idx, step] = nxt
    return out


def biased_walks(g: Graph, p: float, q: float, walk_length: int, walks_per_node: int,
                 seed: int = 0) -> WalkCorpus:
    """Second-order walks: from ``cur`` with predecessor ``t`` the candidate
    ``x`` has weight ``1/p`` if ``x == t``, ``1`` if ``x`` neighbours ``t`` and
    ``1/q`` otherwise. The first step is uniform.

    Transition weights are evaluated on the fly per step (binary search in
    ``t``'s sorted row), so memory stays O(max degree).
    """
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    if walk_length < 1:
        raise ValueError("walk_length must be >= 1")
    n = g.num_nodes
    parts = []
    for order, uniforms in _round_inputs(n, walks_per_node, walk_length, seed):
        u = uniforms[order]
        fn = _biased_walks_numba if _accel.get_backend() == "numba" else _biased_walks_numpy
        parts.append(fn(g.row_ptr, g.col_idx, order.astype(np.int64), u, walk_length, 1.0 / p, 1.0 / q))
    walks = np.concatenate(parts) if parts else np.zeros((0, walk_length), dtype=np.int64)
    return WalkCorpus(walks, walk_length, walks_per_node)


def transition_weights(g: Graph, prev: int, cur: int, p: float, q: float) -> np.ndarray:
    """Unnormalised node2vec weights over ``cur``'s neighbours given ``prev``."""
    nbrs = g.neighbors(cur)
    prev_nbrs = set(g.neighbors(prev).tolist())
    return np.array([1.0 / p if x == prev else (1.0 if x in prev_nbrs else 1.0 / q) for x in nbrs])
