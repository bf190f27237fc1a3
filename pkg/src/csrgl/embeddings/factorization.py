"""Matrix-factorisation embeddings: NetMF, ProNE, HOPE, GraRep, spectral."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..graph import Graph
from ..linalg import (LinalgError, MatrixAction, chebyshev_filter, randomized_svd,
                      smallest_eigenpairs)

DENSE_KATZ_LIMIT = 4096


class EmbeddingError(ValueError):
    pass


def _check_degrees(g: Graph) -> np.ndarray:
    deg = g.degrees()
    if np.any(deg <= 0):
        bad = int(np.flatnonzero(deg <= 0)[0])
        raise EmbeddingError(
            f"node {bad} has degree 0; add self-loops (graph.add_self_loops) before factorising")
    return deg


def _rank(matrix_shape, d: int, power_iters: int, seed: int):
    """randomized_svd with the oversample clipped to what the shape allows."""
    room = min(matrix_shape) - d
    if room < 0:
        raise EmbeddingError(f"embedding dimension {d} exceeds matrix size {min(matrix_shape)}")
    return dict(oversample=min(10, room), power_iters=power_iters, rng=np.random.default_rng(seed))


def _scaled_left(m, d: int, power_iters: int = 4, seed: int = 0) -> np.ndarray:
    shape = m.shape
    f = randomized_svd(m, d, **_rank(shape, d, power_iters, seed))
    return f.U * np.sqrt(f.S)


def _row_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def _transition(g: Graph, deg: np.ndarray) -> np.ndarray:
    return g.to_dense() / deg[:, None]


# NetMF / GraRep -----------------------------------------------------------------

def netmf_matrix(g: Graph, window: int = 5, negatives: float = 1.0) -> np.ndarray:
    """``log(max(vol/(bT) * sum_{r=1..T} P^r D^{-1}, 1))`` densely."""
    if window < 1:
        raise EmbeddingError("window T must be >= 1")
    deg = _check_degrees(g)
    vol = deg.sum()
    P = _transition(g, deg)
    acc = np.zeros_like(P)
    power = np.eye(g.num_nodes)
    for _ in range(window):
        power = power @ P
        acc += power
    M = acc / deg[None, :] * (vol / (negatives * window))
    return np.log(np.maximum(M, 1.0))


def netmf(g: Graph, d: int = 128, window: int = 5, negatives: float = 1.0, seed: int = 0) -> np.ndarray:
    return _scaled_left(netmf_matrix(g, window, negatives), d, seed=seed)


def grarep_matrices(g: Graph, steps: int, negatives: float = 1.0):
    """Yield the log-truncated ``vol/b * P^k D^{-1}`` for ``k = 1..steps``."""
    deg = _check_degrees(g)
    vol = deg.sum()
    P = _transition(g, deg)
    power = np.eye(g.num_nodes)
    for _ in range(steps):
        power = power @ P
        yield np.log(np.maximum(power / deg[None, :] * (vol / negatives), 1.0))


def grarep(g: Graph, d: int = 128, steps: int = 4, negatives: float = 1.0, seed: int = 0) -> np.ndarray:
    if steps < 1 or d % steps:
        raise EmbeddingError(f"d={d} must be divisible by steps={steps}")
    per = d // steps
    parts = [_scaled_left(m, per, seed=seed + k) for k, m in enumerate(grarep_matrices(g, steps, negatives))]
    return np.concatenate(parts, axis=1)


# ProNE --------------------------------------------------------------------------

def prone_matrix(g: Graph, negatives: float = 1.0):
    """Sparse ``max(log P_ij - log(lambda * deg_j / vol), 0)`` on the edge pattern."""
    import scipy.sparse as sp

    deg = _check_degrees(g)
    vol = deg.sum()
    p = g.weights / deg[g.row_index]
    vals = np.log(p) - np.log(negatives * deg[g.col_idx] / vol)
    vals = np.maximum(vals, 0.0)
    return sp.csr_matrix((vals, g.col_idx, g.row_ptr), shape=g.shape)


def prone_stage1(g: Graph, d: int = 128, negatives: float = 1.0, seed: int = 0) -> np.ndarray:
    return _row_normalize(_scaled_left(prone_matrix(g, negatives), d, seed=seed))


def prone(g: Graph, d: int = 128, order: int = 10, mu: float = 0.2, theta: float = 0.5,
          negatives: float = 1.0, coeffs: Optional[Sequence[float]] = None, seed: int = 0) -> np.ndarray:
    """Sparse factorisation followed by Chebyshev spectral propagation."""
    if g.num_nodes < d:
        raise EmbeddingError(f"prone needs n >= d, got n={g.num_nodes}, d={d}")
    base = prone_stage1(g, d, negatives, seed)
    return chebyshev_filter(g, base, order=order, mu=mu, theta=theta, coeffs=coeffs)


# HOPE ---------------------------------------------------------------------------

def spectral_radius(g: Graph) -> float:
    n = g.num_nodes
    if g.num_edges == 0:
        return 0.0
    if n <= 512:
        return float(np.max(np.abs(np.linalg.eigvals(g.to_dense()))))
    from scipy.sparse.linalg import eigs

    val = eigs(g.to_scipy(), k=1, which="LM", return_eigenvectors=False,
               v0=np.random.default_rng(0).random(n))
    return float(np.abs(val[0]))


def katz_matrix(g: Graph, beta: float):
    """``S = (I - beta A)^{-1} beta A``: dense up to ``DENSE_KATZ_LIMIT``, else an LU-backed action."""
    rho = spectral_radius(g)
    if beta <= 0 or beta * rho >= 1.0:
        raise EmbeddingError(f"Katz series diverges: beta * spectral_radius = {beta * rho:.4g} >= 1")
    n = g.num_nodes
    if n <= DENSE_KATZ_LIMIT:
        A = g.to_dense()
        return np.linalg.solve(np.eye(n) - beta * A, beta * A)
    import scipy.sparse as sp
    from scipy.sparse.linalg import splu

    A = g.to_scipy().tocsc()
    lu = splu((sp.identity(n, format="csc") - beta * A).tocsc())

    def matvec(x):
        return lu.solve(np.asarray(beta * (A @ x)))

    def rmatvec(x):
        return beta * (A.T @ lu.solve(np.asarray(x), trans="T"))

    return MatrixAction((n, n), matvec, rmatvec)


def hope(g: Graph, d: int = 128, beta: float = 0.01, seed: int = 0) -> np.ndarray:
    if d % 2:
        raise EmbeddingError("hope needs an even dimension")
    S = katz_matrix(g, beta)
    half = d // 2
    f = randomized_svd(S, half, **_rank(S.shape, half, 4, seed))
    root = np.sqrt(f.S)
    return np.concatenate([f.U * root, f.V * root], axis=1)


# spectral -----------------------------------------------------------------------

def spectral_embedding(g: Graph, d: int = 128, seed: int = 0) -> np.ndarray:
    """Row-normalised ``d`` smallest eigenvectors of the normalized Laplacian."""
    if not 1 <= d < g.num_nodes:
        raise EmbeddingError(f"need 1 <= d < n, got d={d}, n={g.num_nodes}")
    _, vecs = smallest_eigenpairs(g, d, rng=np.random.default_rng(seed))
    # fix the sign of each column so reruns agree
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(d)])
    return _row_normalize(vecs * np.where(flip == 0, 1.0, flip))


__all__ = [
    "EmbeddingError", "netmf", "netmf_matrix", "grarep", "grarep_matrices", "prone",
    "prone_stage1", "prone_matrix", "hope", "katz_matrix", "spectral_radius",
    "spectral_embedding", "LinalgError",
]
