"""Numerical routines behind the factorisation-based embeddings."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .graph import Graph, add_self_loops


class LinalgError(RuntimeError):
    pass


@dataclass
class FactorPair:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


class MatrixAction:
    """A linear operator given by its products with ``X`` and ``X^T``.

    Lets dense arrays, scipy sparse matrices and implicit operators (HOPE's
    Katz matrix) share one factorisation path.
    """

    def __init__(self, shape, matvec: Callable, rmatvec: Callable):
        self.shape = tuple(shape)
        self.matvec = matvec
        self.rmatvec = rmatvec

    @classmethod
    def wrap(cls, m) -> "MatrixAction":
        if isinstance(m, MatrixAction):
            return m
        if isinstance(m, Graph):
            m = m.to_scipy()
        return cls(m.shape, lambda x: m @ x, lambda x: m.T @ x)


def randomized_svd(matrix, d: int, oversample: int = 10, power_iters: int = 4,
                   rng: Optional[np.random.Generator] = None) -> FactorPair:
    """Rank-``d`` SVD by randomised range finding with power iterations.

    Subspace iteration re-orthonormalises after every product to keep small
    singular directions from being swamped.
    """
    op = MatrixAction.wrap(matrix)
    n, m = op.shape
    k = d + oversample
    if d < 1 or k > min(n, m):
        raise LinalgError(f"rank d={d} with oversample={oversample} exceeds min(shape)={min(n, m)}")
    rng = rng if rng is not None else np.random.default_rng(0)
    omega = rng.standard_normal((m, k))
    q, _ = np.linalg.qr(np.asarray(op.matvec(omega)))
    for _ in range(power_iters):
        z, _ = np.linalg.qr(np.asarray(op.rmatvec(q)))
        q, _ = np.linalg.qr(np.asarray(op.matvec(z)))
    b = np.asarray(op.rmatvec(q)).T  # = q^T A, shape k x m
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ ub
    return FactorPair(u[:, :d], s[:d], vt[:d].T)


def normalized_laplacian(g: Graph):
    """``I - D^{-1/2} A D^{-1/2}`` as a scipy sparse matrix."""
    import scipy.sparse as sp

    deg = g.degrees()
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = deg[nz] ** -0.5
    a = g.to_scipy()
    norm = sp.diags(inv_sqrt) @ a @ sp.diags(inv_sqrt)
    return (sp.identity(g.num_nodes, format="csr") - norm).tocsr()


DENSE_EIGEN_LIMIT = 2048


def smallest_eigenpairs(g_or_matrix, d: int, method: str = "auto", tol: float = 1e-8,
                        max_iter: int = 1000, rng: Optional[np.random.Generator] = None):
    """The ``d`` smallest eigenpairs of a symmetric operator.

    A :class:`Graph` is turned into its normalized Laplacian first. Up to
    ``DENSE_EIGEN_LIMIT`` rows a dense symmetric solver is used; above it
    (or with ``method='iterative'``) Lanczos runs on ``2I - L`` so the
    wanted end of the spectrum becomes the largest, with no shift-invert.
    """
    L = normalized_laplacian(g_or_matrix) if isinstance(g_or_matrix, Graph) else g_or_matrix
    n = L.shape[0]
    if not 1 <= d < n:
        raise LinalgError(f"need 1 <= d < n, got d={d}, n={n}")
    if method == "auto":
        method = "dense" if n <= DENSE_EIGEN_LIMIT else "iterative"
    if method == "dense":
        dense = L.toarray() if hasattr(L, "toarray") else np.asarray(L)
        vals, vecs = np.linalg.eigh(dense)
        return vals[:d], vecs[:, :d]
    if method != "iterative":
        raise LinalgError(f"unknown method {method!r}")

    import scipy.sparse as sp
    from scipy.sparse.linalg import ArpackNoConvergence, eigsh

    shift = 2.0
    flipped = sp.identity(n, format="csr") * shift - sp.csr_matrix(L)
    rng = rng if rng is not None else np.random.default_rng(0)
    try:
        vals, vecs = eigsh(flipped, k=d, which="LA", tol=tol, maxiter=max_iter,
                           v0=rng.standard_normal(n))
    except ArpackNoConvergence as exc:
        resid = _residual(L, exc.eigenvalues, exc.eigenvectors) if len(exc.eigenvalues) else np.inf
        raise LinalgError(f"eigensolver did not converge (residual norm {resid:.3e})") from exc
    vals = shift - vals
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def _residual(L, vals, vecs):
    return float(np.linalg.norm(L @ vecs - vecs * vals))


# Chebyshev spectral filtering -----------------------------------------------

def chebyshev_coeffs(fn: Callable[[np.ndarray], np.ndarray], order: int,
                     lam_max: float = 2.0, nodes: int = 256) -> np.ndarray:
    """Chebyshev-series coefficients of ``fn`` on ``[0, lam_max]``.

    Computed by Chebyshev-Gauss quadrature in the rescaled variable
    ``x = (2 / lam_max) * lam - 1``; ``c_0`` already carries the 1/2 factor so
    ``fn(lam) ~ sum_k c_k T_k(x)``.
    """
    theta = np.pi * (np.arange(nodes) + 0.5) / nodes
    x = np.cos(theta)
    vals = fn((x + 1.0) * lam_max / 2.0)
    coeffs = np.array([2.0 / nodes * np.sum(vals * np.cos(k * theta)) for k in range(order + 1)])
    coeffs[0] /= 2.0
    return coeffs


def band_pass_response(mu: float, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Gaussian band-pass ``g(lam) = exp(-0.5 theta ((lam - mu)^2 - 1))``."""
    return lambda lam: np.exp(-0.5 * theta * ((lam - mu) ** 2 - 1.0))


def propagation_response(mu: float, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Spectral propagation response ``(1 - lam)(1 - g(lam))``.

    Equals applying the band-pass ``g`` and then the post step
    ``D^{-1} A (X - g(L) X)``, folded into one polynomial of ``L``.
    """
    g = band_pass_response(mu, theta)
    return lambda lam: (1.0 - lam) * (1.0 - g(lam))


def random_walk_laplacian(g: Graph):
    """``I - D^{-1} (A + I)`` of the self-looped graph, scipy sparse."""
    import scipy.sparse as sp

    looped = add_self_loops(g)
    deg = looped.degrees()
    p = sp.diags(1.0 / deg) @ looped.to_scipy()
    return (sp.identity(g.num_nodes, format="csr") - p).tocsr()


def chebyshev_filter(g: Graph, X: np.ndarray, order: int = 10, mu: float = 0.2, theta: float = 0.5,
                     coeffs: Optional[Sequence[float]] = None, laplacian=None) -> np.ndarray:
    """``sum_k c_k T_k(L_hat) X`` with ``L_hat = L - I`` (``lam_max = 2``).

    ``L`` defaults to the random-walk Laplacian of the self-looped graph and
    ``c_k`` to the Chebyshev coefficients of :func:`propagation_response`.
    Pass ``coeffs`` to evaluate an arbitrary polynomial, e.g. ``[1, 0]`` is
    the identity.
    """
    if order < 1:
        raise LinalgError("chebyshev order must be >= 1")
    if coeffs is None:
        coeffs = chebyshev_coeffs(propagation_response(mu, theta), order)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    L = random_walk_laplacian(g) if laplacian is None else laplacian
    X = np.asarray(X, dtype=np.float64)

    def lhat(v):
        return L @ v - v

    t_prev = X
    out = coeffs[0] * t_prev
    if len(coeffs) == 1:
        return out
    t_cur = lhat(X)
    out = out + coeffs[1] * t_cur
    for c in coeffs[2:]:
        t_prev, t_cur = t_cur, 2.0 * lhat(t_cur) - t_prev
        out = out + c * t_cur
    return out


__all__ = [
    "FactorPair", "MatrixAction", "LinalgError", "randomized_svd", "smallest_eigenpairs",
    "normalized_laplacian", "chebyshev_coeffs", "chebyshev_filter", "band_pass_response",
    "propagation_response", "random_walk_laplacian",
]
