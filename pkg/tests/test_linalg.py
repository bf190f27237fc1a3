import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from csrgl.graph import build_graph
from csrgl.linalg import (
    LinalgError, MatrixAction, chebyshev_coeffs, chebyshev_filter, normalized_laplacian, propagation_response,
    random_walk_laplacian, randomized_svd, smallest_eigenpairs,
)

from conftest import random_graph


def jacobi_singular_values(a, sweeps=60, tol=1e-14):
    """One-sided cyclic Jacobi: orthogonalise column pairs until converged."""
    u = np.array(a, dtype=np.float64)
    m = u.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for i in range(m - 1):
            for j in range(i + 1, m):
                alpha = u[:, i] @ u[:, i]
                beta = u[:, j] @ u[:, j]
                gamma = u[:, i] @ u[:, j]
                if abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                off = max(off, abs(gamma) / np.sqrt(alpha * beta))
                zeta = (beta - alpha) / (2 * gamma)
                t = np.sign(zeta + 1e-300) / (abs(zeta) + np.sqrt(1 + zeta * zeta))
                c = 1 / np.sqrt(1 + t * t)
                s = c * t
                ui = u[:, i].copy()
                u[:, i] = c * ui - s * u[:, j]
                u[:, j] = s * ui + c * u[:, j]
        if off < tol:
            break
    return np.sort(np.linalg.norm(u, axis=0))[::-1]


def jacobi_eigvals(a, sweeps=60):
    """Classical cyclic Jacobi eigenvalues of a symmetric matrix."""
    a = np.array(a, dtype=np.float64)
    n = len(a)
    for _ in range(sweeps):
        if np.sqrt(np.sum(np.tril(a, -1) ** 2)) < 1e-13:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = np.sign(theta + 1e-300) / (abs(theta) + np.sqrt(theta * theta + 1))
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                r = np.eye(n)
                r[p, p] = r[q, q] = c
                r[p, q], r[q, p] = s, -s
                a = r.T @ a @ r
    return np.sort(np.diag(a))


# randomized svd ----------------------------------------------------------------

def test_svd_rank_one():
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal(20), rng.standard_normal(15)
    a = np.outer(u, v)
    f = randomized_svd(a, 1, oversample=5)
    assert f.S[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-6)
    assert np.linalg.norm(f.reconstruct() - a) < 1e-8 * np.linalg.norm(a)


def test_svd_identity():
    f = randomized_svd(np.eye(4), 2, oversample=2)
    assert np.allclose(f.S, [1, 1])


def test_svd_near_optimal_against_jacobi_oracle():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((32, 32))
    s = jacobi_singular_values(a)
    assert np.allclose(s, np.linalg.svd(a, compute_uv=False), rtol=1e-9)
    best = np.sqrt(np.sum(s[8:] ** 2))
    f = randomized_svd(a, 8, power_iters=4, rng=np.random.default_rng(0))
    err = np.linalg.norm(a - f.reconstruct())
    assert err <= best * 1.05


def test_svd_factor_invariants():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((40, 25))
    f = randomized_svd(a, 6)
    assert np.all(np.diff(f.S) <= 1e-12) and np.all(f.S >= 0)
    assert np.allclose(f.U.T @ f.U, np.eye(6), atol=1e-6)
    assert np.allclose(f.V.T @ f.V, np.eye(6), atol=1e-6)


def test_svd_accepts_sparse_and_action():
    rng = np.random.default_rng(3)
    a = sp.random(50, 40, density=0.2, random_state=3, format="csr")
    f1 = randomized_svd(a, 4, rng=np.random.default_rng(0))
    dense = a.toarray()
    act = MatrixAction(dense.shape, lambda x: dense @ x, lambda x: dense.T @ x)
    f2 = randomized_svd(act, 4, rng=np.random.default_rng(0))
    assert np.allclose(f1.S, f2.S)
    # flat spectrum, so only approximately equal with default power iterations
    assert np.allclose(f1.S, np.linalg.svd(dense, compute_uv=False)[:4], rtol=1e-3)


def test_svd_rank_too_large():
    with pytest.raises(LinalgError):
        randomized_svd(np.eye(5), 3, oversample=3)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_svd_error_nonincreasing_in_rank(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((30, 30))
    errs = [np.linalg.norm(a - randomized_svd(a, d, power_iters=6, rng=np.random.default_rng(seed)).reconstruct())
            for d in (1, 2, 4, 8)]
    assert all(b <= a_ * (1 + 1e-9) for a_, b in zip(errs, errs[1:]))


# eigenpairs --------------------------------------------------------------------------

def test_eigen_k2():
    g = build_graph(2, [(0, 1)], undirected=True)
    vals, vecs = smallest_eigenpairs(g, 1)
    assert vals[0] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(np.abs(vecs[:, 0]), [2 ** -0.5] * 2)
    L = normalized_laplacian(g).toarray()
    assert np.allclose(np.sort(jacobi_eigvals(L)), [0, 2])


@pytest.mark.parametrize("c", [1, 2, 3])
def test_eigen_component_multiplicity(c):
    edges = []
    for k in range(c):
        base = 4 * k
        edges += [(base, base + 1), (base + 1, base + 2), (base + 2, base + 3), (base + 3, base)]
    g = build_graph(4 * c, edges, undirected=True)
    vals, _ = smallest_eigenpairs(g, c + 1)
    assert np.allclose(vals[:c], 0, atol=1e-10)
    assert vals[c] > 1e-3
    ref = jacobi_eigvals(normalized_laplacian(g).toarray())
    assert np.allclose(vals, ref[:c + 1], atol=1e-9)


@pytest.mark.parametrize("method", ["dense", "iterative"])
def test_eigen_residuals_and_psd(method):
    rng = np.random.default_rng(4)
    g = random_graph(rng, n=60, m=200, undirected=True, self_loops=False)
    L = normalized_laplacian(g)
    vals, vecs = smallest_eigenpairs(g, 5, method=method)
    assert vals.min() >= -1e-8
    for i in range(5):
        v = vecs[:, i]
        assert np.linalg.norm(L @ v - vals[i] * v) <= 1e-6 * np.linalg.norm(v)
    assert np.allclose(vecs.T @ vecs, np.eye(5), atol=1e-6)


def test_eigen_iterative_matches_dense():
    rng = np.random.default_rng(5)
    g = random_graph(rng, n=80, m=300, undirected=True, self_loops=False)
    v1, _ = smallest_eigenpairs(g, 4, method="dense")
    v2, _ = smallest_eigenpairs(g, 4, method="iterative")
    assert np.allclose(v1, v2, atol=1e-7)


def test_eigen_errors():
    g = build_graph(3, [(0, 1)], undirected=True)
    with pytest.raises(LinalgError):
        smallest_eigenpairs(g, 3)
    with pytest.raises(LinalgError):
        smallest_eigenpairs(g, 1, method="power")


# chebyshev -------------------------------------------------------------------------

def _cheb_dense(L_hat, X, coeffs):
    n = len(L_hat)
    T = [np.eye(n), L_hat]
    while len(T) < len(coeffs):
        T.append(2 * L_hat @ T[-1] - T[-2])
    return sum(c * (T[k] @ X) for k, c in enumerate(coeffs))


def test_chebyshev_order_one_dense():
    rng = np.random.default_rng(0)
    g = random_graph(rng, n=10, m=25, undirected=True)
    X = rng.standard_normal((10, 3))
    L = random_walk_laplacian(g).toarray()
    c = [0.7, -0.3]
    out = chebyshev_filter(g, X, order=1, coeffs=c)
    assert np.allclose(out, c[0] * X + c[1] * (L - np.eye(10)) @ X)


def test_chebyshev_zero_input():
    g = build_graph(4, [(0, 1), (2, 3)], undirected=True)
    assert np.all(chebyshev_filter(g, np.zeros((4, 2))) == 0)


def test_chebyshev_second_term_recurrence():
    rng = np.random.default_rng(1)
    g = random_graph(rng, n=12, m=30, undirected=True)
    X = rng.standard_normal((12, 2))
    Lh = random_walk_laplacian(g).toarray() - np.eye(12)
    t2 = chebyshev_filter(g, X, order=2, coeffs=[0, 0, 1])
    assert np.allclose(t2, 2 * Lh @ (Lh @ X) - X, atol=1e-12)


def test_chebyshev_order_validation():
    with pytest.raises(LinalgError):
        chebyshev_filter(build_graph(2, []), np.ones((2, 1)), order=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 12))
def test_chebyshev_dense_polynomial(seed, order):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 17))
    g = random_graph(rng, n=n, undirected=True)
    X = rng.standard_normal((n, 2))
    coeffs = chebyshev_coeffs(propagation_response(0.2, 0.5), order)
    Lh = random_walk_laplacian(g).toarray() - np.eye(n)
    assert np.allclose(chebyshev_filter(g, X, order=order), _cheb_dense(Lh, X, coeffs), atol=1e-8)


def test_chebyshev_coeffs_approximate_function():
    fn = propagation_response(0.2, 0.5)
    c = chebyshev_coeffs(fn, 10)
    lam = np.linspace(0, 2, 101)
    x = lam - 1
    approx = np.polynomial.chebyshev.chebval(x, c)
    assert np.max(np.abs(approx - fn(lam))) < 1e-6
    # a polynomial is reproduced exactly
    poly = chebyshev_coeffs(lambda l: 3 * (l - 1) ** 2 - 1, 4)
    assert np.allclose(poly, [0.5, 0, 1.5, 0, 0], atol=1e-12)
