import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csrgl import _accel
from csrgl.embeddings import (
    METHODS, AliasTable, EmbeddingError, biased_walks, embed, grarep, hope, line, load_embeddings, netmf,
    prone, prone_stage1, random_walks, save_embeddings, skipgram_ns, spectral_embedding,
)
from csrgl.embeddings.factorization import grarep_matrices, katz_matrix, netmf_matrix, prone_matrix
from csrgl.embeddings.skipgram import sgns_loss_grad
from csrgl.embeddings.walks import transition_weights
from csrgl.graph import add_self_loops, build_graph

from conftest import numeric_grad, random_graph, rel_err

K2 = build_graph(2, [(0, 1)], undirected=True)


def star(k):
    return build_graph(k + 1, [(0, i) for i in range(1, k + 1)], undirected=True)


def connected_graph(rng, n, extra):
    """Random tree plus ``extra`` random edges, so every degree is positive."""
    edges = [(i, int(rng.integers(0, i))) for i in range(1, n)]
    edges += [tuple(map(int, rng.integers(0, n, 2))) for _ in range(extra)]
    edges = [(a, b) for a, b in edges if a != b]
    return build_graph(n, edges, undirected=True)


def gram_rel_err(emb, target):
    return np.linalg.norm(emb @ emb.T - target) / np.linalg.norm(target)


# walks ------------------------------------------------------------------------------

def test_walk_isolated_node(backend):
    g = build_graph(3, [(0, 1)], undirected=True)
    corpus = random_walks(g, 5, 1, seed=0)
    seqs = {s[0]: s for s in corpus.sequences()}
    assert seqs[2] == [2]


def test_walk_k2(backend):
    corpus = random_walks(K2, 4, 2, seed=3)
    for s in corpus.sequences():
        assert s == ([0, 1, 0, 1] if s[0] == 0 else [1, 0, 1, 0])


def test_walk_starts_and_ids(backend):
    rng = np.random.default_rng(0)
    g = random_graph(rng, n=15, m=40, undirected=True)
    corpus = random_walks(g, 6, 3, seed=1)
    assert len(corpus) == 45
    for r in range(3):
        assert sorted(corpus.walks[15 * r:15 * (r + 1), 0].tolist()) == list(range(15))
    assert corpus.walks.max() < 15
    for s in corpus.sequences():
        for a, b in zip(s, s[1:]):
            assert b in g.neighbors(a)


def test_walk_star_frequencies(backend):
    g = star(3)
    corpus = random_walks(g, 3, 10000, seed=0)
    w = corpus.walks
    from_center = w[w[:, 0] == 0][:, 1]
    counts = np.bincount(from_center, minlength=4)[1:]
    total = len(from_center)
    p = 1 / 3
    sigma = np.sqrt(total * p * (1 - p))
    assert np.all(np.abs(counts - total * p) <= 3 * sigma)


def test_walk_backends_identical():
    if not _accel.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    rng = np.random.default_rng(2)
    g = random_graph(rng, n=30, m=90, undirected=True)
    out = {}
    for name in ("numba", "numpy"):
        with _accel.backend(name):
            out[name] = (random_walks(g, 10, 2, seed=4).walks, biased_walks(g, 0.5, 2.0, 10, 2, seed=4).walks)
    assert np.array_equal(out["numba"][0], out["numpy"][0])
    assert np.array_equal(out["numba"][1], out["numpy"][1])


def test_walk_deterministic(backend):
    g = star(5)
    assert np.array_equal(random_walks(g, 8, 3, seed=9).walks, random_walks(g, 8, 3, seed=9).walks)
    assert not np.array_equal(random_walks(g, 8, 3, seed=9).walks, random_walks(g, 8, 3, seed=10).walks)


def test_transition_weights_rule():
    # cur=1 with neighbours {0 (prev), 2 (adjacent to prev), 3 (not adjacent)}
    g = build_graph(4, [(0, 1), (1, 2), (1, 3), (0, 2)], undirected=True)
    w = transition_weights(g, prev=0, cur=1, p=0.25, q=4)
    assert dict(zip(g.neighbors(1).tolist(), w.tolist())) == {0: 4.0, 2: 1.0, 3: 0.25}


def test_biased_walk_large_p(backend):
    path = build_graph(3, [(0, 1), (1, 2)], undirected=True)
    corpus = biased_walks(path, 1e9, 1.0, 3, 2000, seed=0)
    w = corpus.walks
    back = w[(w[:, 0] == 0)]
    assert np.all(back[:, 1] == 1)
    assert np.mean(back[:, 2] == 2) > 0.999


def _empirical_second_step(g, walks, prev, cur):
    sel = walks[(walks[:, 0] == prev) & (walks[:, 1] == cur)]
    return sel[:, 2]


@pytest.mark.parametrize("p,q", [(1.0, 1.0), (0.25, 4.0), (4.0, 0.25)])
def test_biased_walk_frequencies(backend, p, q):
    g = build_graph(4, [(0, 1), (1, 2), (1, 3), (0, 2)], undirected=True)
    corpus = biased_walks(g, p, q, 3, 30000, seed=1)
    nxt = _empirical_second_step(g, corpus.walks, 0, 1)
    w = transition_weights(g, 0, 1, p, q)
    probs = w / w.sum()
    total = len(nxt)
    assert total > 5000
    counts = np.array([(nxt == x).sum() for x in g.neighbors(1)])
    sigma = np.sqrt(total * probs * (1 - probs))
    assert np.all(np.abs(counts - total * probs) <= 3 * sigma)


def test_biased_pq_one_matches_uniform(backend):
    g = star(4)
    a = biased_walks(g, 1.0, 1.0, 3, 10000, seed=0).walks
    leaf = a[a[:, 0] == 1]
    assert np.all(leaf[:, 1] == 0)
    freq = np.bincount(leaf[:, 2], minlength=5)[1:] / len(leaf)
    sigma = np.sqrt(0.25 * 0.75 / len(leaf))
    assert np.all(np.abs(freq - 0.25) <= 3 * sigma)


def test_biased_rejects_bad_params():
    with pytest.raises(ValueError):
        biased_walks(K2, 0.0, 1.0, 3, 1)


def test_alias_table_frequencies():
    w = np.array([0.1, 0.4, 0.2, 0.3])
    t = AliasTable(w)
    draws = t.sample(np.random.default_rng(0), 100000)
    freq = np.bincount(draws, minlength=4) / 100000
    sigma = np.sqrt(w * (1 - w) / 100000)
    assert np.all(np.abs(freq - w) <= 3 * sigma)
    with pytest.raises(ValueError):
        AliasTable([0.0, 0.0])


# skip-gram / LINE -----------------------------------------------------------------------

def test_sgns_gradient_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(10):
        center = rng.standard_normal(6)
        targets = rng.standard_normal((4, 6))
        labels = np.array([1.0, 0.0, 0.0, 0.0])
        _, gc, gt = sgns_loss_grad(center, targets, labels)
        nc = numeric_grad(lambda: sgns_loss_grad(center, targets, labels)[0], center)
        nt = numeric_grad(lambda: sgns_loss_grad(center, targets, labels)[0], targets)
        assert rel_err(gc, nc) <= 1e-4
        assert rel_err(gt, nt) <= 1e-4


def test_sgns_loss_value():
    loss, _, _ = sgns_loss_grad(np.zeros(3), np.zeros((2, 3)), np.array([1.0, 0.0]))
    assert loss == pytest.approx(2 * np.log(2))


def test_skipgram_loss_decreases(backend):
    g = build_graph(12, [(i, (i + 1) % 12) for i in range(12)] + [(0, 6), (3, 9)], undirected=True)
    corpus = random_walks(g, 10, 5, seed=0)
    hist = []
    skipgram_ns(corpus, 12, d=8, window=2, negatives=3, epochs=6, lr=0.025, seed=0, loss_history=hist,
                batch_size=4)
    assert len(hist) == 6
    assert all(b < a for a, b in zip(hist[:5], hist[1:5]))


def test_skipgram_deterministic(backend):
    corpus = random_walks(star(6), 6, 4, seed=0)
    a = skipgram_ns(corpus, 7, d=8, seed=3)
    b = skipgram_ns(corpus, 7, d=8, seed=3)
    assert np.array_equal(a, b)


def test_skipgram_empty_corpus():
    from csrgl.embeddings.walks import WalkCorpus

    with pytest.raises(ValueError):
        skipgram_ns(WalkCorpus(np.zeros((0, 3), dtype=np.int64), 3, 1), 3)


def _cos(e):
    return float(e[0] @ e[1] / (np.linalg.norm(e[0]) * np.linalg.norm(e[1])))


def test_line_first_order_cosine_grows(backend):
    cos = [_cos(line(K2, 8, "first", samples=s, negatives=1, lr=0.05, seed=0, batch_size=4)) for s in (1, 20, 200, 2000)]
    assert cos[-1] > 0
    assert all(b >= a - 1e-12 for a, b in zip(cos, cos[1:]))
    assert cos[-1] > cos[0]


def test_line_both_width_and_norms(backend):
    g = star(5)
    e = line(g, 6, "both", samples=500, seed=0)
    assert e.shape == (6, 6)
    assert np.allclose(np.linalg.norm(e[:, :3], axis=1), 1)
    assert np.allclose(np.linalg.norm(e[:, 3:], axis=1), 1)
    with pytest.raises(ValueError):
        line(g, 5, "both")
    with pytest.raises(ValueError):
        line(g, 4, "third")


# factorisation methods ------------------------------------------------------------------

def test_netmf_k2_matrix():
    M = netmf_matrix(K2, window=1, negatives=1)
    assert np.allclose(M, [[0, np.log(2)], [np.log(2), 0]])


def test_netmf_matrix_dense_oracle():
    rng = np.random.default_rng(0)
    g = connected_graph(rng, 10, 8)
    A = g.to_dense()
    d = A.sum(1)
    P = A / d[:, None]
    T, b = 3, 2.0
    S = sum(np.linalg.matrix_power(P, r) for r in range(1, T + 1)) @ np.diag(1 / d)
    ref = np.log(np.maximum(d.sum() / (b * T) * S, 1))
    assert np.allclose(netmf_matrix(g, T, b), ref)
    assert np.all(netmf_matrix(g, T, b) >= 0)


def test_netmf_degree_zero_error():
    g = build_graph(3, [(0, 1)], undirected=True)
    with pytest.raises(EmbeddingError, match="self-loops"):
        netmf(g, 1)
    netmf(add_self_loops(g), 1)


@pytest.mark.parametrize("method", ["netmf", "grarep1"])
def test_factorization_gram_vs_dense_svd(method):
    rng = np.random.default_rng(1)
    g = connected_graph(rng, 16, 20)
    if method == "netmf":
        M = netmf_matrix(g, 2, 1.0)
        emb = netmf(g, 6, window=2)
    else:
        M = next(grarep_matrices(g, 1))
        emb = grarep(g, 6, steps=1)
    u, s, vt = np.linalg.svd(M)
    oracle = (u[:, :6] * np.sqrt(s[:6]))
    assert gram_rel_err(emb, oracle @ oracle.T) <= 0.05


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_factorization_no_worse_than_truncated_svd(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(12, 65))
    g = connected_graph(rng, n, n)
    M = netmf_matrix(g, 2)
    d = 4
    s = np.linalg.svd(M, compute_uv=False)
    best = np.sqrt(np.sum(s[d:] ** 2))
    from csrgl.linalg import randomized_svd

    f = randomized_svd(M, d, oversample=min(10, n - d), power_iters=4, rng=np.random.default_rng(0))
    assert np.linalg.norm(M - f.reconstruct()) <= best * 1.05 + 1e-12


def test_grarep_k1_equals_netmf_t1():
    rng = np.random.default_rng(2)
    g = connected_graph(rng, 20, 15)
    a = grarep(g, 4, steps=1)
    b = netmf(g, 4, window=1)
    assert np.allclose(a @ a.T, b @ b.T, atol=1e-8)


def test_grarep_width_and_stochastic():
    rng = np.random.default_rng(3)
    g = connected_graph(rng, 20, 10)
    assert grarep(g, 8, steps=4).shape == (20, 8)
    with pytest.raises(EmbeddingError):
        grarep(g, 6, steps=4)
    A = g.to_dense()
    P = A / A.sum(1, keepdims=True)
    for k in range(1, 5):
        assert np.allclose(np.linalg.matrix_power(P, k).sum(1), 1)


def test_prone_k2_matrix():
    assert np.allclose(prone_matrix(K2, 1.0).toarray(), [[0, np.log(2)], [np.log(2), 0]])


def test_prone_identity_propagation():
    rng = np.random.default_rng(4)
    g = connected_graph(rng, 30, 30)
    base = prone_stage1(g, 8)
    assert np.allclose(prone(g, 8, order=1, coeffs=[1.0, 0.0]), base)
    out = prone(g, 8)
    assert out.shape == (30, 8) and np.all(np.isfinite(out))


def test_katz_k2_and_series():
    S = katz_matrix(K2, 0.1)
    assert np.allclose(S, [[0.010101, 0.101010], [0.101010, 0.010101]], atol=1e-6)
    rng = np.random.default_rng(5)
    g = random_graph(rng, n=16, m=40, weighted=False, undirected=True)
    A = g.to_dense()
    beta = 0.01
    series = beta * A + beta ** 2 * A @ A + beta ** 3 * A @ A @ A
    # the remainder is beta^4 A^4 (I - beta A)^{-1}
    rho = np.max(np.abs(np.linalg.eigvalsh(A)))
    bound = np.linalg.norm(beta ** 4 * np.linalg.matrix_power(A, 4)) / (1 - beta * rho)
    assert np.linalg.norm(katz_matrix(g, beta) - series) <= bound * (1 + 1e-9)
    tiny = katz_matrix(g, 1e-7)
    assert np.linalg.norm(tiny - 1e-7 * A) <= 1e-5 * np.linalg.norm(1e-7 * A)


def test_katz_divergent_and_sparse_path(monkeypatch):
    with pytest.raises(EmbeddingError):
        katz_matrix(K2, 1.0)
    import csrgl.embeddings.factorization as fac

    rng = np.random.default_rng(6)
    g = random_graph(rng, n=20, m=50, undirected=True)
    dense = fac.katz_matrix(g, 0.02)
    monkeypatch.setattr(fac, "DENSE_KATZ_LIMIT", 0)
    act = fac.katz_matrix(g, 0.02)
    x = rng.standard_normal((20, 3))
    assert np.allclose(act.matvec(x), dense @ x)
    assert np.allclose(act.rmatvec(x), dense.T @ x)


def test_hope_shape():
    rng = np.random.default_rng(7)
    g = connected_graph(rng, 30, 20)
    e = hope(g, 8, beta=0.01)
    assert e.shape == (30, 8)
    with pytest.raises(EmbeddingError):
        hope(g, 7)


def test_spectral_examples():
    e = spectral_embedding(K2, 1)
    assert np.allclose(np.abs(e), 1)
    assert e[0, 0] == e[1, 0]
    two = build_graph(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], undirected=True)
    e = spectral_embedding(two, 2)
    assert np.allclose(np.linalg.norm(e, axis=1), 1)
    assert np.allclose(e[0], e[1]) and np.allclose(e[1], e[2])
    assert np.allclose(e[3], e[4]) and np.allclose(e[4], e[5])
    assert not np.allclose(e[0], e[3])


# registry and io --------------------------------------------------------------------------

@pytest.mark.parametrize("method", sorted(METHODS))
def test_every_method_finite_and_deterministic(method):
    rng = np.random.default_rng(8)
    g = connected_graph(rng, 40, 40)
    kw = {"walks_per_node": 2, "walk_length": 10} if method in ("deepwalk", "node2vec") else {}
    if method == "line":
        kw = {"samples": 2000}
    a = embed(method, g, d=8, seed=1, **kw)
    b = embed(method, g, d=8, seed=1, **kw)
    assert a.shape == (40, 8)
    assert np.all(np.isfinite(a))
    assert np.array_equal(a, b)


def test_embed_unknown_method():
    with pytest.raises(EmbeddingError):
        embed("word2vec", K2, 1)


def test_embedding_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    emb = rng.standard_normal((5, 3))
    path = tmp_path / "e.txt"
    save_embeddings(path, emb, "prone", 7)
    ef = load_embeddings(path)
    assert np.array_equal(ef.embeddings, emb)
    assert ef.method == "prone" and ef.seed == 7
    assert path.read_text().splitlines()[0] == "5 3 prone 7"
    with pytest.raises(ValueError):
        save_embeddings(tmp_path / "bad.txt", np.array([[np.nan]]), "x", 0)


def test_embedding_file_parse_errors(tmp_path):
    path = tmp_path / "e.txt"
    path.write_text("2 2 netmf 0\n0 1.0 2.0\n1 3.0\n")
    with pytest.raises(ValueError, match=":3:"):
        load_embeddings(path)
