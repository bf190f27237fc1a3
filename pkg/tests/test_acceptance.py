"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line.

Benchmark reproductions need the converted dataset bundles under
``$CSRGL_DATA``; without them they fail with a "bundle not found" reason
rather than being skipped.
"""
import time

import numpy as np
import pytest

from csrgl import autodiff as ad
from csrgl import kernels
from csrgl.bench import bench_op
from csrgl.cli import main
from csrgl.configs import best_config
from csrgl.datasets import DatasetError, load, save_bundle, two_clusters
from csrgl.embeddings import embed
from csrgl.embeddings.factorization import prone_stage1
from csrgl.evaluation import logreg_probe
from csrgl.graph import add_self_loops, build_graph, sym_norm
from csrgl.models import appnp_forward, dgi_encode_and_score, gat_forward, gcn_forward, sage_forward
from csrgl.training import TrainSpec, run

from conftest import grad_check, random_graph
from test_autodiff import GRAD_CASES, SPARSE_CASES, _sparse_case

SEEDS = (0, 1, 2)


def _dataset(name, verdict, cid, title):
    try:
        g, _ = load(name)
    except DatasetError as exc:
        verdict(cid, title, False, f"dataset unavailable: {str(exc).splitlines()[0]}")
    return g


# benchmark reproduction: semi-supervised node classification ---------------------------

SUPERVISED = [
    ("A1", "cora", "gcn", 80.0, 83.0),
    ("A2", "citeseer", "gcn", 69.5, 73.5),
    ("A3", "pubmed", "gcn", 78.0, 81.0),
    ("A4", "cora", "gat", 81.0, 84.5),
    ("A5", "cora", "appnp", 82.0, 85.5),
    ("A6", "cora", "dgi", 79.5, 83.5),
]


@pytest.mark.parametrize("cid,dataset,model,lo,hi", SUPERVISED, ids=[c[0] for c in SUPERVISED])
def test_supervised_benchmark(verdict, cid, dataset, model, lo, hi):
    title = f"{model.upper()} on {dataset} accuracy in [{lo}, {hi}]"
    _dataset(dataset, verdict, cid, title)
    res = run(TrainSpec(dataset=dataset, model=model, use_best_config=True, seeds=SEEDS))
    acc = 100 * res.mean
    verdict(cid, title, lo <= acc <= hi, f"measured {acc:.2f} ± {100 * res.std:.2f}")


# benchmark reproduction: unsupervised embeddings -------------------------------------------

UNSUPERVISED = [
    ("A7", "wikipedia", "deepwalk", 49.53, 2.0),
    ("A8", "blogcatalog", "deepwalk", 40.48, 2.0),
    ("A9", "wikipedia", "netmf", 57.42, 2.0),
    ("A10", "ppi", "netmf", 23.73, 2.0),
    ("A11", "ppi", "prone", 24.60, 2.0),
    ("A13", "wikipedia", "hope", 54.04, 2.5),
]


def _micro_f1(g, dataset, method, fn=None):
    params = best_config(dataset, method)
    d = int(params.pop("d", 128))
    scores = []
    for seed in SEEDS:
        emb = fn(g, d, seed) if fn is not None else embed(method, g, d=d, seed=seed, **params)
        res = logreg_probe(emb, g.labels, train_fraction=0.5, shuffles=10, seed=seed)
        scores.append(res.mean()["micro_f1"])
    return 100 * float(np.mean(scores))


@pytest.mark.parametrize("cid,dataset,method,target,tol", UNSUPERVISED, ids=[c[0] for c in UNSUPERVISED])
def test_unsupervised_benchmark(verdict, cid, dataset, method, target, tol):
    title = f"{method} micro-F1 on {dataset} (50% labelled) within {target} ± {tol}"
    g = _dataset(dataset, verdict, cid, title)
    f1 = _micro_f1(g, dataset, method)
    verdict(cid, title, abs(f1 - target) <= tol, f"measured {f1:.2f}")


def test_prone_propagation_helps(verdict):
    cid, title = "A12", "ProNE stage-2 micro-F1 >= stage-1 on ppi"
    g = _dataset("ppi", verdict, cid, title)
    stage1 = _micro_f1(g, "ppi", "prone", fn=lambda g, d, s: prone_stage1(g, d, seed=s))
    stage2 = _micro_f1(g, "ppi", "prone")
    verdict(cid, title, stage2 >= stage1, f"stage-1 {stage1:.2f}, stage-2 {stage2:.2f}")


# property suites --------------------------------------------------------------------------

def _dense_reduce(A, mask, h, reduce):
    msgs = A[:, :, None] * h[None, :, :]
    has = mask.any(axis=1)[:, None]
    if reduce == "sum":
        return msgs.sum(1)
    if reduce == "mean":
        return msgs.sum(1) / np.maximum(mask.sum(1), 1)[:, None]
    fill = -np.inf if reduce == "max" else np.inf
    red = np.where(mask[:, :, None], msgs, fill)
    red = red.max(1) if reduce == "max" else red.min(1)
    return np.where(has, red, 0.0)


def _close(a, b):
    return np.allclose(a, b, rtol=1e-6, atol=1e-9)


def test_kernel_oracle_suite(verdict):
    cid, title = "P1", "kernel oracle suite: 500 graphs match dense oracles to 1e-6 in < 60 s"
    t0 = time.perf_counter()
    bad = []
    for i in range(500):
        rng = np.random.default_rng(i)
        n = int(rng.integers(1, 65))
        d = int(rng.integers(1, 17))
        g = random_graph(rng, n=n, m=int(rng.integers(0, 4 * n + 1)))
        A = g.to_dense()
        mask = np.zeros((n, n), bool)
        mask[g.row_index, g.col_idx] = True
        h = rng.standard_normal((n, d))
        for reduce in ("sum", "mean", "max", "min"):
            if not _close(kernels.gspmm(g, h, reduce=reduce), _dense_reduce(A, mask, h, reduce)):
                bad.append((i, f"gspmm-{reduce}"))
        p, q = rng.standard_normal((n, d)), rng.standard_normal((n, d))
        if not _close(kernels.sddmm(g, p, q), (p @ q.T)[g.row_index, g.col_idx]):
            bad.append((i, "sddmm"))
        heads = int(rng.integers(1, 4))
        logits = 5 * rng.standard_normal((g.num_edges, heads))
        dense_l = np.full((n, n, heads), -np.inf)
        dense_l[g.row_index, g.col_idx] = logits
        with np.errstate(invalid="ignore"):
            ex = np.exp(dense_l - dense_l.max(axis=1, keepdims=True))
            soft = ex / ex.sum(axis=1, keepdims=True)
        if not _close(kernels.edge_softmax(g, logits), soft[g.row_index, g.col_idx]):
            bad.append((i, "edge_softmax"))
        hh = rng.standard_normal((n, heads * d))
        ref = np.zeros((n, heads * d))
        for k in range(heads):
            S = np.zeros((n, n))
            S[g.row_index, g.col_idx] = logits[:, k]
            ref[:, k * d:(k + 1) * d] = S @ hh[:, k * d:(k + 1) * d]
        if not _close(kernels.multi_head_spmm(g, logits, hh, heads), ref):
            bad.append((i, "multi_head_spmm"))
    elapsed = time.perf_counter() - t0
    verdict(cid, title, not bad and elapsed < 60, f"{len(bad)} mismatches, {elapsed:.1f} s")


def _model_cases(rng):
    g = add_self_loops(random_graph(rng, n=6, m=12, weighted=False, undirected=True, self_loops=False))
    a_hat = sym_norm(g)
    r = rng.standard_normal
    x = r((6, 3))
    perm = rng.permutation(6)

    def gat(v):
        return gat_forward(g, v[0], [{"w": v[1], "a_src": v[2], "a_dst": v[3]},
                                     {"w": v[4], "a_src": v[5], "a_dst": v[6]}], [2, 1])

    def sage(v):
        return sage_forward(g, v[0], [{"w_self": v[1], "w_neigh": v[2]}, {"w_self": v[3], "w_neigh": v[4]}])

    def dgi(v):
        pos, neg = dgi_encode_and_score(a_hat, v[0], v[1], v[2], v[3], perm=perm)
        return ad.scale(ad.add(ad.bce_with_logits(pos, 1.0), ad.bce_with_logits(neg, 0.0)), 0.5)

    return {
        "GCN": (lambda v: gcn_forward(a_hat, v[0], [v[1], v[3]], [v[2], v[4]]),
                [x, r((3, 4)), r((1, 4)), r((4, 2)), r((1, 2))]),
        "GAT": (gat, [x, r((3, 4)), r((2, 2)), r((2, 2)), r((4, 2)), r((1, 2)), r((1, 2))]),
        "SAGE": (sage, [x, r((3, 4)), r((3, 4)), r((4, 2)), r((4, 2))]),
        "APPNP": (lambda v: appnp_forward(a_hat, v[0], [v[1], v[3]], [v[2], v[4]], 0.1, 5),
                  [x, r((3, 4)), r((1, 4)), r((4, 2)), r((1, 2))]),
        "DGI": (dgi, [np.where(np.abs(x) < 0.05, 0.05, x), r((3, 3)), np.full((1, 3), 0.25), r((3, 3))]),
    }


def test_gradient_suite(verdict):
    cid, title = "P2", "gradient suite: ops and models pass FD checks (rel <= 1e-4, 20 instances); spmm grad == sddmm"
    worst = {}
    for name in GRAD_CASES:
        for i in range(20):
            fn, inputs = GRAD_CASES[name](np.random.default_rng(i))
            worst[name] = max(worst.get(name, 0.0), grad_check(fn, inputs, seed=i))
    for name in SPARSE_CASES:
        for i in range(20):
            fn, inputs = _sparse_case(name, np.random.default_rng(100 + i))
            worst[name] = max(worst.get(name, 0.0), grad_check(fn, inputs, seed=i))
    for i in range(20):
        for name, (fn, inputs) in _model_cases(np.random.default_rng(200 + i)).items():
            worst[name] = max(worst.get(name, 0.0), grad_check(fn, inputs, seed=i))
    exact = True
    for i in range(20):
        rng = np.random.default_rng(300 + i)
        g = random_graph(rng, n=10, m=30)
        h = ad.Var(rng.standard_normal((10, 4)))
        w = ad.param(rng.random(g.num_edges))
        G = rng.standard_normal((10, 4))
        with ad.Tape() as tape:
            out = ad.spmm_var(g, h, w)
            tape.backward(out, G)
        exact &= bool(np.array_equal(w.grad, kernels.sddmm(g, G, h.value)))
    failing = sorted(k for k, v in worst.items() if v > 1e-4)
    verdict(cid, title, not failing and exact,
            f"{len(worst)} ops/models, worst rel {max(worst.values()):.1e}, failing {failing}, sddmm exact {exact}")


def test_edge_softmax_stability(verdict):
    cid, title = "P3", "edge softmax rows sum to 1 within 1e-6, finite for |x| <= 1e4"
    ok = True
    for i in range(200):
        rng = np.random.default_rng(i)
        g = random_graph(rng, n=int(rng.integers(1, 40)), m=int(rng.integers(0, 200)))
        x = rng.uniform(-1e4, 1e4, (g.num_edges, 2))
        if i % 4 == 0:
            x = np.where(rng.random(x.shape) < 0.5, 1e4, -1e4)
        out = kernels.edge_softmax(g, x)
        sums = np.stack([np.bincount(g.row_index, out[:, k], minlength=g.num_nodes) for k in range(2)], 1)
        has = np.diff(g.row_ptr) > 0
        ok &= bool(np.all(np.isfinite(out)) and np.all(np.abs(sums[has] - 1) <= 1e-6))
    verdict(cid, title, ok)


def test_wrapper_orthogonality(verdict):
    cid, title = "P4", "GCN on cora agrees within 3 points across full_graph / neighbor_sampling / clustering"
    _dataset("cora", verdict, cid, title)
    accs = {}
    for data, args in [("full_graph", {}), ("neighbor_sampling", {"fanouts": [10, 10], "batch_size": 512}),
                       ("clustering", {"k": 16, "clusters_per_batch": 4})]:
        res = run(TrainSpec(dataset="cora", model="gcn", use_best_config=True, seeds=SEEDS,
                            data_wrapper=data, data_wrapper_args=args))
        accs[data] = 100 * res.mean
    spread = max(accs.values()) - min(accs.values())
    verdict(cid, title, spread <= 3.0, ", ".join(f"{k} {v:.2f}" for k, v in accs.items()))


def test_determinism(verdict, tmp_path):
    cid, title = "P5", "re-running commands with identical seeds reproduces outputs bit-for-bit"
    bundle = tmp_path / "toy"
    save_bundle(two_clusters(60, np.random.default_rng(0), num_features=8, train_per_class=5), bundle)
    labels = (np.random.default_rng(1).random((60, 3)) < 0.4).astype(float)
    labels[labels.sum(1) == 0, 0] = 1
    ml = tmp_path / "ml"
    rng = np.random.default_rng(2)
    edges = [(i, j) for i in range(60) for j in range(i + 1, 60) if labels[i] @ labels[j] > 0 and rng.random() < 0.2]
    save_bundle(build_graph(60, edges, undirected=True, labels=labels), ml)
    space = tmp_path / "space.json"
    space.write_text('{"lr": {"loguniform": [0.001, 0.1]}}')
    commands = {
        "experiment-gcn": ["experiment", "--dataset", str(bundle), "--model", "gcn", "--epochs", "20",
                           "--seed", "3", "--seed", "4"],
        "experiment-gat-ns": ["experiment", "--dataset", str(bundle), "--model", "gat", "--epochs", "5",
                              "--data-wrapper", "neighbor_sampling", "--fanouts", "4", "4", "--seed", "1"],
        "experiment-dgi": ["experiment", "--dataset", str(bundle), "--model", "dgi", "--epochs", "5", "--seed", "2"],
        "embed-deepwalk": ["embed", "--dataset", str(ml), "--method", "deepwalk", "--dim", "8",
                           "--param", "walk_length=10", "--param", "walks_per_node=2", "--seed", "5"],
        "embed-node2vec": ["embed", "--dataset", str(ml), "--method", "node2vec", "--dim", "8",
                           "--param", "walk_length=10", "--param", "walks_per_node=2", "--param", "p=0.5",
                           "--seed", "5"],
        "embed-prone": ["embed", "--dataset", str(ml), "--method", "prone", "--dim", "8", "--seed", "5"],
        "hpo": ["hpo", "--space", str(space), "--dataset", str(bundle), "--model", "gcn", "--budget", "3",
                "--epochs", "5", "--seed", "9"],
    }
    mismatched = []
    for name, argv in commands.items():
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{name}.{rep}"
            flag = {"experiment": "--out", "embed": "--out", "hpo": "--trial-log"}[argv[0]]
            assert main(argv + [flag, str(out)]) == 0, name
            outputs.append(out.read_bytes())
        if outputs[0] != outputs[1]:
            mismatched.append(name)
    verdict(cid, title, not mismatched, f"{len(commands)} commands, mismatched {mismatched}")


def test_microbenchmark(verdict):
    cid, title = "P6", "CSR gspmm beats the dense baseline at n=10000, density 0.5%, d=64"
    rep = bench_op("gspmm", n=10000, density=0.005, dim=64, repeats=5, warmup=1)
    verdict(cid, title, rep.csr.median < rep.dense.median,
            f"csr {1e3 * rep.csr.median:.1f} ms, dense {1e3 * rep.dense.median:.1f} ms, {rep.speedup:.1f}x")
