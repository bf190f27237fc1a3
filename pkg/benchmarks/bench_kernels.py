"""Numba vs pure-numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--n 20000] [--density 0.001] [--dim 64] [--repeats 5]

Each kernel runs once per backend as warmup (this also triggers JIT
compilation), then ``--repeats`` timed runs; the median is reported along
with a check that both backends produced the same result.
"""
import argparse
import time

import numpy as np

from csrgl import _accel, kernels
from csrgl.bench import random_graph
from csrgl.embeddings.skipgram import skipgram_ns
from csrgl.embeddings.walks import biased_walks, random_walks


def median_time(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cases(g, rng, dim, heads):
    n, m = g.num_nodes, g.num_edges
    h = rng.standard_normal((n, dim))
    p = rng.standard_normal((n, dim))
    logits = rng.standard_normal((m, heads))
    small = random_graph(2000, 0.005, rng)
    corpus = random_walks(small, 20, 2, seed=0)
    return {
        "gspmm sum": lambda: kernels.gspmm(g, h),
        "gspmm max": lambda: kernels.gspmm(g, h, reduce="max"),
        "gspmm_transpose": lambda: kernels.gspmm_transpose(g, h),
        "sddmm": lambda: kernels.sddmm(g, p, h),
        "edge_softmax": lambda: kernels.edge_softmax(g, logits),
        "multi_head_spmm": lambda: kernels.multi_head_spmm(g, logits, h, heads),
        "uniform walks": lambda: random_walks(g, 20, 1, seed=0).walks,
        "node2vec walks": lambda: biased_walks(g, 0.5, 2.0, 20, 1, seed=0).walks,
        "skip-gram epoch": lambda: skipgram_ns(corpus, small.num_nodes, d=32, window=3, seed=0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--density", type=float, default=0.001)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    g = random_graph(args.n, args.density, np.random.default_rng(args.seed))
    print(f"n={g.num_nodes} edges={g.num_edges} dim={args.dim} heads={args.heads} repeats={args.repeats}")
    print(f"{'kernel':<18} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}  same")
    fns = cases(g, np.random.default_rng(args.seed + 1), args.dim, args.heads)
    for name, fn in fns.items():
        row = {}
        for backend in ("numba", "numpy"):
            with _accel.backend(backend):
                row[backend] = (median_time(fn, args.repeats), fn())
        (t_nb, out_nb), (t_np, out_np) = row["numba"], row["numpy"]
        # skip-gram differs by design: sequential SGD vs mini-batches
        same = "-" if name == "skip-gram epoch" else str(np.allclose(out_nb, out_np, rtol=1e-9, atol=1e-12))
        print(f"{name:<18} {1e3 * t_nb:10.2f} {1e3 * t_np:10.2f} {t_np / t_nb:7.1f}x  {same}")


if __name__ == "__main__":
    main()
