"""Operator micro-benchmarks: CSR kernels against dense numpy baselines."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import EdgeList, build_graph

OPS = ("gspmm", "multi_head_spmm", "edge_softmax", "sddmm")


def random_graph(n: int, density: float, rng: np.random.Generator):
    m = max(1, int(round(density * n * n)))
    return build_graph(n, EdgeList(rng.integers(0, n, m), rng.integers(0, n, m)))


@dataclass
class Timing:
    impl: str
    times: np.ndarray
    edges: int

    @property
    def median(self) -> float:
        return float(np.median(self.times))

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.times, q))

    @property
    def edges_per_second(self) -> float:
        return self.edges / self.median if self.median > 0 else float("inf")

    def row(self) -> str:
        return (f"{self.impl:<8} median={self.median * 1e3:10.3f} ms  p10={self.percentile(10) * 1e3:10.3f} ms  "
                f"p90={self.percentile(90) * 1e3:10.3f} ms  throughput={self.edges_per_second:.3e} edges/s")


@dataclass
class BenchReport:
    op: str
    n: int
    density: float
    dim: int
    heads: int
    num_edges: int
    csr: Timing
    dense: Timing

    @property
    def speedup(self) -> float:
        return self.dense.median / self.csr.median

    def format(self) -> str:
        head = (f"op={self.op} n={self.n} density={self.density} dim={self.dim} heads={self.heads} "
                f"edges={self.num_edges} repeats={len(self.csr.times)}")
        return "\n".join([head, self.csr.row(), self.dense.row(), f"speedup (dense / csr) = {self.speedup:.2f}x"])


def _time(fn, repeats: int, warmup: int) -> np.ndarray:
    for _ in range(warmup):
        fn()
    out = np.empty(repeats)
    for i in range(repeats):
        t0 = time.perf_counter()
        fn()
        out[i] = time.perf_counter() - t0
    return out


def _dense_softmax(adj_mask, logits_dense):
    x = np.where(adj_mask, logits_dense, -np.inf)
    mx = x.max(axis=1, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.where(adj_mask, np.exp(x - mx), 0.0)
    s = e.sum(axis=1, keepdims=True)
    return e / np.where(s > 0, s, 1.0)


def bench_op(op: str, n: int = 10000, density: float = 0.005, dim: int = 64, heads: int = 4,
             repeats: int = 5, warmup: int = 1, seed: int = 0) -> BenchReport:
    if op not in OPS:
        raise ValueError(f"unknown op {op!r}; choose from {OPS}")
    if min(n, dim, heads, repeats) < 1 or not 0 < density <= 1:
        raise ValueError("benchmark parameters must be positive (0 < density <= 1)")
    rng = np.random.default_rng(seed)
    g = random_graph(n, density, rng)
    m = g.num_edges
    h = rng.standard_normal((n, dim))
    A = g.to_dense()

    if op == "gspmm":
        csr = lambda: kernels.gspmm(g, h)  # noqa: E731
        dense = lambda: A @ h  # noqa: E731
    elif op == "sddmm":
        p = rng.standard_normal((n, dim))
        rows, cols = g.row_index, g.col_idx
        csr = lambda: kernels.sddmm(g, p, h)  # noqa: E731
        dense = lambda: (p @ h.T)[rows, cols]  # noqa: E731
    elif op == "edge_softmax":
        logits = rng.standard_normal((m, heads))
        mask = A != 0
        dense_logits = [np.zeros((n, n)) for _ in range(heads)]
        for k in range(heads):
            dense_logits[k][g.row_index, g.col_idx] = logits[:, k]
        csr = lambda: kernels.edge_softmax(g, logits)  # noqa: E731
        dense = lambda: [_dense_softmax(mask, dl) for dl in dense_logits]  # noqa: E731
    else:
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        scores = rng.random((m, heads))
        per = dim // heads
        dense_s = []
        for k in range(heads):
            s = np.zeros((n, n))
            s[g.row_index, g.col_idx] = scores[:, k]
            dense_s.append(s)
        csr = lambda: kernels.multi_head_spmm(g, scores, h, heads)  # noqa: E731
        dense = lambda: np.concatenate([dense_s[k] @ h[:, k * per:(k + 1) * per] for k in range(heads)], 1)  # noqa: E731

    return BenchReport(op, n, density, dim, heads, m, Timing("csr", _time(csr, repeats, warmup), m),
                       Timing("dense", _time(dense, repeats, warmup), m))


__all__ = ["bench_op", "BenchReport", "Timing", "random_graph", "OPS"]
