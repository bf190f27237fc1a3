"""numba loop kernels over raw CSR arrays.

Each output row is written by exactly one loop iteration and edges are
accumulated left to right, so results do not depend on scheduling.
"""
import numpy as np

from .._accel import njit

# reduce codes shared with the dispatcher
SUM, MEAN, MAX, MIN = 0, 1, 2, 3


@njit
def spmm(row_ptr, col_idx, weight, h, reduce, use_weight):
    n_rows = row_ptr.shape[0] - 1
    d = h.shape[1]
    out = np.zeros((n_rows, d))
    for u in range(n_rows):
        start, stop = row_ptr[u], row_ptr[u + 1]
        if start == stop:
            continue
        if reduce == SUM or reduce == MEAN:
            for e in range(start, stop):
                v = col_idx[e]
                if use_weight:
                    w = weight[e]
                    for j in range(d):
                        out[u, j] += w * h[v, j]
                else:
                    for j in range(d):
                        out[u, j] += h[v, j]
            if reduce == MEAN:
                inv = 1.0 / (stop - start)
                for j in range(d):
                    out[u, j] *= inv
        else:
            for e in range(start, stop):
                v = col_idx[e]
                w = weight[e] if use_weight else 1.0
                for j in range(d):
                    x = w * h[v, j]
                    if e == start:
                        out[u, j] = x
                    elif reduce == MAX:
                        if x > out[u, j]:
                            out[u, j] = x
                    elif x < out[u, j]:
                        out[u, j] = x
    return out


@njit
def multi_head_spmm(row_ptr, col_idx, scores, h, heads):
    n_rows = row_ptr.shape[0] - 1
    d = h.shape[1] // heads
    out = np.zeros((n_rows, heads * d))
    for u in range(n_rows):
        for k in range(heads):
            base = k * d
            for e in range(row_ptr[u], row_ptr[u + 1]):
                v = col_idx[e]
                s = scores[e, k]
                for j in range(d):
                    out[u, base + j] += s * h[v, base + j]
    return out


@njit
def sddmm(row_ptr, col_idx, p, q):
    n_rows = row_ptr.shape[0] - 1
    d = p.shape[1]
    out = np.empty(col_idx.shape[0])
    for u in range(n_rows):
        for e in range(row_ptr[u], row_ptr[u + 1]):
            v = col_idx[e]
            acc = 0.0
            for j in range(d):
                acc += p[u, j] * q[v, j]
            out[e] = acc
    return out


@njit
def multi_head_sddmm(row_ptr, col_idx, p, q, heads):
    n_rows = row_ptr.shape[0] - 1
    d = p.shape[1] // heads
    out = np.empty((col_idx.shape[0], heads))
    for u in range(n_rows):
        for e in range(row_ptr[u], row_ptr[u + 1]):
            v = col_idx[e]
            for k in range(heads):
                base = k * d
                acc = 0.0
                for j in range(d):
                    acc += p[u, base + j] * q[v, base + j]
                out[e, k] = acc
    return out


@njit
def edge_softmax(row_ptr, logits):
    n_rows = row_ptr.shape[0] - 1
    heads = logits.shape[1]
    out = np.empty_like(logits)
    for u in range(n_rows):
        start, stop = row_ptr[u], row_ptr[u + 1]
        if start == stop:
            continue
        for k in range(heads):
            m = logits[start, k]
            for e in range(start + 1, stop):
                if logits[e, k] > m:
                    m = logits[e, k]
            total = 0.0
            for e in range(start, stop):
                x = np.exp(logits[e, k] - m)
                out[e, k] = x
                total += x
            for e in range(start, stop):
                out[e, k] /= total
    return out


@njit
def edge_softmax_backward(row_ptr, out, grad):
    n_rows = row_ptr.shape[0] - 1
    heads = out.shape[1]
    res = np.empty_like(out)
    for u in range(n_rows):
        start, stop = row_ptr[u], row_ptr[u + 1]
        for k in range(heads):
            dot = 0.0
            for e in range(start, stop):
                dot += out[e, k] * grad[e, k]
            for e in range(start, stop):
                res[e, k] = out[e, k] * (grad[e, k] - dot)
    return res


@njit
def segment_sum(row_ptr, values):
    n_rows = row_ptr.shape[0] - 1
    out = np.zeros((n_rows, values.shape[1]))
    for u in range(n_rows):
        for e in range(row_ptr[u], row_ptr[u + 1]):
            for k in range(values.shape[1]):
                out[u, k] += values[e, k]
    return out
