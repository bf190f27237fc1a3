"""Vectorised numpy versions of the CSR kernels (``CSRGL_BACKEND=numpy``)."""
import numpy as np

SUM, MEAN, MAX, MIN = 0, 1, 2, 3

_UFUNC = {SUM: np.add, MEAN: np.add, MAX: np.maximum, MIN: np.minimum}


def _nonempty(row_ptr):
    counts = np.diff(row_ptr)
    rows = np.flatnonzero(counts)
    return rows, row_ptr[rows], counts[rows]


def _row_index(row_ptr):
    return np.repeat(np.arange(len(row_ptr) - 1), np.diff(row_ptr))


def spmm(row_ptr, col_idx, weight, h, reduce, use_weight):
    out = np.zeros((len(row_ptr) - 1, h.shape[1]))
    if not len(col_idx):
        return out
    vals = h[col_idx]
    if use_weight:
        vals = vals * weight[:, None]
    rows, starts, counts = _nonempty(row_ptr)
    red = _UFUNC[reduce].reduceat(vals, starts, axis=0)
    if reduce == MEAN:
        red /= counts[:, None]
    out[rows] = red
    return out


def multi_head_spmm(row_ptr, col_idx, scores, h, heads):
    d = h.shape[1] // heads
    parts = [spmm(row_ptr, col_idx, np.ascontiguousarray(scores[:, k]),
                  h[:, k * d:(k + 1) * d], SUM, True) for k in range(heads)]
    return np.concatenate(parts, axis=1) if parts else np.zeros((len(row_ptr) - 1, 0))


def sddmm(row_ptr, col_idx, p, q):
    rows = _row_index(row_ptr)
    return np.einsum("ij,ij->i", p[rows], q[col_idx])


def multi_head_sddmm(row_ptr, col_idx, p, q, heads):
    rows = _row_index(row_ptr)
    e = len(col_idx)
    prod = p[rows].reshape(e, heads, -1) * q[col_idx].reshape(e, heads, -1)
    return prod.sum(axis=2)


def edge_softmax(row_ptr, logits):
    out = np.empty_like(logits)
    if not len(logits):
        return out
    rows, starts, counts = _nonempty(row_ptr)
    row_max = np.maximum.reduceat(logits, starts, axis=0)
    shifted = np.exp(logits - np.repeat(row_max, counts, axis=0))
    totals = np.add.reduceat(shifted, starts, axis=0)
    return shifted / np.repeat(totals, counts, axis=0)


def edge_softmax_backward(row_ptr, out, grad):
    if not len(out):
        return np.empty_like(out)
    rows, starts, counts = _nonempty(row_ptr)
    dots = np.add.reduceat(out * grad, starts, axis=0)
    return out * (grad - np.repeat(dots, counts, axis=0))


def segment_sum(row_ptr, values):
    out = np.zeros((len(row_ptr) - 1, values.shape[1]))
    if len(values):
        rows, starts, _ = _nonempty(row_ptr)
        out[rows] = np.add.reduceat(values, starts, axis=0)
    return out
