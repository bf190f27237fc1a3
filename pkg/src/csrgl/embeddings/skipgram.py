"""Skip-gram with negative sampling over walk corpora, and LINE.

The numba path is plain sequential SGD (one worker, deterministic per
seed). The numpy path trains on mini-batches of pairs with scatter-add
updates, averaging repeated rows within a batch: same objective,
different trajectory.
"""
from __future__ import annotations

import numpy as np

from .. import _accel
from .._accel import njit
from ..graph import Graph
from .walks import AliasTable, WalkCorpus, build_alias

NOISE_POWER = 0.75


@njit
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit
def sgns_loss_grad(center, targets, labels):
    """Loss and gradients of ``-sum_t log sigmoid(s_t * center . target_t)``.

    ``s_t = +1`` for the positive context, ``-1`` for negatives. Returns
    ``(loss, d_center, d_targets)``.
    """
    d = center.shape[0]
    loss = 0.0
    g_center = np.zeros(d)
    g_targets = np.zeros_like(targets)
    for t in range(targets.shape[0]):
        f = 0.0
        for j in range(d):
            f += center[j] * targets[t, j]
        sign = 1.0 if labels[t] > 0 else -1.0
        sig = _sigmoid(sign * f)
        loss -= np.log(max(sig, 1e-300))
        coef = -(1.0 - sig) * sign  # d loss / d f
        for j in range(d):
            g_center[j] += coef * targets[t, j]
            g_targets[t, j] = coef * center[j]
    return loss, g_center, g_targets


@njit
def _sgd_step(emb_in, emb_out, c, o, neg_prob, neg_alias, negatives, lr, buf):
    """One positive pair plus ``negatives`` noise draws; word2vec-style update.

    Returns the pair's loss measured before the update.
    """
    d = emb_in.shape[1]
    loss = 0.0
    for j in range(d):
        buf[j] = 0.0
    n_noise = neg_prob.shape[0]
    for t in range(negatives + 1):
        if t == 0:
            target = o
            label = 1.0
        else:
            k = np.random.randint(n_noise)
            target = k if np.random.random() < neg_prob[k] else neg_alias[k]
            if target == o:
                continue
            label = 0.0
        f = 0.0
        for j in range(d):
            f += emb_in[c, j] * emb_out[target, j]
        sig = _sigmoid(f)
        loss -= np.log(max(sig if label > 0 else 1.0 - sig, 1e-300))
        g = (label - sig) * lr
        for j in range(d):
            buf[j] += g * emb_out[target, j]
            emb_out[target, j] += g * emb_in[c, j]
    for j in range(d):
        emb_in[c, j] += buf[j]
    return loss


@njit
def _train_walks_numba(walks, window, emb_in, emb_out, neg_prob, neg_alias, negatives,
                       lr0, epochs, total_pairs, seed, epoch_loss):
    np.random.seed(seed)
    buf = np.empty(emb_in.shape[1])
    done = 0
    L = walks.shape[1]
    for ep in range(epochs):
        for w in range(walks.shape[0]):
            for i in range(L):
                c = walks[w, i]
                if c < 0:
                    break
                lo = max(0, i - window)
                hi = min(L, i + window + 1)
                for k in range(lo, hi):
                    if k == i:
                        continue
                    o = walks[w, k]
                    if o < 0:
                        break
                    lr = lr0 * max(1.0 - done / total_pairs, 1e-4)
                    epoch_loss[ep] += _sgd_step(emb_in, emb_out, c, o, neg_prob, neg_alias, negatives, lr, buf)
                    done += 1


@njit
def _train_edges_numba(src, dst, edge_prob, edge_alias, emb_in, emb_out, neg_prob, neg_alias,
                       negatives, lr0, samples, seed):
    np.random.seed(seed)
    buf = np.empty(emb_in.shape[1])
    m = edge_prob.shape[0]
    for s in range(samples):
        k = np.random.randint(m)
        e = k if np.random.random() < edge_prob[k] else edge_alias[k]
        lr = lr0 * max(1.0 - s / samples, 1e-4)
        _sgd_step(emb_in, emb_out, src[e], dst[e], neg_prob, neg_alias, negatives, lr, buf)


def _count_pairs(walks: np.ndarray, window: int) -> int:
    lengths = (walks >= 0).sum(axis=1)
    total = 0
    for off in range(1, window + 1):
        total += 2 * np.maximum(lengths - off, 0).sum()
    return int(total)


def _walk_pairs(walks: np.ndarray, window: int):
    """All ``(center, context)`` pairs within ``window`` of each other."""
    centers, contexts = [], []
    for off in range(1, window + 1):
        a, b = walks[:, :-off].ravel(), walks[:, off:].ravel()
        ok = (a >= 0) & (b >= 0)
        centers += [a[ok], b[ok]]
        contexts += [b[ok], a[ok]]
    return np.concatenate(centers), np.concatenate(contexts)


def _minibatch_sgns(centers, contexts, emb_in, emb_out, noise: AliasTable, negatives, lr0,
                    rng, batch_size, progress_offset, total) -> float:
    """Mini-batch SGD over the pairs; returns the summed pre-update loss."""
    loss = 0.0
    for start in range(0, len(centers), batch_size):
        c = centers[start:start + batch_size]
        o = contexts[start:start + batch_size]
        lr = lr0 * max(1.0 - (progress_offset + start) / total, 1e-4)
        targets = np.concatenate([o[:, None], noise.sample(rng, (len(c), negatives))], axis=1)
        labels = np.zeros(targets.shape)
        labels[:, 0] = 1.0
        vin = emb_in[c]
        vout = emb_out[targets]
        f = np.einsum("bd,bkd->bk", vin, vout)
        sig = 1.0 / (1.0 + np.exp(-np.clip(f, -30, 30)))
        keep = np.ones(targets.shape, dtype=bool)
        keep[:, 1:] = targets[:, 1:] != o[:, None]
        loss -= float(np.sum(np.log(np.maximum(np.where(labels > 0, sig, 1.0 - sig), 1e-300))[keep]))
        g = (labels - sig) * lr * keep
        # a row hit several times in one batch gets the mean of its updates, not the sum
        n = emb_in.shape[0]
        hits_in = np.bincount(c, minlength=n)
        hits_out = np.bincount(targets.ravel(), weights=keep.ravel(), minlength=n)
        if emb_in is emb_out:
            hits_in = hits_out = hits_in + hits_out
        d_in = np.einsum("bk,bkd->bd", g, vout) / np.maximum(hits_in[c], 1)[:, None]
        d_out = g[:, :, None] * vin[:, None, :] / np.maximum(hits_out[targets], 1)[:, :, None]
        np.add.at(emb_out, targets.ravel(), d_out.reshape(-1, emb_in.shape[1]))
        np.add.at(emb_in, c, d_in)
    return loss


def noise_distribution(counts: np.ndarray, power: float = NOISE_POWER) -> np.ndarray:
    w = np.asarray(counts, dtype=np.float64) ** power
    if w.sum() <= 0:
        w = np.ones_like(w)
    return w


def skipgram_ns(corpus: WalkCorpus, num_nodes: int, d: int = 128, window: int = 5,
                negatives: int = 5, epochs: int = 1, lr: float = 0.025, seed: int = 0,
                batch_size: int = 256, loss_history: list | None = None) -> np.ndarray:
    """Train skip-gram with negative sampling; returns the input embeddings.

    Noise draws follow node frequency in the corpus raised to 0.75; the
    learning rate decays linearly to ``1e-4 * lr``. If ``loss_history`` is
    given, the mean per-pair loss of each epoch is appended to it.
    """
    walks = corpus.walks
    if walks.size == 0 or (walks >= 0).sum() == 0:
        raise ValueError("empty walk corpus")
    rng = np.random.default_rng(seed)
    emb_in = (rng.random((num_nodes, d)) - 0.5) / d
    emb_out = np.zeros((num_nodes, d))
    counts = np.bincount(walks[walks >= 0], minlength=num_nodes)
    noise = AliasTable(noise_distribution(counts))
    per_epoch = max(_count_pairs(walks, window), 1)
    total = per_epoch * epochs
    epoch_loss = np.zeros(epochs)
    if _accel.get_backend() == "numba":
        _train_walks_numba(walks, window, emb_in, emb_out, noise.prob, noise.alias, negatives,
                           lr, epochs, total, seed, epoch_loss)
    else:
        done = 0
        for ep in range(epochs):
            for chunk in range(0, len(walks), 512):
                c, o = _walk_pairs(walks[chunk:chunk + 512], window)
                epoch_loss[ep] += _minibatch_sgns(c, o, emb_in, emb_out, noise, negatives, lr, rng,
                                                  batch_size, done, total)
                done += len(c)
    if loss_history is not None:
        loss_history.extend((epoch_loss / per_epoch).tolist())
    return emb_in


def line(g: Graph, d: int = 128, order: str = "both", samples: int | None = None,
         negatives: int = 5, lr: float = 0.025, seed: int = 0, batch_size: int = 256) -> np.ndarray:
    """LINE embeddings by edge-sampled SGD.

    ``first`` shares one table between both endpoints (sigma(u_j . u_i));
    ``second`` scores node vectors against separate context vectors.
    ``both`` trains each with ``d // 2`` columns, L2-normalises the rows of
    each half and concatenates them.
    """
    if order not in ("first", "second", "both"):
        raise ValueError("order must be 'first', 'second' or 'both'")
    if order == "both":
        if d % 2:
            raise ValueError("order='both' needs an even dimension")
        first = line(g, d // 2, "first", samples, negatives, lr, seed, batch_size)
        second = line(g, d // 2, "second", samples, negatives, lr, seed + 1, batch_size)
        return np.concatenate([_row_normalize(first), _row_normalize(second)], axis=1)

    n = g.num_nodes
    if g.num_edges == 0:
        raise ValueError("LINE needs at least one edge")
    samples = samples if samples is not None else 50 * g.num_edges
    rng = np.random.default_rng(seed)
    emb = (rng.random((n, d)) - 0.5) / d
    ctx = emb if order == "first" else np.zeros((n, d))
    edges = AliasTable(g.weights)
    noise = AliasTable(noise_distribution(g.degrees()))
    src, dst = g.row_index, g.col_idx
    if _accel.get_backend() == "numba":
        _train_edges_numba(src, dst, edges.prob, edges.alias, emb, ctx, noise.prob, noise.alias,
                           negatives, lr, samples, seed)
    else:
        done = 0
        while done < samples:
            size = min(65536, samples - done)
            e = edges.sample(rng, size)
            _minibatch_sgns(src[e], dst[e], emb, ctx, noise, negatives, lr, rng, batch_size, done, samples)
            done += size
    return emb


def _row_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


__all__ = ["skipgram_ns", "line", "sgns_loss_grad", "noise_distribution", "build_alias"]
