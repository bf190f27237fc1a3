"""Metrics and the logistic-regression probe for frozen embeddings."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class EvalError(ValueError):
    pass


def _mask_idx(mask, n: int) -> np.ndarray:
    if mask is None:
        return np.arange(n)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if len(idx) == 0:
        raise EvalError("metric over an empty mask")
    return idx


def accuracy(pred, labels, mask=None) -> float:
    """Fraction of masked rows whose argmax (or given class) equals the label."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    idx = _mask_idx(mask, labels.shape[0])
    if pred.shape[0] != labels.shape[0]:
        raise EvalError(f"prediction rows {pred.shape[0]} != label rows {labels.shape[0]}")
    cls = pred.argmax(axis=1) if pred.ndim == 2 else pred
    return float(np.mean(cls[idx] == labels[idx]))


def micro_macro_f1(pred, labels) -> tuple[float, float]:
    """Micro-F1 over pooled counts and the unweighted mean of per-label F1.

    A label with no true or predicted positives scores 0 in the macro mean.
    """
    p = np.asarray(pred).astype(bool)
    y = np.asarray(labels).astype(bool)
    if p.shape != y.shape:
        raise EvalError(f"shape mismatch {p.shape} vs {y.shape}")
    tp = (p & y).sum(axis=0).astype(np.float64)
    fp = (p & ~y).sum(axis=0).astype(np.float64)
    fn = (~p & y).sum(axis=0).astype(np.float64)
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = 2 * tp.sum() / denom if denom > 0 else 0.0
    per = np.divide(2 * tp, 2 * tp + fp + fn, out=np.zeros_like(tp), where=(2 * tp + fp + fn) > 0)
    return float(micro), float(per.mean())


def one_hot(labels, num_classes: Optional[int] = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    c = int(labels.max()) + 1 if num_classes is None else num_classes
    out = np.zeros((len(labels), c))
    out[np.arange(len(labels)), labels] = 1.0
    return out


# logistic probe -------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _objective(W, X, Y, lam):
    """Per-label mean logistic loss plus ``lam / (2n) ||w||^2`` (bias unpenalised)."""
    n = X.shape[0]
    z = X @ W
    loss = np.mean(np.logaddexp(0.0, z) - Y * z, axis=0)
    reg = lam / (2 * n) * (W[:-1] ** 2).sum(axis=0)
    grad = X.T @ (_sigmoid(z) - Y) / n
    grad[:-1] += lam / n * W[:-1]
    return loss + reg, grad


@dataclass
class OvRLogistic:
    """One-vs-rest L2 logistic regression, all labels solved together.

    Nesterov-accelerated full-batch gradient descent with step ``1/L``;
    stops once every label's gradient norm is below ``tol`` or after
    ``max_iter`` iterations. ``lam`` plays the role of ``1/C``.
    """

    lam: float = 1.0
    tol: float = 1e-5
    max_iter: int = 500
    W: Optional[np.ndarray] = None
    history: list = field(default_factory=list)
    n_iter: int = 0

    @staticmethod
    def _design(X):
        return np.hstack([X, np.ones((X.shape[0], 1))])

    def fit(self, X, Y, W0: Optional[np.ndarray] = None) -> "OvRLogistic":
        Xb = self._design(np.asarray(X, dtype=np.float64))
        Y = np.asarray(Y, dtype=np.float64)
        n = Xb.shape[0]
        smax = np.linalg.norm(Xb, 2)
        step = 1.0 / (smax ** 2 / (4 * n) + self.lam / n)
        W = np.zeros((Xb.shape[1], Y.shape[1])) if W0 is None else W0.copy()
        V, t = W.copy(), 1.0
        self.history = [_objective(W, Xb, Y, self.lam)[0].sum()]
        for it in range(self.max_iter):
            _, g = _objective(V, Xb, Y, self.lam)
            W_next = V - step * g
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            obj_next = _objective(W_next, Xb, Y, self.lam)[0].sum()
            if obj_next > self.history[-1]:
                # restart: a plain 1/L step from W always descends
                W_next = W - step * _objective(W, Xb, Y, self.lam)[1]
                obj_next = _objective(W_next, Xb, Y, self.lam)[0].sum()
                V, t_next = W_next.copy(), 1.0
            else:
                V = W_next + ((t - 1.0) / t_next) * (W_next - W)
            W, t = W_next, t_next
            self.history.append(obj_next)
            self.n_iter = it + 1
            _, gw = _objective(W, Xb, Y, self.lam)
            if np.max(np.linalg.norm(gw, axis=0)) <= self.tol:
                break
        self.W = W
        return self

    def gradient_norm(self, X, Y) -> float:
        _, g = _objective(self.W, self._design(X), np.asarray(Y, dtype=np.float64), self.lam)
        return float(np.max(np.linalg.norm(g, axis=0)))

    def decision_function(self, X) -> np.ndarray:
        return self._design(np.asarray(X, dtype=np.float64)) @ self.W


def top_k_decisions(scores: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Mark the ``k[i]`` highest-scoring labels of each row."""
    order = np.argsort(-scores, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(scores.shape[0])[:, None]
    ranks[rows, order] = np.arange(scores.shape[1])[None, :]
    return ranks < np.asarray(k)[:, None]


@dataclass
class ProbeResult:
    runs: list
    metric_names: tuple

    def mean(self) -> dict:
        return {m: float(np.mean([r[m] for r in self.runs])) for m in self.metric_names}

    def std(self) -> dict:
        return {m: float(np.std([r[m] for r in self.runs])) for m in self.metric_names}

    def summary(self) -> str:
        mu, sd = self.mean(), self.std()
        return ", ".join(f"{m}={100 * mu[m]:.2f} ± {100 * sd[m]:.2f}" for m in self.metric_names)


def _row_normalize(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def logreg_probe(emb, labels, train_fraction: Optional[float] = None, masks=None, l2: float = 1.0,
                 seed: int = 0, shuffles: int = 1, decision: str = "topk", tol: float = 1e-5,
                 max_iter: int = 500) -> ProbeResult:
    """Score frozen embeddings with a one-vs-rest logistic probe.

    Single-label data reports accuracy; multi-label data (2-D 0/1 labels)
    reports micro/macro F1 with each test node predicted its true number
    of labels (``decision='topk'``) or every label scoring above 0
    (``decision='threshold'``). With ``train_fraction`` the labelled nodes
    are reshuffled ``shuffles`` times from ``seed``; with ``masks`` the
    given ``(train, test)`` split is used once.
    """
    X = _row_normalize(np.asarray(emb, dtype=np.float64))
    labels = np.asarray(labels)
    multilabel = labels.ndim == 2
    if not np.all(np.isfinite(X)):
        raise EvalError("embeddings contain non-finite values")
    if X.shape[0] != labels.shape[0]:
        raise EvalError(f"embedding rows {X.shape[0]} != label rows {labels.shape[0]}")
    labelled = np.flatnonzero(labels.sum(axis=1) > 0 if multilabel else labels >= 0)
    Y = labels.astype(np.float64) if multilabel else None

    splits = []
    if masks is not None:
        tr, te = masks[0], masks[-1]
        splits.append((_mask_idx(tr, X.shape[0]), _mask_idx(te, X.shape[0])))
    else:
        if train_fraction is None or not 0.0 < train_fraction < 1.0:
            raise EvalError("train_fraction must lie in (0, 1)")
        rng = np.random.default_rng(seed)
        for _ in range(shuffles):
            perm = rng.permutation(labelled)
            cut = int(round(train_fraction * len(perm)))
            splits.append((perm[:cut], perm[cut:]))

    runs = []
    for tr, te in splits:
        if multilabel:
            y_tr = Y[tr]
            if y_tr.sum() == 0:
                raise EvalError("training split has no positive labels")
        else:
            classes = np.unique(labels[tr])
            if len(classes) < 2:
                raise EvalError("training split contains a single class")
            y_tr = one_hot(labels[tr], int(labels.max()) + 1)
        clf = OvRLogistic(lam=l2, tol=tol, max_iter=max_iter).fit(X[tr], y_tr)
        scores = clf.decision_function(X[te])
        run = {"initial_loss": clf.history[0], "final_loss": clf.history[-1], "iterations": clf.n_iter}
        if multilabel:
            if decision == "topk":
                pred = top_k_decisions(scores, Y[te].sum(axis=1).astype(np.int64))
            elif decision == "threshold":
                pred = scores > 0
            else:
                raise EvalError(f"unknown decision rule {decision!r}")
            run["micro_f1"], run["macro_f1"] = micro_macro_f1(pred, Y[te])
        else:
            run["accuracy"] = accuracy(scores, labels[te])
        runs.append(run)
    names = ("micro_f1", "macro_f1") if multilabel else ("accuracy",)
    return ProbeResult(runs, names)


__all__ = ["accuracy", "micro_macro_f1", "logreg_probe", "ProbeResult", "OvRLogistic",
           "top_k_decisions", "one_hot", "EvalError"]
