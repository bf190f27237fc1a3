"""Data wrappers (batch construction) and model wrappers (train/eval steps).

Any model runs under any data wrapper: the wrapper only decides which
graph operand (a preprocessed graph or a block list) and which rows reach
the model, and the model wrapper only decides the loss.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np

from .. import autodiff as ad
from ..evaluation import accuracy, logreg_probe
from ..graph import Block, Graph, induced_subgraph, partition, sample_neighbors
from ..models import DGI, Model


class WrapperError(ValueError):
    pass


@dataclass
class Batch:
    graph: Union[Graph, list]
    features: np.ndarray  # rows of the model input
    labels: np.ndarray  # rows of the model output
    mask: np.ndarray  # output-row indices that enter the loss or metric
    nodes: np.ndarray  # global ids of the output rows


def _idx(mask) -> np.ndarray:
    return np.flatnonzero(mask) if mask is not None else np.zeros(0, dtype=np.int64)


class DataWrapper:
    name = "base"

    def setup(self, g: Graph, model: Model, rng: np.random.Generator):
        if g.features is None:
            raise WrapperError(f"dataset {g.name!r} has no node features")
        self.g = g
        self.model = model
        self.full = model.preprocess(g)
        self.all_nodes = np.arange(g.num_nodes)

    def train_batches(self, rng: np.random.Generator) -> Iterator[Batch]:
        raise NotImplementedError

    def eval_batch(self, split: str) -> Batch:
        """The whole graph, scored on the ``split`` mask."""
        mask = {"train": self.g.train_mask, "val": self.g.val_mask, "test": self.g.test_mask}[split]
        return Batch(self.full, self.g.features, self.g.labels, _idx(mask), self.all_nodes)


class FullGraph(DataWrapper):
    name = "full_graph"

    def train_batches(self, rng):
        yield self.eval_batch("train")


def build_blocks(g: Graph, targets: np.ndarray, fanouts, rng: np.random.Generator):
    """Sampled blocks for ``targets``, output layer first, plus the input node ids.

    Sampled edge weights are scaled by ``degree / sampled`` per row so a
    weighted sum stays an unbiased estimate of the full aggregation (and
    equals it when nothing is dropped).
    """
    lookup = np.full(g.num_nodes, -1, dtype=np.int64)
    blocks = []
    dst = np.asarray(targets, dtype=np.int64)
    for fanout in fanouts:
        el = sample_neighbors(g, dst, int(fanout), rng)
        lookup[dst] = np.arange(len(dst))
        rows = lookup[el.src]
        fresh = np.unique(el.dst[lookup[el.dst] < 0])
        src_nodes = np.concatenate([dst, fresh])
        lookup[fresh] = np.arange(len(dst), len(src_nodes))
        cols = lookup[el.dst]
        lookup[src_nodes] = -1
        order = np.lexsort((cols, rows))
        rows, cols, w = rows[order], cols[order], el.weight[order]
        counts = np.bincount(rows, minlength=len(dst))
        full = (g.row_ptr[dst + 1] - g.row_ptr[dst]).astype(np.float64)
        scale = np.divide(full, counts, out=np.ones_like(full), where=counts > 0)
        row_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        blocks.append(Block(row_ptr, cols.astype(np.int64), w * scale[rows], src_nodes, dst))
        dst = src_nodes
    return blocks, dst


class NeighborSampling(DataWrapper):
    name = "neighbor_sampling"

    def __init__(self, fanouts=(10, 10), batch_size: int = 512):
        if not fanouts or any(int(f) == 0 for f in fanouts):
            raise WrapperError("fanouts must be nonzero (negative keeps every neighbour)")
        if batch_size < 1:
            raise WrapperError("batch_size must be >= 1")
        self.fanouts = [int(f) for f in fanouts]
        self.batch_size = batch_size

    def setup(self, g, model, rng):
        super().setup(g, model, rng)
        if isinstance(model, DGI):
            raise WrapperError("DGI needs the full_graph data wrapper")
        if len(self.fanouts) != model.depth:
            raise WrapperError(f"{len(self.fanouts)} fanouts for a model of depth {model.depth}")

    def batches_for(self, targets, rng) -> Iterator[Batch]:
        for start in range(0, len(targets), self.batch_size):
            tgt = targets[start:start + self.batch_size]
            blocks, inputs = build_blocks(self.full, tgt, self.fanouts, rng)
            yield Batch(blocks, self.g.features[inputs], self.g.labels[tgt], np.arange(len(tgt)), tgt)

    def train_batches(self, rng):
        yield from self.batches_for(rng.permutation(_idx(self.g.train_mask)), rng)


class Clustering(DataWrapper):
    name = "clustering"

    def __init__(self, k: int = 16, clusters_per_batch: int = 4):
        if not k >= clusters_per_batch >= 1:
            raise WrapperError("need k >= clusters_per_batch >= 1")
        self.k = k
        self.clusters_per_batch = clusters_per_batch

    def setup(self, g, model, rng):
        super().setup(g, model, rng)
        if isinstance(model, DGI):
            raise WrapperError("DGI needs the full_graph data wrapper")
        if self.k > g.num_nodes:
            raise WrapperError(f"k={self.k} exceeds the node count {g.num_nodes}")
        self.parts = partition(g, self.k, rng)
        self.members = [np.flatnonzero(self.parts == c) for c in range(self.k)]

    def train_batches(self, rng):
        order = rng.permutation(self.k)
        for start in range(0, self.k, self.clusters_per_batch):
            nodes = np.sort(np.concatenate([self.members[c] for c in order[start:start + self.clusters_per_batch]]))
            sub, _ = induced_subgraph(self.g, nodes)
            yield Batch(self.model.preprocess(sub), sub.features, sub.labels, _idx(sub.train_mask), nodes)


DATA_WRAPPERS = {"full_graph": FullGraph, "neighbor_sampling": NeighborSampling, "clustering": Clustering}


def make_data_wrapper(name: str, **kw) -> DataWrapper:
    try:
        return DATA_WRAPPERS[name](**kw)
    except KeyError:
        raise WrapperError(f"unknown data wrapper {name!r}; choose from {sorted(DATA_WRAPPERS)}") from None


# model wrappers ---------------------------------------------------------------------

class ModelWrapper:
    name = "base"
    metric = "accuracy"

    def __init__(self, model: Model, optimizer: ad.Adam):
        self.model = model
        self.opt = optimizer

    def train_step(self, batch: Batch, rng) -> float:
        raise NotImplementedError

    def validation_score(self, data: DataWrapper, epoch_loss: float) -> float:
        raise NotImplementedError

    def evaluate(self, data: DataWrapper, split: str) -> float:
        raise NotImplementedError


class SupervisedMW(ModelWrapper):
    """Cross-entropy on the batch's masked nodes; accuracy for evaluation."""

    name = "supervised"

    def loss(self, batch: Batch, training: bool, rng=None):
        if len(batch.mask) == 0:
            raise WrapperError("batch has no labelled nodes in its mask")
        logits = self.model(batch.graph, batch.features, training=training, rng=rng)
        return logits, ad.softmax_cross_entropy(logits, batch.labels, batch.mask)

    def train_step(self, batch, rng):
        self.opt.zero_grad()
        with ad.Tape() as tape:
            _, loss = self.loss(batch, True, rng)
            tape.backward(loss)
        self.opt.step()
        return float(loss.value)

    def predict(self, batch: Batch) -> np.ndarray:
        return self.model(batch.graph, batch.features, training=False).value

    def evaluate(self, data, split):
        batch = data.eval_batch(split)
        return accuracy(self.predict(batch), batch.labels, batch.mask)

    def validation_score(self, data, epoch_loss):
        return self.evaluate(data, "val")


class DGIMW(ModelWrapper):
    """Local-global discrimination loss; evaluated by a logistic probe on frozen embeddings.

    Unsupervised training has no validation labels to watch, so the
    early-stopping score is the negated training loss.
    """

    name = "dgi"

    def __init__(self, model, optimizer, probe_l2: float = 1.0):
        if not isinstance(model, DGI):
            raise WrapperError("dgi model wrapper needs the dgi model")
        super().__init__(model, optimizer)
        self.probe_l2 = probe_l2

    def loss(self, batch: Batch, rng, perm=None):
        if not isinstance(batch.graph, Graph):
            raise WrapperError("DGI trains on full-graph batches")
        pos, neg = self.model.scores(batch.graph, batch.features, rng, perm)
        return ad.scale(ad.add(ad.bce_with_logits(pos, 1.0), ad.bce_with_logits(neg, 0.0)), 0.5)

    def train_step(self, batch, rng):
        self.opt.zero_grad()
        with ad.Tape() as tape:
            loss = self.loss(batch, rng)
            tape.backward(loss)
        self.opt.step()
        return float(loss.value)

    def embeddings(self, data: DataWrapper) -> np.ndarray:
        return self.model(data.full, data.g.features).value

    def evaluate(self, data, split):
        g = data.g
        mask = {"val": g.val_mask, "test": g.test_mask, "train": g.train_mask}[split]
        res = logreg_probe(self.embeddings(data), g.labels, masks=(g.train_mask, mask), l2=self.probe_l2)
        return res.mean()["accuracy"]

    def validation_score(self, data, epoch_loss):
        return -epoch_loss


MODEL_WRAPPERS = {"supervised": SupervisedMW, "supervised_mw": SupervisedMW, "dgi": DGIMW, "dgi_mw": DGIMW}


def make_model_wrapper(name: str, model: Model, optimizer: ad.Adam) -> ModelWrapper:
    try:
        cls = MODEL_WRAPPERS[name]
    except KeyError:
        raise WrapperError(f"unknown model wrapper {name!r}; choose from {sorted(MODEL_WRAPPERS)}") from None
    return cls(model, optimizer)


__all__ = [
    "Batch", "DataWrapper", "FullGraph", "NeighborSampling", "Clustering", "build_blocks",
    "DATA_WRAPPERS", "make_data_wrapper", "ModelWrapper", "SupervisedMW", "DGIMW",
    "MODEL_WRAPPERS", "make_model_wrapper", "WrapperError",
]
