"""Unsupervised node embeddings."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..graph import Graph
from .factorization import (EmbeddingError, grarep, hope, netmf, prone, prone_stage1,
                            spectral_embedding)
from .io import EmbeddingFile, load_embeddings, save_embeddings
from .skipgram import line, skipgram_ns
from .walks import AliasTable, WalkCorpus, biased_walks, random_walks


def deepwalk(g: Graph, d: int = 128, walk_length: int = 40, walks_per_node: int = 10,
             window: int = 5, negatives: int = 5, epochs: int = 1, lr: float = 0.025,
             seed: int = 0) -> np.ndarray:
    corpus = random_walks(g, walk_length, walks_per_node, seed=seed)
    return skipgram_ns(corpus, g.num_nodes, d=d, window=window, negatives=negatives,
                       epochs=epochs, lr=lr, seed=seed)


def node2vec(g: Graph, d: int = 128, p: float = 1.0, q: float = 1.0, walk_length: int = 80,
             walks_per_node: int = 10, window: int = 5, negatives: int = 5, epochs: int = 1,
             lr: float = 0.025, seed: int = 0) -> np.ndarray:
    corpus = biased_walks(g, p, q, walk_length, walks_per_node, seed=seed)
    return skipgram_ns(corpus, g.num_nodes, d=d, window=window, negatives=negatives,
                       epochs=epochs, lr=lr, seed=seed)


def _line(g: Graph, d: int = 128, order: str = "both", seed: int = 0, **kw) -> np.ndarray:
    return line(g, d, order=order, seed=seed, **kw)


METHODS: dict[str, Callable[..., np.ndarray]] = {
    "deepwalk": deepwalk,
    "node2vec": node2vec,
    "line": _line,
    "netmf": netmf,
    "prone": prone,
    "hope": hope,
    "grarep": grarep,
    "spectral": spectral_embedding,
}


def embed(method: str, g: Graph, d: int = 128, seed: int = 0, **params) -> np.ndarray:
    """Run a registered embedding method by name."""
    try:
        fn = METHODS[method]
    except KeyError:
        raise EmbeddingError(f"unknown embedding method {method!r}; choose from {sorted(METHODS)}") from None
    emb = fn(g, d=d, seed=seed, **params)
    if not np.all(np.isfinite(emb)):
        raise FloatingPointError(f"{method} produced non-finite embeddings")
    return emb


__all__ = [
    "METHODS", "embed", "deepwalk", "node2vec", "line", "netmf", "prone", "prone_stage1", "hope",
    "grarep", "spectral_embedding", "skipgram_ns", "random_walks", "biased_walks", "WalkCorpus",
    "AliasTable", "EmbeddingError", "EmbeddingFile", "save_embeddings", "load_embeddings",
]
