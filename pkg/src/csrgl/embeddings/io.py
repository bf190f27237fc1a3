"""Plain-text embedding files.

The first line is ``n d method seed``; each following line is a node id and
its ``d`` coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class EmbeddingFile:
    embeddings: np.ndarray
    method: str
    seed: int


def save_embeddings(path, emb: np.ndarray, method: str, seed: int) -> None:
    emb = np.asarray(emb, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError("embeddings must be a 2-D array")
    if not np.all(np.isfinite(emb)):
        raise ValueError("refusing to write non-finite embeddings")
    if any(ch.isspace() for ch in method):
        raise ValueError("method name may not contain whitespace")
    n, d = emb.shape
    with open(path, "w") as fh:
        fh.write(f"{n} {d} {method} {seed}\n")
        for i in range(n):
            fh.write(f"{i} " + " ".join(repr(float(x)) for x in emb[i]) + "\n")


def load_embeddings(path) -> EmbeddingFile:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError(f"{path}: malformed header {' '.join(header)!r}")
        n, d, method, seed = int(header[0]), int(header[1]), header[2], int(header[3])
        emb = np.full((n, d), np.nan)
        seen = np.zeros(n, dtype=bool)
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(parts)}")
            node = int(parts[0])
            if not 0 <= node < n:
                raise ValueError(f"{path}:{lineno}: node id {node} out of range")
            emb[node] = [float(x) for x in parts[1:]]
            seen[node] = True
    if not seen.all():
        raise ValueError(f"{path}: missing rows for {int((~seen).sum())} nodes")
    return EmbeddingFile(emb, method, seed)
