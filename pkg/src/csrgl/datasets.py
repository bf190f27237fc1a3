"""Dataset registry, on-disk bundles, splits and synthetic graphs.

A bundle is a directory with

* ``edges.tsv``   ``src<TAB>dst[<TAB>weight]`` per line
* ``features.bin`` (optional) two little-endian uint64 ``n, f`` then ``n*f`` f32, row-major
* ``labels.tsv``  ``node<TAB>class`` per line; multi-label nodes repeat
* ``split.json``  ``{"train": [...], "val": [...], "test": [...]}`` or a split spec
* ``meta.json``   ``{"name", "num_nodes", "undirected", "multilabel", "num_classes", "weighted"}``

Bundles live under ``$CSRGL_DATA/<name>`` (default ``~/.csrgl/data``).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .graph import EdgeList, Graph, build_graph

DATA_ENV = "CSRGL_DATA"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetCard:
    name: str
    task: str  # semi-supervised | fully-supervised | unsupervised
    num_nodes: int
    num_edges: int
    num_features: Optional[int]
    num_classes: int
    split: tuple
    multilabel: bool = False
    metric: str = "accuracy"
    acceptance: bool = True
    notes: str = ""

    @property
    def split_sizes(self) -> Optional[tuple[int, int, int]]:
        return self.split if all(isinstance(x, int) for x in self.split) else None


REGISTRY: dict[str, DatasetCard] = {c.name: c for c in [
    DatasetCard("cora", "semi-supervised", 2708, 5429, 1433, 7, (140, 500, 1000)),
    DatasetCard("citeseer", "semi-supervised", 3327, 4732, 3703, 6, (120, 500, 1000)),
    DatasetCard("pubmed", "semi-supervised", 19717, 44338, 500, 3, (60, 500, 1000)),
    DatasetCard("ppi-large", "fully-supervised", 56944, 818736, 50, 121, (0.79, 0.11, 0.10),
                multilabel=True, metric="micro_f1", acceptance=False),
    DatasetCard("flickr", "fully-supervised", 89350, 899756, 500, 7, (0.50, 0.25, 0.25), acceptance=False),
    DatasetCard("reddit", "fully-supervised", 232965, 11606919, 602, 41, (0.66, 0.10, 0.24), acceptance=False),
    DatasetCard("yelp", "fully-supervised", 716847, 6977410, 300, 100, (0.75, 0.10, 0.15),
                multilabel=True, metric="micro_f1", acceptance=False),
    DatasetCard("ogbn-arxiv", "fully-supervised", 169343, 1166243, 128, 40, (0.54, 0.18, 0.28),
                acceptance=False),
    DatasetCard("ppi", "unsupervised", 3890, 76584, None, 50, (0.5, 0.0, 0.5),
                multilabel=True, metric="micro_f1"),
    DatasetCard("wikipedia", "unsupervised", 4777, 184812, None, 40, (0.5, 0.0, 0.5),
                multilabel=True, metric="micro_f1"),
    DatasetCard("blogcatalog", "unsupervised", 10312, 333983, None, 39, (0.5, 0.0, 0.5),
                multilabel=True, metric="micro_f1"),
    DatasetCard("dblp", "unsupervised", 51264, 127968, None, 60, (0.05, 0.0, 0.95),
                multilabel=True, metric="micro_f1", acceptance=False),
    DatasetCard("flickr-unsup", "unsupervised", 80513, 5899882, None, 195, (0.05, 0.0, 0.95),
                multilabel=True, metric="micro_f1", acceptance=False),
]}


def data_root() -> Path:
    return Path(os.environ.get(DATA_ENV, Path.home() / ".csrgl" / "data"))


def get_card(name: str) -> DatasetCard:
    try:
        return REGISTRY[name.lower()]
    except KeyError:
        raise DatasetError(f"unknown dataset {name!r}; registered: {sorted(REGISTRY)}") from None


# bundle reading -----------------------------------------------------------------

def _read_tsv(path: Path, ncols: tuple[int, ...], kind=(int, int, float)):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split("\t") if "\t" in s else s.split()
            if len(parts) not in ncols:
                raise DatasetError(f"{path}:{lineno}: expected {' or '.join(map(str, ncols))} fields, got {len(parts)}")
            try:
                rows.append(tuple(k(p) for k, p in zip(kind, parts)))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return rows


def read_features(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise DatasetError(f"{path}: truncated header")
    n, f = np.frombuffer(raw[:16], dtype="<u8")
    expected = 16 + 4 * int(n) * int(f)
    if len(raw) != expected:
        raise DatasetError(f"{path}: expected {expected} bytes for {n}x{f} f32, found {len(raw)}")
    return np.frombuffer(raw[16:], dtype="<f4").reshape(int(n), int(f)).astype(np.float64)


def write_features(path: Path, x: np.ndarray) -> None:
    x = np.asarray(x)
    with open(path, "wb") as fh:
        fh.write(np.array(x.shape, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def _masks_from_split(split: dict, n: int, labels, multilabel: bool, seed: int):
    if {"train", "test"} <= set(split):
        masks = []
        for key in ("train", "val", "test"):
            m = np.zeros(n, dtype=bool)
            idx = np.asarray(split.get(key, []), dtype=np.int64)
            if len(idx) and (idx.min() < 0 or idx.max() >= n):
                raise DatasetError(f"split.json: {key} node id out of range")
            m[idx] = True
            masks.append(m)
        if (masks[0] & masks[1]).any() or (masks[0] & masks[2]).any() or (masks[1] & masks[2]).any():
            raise DatasetError("split.json: train/val/test overlap")
        return tuple(masks)
    return make_split(labels, split, np.random.default_rng(seed), multilabel=multilabel)


def load_bundle(path: Union[str, Path], seed: int = 0) -> Graph:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise DatasetError(f"bundle not found: {meta_path} does not exist")
    meta = json.loads(meta_path.read_text())
    n = int(meta["num_nodes"])
    multilabel = bool(meta.get("multilabel", False))

    rows = _read_tsv(path / "edges.tsv", (2, 3))
    src = np.array([r[0] for r in rows], dtype=np.int64)
    dst = np.array([r[1] for r in rows], dtype=np.int64)
    weighted = any(len(r) == 3 for r in rows) or bool(meta.get("weighted", False))
    if rows and weighted and not all(len(r) == 3 for r in rows):
        raise DatasetError(f"{path / 'edges.tsv'}: weights must be given on every line or none")
    w = np.array([r[2] for r in rows]) if weighted else None
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
        raise DatasetError(f"{path / 'edges.tsv'}: node id outside [0, {n})")

    feats = read_features(path / "features.bin") if (path / "features.bin").exists() else None
    if feats is not None and feats.shape[0] != n:
        raise DatasetError(f"features.bin has {feats.shape[0]} rows, meta says {n} nodes")

    labels = None
    if (path / "labels.tsv").exists():
        lab = _read_tsv(path / "labels.tsv", (2,), (int, int))
        nodes = np.array([r[0] for r in lab], dtype=np.int64)
        cls = np.array([r[1] for r in lab], dtype=np.int64)
        if len(nodes) and (nodes.min() < 0 or nodes.max() >= n):
            raise DatasetError("labels.tsv: node id out of range")
        num_classes = int(meta.get("num_classes", cls.max() + 1 if len(cls) else 0))
        if len(cls) and (cls.min() < 0 or cls.max() >= num_classes):
            raise DatasetError("labels.tsv: class id out of range")
        repeated = len(np.unique(nodes)) != len(nodes)
        if repeated and not multilabel:
            raise DatasetError("labels.tsv repeats nodes but meta.json says multilabel=false")
        if multilabel:
            labels = np.zeros((n, num_classes))
            labels[nodes, cls] = 1.0
        else:
            labels = np.full(n, -1, dtype=np.int64)
            labels[nodes] = cls

    split = json.loads((path / "split.json").read_text()) if (path / "split.json").exists() else None
    masks = (None, None, None)
    if split is not None:
        masks = _masks_from_split(split, n, labels, multilabel, seed)

    g = build_graph(n, EdgeList(src, dst, w), undirected=bool(meta.get("undirected", True)),
                    weighted=True if weighted else None)
    return g.with_data(features=feats, labels=labels, train_mask=masks[0], val_mask=masks[1],
                       test_mask=masks[2], name=meta.get("name", path.name))


def save_bundle(g: Graph, path: Union[str, Path], name: Optional[str] = None) -> None:
    """Write ``g`` so that :func:`load_bundle` rebuilds the same CSR (edges stored directed)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    el = g.edge_list()
    with open(path / "edges.tsv", "w") as fh:
        for i in range(len(el.src)):
            if g.edge_weight is None:
                fh.write(f"{el.src[i]}\t{el.dst[i]}\n")
            else:
                fh.write(f"{el.src[i]}\t{el.dst[i]}\t{float(el.weight[i])!r}\n")
    if g.features is not None:
        write_features(path / "features.bin", g.features)
    meta = {"name": name or g.name or path.name, "num_nodes": g.num_nodes, "undirected": False,
            "multilabel": g.multilabel, "weighted": g.edge_weight is not None}
    if g.labels is not None:
        meta["num_classes"] = g.num_classes
        with open(path / "labels.tsv", "w") as fh:
            if g.multilabel:
                for u, c in zip(*np.nonzero(g.labels)):
                    fh.write(f"{u}\t{c}\n")
            else:
                for u in np.flatnonzero(g.labels >= 0):
                    fh.write(f"{u}\t{g.labels[u]}\n")
    if g.train_mask is not None:
        split = {k: np.flatnonzero(m).tolist() for k, m in
                 (("train", g.train_mask), ("val", g.val_mask), ("test", g.test_mask)) if m is not None}
        (path / "split.json").write_text(json.dumps(split))
    (path / "meta.json").write_text(json.dumps(meta, indent=1))


# registry loading ---------------------------------------------------------------

@dataclass
class StatsReport:
    card: DatasetCard
    actual: dict
    mismatches: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def format(self) -> str:
        c = self.card
        expected = {"nodes": c.num_nodes, "edges": c.num_edges, "features": c.num_features,
                    "classes": c.num_classes, "split": c.split}
        lines = [f"{'field':<10} {'card':>20} {'actual':>20}"]
        for key, want in expected.items():
            lines.append(f"{key:<10} {str(want):>20} {str(self.actual.get(key)):>20}")
        lines += [f"MISMATCH: {m}" for m in self.mismatches] + [f"note: {m}" for m in self.notes]
        return "\n".join(lines)


def graph_stats(g: Graph) -> dict:
    undirected_pairs = int(np.sum(g.row_index < g.col_idx) + np.sum(g.row_index == g.col_idx))
    split = None
    if g.train_mask is not None:
        split = tuple(int(m.sum()) if m is not None else 0 for m in (g.train_mask, g.val_mask, g.test_mask))
    return {"nodes": g.num_nodes, "edges": undirected_pairs, "directed_edges": g.num_edges,
            "features": g.num_features or None, "classes": g.num_classes if g.labels is not None else None,
            "split": split}


def check_card(g: Graph, card: DatasetCard) -> StatsReport:
    """Compare a loaded graph with its card.

    Node, feature, class and split counts must match exactly. Edge counts
    are only reported: upstream tables count raw (possibly duplicated or
    directed) edge lists, which canonicalisation changes.
    """
    actual = graph_stats(g)
    rep = StatsReport(card, actual)
    if actual["nodes"] != card.num_nodes:
        rep.mismatches.append(f"nodes: card {card.num_nodes}, bundle {actual['nodes']}")
    if card.num_features is not None and actual["features"] != card.num_features:
        rep.mismatches.append(f"features: card {card.num_features}, bundle {actual['features']}")
    if actual["classes"] != card.num_classes:
        rep.mismatches.append(f"classes: card {card.num_classes}, bundle {actual['classes']}")
    if card.split_sizes is not None and actual["split"] != card.split_sizes:
        rep.mismatches.append(f"split: card {card.split_sizes}, bundle {actual['split']}")
    if actual["edges"] != card.num_edges:
        rep.notes.append(f"edges: card {card.num_edges}, bundle {actual['edges']} undirected pairs "
                         f"({actual['directed_edges']} directed)")
    return rep


def load(name_or_path: Union[str, Path], root: Optional[Path] = None, seed: int = 0,
         validate: bool = True) -> tuple[Graph, Optional[DatasetCard]]:
    """Load a registered dataset by name, or any bundle directory by path."""
    p = Path(name_or_path)
    card = REGISTRY.get(str(name_or_path).lower())
    if card is None and p.is_dir():
        return load_bundle(p, seed), None
    if card is None:
        raise DatasetError(f"unknown dataset {name_or_path!r}; registered: {sorted(REGISTRY)}")
    path = (root or data_root()) / card.name
    if not (path / "meta.json").exists():
        raise DatasetError(
            f"bundle not found for {card.name!r} at {path}; convert the raw data with "
            f"scripts/convert_planetoid.py or scripts/convert_mat.py and set ${DATA_ENV}")
    g = load_bundle(path, seed)
    if validate:
        rep = check_card(g, card)
        if not rep.ok:
            raise DatasetError(f"{card.name}: bundle disagrees with the registry card\n{rep.format()}")
    return g, card


# splits -------------------------------------------------------------------------

def make_split(labels, spec: dict, rng: np.random.Generator, multilabel: Optional[bool] = None):
    """Build ``(train, val, test)`` boolean masks.

    ``spec`` is one of ``{"train": [...], "val": [...], "test": [...]}``,
    ``{"per_class": k, "val": nv, "test": nt}`` or ``{"fractions": [a, b, c]}``.
    Only labelled nodes (label >= 0, or any positive for multi-label) take part.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    multilabel = labels.ndim == 2 if multilabel is None else multilabel
    labelled = labels.sum(axis=1) > 0 if multilabel else labels >= 0
    if "train" in spec and not isinstance(spec["train"], (int, float)):
        return _masks_from_split(spec, n, labels, multilabel, 0)
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    if "per_class" in spec:
        if multilabel:
            raise DatasetError("per-class splits need single-label data")
        k = int(spec["per_class"])
        for c in np.unique(labels[labelled]):
            members = np.flatnonzero(labels == c)
            if len(members) < k:
                raise DatasetError(f"class {c} has {len(members)} nodes, fewer than per_class={k}")
            train[rng.choice(members, size=k, replace=False)] = True
        rest = rng.permutation(np.flatnonzero(labelled & ~train))
        nv, nt = int(spec.get("val", 500)), int(spec.get("test", 1000))
        if nv + nt > len(rest):
            raise DatasetError(f"not enough nodes for val={nv} and test={nt}")
        val[rest[:nv]] = True
        test[rest[nv:nv + nt]] = True
    elif "fractions" in spec:
        fr = [float(x) for x in spec["fractions"]]
        if len(fr) != 3 or min(fr) < 0 or sum(fr) > 1 + 1e-9:
            raise DatasetError(f"fractions must be three nonnegative numbers summing to <= 1, got {fr}")
        idx = rng.permutation(np.flatnonzero(labelled))
        a = int(round(fr[0] * len(idx)))
        b = a + int(round(fr[1] * len(idx)))
        c = min(len(idx), b + int(round(fr[2] * len(idx))))
        train[idx[:a]] = True
        val[idx[a:b]] = True
        test[idx[b:c]] = True
    else:
        raise DatasetError(f"unrecognised split spec {spec!r}")
    return train, val, test


# synthetic graphs ---------------------------------------------------------------

def ring(n: int) -> Graph:
    if n < 2:
        raise DatasetError("ring needs n >= 2")
    u = np.arange(n)
    return build_graph(n, EdgeList(u, (u + 1) % n), undirected=True, name="ring")


def star(n: int) -> Graph:
    if n < 2:
        raise DatasetError("star needs n >= 2")
    leaves = np.arange(1, n)
    return build_graph(n, EdgeList(np.zeros(n - 1, dtype=np.int64), leaves), undirected=True, name="star")


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    if n < 2:
        raise DatasetError("er needs n >= 2")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return build_graph(n, EdgeList(iu[keep], ju[keep]), undirected=True, name="er")


def two_clusters(n: int, rng: np.random.Generator, num_features: int = 8, mu: float = 1.0,
                 p_in: float = 0.3, p_out: float = 0.02, train_per_class: int = 2) -> Graph:
    """Two planted communities; features are Gaussian around ``+mu`` or ``-mu``."""
    if n < 2:
        raise DatasetError("two_clusters needs n >= 2")
    labels = (np.arange(n) >= n // 2).astype(np.int64)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    # a chain inside each cluster keeps it connected
    chain = np.flatnonzero(labels[:-1] == labels[1:])
    src = np.concatenate([iu[keep], chain])
    dst = np.concatenate([ju[keep], chain + 1])
    sign = np.where(labels == 1, 1.0, -1.0)[:, None]
    feats = sign * mu + rng.standard_normal((n, num_features))
    k = min(train_per_class, n // 2)
    rest = n - 2 * k
    train, val, test = make_split(labels, {"per_class": k, "val": rest // 2, "test": rest - rest // 2}, rng)
    return build_graph(n, EdgeList(src, dst), undirected=True, features=feats, labels=labels,
                       train_mask=train, val_mask=val, test_mask=test, name="two_clusters")


def synthetic(kind: str, n: int, rng: Optional[np.random.Generator] = None, **kw) -> Graph:
    rng = rng if rng is not None else np.random.default_rng(0)
    if kind == "ring":
        return ring(n)
    if kind == "star":
        return star(n)
    if kind == "er":
        return erdos_renyi(n, kw.get("p", 0.1), rng)
    if kind == "two_clusters":
        return two_clusters(n, rng, **kw)
    raise DatasetError(f"unknown synthetic kind {kind!r}")


__all__ = [
    "DatasetCard", "DatasetError", "REGISTRY", "DATA_ENV", "data_root", "get_card", "load",
    "load_bundle", "save_bundle", "check_card", "graph_stats", "StatsReport", "make_split",
    "synthetic", "ring", "star", "erdos_renyi", "two_clusters", "read_features", "write_features",
]
