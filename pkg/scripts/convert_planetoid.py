"""Convert the Planetoid pickles (cora, citeseer, pubmed) into a csrgl bundle.

    python scripts/convert_planetoid.py RAW_DIR NAME OUT_DIR [--raw-features]

RAW_DIR holds the ``ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}``
files. The public split is kept: the first ``|y|`` nodes train, the next
500 validate, and ``test.index`` tests. Citeseer's test set has gaps
(isolated test ids with no features); those rows are padded with zeros and
left unlabelled, as in the reference GCN preprocessing. Features are
row-normalised unless ``--raw-features`` is given.
"""
import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from csrgl.datasets import save_bundle
from csrgl.graph import EdgeList, build_graph


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert(raw: Path, name: str, out: Path, raw_features: bool = False) -> dict:
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_idx = np.loadtxt(raw / f"ind.{name}.test.index", dtype=np.int64).reshape(-1)
    test_sorted = np.sort(test_idx)

    feats_tx, labels_ty = sp.csr_matrix(tx), np.asarray(ty)
    span = test_sorted.max() - test_sorted.min() + 1
    if span != len(test_sorted):
        # citeseer: pad the missing test ids
        full_tx = sp.lil_matrix((span, feats_tx.shape[1]))
        full_tx[test_sorted - test_sorted.min(), :] = feats_tx
        full_ty = np.zeros((span, labels_ty.shape[1]))
        full_ty[test_sorted - test_sorted.min(), :] = labels_ty
        feats_tx, labels_ty = full_tx.tocsr(), full_ty

    features = sp.vstack([sp.csr_matrix(allx), feats_tx]).tolil()
    onehot = np.vstack([np.asarray(ally), labels_ty])
    # tx/ty rows follow test.index order but were stacked into the sorted-id slots; move them to their ids
    features[test_idx, :] = features[test_sorted, :]
    onehot[test_idx, :] = onehot[test_sorted, :]
    features = features.toarray()
    if not raw_features:
        sums = features.sum(axis=1, keepdims=True)
        features = features / np.where(sums > 0, sums, 1.0)

    n = features.shape[0]
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), -1).astype(np.int64)
    src = np.concatenate([np.full(len(v), u, dtype=np.int64) for u, v in graph.items()])
    dst = np.concatenate([np.asarray(v, dtype=np.int64) for v in graph.values()])
    keep = (src < n) & (dst < n) & (src != dst)

    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    train[:len(np.asarray(y))] = True
    val[len(np.asarray(y)):len(np.asarray(y)) + 500] = True
    test[test_idx] = True
    test &= labels >= 0
    val &= ~test & (labels >= 0)

    g = build_graph(n, EdgeList(src[keep], dst[keep]), undirected=True, features=features, labels=labels,
                    train_mask=train, val_mask=val, test_mask=test, name=name)
    save_bundle(g, out, name=name)
    meta_path = out / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["source"] = "planetoid"
    meta["features"] = "raw" if raw_features else "row-normalised"
    meta_path.write_text(json.dumps(meta, indent=1))
    return {"nodes": n, "edges": int(g.num_edges // 2), "features": features.shape[1],
            "classes": int(labels.max()) + 1, "split": (int(train.sum()), int(val.sum()), int(test.sum()))}


def main(argv=None):
    ap = argparse.ArgumentParser(description="Planetoid pickles -> csrgl bundle")
    ap.add_argument("raw_dir", type=Path)
    ap.add_argument("name", choices=["cora", "citeseer", "pubmed"])
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--raw-features", action="store_true", help="keep unnormalised features")
    args = ap.parse_args(argv)
    stats = convert(args.raw_dir, args.name, args.out_dir, args.raw_features)
    print(json.dumps(stats))
    return 0


if __name__ == "__main__":
    sys.exit(main())
