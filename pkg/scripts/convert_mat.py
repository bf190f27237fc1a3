"""Convert a ``.mat`` network file (BlogCatalog, PPI, Wikipedia) into a csrgl bundle.

    python scripts/convert_mat.py FILE.mat NAME OUT_DIR [--binarize]

The file must hold a sparse adjacency under ``network`` and a sparse
node-by-label indicator under ``group`` (the layout used by the usual
network-embedding releases). Labels are written multi-label. Edge weights
are kept unless ``--binarize`` is passed; ``meta.json`` records which.
The split is a 50/50 fraction spec, resampled per seed at load time.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from csrgl.datasets import save_bundle
from csrgl.graph import EdgeList, build_graph


def convert(path: Path, name: str, out: Path, binarize: bool = False) -> dict:
    mat = scipy.io.loadmat(path)
    if "network" not in mat or "group" not in mat:
        raise ValueError(f"{path}: expected 'network' and 'group' entries, found {sorted(k for k in mat if not k.startswith('__'))}")
    adj = sp.coo_matrix(mat["network"])
    labels = sp.csr_matrix(mat["group"]).toarray()
    labels = (labels > 0).astype(np.float64)
    n = adj.shape[0]
    keep = adj.row != adj.col
    w = np.ones(keep.sum()) if binarize else adj.data[keep].astype(np.float64)
    # the adjacency is stored symmetric already; build directed to keep the given weights
    g = build_graph(n, EdgeList(adj.row[keep].astype(np.int64), adj.col[keep].astype(np.int64),
                                None if binarize else w), undirected=False, labels=labels, name=name)
    save_bundle(g, out, name=name)
    (out / "split.json").write_text(json.dumps({"fractions": [0.5, 0.0, 0.5]}))
    meta_path = out / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta.update(source=path.name, edges="binarized" if binarize else "weighted")
    meta_path.write_text(json.dumps(meta, indent=1))
    return {"nodes": n, "edges": int(g.num_edges // 2), "classes": labels.shape[1],
            "labelled": int((labels.sum(1) > 0).sum())}


def main(argv=None):
    ap = argparse.ArgumentParser(description=".mat network -> csrgl bundle")
    ap.add_argument("mat_file", type=Path)
    ap.add_argument("name")
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--binarize", action="store_true", help="drop edge weights")
    args = ap.parse_args(argv)
    print(json.dumps(convert(args.mat_file, args.name, args.out_dir, args.binarize)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
