"""Command-line entry point: ``csrgl <command> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class CLIConfigError(ValueError):
    pass


def _kv(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k.replace("-", "_"), json.loads(v)
    except json.JSONDecodeError:
        return k.replace("-", "_"), v


def _load_dataset(name: str):
    from . import datasets

    return datasets.load(name)


# commands ------------------------------------------------------------------------

def cmd_experiment(args) -> int:
    from .models import MODELS
    from .training import MODEL_WRAPPERS, TrainSpec, run, write_csv
    from .training.trainer import result_rows

    if args.model not in MODELS:
        raise CLIConfigError(f"--model: unknown model {args.model!r}; registered models: {sorted(MODELS)}")
    if args.model_wrapper is not None and args.model_wrapper not in MODEL_WRAPPERS:
        raise CLIConfigError(f"--model-wrapper: unknown wrapper {args.model_wrapper!r}; "
                             f"choose from {sorted(MODEL_WRAPPERS)}")
    wrapper_args = {}
    if args.data_wrapper == "neighbor_sampling":
        wrapper_args = {"fanouts": args.fanouts, "batch_size": args.batch_size}
    elif args.data_wrapper == "clustering":
        wrapper_args = {"k": args.clusters, "clusters_per_batch": args.clusters_per_batch}
    spec = TrainSpec(
        dataset=args.dataset, model=args.model, model_wrapper=args.model_wrapper,
        data_wrapper=args.data_wrapper, data_wrapper_args=wrapper_args,
        seeds=tuple(args.seed or [0]), use_best_config=args.use_best_config, epochs=args.epochs,
        patience=args.patience, lr=args.lr, weight_decay=args.weight_decay, hidden=args.hidden_size,
        dropout=args.dropout, checkpoint_dir=args.checkpoint_dir, log_path=args.log,
        fp16=args.fp16, actnn=args.actnn,
    )
    result = run(spec)
    print(f"{'seed':>6}  {'test ' + result.metric:>14}  {'best epoch':>10}")
    for row in result_rows(result):
        print(f"{row['seed']:>6}  {float(row['value']) * 100:14.2f}  {str(row['best_epoch']):>10}")
    print(result.summary())
    if args.out:
        write_csv(args.out, [result])
    return EXIT_OK


def cmd_embed(args) -> int:
    import numpy as np

    from .configs import best_config
    from .embeddings import METHODS, embed, save_embeddings

    if args.method not in METHODS:
        raise CLIConfigError(f"--method: unknown method {args.method!r}; registered: {sorted(METHODS)}")
    g, card = _load_dataset(args.dataset)
    params = best_config(card.name if card else args.dataset, args.method) if args.use_best_config else {}
    params.update(dict(args.param or []))
    d = args.dim if args.dim is not None else int(params.pop("d", 128))
    params.pop("d", None)
    if not 1 <= d < g.num_nodes:
        raise CLIConfigError(f"--dim: dimension {d} must be below the node count {g.num_nodes}")
    emb = embed(args.method, g, d=d, seed=args.seed, **params)
    save_embeddings(args.out, emb, args.method, args.seed)
    print(f"wrote {emb.shape[0]}x{emb.shape[1]} {args.method} embeddings to {args.out} "
          f"(finite={bool(np.all(np.isfinite(emb)))})")
    return EXIT_OK


def cmd_eval_embedding(args) -> int:
    from .embeddings import load_embeddings
    from .evaluation import logreg_probe

    ef = load_embeddings(args.emb)
    g, _ = _load_dataset(args.dataset)
    if g.labels is None:
        raise CLIConfigError(f"--dataset: {args.dataset} has no labels")
    if ef.embeddings.shape[0] != g.num_nodes:
        raise CLIConfigError(f"--emb: {ef.embeddings.shape[0]} rows but the dataset has {g.num_nodes} nodes")
    res = logreg_probe(ef.embeddings, g.labels, train_fraction=args.train_fraction, l2=args.l2,
                       seed=args.seed, shuffles=args.shuffles)
    print(f"read {ef.embeddings.shape[0]} rows ({ef.method}, seed {ef.seed})")
    print(res.summary())
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import _accel
    from .bench import bench_op

    with _accel.backend(args.backend or _accel.get_backend()):
        rep = bench_op(args.op, n=args.n, density=args.density, dim=args.dim, heads=args.heads,
                       repeats=args.repeats, warmup=args.warmup, seed=args.seed)
    print(rep.format())
    return EXIT_OK


def cmd_stats(args) -> int:
    from . import datasets

    card = datasets.get_card(args.dataset)
    g, _ = datasets.load(args.dataset, validate=False)
    rep = datasets.check_card(g, card)
    print(f"dataset {card.name} ({card.task})")
    print(rep.format())
    return EXIT_OK if rep.ok else EXIT_RUNTIME


def cmd_hpo(args) -> int:
    from .configs import store_best_config
    from .hpo import SearchSpace, search
    from .training import TrainSpec

    space = SearchSpace.from_file(args.space)
    base = TrainSpec(dataset=args.dataset, model=args.model, epochs=args.epochs, patience=args.patience,
                     seeds=tuple(range(args.seeds_per_trial)), use_best_config=args.use_best_config)
    res = search(space, base, budget=args.budget, strategy=args.strategy, seed=args.seed,
                 trial_log=args.trial_log, workers=args.workers)
    for t in res.trials:
        print(f"trial {t.index}: {json.dumps(t.point, sort_keys=True)} val={t.objective:.4f} test={t.test_mean:.4f}")
    print(f"best trial {res.best.index}: {json.dumps(res.best.point, sort_keys=True)} val={res.best.objective:.4f}")
    if args.store:
        cfg = dict(res.best.result.config)
        keep = {k: cfg[k] for k in ("hidden", "dropout", "lr", "weight_decay", "epochs", "patience",
                                    "heads", "out_heads", "attn_dropout", "alpha", "K")}
        path = store_best_config(args.dataset, args.model, keep, Path(args.store))
        print(f"stored best config in {path}")
    return EXIT_OK


# parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csrgl", description="CSR graph learning toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("experiment", help="train and test a GNN")
    e.add_argument("--dataset", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--model-wrapper")
    e.add_argument("--data-wrapper", default="full_graph",
                   choices=["full_graph", "neighbor_sampling", "clustering"])
    e.add_argument("--hidden-size", type=int)
    e.add_argument("--epochs", type=int)
    e.add_argument("--patience", type=int)
    e.add_argument("--lr", type=float)
    e.add_argument("--weight-decay", type=float)
    e.add_argument("--dropout", type=float)
    e.add_argument("--seed", type=int, action="append")
    e.add_argument("--use-best-config", action="store_true")
    e.add_argument("--fanouts", type=int, nargs="+", default=[10, 10])
    e.add_argument("--batch-size", type=int, default=512)
    e.add_argument("--clusters", type=int, default=16)
    e.add_argument("--clusters-per-batch", type=int, default=4)
    e.add_argument("--checkpoint-dir")
    e.add_argument("--log", help="append one JSON manifest line per seed")
    e.add_argument("--out", help="results CSV")
    e.add_argument("--fp16", action="store_true")
    e.add_argument("--actnn", action="store_true")
    e.set_defaults(fn=cmd_experiment)

    m = sub.add_parser("embed", help="compute unsupervised node embeddings")
    m.add_argument("--dataset", required=True)
    m.add_argument("--method", required=True)
    m.add_argument("--dim", type=int)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--use-best-config", action="store_true")
    m.add_argument("--param", type=_kv, action="append", help="method parameter key=value")
    m.add_argument("--out", required=True)
    m.set_defaults(fn=cmd_embed)

    v = sub.add_parser("eval-embedding", help="logistic-probe evaluation of an embedding file")
    v.add_argument("--emb", required=True)
    v.add_argument("--dataset", required=True)
    v.add_argument("--train-fraction", type=float, default=0.5)
    v.add_argument("--shuffles", type=int, default=10)
    v.add_argument("--l2", type=float, default=1.0)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(fn=cmd_eval_embedding)

    b = sub.add_parser("bench", help="time a sparse operator against a dense baseline")
    b.add_argument("--op", default="gspmm", choices=["gspmm", "multi_head_spmm", "edge_softmax", "sddmm"])
    b.add_argument("--n", type=int, default=10000)
    b.add_argument("--density", type=float, default=0.005)
    b.add_argument("--dim", type=int, default=64)
    b.add_argument("--heads", type=int, default=4)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--backend", choices=["numba", "numpy"])
    b.set_defaults(fn=cmd_bench)

    s = sub.add_parser("stats", help="compare a dataset bundle with its registry card")
    s.add_argument("--dataset", required=True)
    s.set_defaults(fn=cmd_stats)

    h = sub.add_parser("hpo", help="hyperparameter search")
    h.add_argument("--space", required=True, help="JSON search-space file")
    h.add_argument("--dataset", required=True)
    h.add_argument("--model", required=True)
    h.add_argument("--budget", type=int)
    h.add_argument("--strategy", default="random", choices=["grid", "random"])
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--seeds-per-trial", type=int, default=1)
    h.add_argument("--epochs", type=int)
    h.add_argument("--patience", type=int)
    h.add_argument("--use-best-config", action="store_true")
    h.add_argument("--workers", type=int, default=1)
    h.add_argument("--trial-log")
    h.add_argument("--store", help="registry file to write the best config into")
    h.set_defaults(fn=cmd_hpo)
    return p


def main(argv=None) -> int:
    from .configs import ConfigError
    from .datasets import DatasetError
    from .embeddings import EmbeddingError
    from .kernels import KernelError
    from .linalg import LinalgError
    from .models import ModelError
    from .training import WrapperError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CLIConfigError, DatasetError, ModelError, WrapperError, EmbeddingError,
            KernelError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LinalgError, FloatingPointError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
