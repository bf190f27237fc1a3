"""The unified training loop: seeds, wrappers, early stopping, results."""
from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .. import autodiff as ad
from .. import datasets
from ..configs import ConfigError, best_config, merge_overrides
from ..graph import Graph
from ..models import MODELS, ModelError, ModelSpec, build_model
from .wrappers import WrapperError, make_data_wrapper, make_model_wrapper

DEFAULTS = {
    "hidden": 64, "dropout": 0.5, "lr": 0.01, "weight_decay": 5e-4, "epochs": 200, "patience": 100,
    "num_layers": 2, "heads": 8, "out_heads": 1, "attn_dropout": 0.6, "alpha": 0.1, "K": 10,
}
MODEL_FIELDS = ("hidden", "dropout", "num_layers", "heads", "out_heads", "attn_dropout", "alpha", "K")


@dataclass
class TrainSpec:
    """What to train. Hyperparameters left as ``None`` come from the registry
    (with ``use_best_config``) or from :data:`DEFAULTS`."""

    dataset: Union[str, Graph]
    model: str
    model_wrapper: Optional[str] = None
    data_wrapper: str = "full_graph"
    data_wrapper_args: dict = field(default_factory=dict)
    seeds: tuple = (0,)
    use_best_config: bool = False
    epochs: Optional[int] = None
    patience: Optional[int] = None
    lr: Optional[float] = None
    weight_decay: Optional[float] = None
    hidden: Optional[int] = None
    dropout: Optional[float] = None
    num_layers: Optional[int] = None
    heads: Optional[int] = None
    out_heads: Optional[int] = None
    attn_dropout: Optional[float] = None
    alpha: Optional[float] = None
    K: Optional[int] = None
    checkpoint_dir: Optional[str] = None
    log_path: Optional[str] = None
    fp16: bool = False
    actnn: bool = False

    @property
    def dataset_name(self) -> str:
        return self.dataset if isinstance(self.dataset, str) else (self.dataset.name or "graph")

    def hyperparameters(self) -> dict:
        return {k: getattr(self, k) for k in DEFAULTS}


@dataclass
class SeedResult:
    seed: int
    test_metric: float
    best_val: float
    best_epoch: int
    epochs_run: int
    val_curve: list
    train_loss: list
    wall_time: float
    num_params: int = 0


@dataclass
class RunResult:
    dataset: str
    model: str
    model_wrapper: str
    data_wrapper: str
    metric: str
    config: dict
    config_hash: str
    seeds: list

    @property
    def test_metrics(self) -> np.ndarray:
        return np.array([s.test_metric for s in self.seeds])

    @property
    def mean(self) -> float:
        return float(self.test_metrics.mean())

    @property
    def std(self) -> float:
        return float(self.test_metrics.std()) if len(self.seeds) > 1 else 0.0

    def summary(self) -> str:
        return (f"{self.dataset} {self.model} [{self.model_wrapper}/{self.data_wrapper}] "
                f"{self.metric} = {100 * self.mean:.2f} ± {100 * self.std:.2f} over {len(self.seeds)} seed(s)")


def config_hash(config: dict) -> str:
    """Stable hash of a resolved configuration; seeds are never part of it."""
    clean = {k: v for k, v in config.items() if k not in ("seed", "seeds")}
    blob = json.dumps(clean, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def resolve_config(spec: TrainSpec) -> dict:
    """Defaults, then registry entries, then the user's explicit values."""
    if spec.fp16:
        raise ConfigError("fp16 is not supported (float64 CPU engine)")
    if spec.actnn:
        raise ConfigError("actnn activation compression is not supported")
    if spec.model not in MODELS:
        raise ConfigError(f"unknown model {spec.model!r}; registered models: {sorted(MODELS)}")
    registry = best_config(spec.dataset_name, spec.model) if spec.use_best_config else {}
    merged = merge_overrides(DEFAULTS, registry)
    merged = merge_overrides(merged, spec.hyperparameters())
    if merged["epochs"] < 1:
        raise ConfigError("epochs must be >= 1")
    if merged["patience"] < 0:
        raise ConfigError("patience must be >= 0")
    if not spec.seeds:
        raise ConfigError("at least one seed is required")
    merged.update(
        dataset=spec.dataset_name, model=spec.model,
        model_wrapper=spec.model_wrapper or ("dgi" if spec.model == "dgi" else "supervised"),
        data_wrapper=spec.data_wrapper, data_wrapper_args=dict(spec.data_wrapper_args),
    )
    return merged


def _load_graph(spec: TrainSpec) -> Graph:
    if isinstance(spec.dataset, Graph):
        return spec.dataset
    g, _ = datasets.load(spec.dataset)
    return g


ValHook = Callable[[int, float], float]


def run_seed(g: Graph, cfg: dict, seed: int, val_hook: Optional[ValHook] = None,
             checkpoint_dir: Optional[str] = None) -> SeedResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    if g.labels is None or g.labels.ndim != 1:
        raise ConfigError("supervised training needs single-label node classes")
    mspec = ModelSpec(cfg["model"], in_dim=g.num_features, out_dim=g.num_classes,
                      **{k: cfg[k] for k in MODEL_FIELDS})
    model = build_model(mspec, rng)
    data = make_data_wrapper(cfg["data_wrapper"], **cfg["data_wrapper_args"])
    data.setup(g, model, rng)
    opt = ad.Adam(model.parameters(), lr=cfg["lr"], weight_decay=cfg["weight_decay"])
    mw = make_model_wrapper(cfg["model_wrapper"], model, opt)

    # dry run so shape problems surface before any training
    try:
        model(data.full, g.features)
    except (ModelError, ValueError) as exc:
        raise ConfigError(f"model/data shape check failed: {exc}") from exc

    best, best_epoch, best_state, bad = -np.inf, -1, model.state_dict(), 0
    val_curve, losses = [], []
    patience = cfg["patience"]
    epoch = 0
    for epoch in range(cfg["epochs"]):
        batch_losses = [mw.train_step(b, rng) for b in data.train_batches(rng) if len(b.mask)]
        epoch_loss = float(np.mean(batch_losses)) if batch_losses else float("nan")
        losses.append(epoch_loss)
        score = mw.validation_score(data, epoch_loss)
        if val_hook is not None:
            score = val_hook(epoch, score)
        val_curve.append(float(score))
        if score > best:
            best, best_epoch, best_state, bad = score, epoch, model.state_dict(), 0
        else:
            bad += 1
            if patience and bad >= patience:
                break
    model.load_state_dict(best_state)
    if checkpoint_dir:
        path = Path(checkpoint_dir)
        path.mkdir(parents=True, exist_ok=True)
        ad.save_checkpoint(path / f"{cfg['dataset']}_{cfg['model']}_seed{seed}.ckpt", best_state)
    test = mw.evaluate(data, "test")
    return SeedResult(seed, float(test), float(best), best_epoch, epoch + 1, val_curve, losses,
                      time.perf_counter() - t0, model.num_params())


def run(spec: TrainSpec, val_hook: Optional[ValHook] = None) -> RunResult:
    """Train and test once per seed, restoring the best-validation parameters each time."""
    cfg = resolve_config(spec)
    g = _load_graph(spec)
    chash = config_hash(cfg)
    results = []
    for seed in spec.seeds:
        try:
            res = run_seed(g, cfg, int(seed), val_hook, spec.checkpoint_dir)
        except WrapperError as exc:
            raise ConfigError(str(exc)) from exc
        results.append(res)
        if spec.log_path:
            append_manifest(spec.log_path, cfg, chash, res)
    return RunResult(cfg["dataset"], cfg["model"], cfg["model_wrapper"], cfg["data_wrapper"],
                     "accuracy", cfg, chash, results)


# outputs --------------------------------------------------------------------------

def append_manifest(path, cfg: dict, chash: str, res: SeedResult) -> None:
    """One JSON line per (run, seed)."""
    record = {"config_hash": chash, "seed": res.seed, "config": cfg,
              "val_curve": res.val_curve, "train_loss": res.train_loss,
              "best_epoch": res.best_epoch, "test_metric": res.test_metric}
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


CSV_FIELDS = ["dataset", "model", "model_wrapper", "data_wrapper", "seed", "metric", "value", "std",
              "best_epoch", "config_hash"]


def result_rows(result: RunResult) -> list[dict]:
    base = {"dataset": result.dataset, "model": result.model, "model_wrapper": result.model_wrapper,
            "data_wrapper": result.data_wrapper, "metric": result.metric, "config_hash": result.config_hash}
    rows = [dict(base, seed=s.seed, value=f"{s.test_metric:.6f}", std="", best_epoch=s.best_epoch)
            for s in result.seeds]
    rows.append(dict(base, seed="mean", value=f"{result.mean:.6f}", std=f"{result.std:.6f}", best_epoch=""))
    return rows


def write_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in results:
            w.writerows(result_rows(r))


__all__ = ["TrainSpec", "RunResult", "SeedResult", "run", "run_seed", "resolve_config", "config_hash",
           "append_manifest", "result_rows", "write_csv", "DEFAULTS", "ConfigError"]
