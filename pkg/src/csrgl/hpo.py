"""Hyperparameter search over :class:`TrainSpec` fields (grid or random)."""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .configs import ConfigError, best_config, merge_overrides, store_best_config
from .training.trainer import RunResult, TrainSpec, run

KINDS = ("categorical", "uniform", "loguniform")


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str
    values: tuple = ()
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"{self.name}: unknown dimension kind {self.kind!r}")
        if self.kind == "categorical" and not self.values:
            raise ConfigError(f"{self.name}: categorical dimension needs values")
        if self.kind != "categorical" and not self.low < self.high:
            raise ConfigError(f"{self.name}: range needs low < high")
        if self.kind == "loguniform" and self.low <= 0:
            raise ConfigError(f"{self.name}: log-uniform range must be positive")

    def sample(self, rng: np.random.Generator):
        if self.kind == "categorical":
            v = self.values[int(rng.integers(len(self.values)))]
            return v.item() if isinstance(v, np.generic) else v
        if self.kind == "uniform":
            return float(rng.uniform(self.low, self.high))
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))

    def contains(self, v) -> bool:
        if self.kind == "categorical":
            return v in self.values
        return self.low <= v <= self.high


class SearchSpace:
    def __init__(self, dims):
        self.dims = list(dims)
        if not self.dims:
            raise ConfigError("search space is empty")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate dimension names")

    @classmethod
    def from_dict(cls, spec: dict) -> "SearchSpace":
        """``{"lr": {"loguniform": [1e-3, 1e-1]}, "hidden": {"categorical": [16, 32]}}``."""
        dims = []
        for name, body in spec.items():
            if not isinstance(body, dict) or len(body) != 1:
                raise ConfigError(f"{name}: expected one of {KINDS} as the only key")
            (kind, arg), = body.items()
            if kind == "categorical":
                dims.append(Dimension(name, kind, tuple(arg)))
            else:
                lo, hi = arg
                dims.append(Dimension(name, kind, low=float(lo), high=float(hi)))
        return cls(dims)

    @classmethod
    def from_file(cls, path) -> "SearchSpace":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def grid(self) -> list[dict]:
        cont = [d.name for d in self.dims if d.kind != "categorical"]
        if cont:
            raise ConfigError(f"grid search needs categorical dimensions only; continuous: {cont}")
        return [dict(zip(self.names, combo)) for combo in itertools.product(*(d.values for d in self.dims))]

    def sample(self, rng) -> dict:
        return {d.name: d.sample(rng) for d in self.dims}

    def contains(self, point: dict) -> bool:
        return set(point) == set(self.names) and all(d.contains(point[d.name]) for d in self.dims)


@dataclass
class Trial:
    index: int
    point: dict
    seeds: tuple
    objective: float
    test_mean: float
    num_params: int
    result: Optional[RunResult] = None


@dataclass
class SearchResult:
    best: Trial
    trials: list


def trial_seeds(master_seed: int, index: int, count: int) -> tuple:
    rng = np.random.default_rng([master_seed, index])
    return tuple(int(s) for s in rng.integers(0, 2 ** 31 - 1, size=count))


def _run_trial(args):
    index, point, spec, runner = args
    res = runner(spec)
    objective = float(np.mean([s.best_val for s in res.seeds]))
    return Trial(index, point, tuple(spec.seeds), objective, res.mean, res.seeds[0].num_params, res)


def select_best(trials) -> Trial:
    """Highest objective; ties go to fewer parameters, then the earlier trial."""
    return min(trials, key=lambda t: (-t.objective, t.num_params, t.index))


def search(space: SearchSpace, base: TrainSpec, budget: Optional[int] = None, strategy: str = "random",
           seed: int = 0, trial_log=None, runner: Callable[[TrainSpec], RunResult] = run,
           workers: int = 1) -> SearchResult:
    """Run one training per sampled point and keep the best by mean validation score.

    Every trial gets fresh training seeds derived from ``(seed, trial index)``
    so reruns with the same master seed repeat exactly.
    """
    valid = {f.name for f in fields(TrainSpec)}
    unknown = [n for n in space.names if n not in valid]
    if unknown:
        raise ConfigError(f"search dimensions {unknown} are not TrainSpec fields")
    if strategy == "grid":
        points = space.grid()
        if budget is not None:
            if budget < 1:
                raise ConfigError("budget must be >= 1")
            points = points[:budget]
    elif strategy == "random":
        if budget is None or budget < 1:
            raise ConfigError("budget must be >= 1")
        rng = np.random.default_rng(seed)
        points = [space.sample(rng) for _ in range(budget)]
    else:
        raise ConfigError(f"unknown strategy {strategy!r}; use grid or random")

    jobs = [(i, p, replace(base, **p, seeds=trial_seeds(seed, i, len(base.seeds))), runner)
            for i, p in enumerate(points)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_run_trial, jobs))
    else:
        trials = [_run_trial(j) for j in jobs]
    if trial_log is not None:
        write_trial_log(trial_log, trials)
    return SearchResult(select_best(trials), trials)


def write_trial_log(path, trials) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "params", "seeds", "objective", "test_mean", "num_params"])
        for t in trials:
            w.writerow([t.index, json.dumps(t.point, sort_keys=True), " ".join(map(str, t.seeds)),
                        f"{t.objective:.6f}", f"{t.test_mean:.6f}", t.num_params])


__all__ = ["Dimension", "SearchSpace", "Trial", "SearchResult", "search", "select_best",
           "trial_seeds", "write_trial_log", "best_config", "merge_overrides", "store_best_config"]
