"""Best-known hyperparameters per (dataset, model), shipped as package data.

A user file named by ``$CSRGL_BEST_CONFIGS`` is layered on top of the
shipped registry; ``hpo`` runs write their winners there.
"""
from __future__ import annotations

import json
import os
from importlib import resources
from pathlib import Path
from typing import Optional

USER_REGISTRY_ENV = "CSRGL_BEST_CONFIGS"


class ConfigError(ValueError):
    pass


def _key(dataset: str, model: str) -> str:
    return f"{dataset.lower()}/{model.lower()}"


def shipped_registry() -> dict:
    text = resources.files("csrgl").joinpath("data/best_configs.json").read_text()
    return json.loads(text)


def user_registry_path() -> Optional[Path]:
    p = os.environ.get(USER_REGISTRY_ENV)
    return Path(p) if p else None


def load_registry() -> dict:
    reg = shipped_registry()
    path = user_registry_path()
    if path is not None and path.exists():
        reg.update(json.loads(path.read_text()))
    return reg


def best_config(dataset: str, model: str) -> dict:
    reg = load_registry()
    key = _key(dataset, model)
    if key not in reg:
        raise ConfigError(f"no config registered for ({dataset}, {model})")
    return dict(reg[key])


def merge_overrides(registry: dict, user: dict) -> dict:
    """Registry values overlaid by every user value that is not ``None``."""
    out = dict(registry)
    out.update({k: v for k, v in user.items() if v is not None})
    return out


def store_best_config(dataset: str, model: str, params: dict, path: Optional[Path] = None) -> Path:
    path = path or user_registry_path()
    if path is None:
        raise ConfigError(f"set ${USER_REGISTRY_ENV} or pass a path to store configs")
    path = Path(path)
    reg = json.loads(path.read_text()) if path.exists() else {}
    reg[_key(dataset, model)] = params
    path.write_text(json.dumps(reg, indent=1, sort_keys=True) + "\n")
    return path
