"""Trainer, model wrappers and data wrappers."""
from .trainer import (ConfigError, RunResult, SeedResult, TrainSpec, config_hash, resolve_config, run,
                      write_csv)
from .wrappers import (DATA_WRAPPERS, MODEL_WRAPPERS, Batch, Clustering, DGIMW, FullGraph,
                       NeighborSampling, SupervisedMW, WrapperError, build_blocks, make_data_wrapper,
                       make_model_wrapper)

__all__ = [
    "TrainSpec", "RunResult", "SeedResult", "run", "config_hash", "resolve_config", "write_csv",
    "ConfigError", "Batch", "FullGraph", "NeighborSampling", "Clustering", "build_blocks",
    "SupervisedMW", "DGIMW", "DATA_WRAPPERS", "MODEL_WRAPPERS", "make_data_wrapper",
    "make_model_wrapper", "WrapperError",
]
