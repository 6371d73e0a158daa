"""Python access to the protocad engine."""

import json
from pathlib import Path

from . import _core
from ._core import (
    CheckpointError,
    ConfigError,
    Env,
    ShapeError,
    context_grid,
    lambda_returns,
    run_checks,
    sinkhorn,
    task_names,
    temporal_crossover_loss,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "Env",
    "ShapeError",
    "context_grid",
    "evaluate",
    "lambda_returns",
    "resolve_config",
    "run_checks",
    "sinkhorn",
    "task_names",
    "temporal_crossover_loss",
    "train",
]


def _config_text(config):
    if isinstance(config, (str, Path)) and Path(config).exists():
        return Path(config).read_text()
    if isinstance(config, dict):
        return json.dumps(config)
    raise TypeError("config must be a dict or a path to a JSON file")


def resolve_config(config):
    """Every key of the run config after profile defaults are applied."""
    return json.loads(_core.resolve_config(_config_text(config)))


def train(config, out_dir, threads=1):
    """Train into out_dir (resuming when a checkpoint is there)."""
    return json.loads(_core.train(_config_text(config), str(out_dir), threads))


def evaluate(checkpoint, split="test", episodes=5, seed=0, threads=1):
    return json.loads(_core.evaluate(str(checkpoint), split, episodes, seed, threads))
