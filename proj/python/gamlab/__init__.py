"""Interpretable additive models for binary classification.

Thin wrapper over the native core: JSON results are decoded into plain
Python dicts and keyword overrides are forwarded to the trainer presets.
"""

import json as _json
from os import PathLike
from typing import Any, Dict, Optional, Sequence, Union

from . import _core
from ._core import BinnedDataset, ConfigError, Dataset, Model, __version__

__all__ = [
    "BinnedDataset", "ConfigError", "Dataset", "Model", "__version__",
    "algorithm_names", "auc", "cross_entropy", "default_config", "density_from_errors",
    "evaluate", "export_shapes", "feature_density", "load_csv", "prepare", "run",
    "shape_distance", "shape_points", "subgroup_report", "train",
]

_Path = Union[str, PathLike]

algorithm_names = _core.algorithm_names
auc = _core.auc
cross_entropy = _core.cross_entropy
density_from_errors = _core.density_from_errors
evaluate = _core.evaluate
export_shapes = _core.export_shapes
prepare = _core.prepare
shape_distance = _core.shape_distance
shape_points = _core.shape_points


def load_csv(path: _Path, label: str = "label", groups: Sequence[str] = (),
             schema: Optional[Dict[str, Any]] = None) -> Dataset:
    return _core.load_csv(path, label, list(groups), _json.dumps(schema) if schema else "")


def default_config(algorithm: str, scale: str = "desk") -> Dict[str, Any]:
    return _json.loads(_core.default_config(algorithm, scale))


def train(data: BinnedDataset, algorithm: str, seed: int = 0, scale: str = "desk", **overrides: Any) -> Model:
    """Fit one of `algorithm_names()`; keyword arguments override preset keys."""
    return _core.train(data, algorithm, seed, scale, _json.dumps(overrides) if overrides else "")


def feature_density(model: Model, data: BinnedDataset) -> Dict[str, Any]:
    return _json.loads(_core.feature_density(model, data))


def subgroup_report(model: Model, dataset: Dataset, column: str, reference: Optional[Model] = None) -> Dict[str, Any]:
    return _json.loads(_core.subgroup_report(model, dataset, column, reference))


def run(config: _Path, threads: int = 1) -> Dict[str, Any]:
    """Run an experiment config; returns the run manifest."""
    return _json.loads(_core.run_experiment(config, threads))
