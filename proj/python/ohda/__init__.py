"""Synthetic-to-real adaptation for toy 3D detection.

Configs are plain dicts overlaid on the built-in defaults, the same way a
``--config`` file is for the command-line tool.
"""

import json
import os

from ._core import ConfigError, TrainingAborted, init_logging, iou, nms, percentile_nearest_rank
from . import _core

__all__ = [
    "ConfigError",
    "TrainingAborted",
    "resolve_config",
    "gen_data",
    "pretrain",
    "adapt",
    "evaluate",
    "iou",
    "nms",
    "percentile_nearest_rank",
]

init_logging()


def resolve_config(overrides=None):
    """Defaults overlaid with ``overrides``; raises ConfigError on unknown keys."""
    return json.loads(_core.resolve_config(json.dumps(overrides or {})))


def gen_data(config, out):
    _core.gen_data(json.dumps(config), os.fspath(out))


def pretrain(config, out):
    """Returns the target-eval report of the pretrained model."""
    return json.loads(_core.pretrain(json.dumps(config), os.fspath(out)))


def adapt(config, checkpoint, out):
    """Returns the target-eval report of the adapted teacher."""
    return json.loads(_core.adapt(json.dumps(config), os.fspath(checkpoint), os.fspath(out)))


def evaluate(config, checkpoint, out):
    return json.loads(_core.evaluate(json.dumps(config), os.fspath(checkpoint), os.fspath(out)))
