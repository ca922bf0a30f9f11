"""Python bindings for the akid C++ core.

Dict arguments are passed to the core as JSON; arrays are float64 numpy
arrays in NHWC layout.
"""

import json

from . import _akid
from ._akid import (
    PERCENTILE_LEVELS,
    ConfigError,
    IoError,
    LookupError,
    ShapeError,
    StateError,
    conv2d,
    conv2d_backward,
    load_idx,
    maxpool2d,
    percentiles,
    relu,
    softmax_cross_entropy,
    write_idx,
)

__all__ = [
    "PERCENTILE_LEVELS",
    "ConfigError",
    "Experiment",
    "IoError",
    "LookupError",
    "ShapeError",
    "StateError",
    "conv2d",
    "conv2d_backward",
    "expand",
    "export_dot",
    "load_idx",
    "maxpool2d",
    "normalize_config",
    "percentiles",
    "relu",
    "render",
    "softmax_cross_entropy",
    "write_idx",
]


def render(template, net_paras, opt_paras):
    return _akid.render(template, json.dumps(net_paras), json.dumps(opt_paras))


def expand(spec, base_dir="."):
    return _akid.expand(json.dumps(spec), base_dir)


def normalize_config(config):
    return json.loads(_akid.normalize_config(json.dumps(config)))


def export_dot(brain_config):
    return _akid.export_dot(json.dumps(brain_config))


class Experiment:
    """Builds a Kid from an experiment config dict."""

    def __init__(self, config):
        self._core = _akid.Experiment(json.dumps(config))

    def setup(self):
        self._core.setup()
        return self

    def practice(self, until=None):
        return json.loads(self._core.practice(until))

    def validate(self):
        loss, accuracy = self._core.validate()
        return {"loss": loss, "accuracy": accuracy}

    @property
    def clock(self):
        return self._core.clock

    @property
    def config(self):
        return json.loads(self._core.config())

    def scalars(self, tag):
        return self._core.scalars(tag)

    def save_checkpoint(self, path):
        self._core.save_checkpoint(str(path))

    def load_checkpoint(self, path):
        self._core.load_checkpoint(str(path))

    def dot(self):
        return self._core.dot()
