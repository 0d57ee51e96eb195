"""Random-projection prototype heads for continual learning.

Thin wrappers over the C++ core: JSON strings coming back from the core are
decoded here, everything else is passed through.
"""

import json

from . import _core
from ._core import Accumulator, Projection, RandprotoError, average_accuracy, average_forgetting, lambda_grid

__version__ = _core.__version__

__all__ = [
    "Accumulator",
    "Projection",
    "RandprotoError",
    "average_accuracy",
    "average_forgetting",
    "default_config",
    "inner_product_test",
    "lambda_grid",
    "load_store",
    "read_manifest",
    "run",
    "synth",
    "write_store",
]


def write_store(path, features, labels, split, num_classes, *, name="store", class_names=(),
                domains=None, domain_names=(), targets=None):
    """Write a feature store directory; returns the manifest as a dict."""
    return json.loads(_core.write_store(str(path), features, labels, split, num_classes, name,
                                        list(class_names), domains, list(domain_names), targets))


def load_store(path):
    """Load a store: dict with features, labels, split, domains, targets, manifest."""
    out = _core.load_store(str(path))
    out["manifest"] = json.loads(out["manifest"])
    return out


def read_manifest(path):
    return json.loads(_core.read_manifest(str(path)))


def synth(path, **kwargs):
    """Write a synthetic Gaussian-cluster store; see the C++ SynthSpec for fields."""
    return json.loads(_core.synth(str(path), **kwargs))


def default_config():
    return json.loads(_core.default_config())


def run(config=None, overrides=()):
    """Run one experiment. `config` is a dict (or JSON text) in RunConfig form."""
    if config is None:
        config = {}
    text = config if isinstance(config, str) else json.dumps(config)
    return json.loads(_core.run(text, list(overrides)))


def inner_product_test(f, g, **kwargs):
    return json.loads(_core.inner_product_test(f, g, **kwargs))
