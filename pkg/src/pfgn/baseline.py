"""Direct coordinates -> fields regression with a sigmoid head."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .pointnet import ModelParams
from .pointnet import predict as _forward


def loss(pred, truth):
    return ad.mse(pred, truth)


def predict(params, x):
    """One deterministic inference pass; outputs lie in (0, 1)."""
    if params.kind != "baseline":
        raise ConfigError(f"predict needs a baseline model, got {params.kind}")
    return _forward(params, np.asarray(x, dtype=np.float32))


@dataclass
class BaselineModel:
    params: ModelParams
    stochastic = False

    def generate(self, x, n_samples, rng):
        return predict(self.params, x)[None]
