"""Run configuration: one flat JSON document, unknown keys rejected."""

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError, PersistenceError


@dataclass
class RunConfig:
    # global
    seed: int = 0
    out: str = "out"
    data_dir: str = "data"
    checkpoint: str = None
    # dataset
    n_geoms: int = 200
    n_points: int = 1024
    n_surface: int = 128
    split: list = field(default_factory=lambda: [0.79, 0.11, 0.10])
    base_size: float = 0.5
    aspect: list = field(default_factory=lambda: [1.2, 3.8])
    superellipse_m: int = 4
    rho: float = 1.0
    mu: float = 0.05
    u_inf: float = 1.0
    p0: float = 0.0
    # model / training
    model: str = "fm"
    d_emb: int = 32
    width_divisor: int = 1
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 1
    max_steps: int = 0
    # samplers
    n_steps: int = 1000
    T: int = 1000
    r: float = 0.008
    # evaluation
    samples: int = 1
    eval_split: str = "test"
    geometry: list = None
    fractions: list = field(default_factory=lambda: [0.05, 0.10, 0.15])

    def to_dict(self):
        return asdict(self)


KEYS = {f.name for f in fields(RunConfig)}


def from_dict(d):
    unknown = sorted(set(d) - KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**d)


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise PersistenceError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(d)
