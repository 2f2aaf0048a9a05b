"""Adam and the three training loops."""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import diffusion, flow
from .conditioning import assemble_input
from .errors import ConfigError, DivergedError
from .pointnet import canonical_kind, forward
from .rng import Stream

PROCESSES = {"fm": "flow_matching", "ddpm": "diffusion", "baseline": "baseline"}
PROCESS_OF_KIND = {v: k for k, v in PROCESSES.items()}


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 1
    max_steps: int = 0          # 0 = no cap
    seed: int = 0
    model_kind: str = "flow_matching"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    T: int = 1000
    r: float = 0.008
    log_path: str = None

    def __post_init__(self):
        self.model_kind = canonical_kind(self.model_kind)
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class OptimizerState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0


def adam_step(params, state, cfg):
    """Bias-corrected Adam on ``params`` (a list of Tensors holding ``.grad``)."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergedError("non-finite gradient", step=state.step)
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)).astype(p.dtype)
    return state


def prepare_batch(process, x, y, rng, d_emb=32, schedule=None):
    """Network inputs and regression targets for one batch of clouds.

    fm: tau ~ U[0,1] per cloud, target y_noisy - y_clean.
    ddpm: t ~ U{1..T} per cloud, target eps.
    baseline: inputs are the coordinates, target the fields.
    """
    if process == "baseline":
        return x, y
    B = x.shape[0]
    if process == "fm":
        s = flow.make_training_sample(y, rng)
        return assemble_input(x, s.y_tau, s.tau, d_emb), s.f_target
    if process == "ddpm":
        t = rng.integers(1, schedule.T, B)
        y_t, eps = diffusion.forward_noise(y, t, schedule, rng)
        return assemble_input(x, y_t, t.astype(np.float64), d_emb), eps
    raise ConfigError(f"unknown process {process!r}")


def train_step(params, inputs, target, state, cfg):
    trainable = params.trainable()
    with ad.Tape() as tape:
        pred = forward(params, inputs, "train")
        loss = ad.mse(pred, target)
    value = loss.item()
    if not np.isfinite(value):
        raise DivergedError("non-finite loss", step=state.step)
    ad.backward(loss, tape)
    adam_step(trainable, state, cfg)
    return value


class Trainer:
    """Holds the model, optimizer state, RNG and log for one training run."""

    def __init__(self, params, cfg, dataset=None, schedule=None):
        self.params = params
        self.cfg = cfg
        self.process = PROCESS_OF_KIND[params.kind]
        if params.kind != cfg.model_kind:
            raise ConfigError(f"config trains {cfg.model_kind} but model is {params.kind}")
        self.schedule = schedule
        if self.process == "ddpm" and schedule is None:
            self.schedule = diffusion.build_schedule(cfg.T, cfg.r)
        self.state = OptimizerState()
        self.rng = Stream(cfg.seed)
        self.epoch = 0
        self.history = []
        self._log = None
        if cfg.log_path:
            self._log_fh = open(cfg.log_path, "w", newline="")
            self._log = csv.writer(self._log_fh, lineterminator="\n")
            self._log.writerow(["step", "epoch", "loss", "wall_ms"])
        self._t0 = time.perf_counter()
        self.X = self.Y = None
        if dataset is not None:
            train = dataset.split("train")
            self.X = np.stack([dataset.inputs(s) for s in train])
            self.Y = np.stack([dataset.targets(s) for s in train])

    def step_on(self, x, y):
        inputs, target = prepare_batch(self.process, x, y, self.rng, self.params.d_emb, self.schedule)
        value = train_step(self.params, inputs, target, self.state, self.cfg)
        self.history.append(value)
        if self._log is not None:
            wall = (time.perf_counter() - self._t0) * 1e3
            self._log.writerow([self.state.step, self.epoch, repr(value), f"{wall:.1f}"])
        return value

    def train_epoch(self):
        """One shuffled pass over the training split; returns the mean batch loss."""
        if self.X is None or len(self.X) == 0:
            raise ConfigError("training split is empty")
        order = self.rng.permutation(len(self.X))
        losses = []
        for start in range(0, len(order), self.cfg.batch_size):
            if self.cfg.max_steps and self.state.step >= self.cfg.max_steps:
                break
            idx = order[start:start + self.cfg.batch_size]
            losses.append(self.step_on(self.X[idx], self.Y[idx]))
        self.epoch += 1
        return float(np.mean(losses)) if losses else float("nan")

    def fit(self):
        means = []
        for _ in range(self.cfg.epochs):
            if self.cfg.max_steps and self.state.step >= self.cfg.max_steps:
                break
            means.append(self.train_epoch())
        self.close()
        return means

    def close(self):
        if self._log is not None:
            self._log_fh.close()
            self._log = None


def train_epoch(params, dataset, cfg, trainer=None):
    """Convenience wrapper: one epoch with a fresh (or given) Trainer."""
    trainer = trainer or Trainer(params, cfg, dataset)
    return trainer.train_epoch()
