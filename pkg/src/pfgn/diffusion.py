"""DDPM with the offset-cosine beta schedule: forward noising, loss, ancestral sampler."""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .conditioning import assemble_input
from .errors import ConfigError, DimensionError, DivergedError
from .pointnet import ModelParams, predict

BETA_MAX = 0.999


def cosine_beta(t, T, r=0.008):
    """Raw (unclipped) beta at step ``t``: 1 - cos^2(((t/T + r)/(1 + r)) pi/2) / cos^2((r/(1 + r)) pi/2)."""
    f = lambda s: np.cos((s + r) / (1 + r) * np.pi / 2) ** 2
    return 1.0 - f(np.asarray(t, dtype=np.float64) / T) / f(0.0)


@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays indexed by step t = 1..T at position t - 1.

    ``alpha_bar`` underflows to 0.0 in float64 for long schedules (T = 1000
    reaches about 1e-591); ``log_alpha_bar`` keeps the exact trend.
    """

    T: int
    r: float
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    log_alpha_bar: np.ndarray

    def at(self, t):
        """(beta_t, alpha_t, alpha_bar_t) for 1 <= t <= T."""
        if not 1 <= t <= self.T:
            raise ConfigError(f"diffusion step {t} outside [1, {self.T}]")
        return self.beta[t - 1], self.alpha[t - 1], self.alpha_bar[t - 1]


def build_schedule(T=1000, r=0.008):
    if T < 1 or not r > 0:
        raise ConfigError("need T >= 1 and r > 0")
    beta = np.minimum(cosine_beta(np.arange(1, T + 1), T, r), BETA_MAX)
    alpha = 1.0 - beta
    alpha_bar = np.empty(T)
    log_alpha_bar = np.empty(T)
    acc, log_acc = 1.0, 0.0
    for i in range(T):
        acc = acc * alpha[i]
        log_acc = log_acc + math.log(alpha[i])
        alpha_bar[i] = acc
        log_alpha_bar[i] = log_acc
    return NoiseSchedule(T, r, beta, alpha, alpha_bar, log_alpha_bar)


def noise_levels(sched, t):
    """sqrt(alpha_bar_t) and sqrt(1 - alpha_bar_t) for an int or an array of steps."""
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > sched.T):
        raise ConfigError(f"diffusion step outside [1, {sched.T}]")
    ab = sched.alpha_bar[t - 1]
    return np.sqrt(ab), np.sqrt(1.0 - ab)


def forward_noise(y_clean, t, sched, rng, eps=None):
    """y_t = sqrt(alpha_bar_t) y_clean + sqrt(1 - alpha_bar_t) eps; ``t`` scalar or per cloud."""
    y_clean = np.asarray(y_clean, dtype=np.float32)
    if eps is None:
        eps = rng.normal(y_clean.shape)
    a, b = noise_levels(sched, t)
    extra = (1,) * (y_clean.ndim - np.ndim(t))
    a = np.reshape(a, np.shape(a) + extra).astype(np.float32)
    b = np.reshape(b, np.shape(b) + extra).astype(np.float32)
    return a * y_clean + b * eps, eps


def apply_forward(y_clean, eps, alpha_bar):
    """Forward noising for an explicit alpha_bar value."""
    return math.sqrt(alpha_bar) * np.asarray(y_clean) + math.sqrt(1.0 - alpha_bar) * np.asarray(eps)


def loss(pred_eps, eps):
    return ad.mse(pred_eps, eps)


def reverse_step(y_t, eps_hat, beta, alpha, alpha_bar, z=None):
    """y_{t-1} = (y_t - beta / sqrt(1 - alpha_bar) * eps_hat) / sqrt(alpha) [+ sqrt(beta) z]."""
    y = (y_t - np.float32(beta / math.sqrt(1.0 - alpha_bar)) * eps_hat) / np.float32(math.sqrt(alpha))
    if z is not None:
        y = y + np.float32(math.sqrt(beta)) * z
    return y


def _network(net):
    if isinstance(net, ModelParams):
        if net.kind != "diffusion":
            raise ConfigError(f"diffusion sampler needs a diffusion model, got {net.kind}")
        return lambda inp, t: predict(net, inp), net.d_emb
    return net, 32


def sample(net, x, sched, rng=None, n_samples=1, d_emb=None, y_start=None):
    """Ancestral sampling from t = T down to 1; no noise is added on the final step.

    ``net`` is a diffusion ModelParams or a callable ``(inputs, t) -> eps_hat``.
    Returns [N, n] for one sample, else [S, N, n].
    """
    fn, default_emb = _network(net)
    d_emb = d_emb or default_emb
    x = np.asarray(x, dtype=np.float32)
    n_cfd = net.n_cfd if isinstance(net, ModelParams) else 3
    shape = (n_samples, x.shape[0], n_cfd)
    y = rng.normal(shape) if y_start is None else np.array(y_start, dtype=np.float32).reshape(shape)
    xb = np.broadcast_to(x, (n_samples,) + x.shape)
    for t in range(sched.T, 0, -1):
        eps_hat = fn(assemble_input(xb, y, float(t), d_emb), t)
        if eps_hat.shape != y.shape:
            raise DimensionError(f"network returned {eps_hat.shape}, expected {y.shape}")
        beta, alpha, alpha_bar = sched.at(t)
        z = rng.normal(shape) if t > 1 else None
        y = reverse_step(y, eps_hat, beta, alpha, alpha_bar, z)
        if not np.all(np.isfinite(y)):
            raise DivergedError("diffusion sampler diverged", step=t)
    return y[0] if n_samples == 1 else y


@dataclass
class DiffusionModel:
    params: ModelParams
    schedule: NoiseSchedule
    stochastic = True

    def generate(self, x, n_samples, rng):
        out = sample(self.params, x, self.schedule, rng, n_samples)
        return out.reshape((n_samples,) + out.shape[-2:])
