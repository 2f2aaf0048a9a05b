"""Flow matching: linear noise/data interpolation, its loss, and an explicit Euler sampler."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .conditioning import assemble_input
from .errors import ConfigError, DimensionError, DivergedError
from .pointnet import ModelParams, predict


@dataclass
class FlowSample:
    tau: np.ndarray      # per cloud, shape [] or [B]
    y_clean: np.ndarray
    y_noisy: np.ndarray
    y_tau: np.ndarray
    f_target: np.ndarray


def interpolate(y_clean, y_noisy, tau):
    """y_tau = (1 - tau) * y_clean + tau * y_noisy, tau per cloud."""
    y_clean = np.asarray(y_clean)
    tau = np.asarray(tau, dtype=y_clean.dtype)
    t = tau.reshape(tau.shape + (1,) * (y_clean.ndim - tau.ndim))
    return (1 - t) * y_clean + t * np.asarray(y_noisy, dtype=y_clean.dtype)


def make_training_sample(y_clean, rng, tau=None):
    """Draw tau ~ U[0, 1] per cloud and i.i.d. standard normal noise.

    ``y_clean`` is [N, n] for one cloud or [B, N, n] for a batch. ``tau`` may
    be forced (scalar or [B]) for testing.
    """
    y_clean = np.asarray(y_clean, dtype=np.float32)
    if not np.all(np.isfinite(y_clean)):
        raise ValueError("y_clean has non-finite entries")
    batch_shape = y_clean.shape[:-2]
    if tau is None:
        tau = rng.uniform(batch_shape if batch_shape else None)
    tau = np.asarray(tau, dtype=np.float32)
    y_noisy = rng.normal(y_clean.shape)
    return FlowSample(tau, y_clean, y_noisy, interpolate(y_clean, y_noisy, tau), y_noisy - y_clean)


def loss(pred, sample):
    """Mean squared error against f_target = y_noisy - y_clean."""
    return ad.mse(pred, sample.f_target)


def _network(net):
    if isinstance(net, ModelParams):
        if net.kind != "flow_matching":
            raise ConfigError(f"flow sampler needs a flow_matching model, got {net.kind}")
        return lambda inp, tau: predict(net, inp), net.d_emb
    return net, 32


def sample(net, x, n_steps=1000, rng=None, n_samples=1, d_emb=None, y_start=None):
    """Integrate from noise at tau = 1 down to tau = 0 with explicit Euler.

    Step n evaluates the network at tau = 1 - n / n_steps on the current state
    and applies y <- y - dtau * prediction. ``net`` is a flow-matching
    ModelParams or any callable ``(inputs [S, N, C], tau) -> [S, N, n]``.
    Returns [N, n] for ``n_samples == 1`` else [S, N, n].
    """
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    fn, default_emb = _network(net)
    d_emb = d_emb or default_emb
    x = np.asarray(x, dtype=np.float32)
    n_cfd = net.n_cfd if isinstance(net, ModelParams) else 3
    if y_start is None:
        y = rng.normal((n_samples, x.shape[0], n_cfd))
    else:
        y = np.array(y_start, dtype=np.float32).reshape(n_samples, x.shape[0], -1)
    xb = np.broadcast_to(x, (n_samples,) + x.shape)
    dtau = np.float32(1.0 / n_steps)
    for n in range(n_steps):
        tau = 1.0 - n / n_steps
        pred = fn(assemble_input(xb, y, tau, d_emb), tau)
        if pred.shape != y.shape:
            raise DimensionError(f"network returned {pred.shape}, expected {y.shape}")
        y = y - dtau * pred
        if not np.all(np.isfinite(y)):
            raise DivergedError("flow-matching sampler diverged", step=n)
    return y[0] if n_samples == 1 else y


@dataclass
class FlowMatchingModel:
    """A trained flow-matching network plus its sampler setting."""

    params: ModelParams
    n_steps: int = 1000
    stochastic = True

    def generate(self, x, n_samples, rng):
        out = sample(self.params, x, self.n_steps, rng, n_samples)
        return out.reshape((n_samples,) + out.shape[-2:])
