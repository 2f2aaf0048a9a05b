"""Sinusoidal time embeddings and assembly of the network input."""

import numpy as np

from .errors import ConfigError, DimensionError

MAX_PERIOD = 1e4


def frequencies(d_emb):
    """omega_k = exp(-(k-1)/(d_emb/2 - 1) * ln 1e4), k = 1..d_emb/2 (float64)."""
    if d_emb < 2 or d_emb % 2:
        raise ConfigError(f"embedding width must be even and >= 2, got {d_emb}")
    half = d_emb // 2
    if half == 1:
        return np.ones(1)
    # 1e4 ** (-x) equals exp(-x ln 1e4) and hits both endpoints exactly
    k = np.arange(half)
    return np.power(MAX_PERIOD, -k / (half - 1))


def embed(t, d_emb=32):
    """[sin(w1 t), cos(w1 t), sin(w2 t), cos(w2 t), ...] for scalar or per-cloud ``t``.

    Returns shape [d_emb] for scalar t, [B, d_emb] for a vector of B times.
    """
    w = frequencies(d_emb)
    t = np.asarray(t, dtype=np.float64)
    arg = t[..., None] * w
    out = np.empty(arg.shape[:-1] + (d_emb,))
    out[..., 0::2] = np.sin(arg)
    out[..., 1::2] = np.cos(arg)
    return out


def assemble_input(x, y_state, t, d_emb=32):
    """Channels [coords | tiled time embedding | field state].

    Accepts a single cloud (x [N, d], y [N, n], scalar t) -> [N, d + d_emb + n]
    or a batch (x [B, N, d], y [B, N, n], t scalar or [B]) -> [B, N, ...].
    """
    x = np.asarray(x)
    y_state = np.asarray(y_state)
    if x.shape[:-1] != y_state.shape[:-1]:
        raise DimensionError(f"assemble_input: coords {x.shape} vs fields {y_state.shape}")
    dtype = np.result_type(x.dtype, y_state.dtype, np.float32)
    single = x.ndim == 2
    if single:
        x, y_state = x[None], y_state[None]
    B, N, _ = x.shape
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
    emb = embed(t, d_emb).astype(dtype)
    out = np.concatenate([x.astype(dtype),
                          np.broadcast_to(emb[:, None, :], (B, N, d_emb)),
                          y_state.astype(dtype)], axis=-1)
    return out[0] if single else out
