"""Dense tensors with a recorded tape for reverse-mode differentiation.

Only the handful of ops the point-cloud network needs are provided. Every op
checks shapes, computes its value with numpy and, when a tape is active and
one of its inputs requires a gradient, records a closure that maps the output
gradient to input gradients. ``backward`` replays the tape in reverse.

Arrays are float32 unless a tensor is explicitly built as float64 (used as a
debug precision for gradient checks).
"""

import contextlib
import threading

import numpy as np

from .errors import AutodiffError, DimensionError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


class Tensor:
    """An array plus the bookkeeping needed for gradients."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records differentiable ops in execution order.

    Use as a context manager; ops executed inside the block are recorded.
    A tape can be differentiated once.
    """

    def __init__(self):
        self.entries = []
        self.used = False

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        _tapes().remove(self)
        return False

    def record(self, out, inputs, backward_fn):
        self.entries.append((out, inputs, backward_fn))

    def backward(self, loss):
        if self.used:
            raise AutodiffError("backward already called on this tape; record a new one")
        if loss.size != 1:
            raise AutodiffError(f"loss must be a scalar, got shape {loss.shape}")
        self.used = True

        produced = {id(out) for out, _, _ in self.entries}
        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for out, inputs, backward_fn in reversed(self.entries):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, backward_fn(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if key not in produced:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            leaf.grad = grads[key]
        self.entries.clear()
        return leaves


class _TapeStack(threading.local):
    def __init__(self):
        self.stack = []


_LOCAL = _TapeStack()


def _tapes():
    return _LOCAL.stack


def _active_tape():
    stack = _LOCAL.stack
    return stack[-1] if stack else None


def _emit(value, inputs, backward_fn):
    out = Tensor(value)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward_fn)
    return out


def backward(loss, tape=None):
    """Fill ``.grad`` on every parameter reachable from the scalar ``loss``."""
    tape = tape or _active_tape()
    if tape is None:
        raise AutodiffError("no tape recorded the loss")
    return tape.backward(loss)


@contextlib.contextmanager
def no_grad():
    """Temporarily hide this thread's active tapes so ops are not recorded."""
    stack = _tapes()
    saved = list(stack)
    stack.clear()
    try:
        yield
    finally:
        stack.extend(saved)


def _need(t):
    return t.requires_grad


# ---------------------------------------------------------------- ops


def linear_shared(x, weight, bias):
    """Apply the same affine map to every point: ``x[b, n] @ weight + bias``."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 3 or weight.data.ndim != 2 or bias.data.ndim != 1:
        raise DimensionError("linear_shared expects x[B,N,C_in], weight[C_in,C_out], bias[C_out]")
    B, N, c_in = x.shape
    if weight.shape[0] != c_in or bias.shape[0] != weight.shape[1]:
        raise DimensionError(f"linear_shared: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    flat = x.data.reshape(B * N, c_in)
    out = flat @ weight.data + bias.data

    def grad_fn(g):
        g2 = g.reshape(B * N, -1)
        gx = (g2 @ weight.data.T).reshape(x.shape) if _need(x) else None
        gw = flat.T @ g2 if _need(weight) else None
        gb = g2.sum(axis=0) if _need(bias) else None
        return gx, gw, gb

    return _emit(out.reshape(B, N, -1), (x, weight, bias), grad_fn)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    out = np.maximum(x.data, 0).astype(x.dtype, copy=False)
    # subgradient at exactly zero is zero
    return _emit(out, (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        s = (1.0 / (1.0 + np.exp(-x.data))).astype(x.dtype)
    return _emit(s, (x,), lambda g: (g * s * (1 - s),))


def batch_norm(x, scale, shift, running_mean, running_var, mode="train",
               eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel normalization over all B*N entries.

    In train mode the batch statistics (population variance) are used and the
    running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    In infer mode only the running statistics are used.
    """
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    running_mean, running_var = as_tensor(running_mean), as_tensor(running_var)
    C = x.shape[-1]
    for t in (scale, shift, running_mean, running_var):
        if t.shape != (C,):
            raise DimensionError(f"batch_norm: parameter shape {t.shape} != ({C},)")
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown batch_norm mode {mode!r}")

    if mode == "infer":
        inv = (1.0 / np.sqrt(running_var.data + eps)).astype(x.dtype)
        xhat = (x.data - running_mean.data) * inv
        out = scale.data * xhat + shift.data

        def grad_infer(g):
            axes = tuple(range(g.ndim - 1))
            return (g * (scale.data * inv) if _need(x) else None,
                    (g * xhat).sum(axis=axes) if _need(scale) else None,
                    g.sum(axis=axes) if _need(shift) else None)

        return _emit(out, (x, scale, shift), grad_infer)

    flat = x.data.reshape(-1, C)
    m = flat.shape[0]
    mean = flat.mean(axis=0)
    xhat = flat - mean
    var = np.einsum("ij,ij->j", xhat, xhat) / m
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat *= inv
    out = (xhat * scale.data + shift.data).reshape(x.shape)

    running_mean.data[...] = momentum * running_mean.data + (1 - momentum) * mean
    running_var.data[...] = momentum * running_var.data + (1 - momentum) * var

    def grad_train(g):
        g2 = g.reshape(-1, C)
        gscale = np.einsum("ij,ij->j", g2, xhat)
        gshift = g2.sum(axis=0)
        gx = None
        if _need(x):
            # dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)), dxhat = g * scale
            gx = xhat * (gscale * scale.data / m)
            gx -= g2 * scale.data
            gx += gshift * scale.data / m
            gx *= -inv
            gx = gx.reshape(x.shape)
        return gx, gscale if _need(scale) else None, gshift if _need(shift) else None

    return _emit(out, (x, scale, shift), grad_train)


def max_pool_points(x):
    """Channel-wise max over the point axis.

    Returns the pooled tensor [B, C] and the winning point index per (b, c);
    ties go to the lowest index.
    """
    x = as_tensor(x)
    if x.data.ndim != 3 or x.shape[1] < 1:
        raise DimensionError(f"max_pool_points expects [B,N>=1,C], got {x.shape}")
    idx = np.argmax(x.data, axis=1)
    pooled = np.take_along_axis(x.data, idx[:, None, :], axis=1)[:, 0, :]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx[:, None, :], g[:, None, :], axis=1)
        return (gx,)

    return _emit(pooled, (x,), grad_fn), idx


def concat_channels(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != b.data.ndim or a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat_channels: {a.shape} vs {b.shape}")
    c1 = a.shape[-1]
    out = np.concatenate([a.data, b.data], axis=-1)
    return _emit(out, (a, b), lambda g: (g[..., :c1], g[..., c1:]))


def tile_points(g, n):
    """Repeat a per-cloud vector [B, C] for each of ``n`` points -> [B, n, C]."""
    g = as_tensor(g)
    if g.data.ndim != 2:
        raise DimensionError(f"tile_points expects [B,C], got {g.shape}")
    out = np.repeat(g.data[:, None, :], n, axis=1)
    return _emit(out, (g,), lambda grad: (grad.sum(axis=1),))


def add_points(x, g):
    """``x[b, n, :] + g[b, :]`` for every point n."""
    x, g = as_tensor(x), as_tensor(g)
    if x.data.ndim != 3 or g.shape != (x.shape[0], x.shape[2]):
        raise DimensionError(f"add_points: {x.shape} vs {g.shape}")
    return _emit(x.data + g.data[:, None, :], (x, g), lambda grad: (grad, grad.sum(axis=1)))


def matmul(x, weight):
    """Plain [B, C_in] @ [C_in, C_out]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"matmul: {x.shape} @ {weight.shape}")

    def grad_fn(g):
        return (g @ weight.data.T if _need(x) else None,
                x.data.T @ g if _need(weight) else None)

    return _emit(x.data @ weight.data, (x, weight), grad_fn)


def slice_rows(w, start, stop):
    w = as_tensor(w)

    def grad_fn(g):
        gw = np.zeros_like(w.data)
        gw[start:stop] = g
        return (gw,)

    return _emit(w.data[start:stop], (w,), grad_fn)


def weighted_sum(x, weights):
    """Scalar ``sum(x * weights)``; ``weights`` is a constant."""
    x = as_tensor(x)
    w = np.asarray(weights, dtype=x.dtype)
    if w.shape != x.shape:
        raise DimensionError(f"weighted_sum: {x.shape} vs {w.shape}")
    return _emit(np.array((x.data * w).sum(), dtype=x.dtype), (x,), lambda g: (g * w,))


def mse(pred, target):
    """Mean squared error over every entry (per-cloud mean, averaged over the batch)."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise DimensionError(f"mse: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    n = diff.size
    value = np.array((diff * diff).sum() / n, dtype=pred.dtype)
    return _emit(value, (pred,), lambda g: (g * (2.0 / n) * diff,))
