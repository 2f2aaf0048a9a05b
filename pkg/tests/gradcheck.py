"""Central finite-difference oracle for the autodiff tests."""

import numpy as np

from pfgn import autodiff as ad


def analytic(fn, tensors):
    """Gradients of scalar fn() w.r.t. tensors, via the tape."""
    for t in tensors:
        t.grad = None
    with ad.Tape() as tape:
        loss = fn()
    ad.backward(loss, tape)
    return [t.grad.astype(np.float64) if t.grad is not None else np.zeros(t.shape) for t in tensors]


def value(fn):
    with ad.no_grad():
        return fn().item()


def directional_probes(fn, tensors, n_probes, h, rng, grads=None):
    """Compare grad . v with (f(x + h v) - f(x - h v)) / 2h for random unit directions v.

    Returns the list of relative errors |a - n| / max(|a|, |n|).
    """
    grads = grads if grads is not None else analytic(fn, tensors)
    originals = [t.data.copy() for t in tensors]
    errs = []
    for _ in range(n_probes):
        dirs = [rng.standard_normal(t.shape) for t in tensors]
        norm = np.sqrt(sum((d * d).sum() for d in dirs))
        dirs = [d / norm for d in dirs]
        a = sum((g * d).sum() for g, d in zip(grads, dirs))
        vals = []
        for sign in (1, -1):
            for t, o, d in zip(tensors, originals, dirs):
                t.data = (o + sign * h * d).astype(o.dtype)
            vals.append(value(fn))
        for t, o in zip(tensors, originals):
            t.data = o.copy()
        n = (vals[0] - vals[1]) / (2 * h)
        errs.append(abs(a - n) / max(abs(a), abs(n), 1e-30))
    return errs


def signed_probes(fn, tensors, grads, n_probes, h, rng):
    """Probe along v = w * sign(grad), w ~ U(0, 1), normalized.

    The analytic directional derivative is then a sum of non-negative terms,
    so it cannot cancel to ~0; a component with a wrong sign or magnitude
    still shows up as a mismatch against the finite difference.
    """
    originals = [t.data.copy() for t in tensors]
    errs = []
    for _ in range(n_probes):
        dirs = [rng.uniform(size=t.shape) * np.sign(g) for t, g in zip(tensors, grads)]
        norm = np.sqrt(sum((d * d).sum() for d in dirs))
        if norm == 0:
            continue
        dirs = [d / norm for d in dirs]
        a = sum((g * d).sum() for g, d in zip(grads, dirs))
        vals = []
        for sign in (1, -1):
            for t, o, d in zip(tensors, originals, dirs):
                t.data = (o + sign * h * d).astype(o.dtype)
            vals.append(value(fn))
        for t, o in zip(tensors, originals):
            t.data = o.copy()
        n = (vals[0] - vals[1]) / (2 * h)
        errs.append(abs(a - n) / max(abs(a), abs(n), 1e-30))
    return errs


def coordinate_probes(fn, tensors, grads, h):
    """Per-entry central differences; returns max relative error over entries with a nonzero reference."""
    worst = 0.0
    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            o = flat[i]
            flat[i] = o + h
            up = value(fn)
            flat[i] = o - h
            down = value(fn)
            flat[i] = o
            n = (up - down) / (2 * h)
            a = g.reshape(-1)[i]
            scale = max(abs(a), abs(n))
            if scale > 1e-12:
                worst = max(worst, abs(a - n) / scale)
    return worst
