"""Seeded random streams.

Uniforms come from numpy's PCG64 (128-bit state). Gaussians are produced with
Box-Muller over that uniform stream, consuming uniforms in pairs, so the
normal draws depend only on the seed and the order of calls.
"""

import numpy as np

ALGORITHM = "PCG64+BoxMuller"

_MASK64 = (1 << 64) - 1


def _splitmix64(z):
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed, *keys):
    """Mix a master seed with integer/string keys: ``seed XOR hash(keys)``."""
    h = 0
    for key in keys:
        if isinstance(key, str):
            key = int.from_bytes(key.encode(), "little")
        h = _splitmix64(h ^ (int(key) & _MASK64))
    return (int(seed) & _MASK64) ^ h


class Stream:
    """A reproducible stream of uniforms and Box-Muller normals."""

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *keys):
        return Stream(derive_seed(self.seed, *keys))

    def uniform(self, shape=None, low=0.0, high=1.0):
        u = self._gen.random(shape)
        return low + (high - low) * u

    def integers(self, low, high, shape=None):
        """Integers in the closed range [low, high]."""
        return self._gen.integers(low, high, size=shape, endpoint=True)

    def permutation(self, n):
        return self._gen.permutation(n)

    def normal(self, shape, dtype=np.float32):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u = self._gen.random((m, 2))
        # 1 - u lies in (0, 1], keeps the log finite
        rad = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        z = np.empty(2 * m)
        z[0::2] = rad * np.cos(ang)
        z[1::2] = rad * np.sin(ang)
        return z[:n].reshape(shape).astype(dtype)
