"""Counter-based Gaussian noise.

Every normal variate is a pure function of ``(seed, stream, step, counter)``,
so a particle update can be computed by any worker in any order and still see
the same increment.  Mixing uses the SplitMix64 finalizer; normals come from
the inverse CDF.
"""

import hashlib

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# stream tags
NOISE = 1
INITIAL = 2
SAMPLING = 3


def splitmix64(z):
    """SplitMix64 output function applied elementwise to a uint64 array."""
    z = np.atleast_1d(np.asarray(z, dtype=np.uint64)) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed, *tags):
    """Deterministically derive a child 64-bit seed from ``seed`` and tags."""
    payload = repr((int(seed) & _MASK64,) + tuple(tags)).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


class CounterNormal:
    """Stateless source of standard normals keyed by step and counter.

    >>> g = CounterNormal(7)
    >>> bool(np.all(g.normals(3, np.arange(4)) == g.normals(3, np.arange(4))))
    True
    """

    def __init__(self, seed, stream=NOISE):
        self.seed = int(seed) & _MASK64
        key = splitmix64(np.uint64(self.seed)) ^ splitmix64(np.uint64(stream))
        self._key = splitmix64(key)[0]

    def _step_key(self, step):
        return splitmix64(self._key ^ splitmix64(np.uint64(int(step) & _MASK64))[0])[0]

    def uniforms_mixed(self, step, mixed_counters):
        """Uniforms from counters already passed through :func:`splitmix64`."""
        bits = splitmix64(self._step_key(step) ^ mixed_counters) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * 2.0**-53

    def uniforms(self, step, counters):
        """Open-interval uniforms in (0, 1), one per counter."""
        return self.uniforms_mixed(step, splitmix64(counters))

    @staticmethod
    def to_normal(u):
        return ndtri(u)

    def normals(self, step, counters):
        return ndtri(self.uniforms(step, counters))
