"""Seeded xorshift64* PRNG.

Every stochastic choice in the package (parameter init, corpus shuffling,
synthetic data, pseudo recommendations) draws from this generator so that a
fixed seed gives bitwise-identical runs, independent of numpy's RNG internals.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_MULT = 2685821657736338717


def _splitmix64(x):
    # used only to spread the user seed into a non-zero 64-bit state
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class Rng:
    """xorshift64* generator with uniform/normal/int helpers."""

    def __init__(self, seed=0):
        self.seed = int(seed)
        self._state = _splitmix64(self.seed) or 0x9E3779B97F4A7C15
        self._gauss_cache = None

    def next_u64(self):
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * _MULT) & _MASK64

    def uniform(self):
        """One double in [0, 1)."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform_array(self, shape, low=0.0, high=1.0):
        n = int(np.prod(shape)) if shape else 1
        vals = np.empty(n, dtype=np.float64)
        for i in range(n):
            vals[i] = self.uniform()
        return (low + (high - low) * vals).reshape(shape)

    def normal(self):
        """One standard normal draw (Box-Muller, cached pair)."""
        if self._gauss_cache is not None:
            z = self._gauss_cache
            self._gauss_cache = None
            return z
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        r = np.sqrt(-2.0 * np.log(u1))
        self._gauss_cache = r * np.sin(2.0 * np.pi * u2)
        return r * np.cos(2.0 * np.pi * u2)

    def randint(self, n):
        """Integer in [0, n)."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        return min(int(self.uniform() * n), n - 1)

    def shuffle(self, seq):
        """In-place Fisher-Yates."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def derive(self, label):
        """Independent child stream, deterministic in (seed, label)."""
        h = 1469598103934665603
        for ch in str(label).encode("utf-8"):
            h = ((h ^ ch) * 1099511628211) & _MASK64
        return Rng((self._state ^ h) & _MASK64)
