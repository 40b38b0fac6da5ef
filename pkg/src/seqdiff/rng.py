"""Seeded random streams.

Every stochastic piece of the library (noise injection, step sampling,
dropout, batch shuffling) draws from an RngStream, so any result is a pure
function of (seed, derivation key, call sequence). Parallel consumers must
not share a stream; they take derived child streams instead.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RngStream:
    """A deterministic PCG64 stream identified by a seed plus a derivation key.

    Two streams built from equal (seed, key) pairs produce identical draws.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed) & _MASK64
        self._key = tuple(int(k) & _MASK64 for k in _key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, *self._key]))
        )

    def derive(self, k: int) -> "RngStream":
        """Child stream for worker/sequence `k`; independent of this stream's state."""
        return RngStream(self.seed, self._key + (k,))

    def gaussian(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """I.i.d. normal draws; std=0 yields a constant array equal to `mean`."""
        if std < 0:
            raise ValueError(f"std must be >= 0, got {std}")
        return mean + std * self._gen.standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in the half-open range [low, high)."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self._key})"
