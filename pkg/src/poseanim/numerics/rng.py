"""Seeded random streams.

Backed by numpy's Philox-4x64 counter-based bit generator, keyed through
``SeedSequence(seed)``.  Philox output for a given key and counter is fixed
by its published definition, so integer and uniform streams are portable
across platforms; normal variates go through numpy's ziggurat sampler, which
is bit-stable across platforms for a given numpy release.

Independent sub-streams come from :meth:`Rng.fork`, which derives a child key
from ``(seed, *path)`` - forking never consumes from the parent stream.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class Rng:
    def __init__(self, seed: int, path: Sequence[int] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def fork(self, *key: int) -> Rng:
        return Rng(self.seed, self.path + tuple(key))

    @property
    def counter(self) -> np.ndarray:
        return self._gen.bit_generator.state["state"]["counter"].copy()

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal(shape) * std

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, n: int, p: Sequence[float]) -> int:
        return int(self._gen.choice(n, p=np.asarray(p, dtype=np.float64)))

    def subset(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``, sorted."""
        return np.sort(self._gen.choice(n, size=k, replace=False))

    def derive_seed(self) -> int:
        """A fresh 63-bit seed drawn from this stream."""
        return int(self._gen.integers(0, 2**63))
