"""Seedable uniform and Gumbel noise.

Every estimator pulls its randomness from a :class:`NoiseSource`, so a run is a
deterministic function of its seed and two estimators can be fed identical
noise for common-random-number comparisons.
"""
from __future__ import annotations

import numpy as np

_TINY = np.nextafter(0.0, 1.0)
_BELOW_ONE = np.nextafter(1.0, 0.0)


class NoiseSource:
    """Counter-based (Philox) stream of open-interval uniforms.

    The Philox key is ``(seed, stream)``, so distinct streams under one seed are
    independent.  ``stream_position`` counts the uniforms handed out so far.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        self.stream = int(stream) & 0xFFFF_FFFF_FFFF_FFFF
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self.stream_position = 0

    def __repr__(self):
        return f"NoiseSource(seed={self.seed}, stream={self.stream}, stream_position={self.stream_position})"

    def uniforms(self, size) -> np.ndarray:
        u = self._gen.random(size)
        self.stream_position += int(np.prod(size))
        return np.clip(u, _TINY, _BELOW_ONE)

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def gumbel(self, size) -> np.ndarray:
        return gumbel_from_uniform(self.uniforms(size))


def gumbel_from_uniform(u):
    """Standard Gumbel via the double-log transform ``-log(-log u)``."""
    return -np.log(-np.log(u))


def uniform(source: NoiseSource) -> float:
    return source.uniform()


def sample_gumbel_vector(source: NoiseSource, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"need at least one category, got n={n}")
    return source.gumbel(n)


def replicate_source(base_seed: int, index: int, stream: int = 0) -> NoiseSource:
    """Independent source for replicate ``index`` (seed = base + index)."""
    return NoiseSource(base_seed + index, stream)
