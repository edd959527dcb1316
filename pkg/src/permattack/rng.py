"""Deterministic pseudorandom primitives used for corpus generation.

Corpora must be reproducible byte-exactly from (seed, index) alone, on any
platform, so randomness for datasets comes from SplitMix64 — a published
64-bit-state generator (Steele, Lea & Flood, 2014; the seeding generator of
java.util.SplittableRandom) — rather than from an implementation-defined
library default.

Scheme, fixed for all corpora:

* ``mix64(x)`` is the SplitMix64 finalizer.
* the seed of record ``i`` of a corpus with seed ``s`` is
  ``mix64(s ^ mix64(i + 1))``,
* the k-th 64-bit draw of a record stream with seed ``r`` is
  ``mix64(r + (k + 1) * GOLDEN)`` where ``GOLDEN = 0x9E3779B97F4A7C15``.

Everything here exists in a scalar and a vectorised (numpy uint64) form; the
two are bit-identical, which is what lets record generation fan out across
workers without affecting output bytes.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorised :func:`mix64` over a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        x ^= x >> np.uint64(30)
        x *= np.uint64(0xBF58476D1CE4E5B9)
        x ^= x >> np.uint64(27)
        x *= np.uint64(0x94D049BB133111EB)
        x ^= x >> np.uint64(31)
    return x


def record_seed(corpus_seed: int, index: int) -> int:
    """Seed of record ``index`` within a corpus seeded with ``corpus_seed``."""
    return mix64((corpus_seed ^ mix64((index + 1) & MASK64)) & MASK64)


def record_seed_array(corpus_seed: int, indices: np.ndarray) -> np.ndarray:
    """Vectorised :func:`record_seed` over an index array."""
    idx = indices.astype(np.uint64, copy=False)
    with np.errstate(over="ignore"):
        inner = mix64_array(idx + np.uint64(1))
        return mix64_array(inner ^ np.uint64(corpus_seed & MASK64))


def stream_draw(seed: int, k: int) -> int:
    """The k-th 64-bit value of the SplitMix64 stream seeded with ``seed``."""
    return mix64((seed + (k + 1) * GOLDEN) & MASK64)


def stream_draw_array(seeds: np.ndarray, k: int) -> np.ndarray:
    """Vectorised :func:`stream_draw`: one draw index across many streams."""
    s = seeds.astype(np.uint64, copy=False)
    with np.errstate(over="ignore"):
        return mix64_array(s + np.uint64(((k + 1) * GOLDEN) & MASK64))


class SplitMix64:
    """Sequential SplitMix64 stream (scalar use: shuffles, GA, dropout seeds)."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN) & MASK64
        return mix64(self._state)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (MASK64 + 1) - ((MASK64 + 1) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def next_unit(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def permutation(n: int, seed: int) -> np.ndarray:
    """Deterministic permutation of [0, n) from a 64-bit seed.

    Sorts per-index SplitMix64 keys (ties broken by index), so it is
    vectorised and identical across platforms and worker counts.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    keys = stream_draw_array(record_seed_array(seed, np.arange(n, dtype=np.uint64)), 0)
    return np.argsort(keys, kind="stable").astype(np.int64)
