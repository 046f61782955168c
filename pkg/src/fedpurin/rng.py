"""Deterministic pseudo-randomness for the simulator.

Every stochastic choice in a run is driven by one of two seeded sources:

* a SplitMix64 stream (weight initialization and per-round batch shuffling),
* a NumPy PCG64 generator (synthetic data and Dirichlet partitioning).

All stream seeds are derived from the run seed with :func:`derive_seed`, so a
fixed ``(config, seed)`` pair reproduces a run bit for bit regardless of how
many clients or rounds it spans.

SplitMix64 (Steele, Lea & Flood): the 64-bit state advances by the golden
ratio constant 0x9E3779B97F4A7C15 and each output is the finalizer
``mix64(state)``. Uniform doubles take the top 53 bits of an output word.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_1 = 0xBF58476D1CE4E5B9
_MIX_2 = 0x94D049BB133111EB

# Stream tags for derive_seed; keep values stable, they define reproducibility.
STREAM_INIT = 1
STREAM_DATA = 2
STREAM_PARTITION = 3
STREAM_TRAIN = 4


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a 64-bit avalanche permutation."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _MIX_1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX_2) & MASK64
    return x ^ (x >> 31)


def derive_seed(root: int, *parts: int) -> int:
    """Fold integer tags (stream id, round, client id, ...) into a sub-seed.

    The fold is order-sensitive, so (round, client) and (client, round)
    produce unrelated streams.
    """
    h = root & MASK64
    for p in parts:
        h = mix64(h ^ ((p * _GOLDEN) & MASK64))
    return h


class SplitMix64:
    """Minimal deterministic generator; not for cryptographic use."""

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        return mix64(self._state)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        span = 1 << 64
        limit = span - span % n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
