"""Deterministic, seedable randomness for reproducible simulation runs.

The generator is CPython's Mersenne Twister (``random.Random``), which yields
an identical draw sequence for a given seed on every platform and every
Python version >= 3.2.  The algorithm choice is frozen: swapping it would
silently invalidate every recorded seed, so treat it as part of the on-disk
format.

One ``Rng`` instance belongs to exactly one simulation run.  Never share an
instance between concurrently executing runs.

Tie-break contract (relied on by the replay oracles): a random draw is
consumed only when there is an actual choice to make.  ``pick`` over a
single-element list consumes nothing.
"""

from __future__ import annotations

import random
from typing import Sequence, TypeVar

MASK64 = (1 << 64) - 1

_SM64_GAMMA = 0x9E3779B97F4A7C15
_SM64_MIX1 = 0xBF58476D1CE4E5B9
_SM64_MIX2 = 0x94D049BB133111EB

T = TypeVar("T")


class Rng:
    """Single-owner deterministic random source."""

    __slots__ = ("seed", "_r")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._r = random.Random(self.seed)

    def bit(self) -> int:
        """One fair bit; exactly one draw."""
        return self._r.getrandbits(1)

    def bits(self, k: int) -> tuple[int, ...]:
        """``k`` independent fair bits; advances the state by exactly k draws."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        g = self._r.getrandbits
        return tuple(g(1) for _ in range(k))

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return self._r.randrange(n)

    def pick(self, items: Sequence[T]) -> T:
        """Uniform choice.  Consumes a draw only when len(items) > 1."""
        if len(items) == 0:
            raise ValueError("cannot pick from an empty sequence")
        if len(items) == 1:
            return items[0]
        return items[self._r.randrange(len(items))]


def splitmix64(z: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    z &= MASK64
    z = (z ^ (z >> 30)) * _SM64_MIX1 & MASK64
    z = (z ^ (z >> 27)) * _SM64_MIX2 & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, run_index: int) -> int:
    """Per-run seed from (base_seed, run_index).

    Uses the SplitMix64 counter scheme: seed_r = mix(base + (r + 1) * gamma).
    The finalizer is bijective, so for a fixed base all run seeds are
    pairwise distinct.  Extending a batch with more runs never changes the
    seeds of existing runs.
    """
    if run_index < 0:
        raise ValueError(f"run_index must be >= 0, got {run_index}")
    return splitmix64((base_seed + (run_index + 1) * _SM64_GAMMA) & MASK64)
