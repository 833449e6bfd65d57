"""Fixed-length bit strings and the matching arithmetic shared by both models.

A BitString is immutable after construction.  In every file format bit
strings appear as ASCII '0'/'1' text, most significant position first.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

from .rng import Rng


class BitString:
    """Immutable binary word of fixed length k."""

    __slots__ = ("_bits",)

    def __init__(self, bits: Iterable[int]):
        bits = tuple(int(b) for b in bits)
        if len(bits) < 1:
            raise ValueError("bit string length must be >= 1")
        if any(b not in (0, 1) for b in bits):
            raise ValueError("every bit must be 0 or 1")
        self._bits = bits

    @classmethod
    def from_text(cls, text: str) -> "BitString":
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a bit string: {text!r}")
        return cls(int(c) for c in text)

    @property
    def bits(self) -> tuple[int, ...]:
        return self._bits

    @property
    def k(self) -> int:
        return len(self._bits)

    def __len__(self) -> int:
        return len(self._bits)

    def __iter__(self) -> Iterator[int]:
        return iter(self._bits)

    def __getitem__(self, pos: int) -> int:
        return self._bits[pos]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BitString) and self._bits == other._bits

    def __hash__(self) -> int:
        return hash(self._bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self._bits)

    def __repr__(self) -> str:
        return f"BitString({self})"

    def flip(self, pos: int) -> "BitString":
        """Copy with the bit at ``pos`` inverted."""
        if not 0 <= pos < len(self._bits):
            raise ValueError(f"position {pos} out of range for k={len(self._bits)}")
        b = list(self._bits)
        b[pos] ^= 1
        return BitString(b)


def _check_same_length(a: BitString, b: BitString) -> None:
    if a.k != b.k:
        raise ValueError(f"length mismatch: {a.k} != {b.k}")


def match_count(a: BitString, b: BitString) -> int:
    """Number of positions where a and b agree."""
    _check_same_length(a, b)
    return sum(x == y for x, y in zip(a.bits, b.bits))


def hamming(a: BitString, b: BitString) -> int:
    """Number of positions where a and b differ: k - match_count."""
    _check_same_length(a, b)
    return sum(x != y for x, y in zip(a.bits, b.bits))


def flip(a: BitString, pos: int) -> BitString:
    return a.flip(pos)


def random_string(k: int, rng: Rng) -> BitString:
    """Uniform random string; consumes exactly k draws from rng."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return BitString(rng.bits(k))


def majority_string(strings: Sequence[BitString], rng: Rng) -> BitString:
    """Per-position majority vote; exact ties resolved by a fair draw each."""
    if len(strings) == 0:
        raise ValueError("majority_string needs at least one string")
    k = strings[0].k
    if any(s.k != k for s in strings):
        raise ValueError("mixed string lengths")
    half = len(strings) / 2
    out = []
    for pos in range(k):
        ones = sum(s[pos] for s in strings)
        if ones > half:
            out.append(1)
        elif ones < half:
            out.append(0)
        else:
            out.append(rng.bit())
    return BitString(out)
