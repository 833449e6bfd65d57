"""Histograms, diversity metrics, Pearson correlation and bootstrap CIs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bitstring import BitString


@dataclass(frozen=True)
class Histogram:
    """Binned counts; len(counts) == len(bin_edges) - 1."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != len(self.bin_edges) - 1:
            raise ValueError("counts/bin_edges length mismatch")
        if any(c < 0 for c in self.counts):
            raise ValueError("negative histogram count")

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def to_json_dict(self) -> dict:
        return {"bin_edges": list(self.bin_edges), "counts": list(self.counts)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Histogram":
        return cls(tuple(float(e) for e in d["bin_edges"]),
                   tuple(int(c) for c in d["counts"]))


def value_histogram(values: Sequence[float], bins: int = 20,
                    lo: Optional[float] = None, hi: Optional[float] = None) -> Histogram:
    """Equal-width histogram over the value range (expanded when degenerate)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
        return Histogram(tuple(edges), tuple([0] * bins))
    lo = float(v.min()) if lo is None else lo
    hi = float(v.max()) if hi is None else hi
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return Histogram(tuple(float(e) for e in edges), tuple(int(c) for c in counts))


def integer_histogram(values: Sequence[int], max_value: int) -> Histogram:
    """Unit bins [0, max_value]; bin i covers the integer value i."""
    v = np.asarray(values, dtype=int)
    counts = np.bincount(v, minlength=max_value + 1)
    edges = np.arange(max_value + 2, dtype=float)
    return Histogram(tuple(edges), tuple(int(c) for c in counts))


def pairwise_hamming(matrix: np.ndarray) -> np.ndarray:
    """All m(m-1)/2 unordered pairwise Hamming distances of the row strings."""
    m = matrix.shape[0]
    iu = np.triu_indices(m, k=1)
    diff = matrix[iu[0]] != matrix[iu[1]]
    return diff.sum(axis=1)


def diversity_histogram(strings: Sequence[BitString]) -> Histogram:
    """Histogram of pairwise Hamming distances, integer bins [0..k]."""
    if len(strings) < 2:
        raise ValueError("diversity_histogram needs at least 2 strings")
    k = strings[0].k
    if any(s.k != k for s in strings):
        raise ValueError("mixed string lengths")
    matrix = np.array([s.bits for s in strings], dtype=np.uint8)
    return integer_histogram(pairwise_hamming(matrix), k)


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Pearson product-moment r, or None when undefined (constant series)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("series length mismatch")
    if x.size < 3:
        raise ValueError(f"need at least 3 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        return None
    r = float((dx * dy).sum() / (sx * sy))
    return max(-1.0, min(1.0, r))


def bootstrap_mean_ci(values: Sequence[float], seed: int,
                      n_resamples: int = 10_000,
                      level: float = 0.95) -> tuple[float, float]:
    """Seeded percentile bootstrap CI for the mean."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty sample")
    if v.size == 1:
        return float(v[0]), float(v[0])
    g = np.random.default_rng(seed)
    idx = g.integers(0, v.size, size=(n_resamples, v.size))
    means = v[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def bootstrap_mean_diff_ci(a: Sequence[float], b: Sequence[float], seed: int,
                           n_resamples: int = 10_000,
                           level: float = 0.95) -> tuple[float, float]:
    """Seeded bootstrap CI for mean(a) - mean(b), independent samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    g = np.random.default_rng(seed)
    ia = g.integers(0, a.size, size=(n_resamples, a.size))
    ib = g.integers(0, b.size, size=(n_resamples, b.size))
    diffs = a[ia].mean(axis=1) - b[ib].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(diffs, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def bootstrap_pearson_ci(x: Sequence[float], y: Sequence[float], seed: int,
                         n_resamples: int = 10_000,
                         level: float = 0.95) -> Optional[tuple[float, float]]:
    """Seeded pair-resampling bootstrap CI for Pearson r.

    Resamples that happen to be constant in either coordinate are dropped;
    returns None when every resample is degenerate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need equal-length series with at least 3 points")
    g = np.random.default_rng(seed)
    idx = g.integers(0, x.size, size=(n_resamples, x.size))
    xs = x[idx]
    ys = y[idx]
    dx = xs - xs.mean(axis=1, keepdims=True)
    dy = ys - ys.mean(axis=1, keepdims=True)
    sx = np.sqrt((dx * dx).sum(axis=1))
    sy = np.sqrt((dy * dy).sum(axis=1))
    ok = (sx > 0) & (sy > 0)
    if not ok.any():
        return None
    r = (dx * dy).sum(axis=1)[ok] / (sx[ok] * sy[ok])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(r, [alpha, 1.0 - alpha])
    return float(lo), float(hi)
