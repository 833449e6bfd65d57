"""Self-organizing society: every agent carries a P string (what it can
extract from the others) and an N string (what the others extract from it),
plus a scalar fitness exchanged zero-sum through string matching.

Step cycle (one time step t):

    1. extractor assignment — for each agent j, one agent l(j) is picked
                              uniformly among those whose P string maximally
                              matches j's N string (self excluded)
    2. fitness exchange     — j pays q*_j/k, l(j) receives it (exactly
                              zero-sum per step)
    3. replacement          — F < 0 agents replaced with fresh random
                              strings and F = f0
    4. P-innovation         — each agent flips the P bit agreeing with the
                              fewest above-threshold N strings
    5. N-innovation         — each agent flips the N bit agreeing with the
                              most above-threshold P strings

Innovation flips are computed against the pre-step strings and applied
simultaneously; with both operators enabled they share the same snapshot.
Random draw order per step: extraction tie-breaks for agents in slot order,
then replacements in slot order (P bits then N bits), then P-innovation
tie-breaks, then N-innovation tie-breaks, each in slot order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bitstring import BitString
from .market import MatchThreshold
from .rng import Rng
from .stats import Histogram, integer_histogram, pairwise_hamming, value_histogram


@dataclass(frozen=True)
class SelfOrgParams:
    m_agents: int = 100
    k: int = 16
    f0: float = 10.0
    horizon: int = 5000
    p_innovation: bool = False
    n_innovation: bool = False
    threshold: MatchThreshold = field(default_factory=MatchThreshold)

    def validate(self) -> None:
        if self.m_agents < 2:
            raise ValueError("m_agents must be >= 2")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.f0 <= 0:
            raise ValueError("f0 must be > 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class Agent:
    id: int
    p: BitString
    n: BitString
    fitness: float


class SelfOrgState:
    """Mutable per-run state; one thread per run."""

    def __init__(self, params: SelfOrgParams, rng: Rng):
        params.validate()
        self.params = params
        self.rng = rng
        self.k = params.k
        self.t = 0
        m = params.m_agents
        self.P = np.array([rng.bits(self.k) for _ in range(m)], dtype=np.uint8)
        self.N = np.array([rng.bits(self.k) for _ in range(m)], dtype=np.uint8)
        self.F = np.full(m, params.f0, dtype=float)
        self.ids = np.arange(m, dtype=np.int64)
        self._next_id = m
        # match[i, j] = agreeing bits between P_i and N_j
        self.match = (self.P[:, None, :] == self.N[None, :, :]).sum(axis=2).astype(np.int64)
        self.extractor = np.full(m, -1, dtype=np.int64)
        self.qstar = np.zeros(m, dtype=np.int64)
        self.replacements = 0

    @property
    def agents(self) -> list[Agent]:
        return [Agent(int(self.ids[i]), BitString(self.P[i]), BitString(self.N[i]),
                      float(self.F[i])) for i in range(len(self.F))]

    @property
    def extractor_map(self) -> dict[int, int]:
        """agent id -> id of the agent extracting from it this step."""
        return {int(self.ids[j]): int(self.ids[e])
                for j, e in enumerate(self.extractor) if e >= 0}

    def new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def _refresh_agent(self, i: int) -> None:
        self.match[i, :] = (self.N == self.P[i][None, :]).sum(axis=1)
        self.match[:, i] = (self.P == self.N[i][None, :]).sum(axis=1)

    def _refresh_match(self) -> None:
        self.match = (self.P[:, None, :] == self.N[None, :, :]).sum(axis=2).astype(np.int64)


def assign_extractors(state: SelfOrgState) -> None:
    """Phase 1: fill state.extractor / state.qstar, agent slot order."""
    m = len(state.F)
    if m < 2:
        raise ValueError("need at least 2 agents")
    for j in range(m):
        col = state.match[:, j].copy()
        col[j] = -1  # self excluded
        q = col.max()
        ties = np.flatnonzero(col == q)
        state.qstar[j] = q
        state.extractor[j] = state.rng.pick(list(ties))


def fitness_step(state: SelfOrgState) -> None:
    """Phase 2: each agent pays q*_j/k to its extractor.  Zero-sum."""
    pay = state.qstar / state.k
    state.F -= pay
    np.add.at(state.F, state.extractor, pay)


def replace_negative(state: SelfOrgState) -> None:
    """Phase 3: F < 0 agents get fresh random strings and F = f0."""
    for i in np.flatnonzero(state.F < 0):
        state.P[i] = state.rng.bits(state.k)
        state.N[i] = state.rng.bits(state.k)
        state.F[i] = state.params.f0
        state.ids[i] = state.new_id()
        state._refresh_agent(int(i))
        state.replacements += 1


def _innovation_flips(own: np.ndarray, others: np.ndarray,
                      match_rows: np.ndarray, bar: int, rng: Rng,
                      best: bool) -> list[tuple[int, int]]:
    """Per-agent (slot, bit) flips against a pre-step snapshot.

    match_rows[i, j] is the match of agent i's own string with agent j's
    other-side string; candidates are the j != i with match >= bar.
    """
    flips = []
    m = own.shape[0]
    for i in range(m):
        row = match_rows[i].copy()
        row[i] = -1
        cand = np.flatnonzero(row >= bar)
        if cand.size == 0:
            continue
        agree = (others[cand] == own[i][None, :]).sum(axis=0)
        goal = agree.max() if best else agree.min()
        ties = np.flatnonzero(agree == goal)
        flips.append((i, int(rng.pick(list(ties)))))
    return flips


def p_innovation_step(state: SelfOrgState,
                      snapshot: Optional[tuple[np.ndarray, np.ndarray]] = None) -> None:
    """Phase 4: flip each agent's worst-agreeing P bit against the N strings
    matching it at or above the threshold (all agents innovate)."""
    P0, N0 = snapshot if snapshot is not None else (state.P.copy(), state.N.copy())
    bar = state.params.threshold.resolve(state.k)
    match0 = (P0[:, None, :] == N0[None, :, :]).sum(axis=2)
    for i, pos in _innovation_flips(P0, N0, match0, bar, state.rng, best=False):
        state.P[i, pos] ^= 1
    state._refresh_match()


def n_innovation_step(state: SelfOrgState,
                      snapshot: Optional[tuple[np.ndarray, np.ndarray]] = None) -> None:
    """Phase 5: flip each agent's best-agreeing N bit against the P strings
    matching it at or above the threshold (minimizes being extracted)."""
    P0, N0 = snapshot if snapshot is not None else (state.P.copy(), state.N.copy())
    bar = state.params.threshold.resolve(state.k)
    match0 = (N0[:, None, :] == P0[None, :, :]).sum(axis=2)
    for i, pos in _innovation_flips(N0, P0, match0, bar, state.rng, best=True):
        state.N[i, pos] ^= 1
    state._refresh_match()


@dataclass
class SelfOrgRunRecord:
    seed: int
    fitness_t0: list[float]
    fitness_tT: list[float]
    p_distances_t0: Histogram
    p_distances_tT: Histogram
    n_distances_t0: Histogram
    n_distances_tT: Histogram
    replacements: int
    fitness_hist_t0: Histogram = None  # type: ignore[assignment]
    fitness_hist_tT: Histogram = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.fitness_hist_t0 is None:
            lo = min(min(self.fitness_t0), min(self.fitness_tT))
            hi = max(max(self.fitness_t0), max(self.fitness_tT))
            self.fitness_hist_t0 = value_histogram(self.fitness_t0, 20, lo, hi)
            self.fitness_hist_tT = value_histogram(self.fitness_tT, 20, lo, hi)

    @property
    def fitness_std_t0(self) -> float:
        return float(np.std(self.fitness_t0))

    @property
    def fitness_std_tT(self) -> float:
        return float(np.std(self.fitness_tT))

    @property
    def fitness_range_tT(self) -> float:
        return float(max(self.fitness_tT) - min(self.fitness_tT))

    @staticmethod
    def _hist_mean(h: Histogram) -> float:
        centers = (np.asarray(h.bin_edges[:-1]) + np.asarray(h.bin_edges[1:])) / 2
        return float((centers * np.asarray(h.counts)).sum() / max(1, h.total))

    @property
    def p_diversity_mean_t0(self) -> float:
        return self._hist_mean(self.p_distances_t0)

    @property
    def p_diversity_mean_tT(self) -> float:
        return self._hist_mean(self.p_distances_tT)

    @property
    def n_diversity_mean_t0(self) -> float:
        return self._hist_mean(self.n_distances_t0)

    @property
    def n_diversity_mean_tT(self) -> float:
        return self._hist_mean(self.n_distances_tT)

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "fitness_t0": self.fitness_t0,
            "fitness_tT": self.fitness_tT,
            "fitness_hist_t0": self.fitness_hist_t0.to_json_dict(),
            "fitness_hist_tT": self.fitness_hist_tT.to_json_dict(),
            "p_distances_t0": self.p_distances_t0.to_json_dict(),
            "p_distances_tT": self.p_distances_tT.to_json_dict(),
            "n_distances_t0": self.n_distances_t0.to_json_dict(),
            "n_distances_tT": self.n_distances_tT.to_json_dict(),
            "replacements": self.replacements,
        }


def _diversity(strings: np.ndarray, k: int) -> Histogram:
    return integer_histogram(pairwise_hamming(strings), k)


def run_selforg(params: SelfOrgParams, seed: int) -> SelfOrgRunRecord:
    """Execute T steps and record the before/after histograms."""
    params.validate()
    state = SelfOrgState(params, Rng(seed))
    fitness_t0 = [float(f) for f in state.F]
    p_div_t0 = _diversity(state.P, state.k)
    n_div_t0 = _diversity(state.N, state.k)
    both = params.p_innovation and params.n_innovation
    for t in range(params.horizon):
        state.t = t
        assign_extractors(state)
        fitness_step(state)
        replace_negative(state)
        if both:
            snap = (state.P.copy(), state.N.copy())
            p_innovation_step(state, snap)
            n_innovation_step(state, snap)
        elif params.p_innovation:
            p_innovation_step(state)
        elif params.n_innovation:
            n_innovation_step(state)
    return SelfOrgRunRecord(
        seed=seed,
        fitness_t0=fitness_t0,
        fitness_tT=[float(f) for f in state.F],
        p_distances_t0=p_div_t0,
        p_distances_tT=_diversity(state.P, state.k),
        n_distances_t0=n_div_t0,
        n_distances_tT=_diversity(state.N, state.k),
        replacements=state.replacements,
    )
