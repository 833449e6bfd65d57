"""Producers-and-consumers market: exchange dynamics, death/replacement
policies, the four innovation operators and the efficiency rates.

Step cycle (one time step t):

    1. supplier selection   — every consumer picks, uniformly at random,
                              one producer among those with maximal
                              (bonus-augmented) matching
    2. exchange             — S_j += q*/k - ac ; C_i += sum_clients q*/k - ap
                              (histories appended here)
    3. deaths/replacements  — S < 0 consumers replaced; C < 0 producers
                              die (NoReplace) or are replaced (ReplaceRandom)
    4. innovation           — from t_innov on; innovator set chosen and
                              frozen at t == t_innov

Random draw order within a step is part of the replay contract:
supplier tie-breaks for consumers in slot order, then consumer
replacements in slot order (k bit draws each), then producer
replacements in slot order, then innovation operators in innovator slot
order.  A draw is consumed only when there is an actual tie or a fresh
string to generate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .bitstring import BitString, match_count
from .rng import Rng


class ProducerPolicy(str, Enum):
    NO_REPLACE = "no_replace"
    REPLACE_RANDOM = "replace_random"


class InnovationMode(str, Enum):
    NONE = "none"
    MOI = "moi"           # producer flips product bit toward close consumers
    PROCESS = "process"   # producer gets a fixed matching bonus
    PRODUCT = "product"   # producer rebuilds product from a consumer cluster
    CAP = "cap"           # consumer flips need bit toward close products


class InnovatorCount(str, Enum):
    ONE = "one"
    RANDOM_AMONG_POOREST = "random_among_poorest"


class ThresholdKind(str, Enum):
    ABSOLUTE_COUNT = "absolute_count"
    FRACTION_OF_K = "fraction_of_k"
    ABOVE_CHANCE = "above_chance"


@dataclass(frozen=True)
class MatchThreshold:
    """Match-count bar for 'close enough' agents, resolvable per k."""

    kind: ThresholdKind = ThresholdKind.ABOVE_CHANCE
    value: float = 1.0

    def resolve(self, k: int) -> int:
        if self.kind is ThresholdKind.ABSOLUTE_COUNT:
            bar = math.ceil(self.value)
        elif self.kind is ThresholdKind.FRACTION_OF_K:
            bar = math.ceil(self.value * k)
        elif self.kind is ThresholdKind.ABOVE_CHANCE:
            bar = math.ceil(k / 2 + self.value)
        else:  # pragma: no cover
            raise ValueError(f"unknown threshold kind {self.kind}")
        return max(0, min(k, bar))


@dataclass(frozen=True)
class InnovationConfig:
    mode: InnovationMode = InnovationMode.NONE
    innovator_count: InnovatorCount = InnovatorCount.ONE
    threshold: MatchThreshold = MatchThreshold()
    process_delta: float = 0.5


@dataclass(frozen=True)
class MarketParams:
    n_producers: int = 100
    n_consumers: int = 100
    k: int = 16
    ac: float = 0.5
    ap: float = 5.0
    c0: float = 10.0
    s0: float = 10.0
    producer_policy: ProducerPolicy = ProducerPolicy.NO_REPLACE
    innovation: InnovationConfig = field(default_factory=InnovationConfig)
    t_innov: int = 250
    t_end: int = 1000

    def validate(self) -> None:
        for name in ("n_producers", "n_consumers", "k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("ac", "ap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("c0", "s0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not self.t_innov < self.t_end:
            raise ValueError("t_innov must be < t_end")
        if self.t_innov < 0:
            raise ValueError("t_innov must be >= 0")
        if self.innovation.process_delta < 0:
            raise ValueError("process_delta must be >= 0")


@dataclass
class Consumer:
    id: int
    needs: BitString
    satisfaction: float


@dataclass
class Producer:
    id: int
    product: BitString
    cash: float
    alive: bool = True
    process_bonus: float = 0.0


class MarketState:
    """Mutable per-run state.  Confined to a single thread for its run.

    Bit strings live in uint8 matrices for speed; the ``producers`` /
    ``consumers`` properties expose dataclass snapshots.
    """

    def __init__(self, params: MarketParams, rng: Rng):
        params.validate()
        self.params = params
        self.rng = rng
        self.k = params.k
        self.t = 0
        np_, nc = params.n_producers, params.n_consumers
        self.products = np.array([rng.bits(self.k) for _ in range(np_)], dtype=np.uint8)
        self.needs = np.array([rng.bits(self.k) for _ in range(nc)], dtype=np.uint8)
        self.cash = np.full(np_, params.c0, dtype=float)
        self.sat = np.full(nc, params.s0, dtype=float)
        self.alive = np.ones(np_, dtype=bool)
        self.bonus = np.zeros(np_, dtype=float)
        self.producer_ids = np.arange(np_, dtype=np.int64)
        self.consumer_ids = np.arange(np_, np_ + nc, dtype=np.int64)
        self._next_id = np_ + nc
        # match[i, j] = number of agreeing bits between product i and needs j
        self.match = _match_matrix(self.products, self.needs)
        self.supplier = np.full(nc, -1, dtype=np.int64)  # producer slot per consumer
        self.cash_history: list[np.ndarray] = [self.cash.copy()]
        self.sat_history: list[np.ndarray] = [self.sat.copy()]

    def new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    @property
    def producers(self) -> list[Producer]:
        return [Producer(int(self.producer_ids[i]), BitString(self.products[i]),
                         float(self.cash[i]), bool(self.alive[i]), float(self.bonus[i]))
                for i in range(len(self.cash))]

    @property
    def consumers(self) -> list[Consumer]:
        return [Consumer(int(self.consumer_ids[j]), BitString(self.needs[j]),
                         float(self.sat[j]))
                for j in range(len(self.sat))]

    @property
    def supplier_map(self) -> dict[int, int]:
        """consumer id -> producer id for the current step."""
        return {int(self.consumer_ids[j]): int(self.producer_ids[s])
                for j, s in enumerate(self.supplier) if s >= 0}

    def n_alive(self) -> int:
        return int(self.alive.sum())

    def _refresh_producer(self, i: int) -> None:
        self.match[i, :] = _match_row(self.products[i], self.needs)

    def _refresh_consumer(self, j: int) -> None:
        self.match[:, j] = _match_row(self.needs[j], self.products)


def _match_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[:, None, :] == b[None, :, :]).sum(axis=2).astype(np.int64)


def _match_row(s: np.ndarray, pop: np.ndarray) -> np.ndarray:
    return (pop == s[None, :]).sum(axis=1).astype(np.int64)


# --- single-agent operations (contract surface; the engine uses the
#     vectorized equivalents below with the same tie-break ordering) ---

def augmented_match(p: Producer, c: Consumer) -> float:
    """Match count plus the producer's process-innovation bonus."""
    if not p.alive:
        raise ValueError("augmented_match on a dead producer")
    return match_count(p.product, c.needs) + p.process_bonus


class NoSupplierError(RuntimeError):
    """No alive producer is available to supply a consumer."""


def select_supplier(c: Consumer, producers: Sequence[Producer], rng: Rng) -> int:
    """Id of an alive producer with maximal augmented match; ties uniform."""
    best: list[int] = []
    best_val = -math.inf
    for p in producers:
        if not p.alive:
            continue
        v = augmented_match(p, c)
        if v > best_val:
            best_val, best = v, [p.id]
        elif v == best_val:
            best.append(p.id)
    if not best:
        raise NoSupplierError("no alive producer")
    return rng.pick(best)


def worst_bit(target: BitString, references: Sequence[BitString], rng: Rng) -> int:
    """Position where target agrees with the fewest references; ties uniform."""
    if len(references) == 0:
        raise ValueError("worst_bit needs at least one reference")
    refs = np.array([r.bits for r in references], dtype=np.uint8)
    tgt = np.array(target.bits, dtype=np.uint8)
    if refs.shape[1] != tgt.shape[0]:
        raise ValueError("length mismatch")
    agree = (refs == tgt[None, :]).sum(axis=0)
    ties = np.flatnonzero(agree == agree.min())
    return int(rng.pick(list(ties)))


def _extreme_bit(target_row: np.ndarray, ref_rows: np.ndarray, rng: Rng,
                 best: bool) -> int:
    """Vectorized worst/best-agreement bit with the same tie contract."""
    agree = (ref_rows == target_row[None, :]).sum(axis=0)
    goal = agree.max() if best else agree.min()
    ties = np.flatnonzero(agree == goal)
    return int(rng.pick(list(ties)))


# --- engine phases ---

def select_suppliers(state: MarketState) -> None:
    """Phase 1: fill state.supplier for every consumer, slot order."""
    if not state.alive.any():
        raise NoSupplierError("no alive producer")
    aug = state.match + state.bonus[:, None]
    aug[~state.alive, :] = -np.inf
    maxv = aug.max(axis=0)
    is_max = aug == maxv[None, :]
    n_ties = is_max.sum(axis=0)
    state.supplier[:] = is_max.argmax(axis=0)
    for j in np.flatnonzero(n_ties > 1):
        ties = np.flatnonzero(is_max[:, j])
        state.supplier[j] = state.rng.pick(list(ties))


def exchange_step(state: MarketState) -> None:
    """Phase 2: apply the satisfaction and cash updates, append histories."""
    p = state.params
    sup = state.supplier
    qstar = (state.match[sup, np.arange(len(sup))] + state.bonus[sup]) / state.k
    state.sat += qstar - p.ac
    income = np.zeros(len(state.cash))
    np.add.at(income, sup, qstar)
    state.cash[state.alive] += income[state.alive] - p.ap
    state.cash_history.append(state.cash.copy())
    state.sat_history.append(state.sat.copy())


def apply_deaths(state: MarketState) -> None:
    """Phase 3: replace strictly-negative agents (value 0 survives)."""
    p = state.params
    for j in np.flatnonzero(state.sat < 0):
        state.needs[j] = state.rng.bits(state.k)
        state.sat[j] = p.s0
        state.consumer_ids[j] = state.new_id()
        state._refresh_consumer(int(j))
    for i in np.flatnonzero(state.alive & (state.cash < 0)):
        if p.producer_policy is ProducerPolicy.NO_REPLACE:
            state.alive[i] = False
        else:
            state.products[i] = state.rng.bits(state.k)
            state.cash[i] = p.c0
            state.producer_ids[i] = state.new_id()
            state._refresh_producer(int(i))


def choose_innovators(state: MarketState, cfg: InnovationConfig, rng: Rng) -> list[int]:
    """Slot indices of the frozen innovator (or adapter) set.

    Producers for MOI/Process/Product, consumers for CAP.  'One' picks the
    poorest survivor; 'RandomAmongPoorest' draws m uniform in
    {1..n_surviving} and takes the m poorest.  Rank ties are broken at
    random (a draw is consumed only for actual ties).
    """
    if cfg.mode is InnovationMode.CAP:
        slots = list(range(len(state.sat)))
        wealth = state.sat
    else:
        slots = [int(i) for i in np.flatnonzero(state.alive)]
        wealth = state.cash
    if not slots:
        return []
    order = _rank_with_random_ties(slots, wealth, rng)
    if cfg.innovator_count is InnovatorCount.ONE:
        return order[:1]
    m = rng.below(len(order)) + 1
    return sorted(order[:m])


def _rank_with_random_ties(slots: list[int], wealth: np.ndarray, rng: Rng) -> list[int]:
    groups: dict[float, list[int]] = {}
    for s in slots:
        groups.setdefault(float(wealth[s]), []).append(s)
    out: list[int] = []
    for v in sorted(groups):
        g = groups[v]
        while g:
            i = rng.pick(list(range(len(g)))) if len(g) > 1 else 0
            out.append(g.pop(i))
    return out


def moi_step(state: MarketState, innovators: Sequence[int]) -> None:
    """Each innovating producer flips its product bit that disagrees with
    the most above-threshold consumers; no-op when the set is empty."""
    bar = state.params.innovation.threshold.resolve(state.k)
    for i in innovators:
        if not state.alive[i]:
            continue
        close = np.flatnonzero(state.match[i, :] >= bar)
        if close.size == 0:
            continue
        pos = _extreme_bit(state.products[i], state.needs[close], state.rng, best=False)
        state.products[i, pos] ^= 1
        state._refresh_producer(i)


def product_innovation_step(state: MarketState, innovator: int) -> None:
    """Rebuild the innovator's product as the majority needs of a greedy
    mutually-close consumer cluster; unchanged when no pair qualifies."""
    if not state.alive[innovator]:
        return
    bar = state.params.innovation.threshold.resolve(state.k)
    cluster = _greedy_cluster(state.needs, bar, state.rng)
    if len(cluster) < 2:
        return
    votes = state.needs[cluster]
    ones = votes.sum(axis=0)
    half = len(cluster) / 2
    for pos in range(state.k):
        if ones[pos] > half:
            state.products[innovator, pos] = 1
        elif ones[pos] < half:
            state.products[innovator, pos] = 0
        else:
            state.products[innovator, pos] = state.rng.bit()
    state._refresh_producer(innovator)


def _greedy_cluster(needs: np.ndarray, bar: int, rng: Rng) -> list[int]:
    """Seed with the max-mutual-match pair above bar, then add consumers
    that meet the bar against every current member, slot order."""
    mm = _match_matrix(needs, needs)
    np.fill_diagonal(mm, -1)
    best = mm.max()
    if best < bar:
        return []
    pairs = [(int(a), int(b)) for a, b in zip(*np.nonzero(mm == best)) if a < b]
    seed = rng.pick(pairs)
    members = [seed[0], seed[1]]
    for j in range(needs.shape[0]):
        if j in members:
            continue
        if all(mm[j, m] >= bar for m in members):
            members.append(j)
    return members


def cap_step(state: MarketState, adapters: Sequence[int]) -> None:
    """Each adapting consumer flips the need bit scoring worst against the
    above-threshold alive products; one bit per adapter per step."""
    bar = state.params.innovation.threshold.resolve(state.k)
    for j in adapters:
        close = np.flatnonzero(state.alive & (state.match[:, j] >= bar))
        if close.size == 0:
            continue
        pos = _extreme_bit(state.needs[j], state.products[close], state.rng, best=False)
        state.needs[j, pos] ^= 1
        state._refresh_consumer(j)


def efficiency_g(history: Sequence[float], t_innov: int, t_end: int) -> float:
    """Cash gain rate over the innovation window."""
    if len(history) <= t_end:
        raise ValueError("history does not cover t_end")
    return (history[t_end] - history[t_innov]) / (t_end - t_innov)


def efficiency_s(history: Sequence[float], t_innov: int, t_end: int) -> float:
    """Satisfaction gain rate over the innovation window."""
    return efficiency_g(history, t_innov, t_end)


# --- run driver ---

@dataclass
class StructureMetrics:
    """Environment-shape covariates captured at t_innov, before the first
    innovation is applied.  None marks a metric not applicable."""

    ip_nearest_consumer_dist: Optional[float] = None
    ip_nearest_competitor_dist: Optional[float] = None
    pre_innovation_gain_rate: Optional[float] = None
    mean_consumer_needs_dist: Optional[float] = None
    ic_mean_producer_dist: Optional[float] = None

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MarketRunRecord:
    seed: int
    metric_kind: str                     # "g" for producer-side, "s" for CAP
    efficiency: Optional[float]
    innovator_slots: list[int]
    innovator_ids: list[int]
    structure: StructureMetrics
    flags: list[str]
    n_alive_producers_end: int
    cash_history: Optional[list[list[float]]] = None
    sat_history: Optional[list[list[float]]] = None

    def to_json_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "metric_kind": self.metric_kind,
            "efficiency": self.efficiency,
            "innovator_slots": self.innovator_slots,
            "innovator_ids": self.innovator_ids,
            "structure": self.structure.to_json_dict(),
            "flags": self.flags,
            "n_alive_producers_end": self.n_alive_producers_end,
        }
        if self.cash_history is not None:
            d["cash_history"] = self.cash_history
            d["sat_history"] = self.sat_history
        return d


def structure_metrics(state: MarketState, innovators: Sequence[int],
                      mode: InnovationMode) -> StructureMetrics:
    """Snapshot of the Fig-style covariates at t == t_innov."""
    k = state.k
    out = StructureMetrics()
    needs_dists = pairwise_needs_distances(state.needs)
    out.mean_consumer_needs_dist = float(needs_dists.mean()) if needs_dists.size else None
    if not innovators:
        return out
    t_innov = state.params.t_innov
    if mode is InnovationMode.CAP:
        dists, gains = [], []
        alive = np.flatnonzero(state.alive)
        for j in innovators:
            if alive.size:
                dists.append(float((k - state.match[alive, j]).mean()))
            gains.append((state.sat_history[t_innov][j] - state.params.s0) / t_innov)
        out.ic_mean_producer_dist = float(np.mean(dists)) if dists else None
        out.pre_innovation_gain_rate = float(np.mean(gains))
    else:
        nearest_c, nearest_p, gains = [], [], []
        for i in innovators:
            nearest_c.append(float(k - state.match[i, :].max()))
            others = np.flatnonzero(state.alive)
            others = others[others != i]
            if others.size:
                d = (state.products[others] != state.products[i][None, :]).sum(axis=1)
                nearest_p.append(float(d.min()))
            gains.append((state.cash_history[t_innov][i] - state.params.c0) / t_innov)
        out.ip_nearest_consumer_dist = float(np.mean(nearest_c))
        out.ip_nearest_competitor_dist = float(np.mean(nearest_p)) if nearest_p else None
        out.pre_innovation_gain_rate = float(np.mean(gains))
    return out


def pairwise_needs_distances(needs: np.ndarray) -> np.ndarray:
    m = needs.shape[0]
    iu = np.triu_indices(m, k=1)
    return (needs[iu[0]] != needs[iu[1]]).sum(axis=1)


def run_market(params: MarketParams, seed: int,
               record_timeseries: bool = False) -> MarketRunRecord:
    """Execute t_end steps and assemble the run record."""
    params.validate()
    state = MarketState(params, Rng(seed))
    cfg = params.innovation
    innovators: list[int] = []
    innovator_ids: list[int] = []
    structure = StructureMetrics()
    flags: list[str] = []
    truncated = False

    for t in range(params.t_end):
        state.t = t
        if not state.alive.any():
            flags.append("all_producers_dead")
            truncated = True
            # freeze remaining history so the rate formulas stay defined
            for _ in range(t, params.t_end):
                state.cash_history.append(state.cash.copy())
                state.sat_history.append(state.sat.copy())
            break
        select_suppliers(state)
        exchange_step(state)
        apply_deaths(state)
        if cfg.mode is InnovationMode.NONE or t < params.t_innov:
            continue
        if t == params.t_innov:
            innovators = choose_innovators(state, cfg, state.rng)
            innovator_ids = [int(state.consumer_ids[s]) if cfg.mode is InnovationMode.CAP
                             else int(state.producer_ids[s]) for s in innovators]
            structure = structure_metrics(state, innovators, cfg.mode)
            if not innovators:
                flags.append("no_innovators")
            if cfg.mode is InnovationMode.PROCESS:
                for i in innovators:
                    state.bonus[i] = cfg.process_delta
        if cfg.mode is InnovationMode.MOI:
            moi_step(state, innovators)
        elif cfg.mode is InnovationMode.PRODUCT:
            for i in innovators:
                product_innovation_step(state, i)
        elif cfg.mode is InnovationMode.CAP:
            cap_step(state, innovators)
        # PROCESS innovates once, via the bonus set above

    metric_kind = "s" if cfg.mode is InnovationMode.CAP else "g"
    efficiency: Optional[float] = None
    if innovators:
        hist = state.sat_history if metric_kind == "s" else state.cash_history
        per = [efficiency_g([h[i] for h in hist], params.t_innov, params.t_end)
               for i in innovators]
        efficiency = float(np.mean(per))
        if metric_kind == "g":
            dead = [i for i in innovators if not state.alive[i]]
            if dead and params.producer_policy is ProducerPolicy.NO_REPLACE:
                flags.append("innovator_dead")
    if truncated:
        flags.append("truncated")

    return MarketRunRecord(
        seed=seed,
        metric_kind=metric_kind,
        efficiency=efficiency,
        innovator_slots=[int(s) for s in innovators],
        innovator_ids=innovator_ids,
        structure=structure,
        flags=flags,
        n_alive_producers_end=state.n_alive(),
        cash_history=[list(map(float, h)) for h in state.cash_history] if record_timeseries else None,
        sat_history=[list(map(float, h)) for h in state.sat_history] if record_timeseries else None,
    )
