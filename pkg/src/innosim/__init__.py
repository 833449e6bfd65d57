"""Deterministic bit-string agent-based simulator: a producers/consumers
market with innovation operators, a self-organizing P/N-string society,
and a seeded Monte Carlo experiment harness."""

from .bitstring import BitString, flip, hamming, majority_string, match_count, random_string
from .rng import Rng, derive_seed
from .market import (InnovationConfig, InnovationMode, InnovatorCount,
                     MarketParams, MatchThreshold, ProducerPolicy,
                     ThresholdKind, run_market)
from .selforg import SelfOrgParams, run_selforg
from .harness import ScenarioConfig, builtin_catalog, run_batch_records, summarize

__all__ = [
    "BitString", "Rng", "derive_seed",
    "match_count", "hamming", "flip", "random_string", "majority_string",
    "MarketParams", "InnovationConfig", "InnovationMode", "InnovatorCount",
    "MatchThreshold", "ThresholdKind", "ProducerPolicy", "run_market",
    "SelfOrgParams", "run_selforg",
    "ScenarioConfig", "builtin_catalog", "run_batch_records", "summarize",
]

__version__ = "0.1.0"
