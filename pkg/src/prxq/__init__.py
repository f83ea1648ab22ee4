"""Probabilistic threshold keyword queries over probabilistic XML."""

from .bounds import BoundPair, can_emit, can_prune, compute_bounds, global_bounds, update_lower, update_upper
from .engine import (ApproxParams, KeywordDistribution, QuasiResult, baseline_query, combine_prob,
                     emit_and_kill, pi_query)
from .pi_index import KIIndex, NodeTermProfile, Part, PIIndex, build_indexes, load_indexes, save_indexes
from .prxml import PrxmlDocument, generate_prxml, parse_prxml, path_probability, serialize_prxml
from .worlds import enumerate_worlds, prslca_global, quasi_oracle

__all__ = [
    "ApproxParams", "BoundPair", "KIIndex", "KeywordDistribution", "NodeTermProfile", "PIIndex",
    "Part", "PrxmlDocument", "QuasiResult", "baseline_query", "build_indexes", "can_emit",
    "can_prune", "combine_prob", "compute_bounds", "emit_and_kill", "enumerate_worlds",
    "generate_prxml", "global_bounds", "load_indexes", "parse_prxml", "path_probability",
    "pi_query", "prslca_global", "quasi_oracle", "save_indexes", "serialize_prxml",
    "update_lower", "update_upper",
]

__version__ = "0.1.0"
