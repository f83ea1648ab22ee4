"""Lower/upper bounds on a node's quasi-SLCA probability from its PI profile.

Two bound rules are available.

``sound`` (default)
    lb is the best product of keyword probabilities over exact parts and ub
    is the smallest per-keyword containment marginal, tightened by the sum
    over parts of each part's smallest keyword probability.  Both are
    provably on the correct side of the true containment probability.

``part``
    The single-part rule: among parts whose product is positive, the part
    with the highest minimum supplies both bounds (product as lb, minimum
    as ub).  It matches the classic per-part values but can
    understate the upper bound when several MUX branches each contribute
    all keywords, so the engine never uses it for pruning by default.

All functions here work on *local* bounds (conditional on the node
existing) unless the name says otherwise; global = path probability x local.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .pi_index import NodeTermProfile, Part
from .prxml import PROB_TOL, Dewey

RULES = ("sound", "part")


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


@dataclass
class BoundPair:
    lb: float
    ub: float
    node: Dewey = ()

    def __post_init__(self) -> None:
        self.ub = _clamp(self.ub)
        self.lb = min(_clamp(self.lb), self.ub)

    def scaled(self, factor: float) -> BoundPair:
        return BoundPair(self.lb * factor, self.ub * factor, self.node)


def _product(part: Part, q: Sequence[str]) -> float:
    return math.prod(part[k] for k in q)


def _minimum(part: Part, q: Sequence[str]) -> float:
    return min(part[k] for k in q)


def part_bounds(profile: NodeTermProfile, q: Sequence[str]) -> list[BoundPair]:
    """Per-part local (product, minimum) pairs, in part order."""
    return [BoundPair(_product(p, q), _minimum(p, q), profile.node) for p in profile.parts]


def select_part(profile: NodeTermProfile, q: Sequence[str]) -> int | None:
    """Index of the part with the highest minimum among parts with a positive
    product; ties go to the lowest index.  None when no part has all keywords."""
    best, best_min = None, -1.0
    for j, p in enumerate(profile.parts):
        if _product(p, q) > 0.0 and _minimum(p, q) > best_min:
            best, best_min = j, _minimum(p, q)
    return best


def compute_bounds(profile: NodeTermProfile, q: Sequence[str], rule: str = "sound") -> BoundPair:
    if not q:
        raise ValueError("query must not be empty")
    if rule not in RULES:
        raise ValueError(f"unknown bound rule {rule!r}")
    node = profile.node
    if any(profile.marginals.get(k, 0.0) <= 0.0 for k in q):
        return BoundPair(0.0, 0.0, node)
    if rule == "part":
        j = select_part(profile, q)
        if j is None:
            return BoundPair(0.0, 0.0, node)
        p = profile.parts[j]
        return BoundPair(_product(p, q), _minimum(p, q), node)

    exact = [p for p in profile.parts if not p.merged]
    lb = max((_product(p, q) for p in exact), default=0.0)
    ub = min(profile.marginals[k] for k in q)
    if len(exact) == len(profile.parts):
        ub = min(ub, sum(_minimum(p, q) for p in profile.parts))
    return BoundPair(lb, ub, node)


def global_bounds(profile: NodeTermProfile, q: Sequence[str], rule: str = "sound") -> BoundPair:
    return compute_bounds(profile, q, rule).scaled(profile.path_prob)


def can_prune(bounds: BoundPair, sigma: float) -> bool:
    return bounds.ub < sigma - PROB_TOL


def can_emit(bounds: BoundPair, sigma: float, descendants_all_below: bool) -> bool:
    return descendants_all_below and bounds.lb >= sigma - PROB_TOL


def update_upper(ub: float, probs: Sequence[float]) -> float:
    """ub - 1 + prod(1 - p) over qualified descendant probabilities."""
    return _clamp(ub - 1.0 + math.prod(1.0 - p for p in probs))


def update_lower(lb: float, probs: Sequence[float]) -> float:
    """lb - sum(p) over qualified descendant probabilities, clamped at 0."""
    return _clamp(lb - math.fsum(probs))
