"""Brute-force possible-worlds semantics.

Every world is materialised as a row of a boolean presence matrix over the
document's nodes (columns in document order).  All other quantities
(keyword containment, SLCA membership, quasi-SLCA claims) are computed as
vectorised masks over the rows, which keeps the oracle fast enough for
property suites over thousands of small documents.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .prxml import PROB_TOL, Dewey, Kind, PrxmlDocument, PrxmlNode

DEFAULT_BUDGET = 24


class BudgetExceeded(RuntimeError):
    pass


def default_budget() -> int:
    raw = os.environ.get("PRXQ_ORACLE_BUDGET")
    return int(raw) if raw else DEFAULT_BUDGET


@dataclass(frozen=True)
class PossibleWorld:
    present: frozenset[Dewey]
    prob: float


@dataclass
class OracleResult:
    per_node: dict[Dewey, float]
    qualified: set[Dewey]
    sigma: float
    order: list[Dewey] = field(default_factory=list)


class WorldTable:
    """All possible worlds of a document as (probs[W], present[W, N])."""

    def __init__(self, doc: PrxmlDocument, budget: int | None = None):
        budget = default_budget() if budget is None else budget
        n_opt = doc.optional_edges()
        if n_opt > budget:
            raise BudgetExceeded(f"{n_opt} optional edges exceed the oracle budget of {budget}")
        self.doc = doc
        self.probs, self.present = self._expand(doc.root)
        self._contains: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.probs)

    def _expand(self, node: PrxmlNode) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.doc)
        if node.kind is Kind.MUX:
            probs, rows = [], []
            slack = 1.0 - sum(c.prob for c in node.children)
            if slack > PROB_TOL:
                probs.append(np.array([slack]))
                rows.append(np.zeros((1, n), dtype=bool))
            for c in node.children:
                cp, cr = self._expand(c)
                probs.append(c.prob * cp)
                rows.append(cr)
            probs_a, rows_a = np.concatenate(probs), np.concatenate(rows)
        else:
            probs_a = np.ones(1)
            rows_a = np.zeros((1, n), dtype=bool)
            for c in node.children:
                cp, cr = self._expand(c)
                cp = c.prob * cp
                if c.prob < 1.0:
                    cp = np.concatenate([[1.0 - c.prob], cp])
                    cr = np.concatenate([np.zeros((1, n), dtype=bool), cr])
                probs_a = np.outer(probs_a, cp).ravel()
                rows_a = (rows_a[:, None, :] | cr[None, :, :]).reshape(-1, n)
        rows_a[:, node.index] = True
        return probs_a, rows_a

    def worlds(self) -> list[PossibleWorld]:
        nodes = self.doc.nodes
        return [PossibleWorld(frozenset(nodes[i].dewey for i in np.flatnonzero(row)), float(p))
                for p, row in zip(self.probs, self.present)]

    def contains(self, keyword: str) -> np.ndarray:
        """[W, N] mask: the subtree of node j contains ``keyword`` in world w."""
        if keyword not in self._contains:
            out = np.zeros_like(self.present)
            for node in reversed(self.doc.nodes):
                col = self.present[:, node.index] & (keyword in node.terms)
                for c in node.children:
                    col = col | out[:, c.index]
                out[:, node.index] = col
            self._contains[keyword] = out
        return self._contains[keyword]

    def contains_all(self, q: Sequence[str]) -> np.ndarray:
        out = self.present.copy()
        for k in q:
            out &= self.contains(k)
        return out

    def slca_mask(self, q: Sequence[str]) -> np.ndarray:
        """[W, N] mask: ordinary node j is an SLCA of q in world w."""
        full = self.contains_all(q)
        below = np.zeros_like(full)
        for node in reversed(self.doc.nodes):
            col = np.zeros(len(self), dtype=bool)
            for c in node.children:
                col |= below[:, c.index]
                if c.is_ordinary:
                    col |= full[:, c.index]
            below[:, node.index] = col
        mask = full & ~below
        for node in self.doc.nodes:
            if not node.is_ordinary:
                mask[:, node.index] = False
        return mask

    def mass(self, mask: np.ndarray) -> float:
        return float(self.probs @ mask)


def enumerate_worlds(doc: PrxmlDocument, budget: int | None = None) -> list[PossibleWorld]:
    return WorldTable(doc, budget).worlds()


def slca(doc: PrxmlDocument, present: Iterable[Dewey], q: Sequence[str]) -> set[Dewey]:
    """SLCA nodes of ``q`` in the deterministic world given by ``present``."""
    present = set(present)
    q = set(q)
    result: set[Dewey] = set()

    def walk(node: PrxmlNode) -> tuple[set[str], bool]:
        have = set(node.terms) & q
        found = False
        for c in node.children:
            if c.dewey in present:
                h, f = walk(c)
                have |= h
                found |= f
        if node.is_ordinary and have == q and not found:
            result.add(node.dewey)
            return have, True
        return have, found

    if doc.root.dewey in present and q:
        walk(doc.root)
    return result


def prslca_global(doc: PrxmlDocument, q: Sequence[str], v: Dewey,
                  budget: int | None = None, table: WorldTable | None = None) -> float:
    table = table or WorldTable(doc, budget)
    return table.mass(table.slca_mask(q)[:, doc.node(v).index])


def quasi_oracle(doc: PrxmlDocument, q: Sequence[str], sigma: float,
                 budget: int | None = None, table: WorldTable | None = None) -> OracleResult:
    """Exact quasi-SLCA probabilities by world enumeration.

    Ordinary nodes are visited deepest first.  A node's candidate worlds are
    those where its subtree holds every keyword, minus worlds already
    claimed by qualified descendants; it qualifies when their mass reaches
    ``sigma`` and then claims them.
    """
    table = table or WorldTable(doc, budget)
    full = table.contains_all(q)
    claimed = np.zeros_like(full)  # claimed[:, j]: worlds claimed within subtree of j
    per_node: dict[Dewey, float] = {}
    qualified: set[Dewey] = set()
    order: list[Dewey] = []
    nodes = sorted(doc.nodes, key=lambda n: (-len(n.dewey), n.dewey))
    for node in nodes:
        below = np.zeros(len(table), dtype=bool)
        for c in node.children:
            below |= claimed[:, c.index]
        if node.is_ordinary:
            cand = full[:, node.index] & ~below
            mass = table.mass(cand)
            per_node[node.dewey] = mass
            if mass > 0 and mass >= sigma - PROB_TOL:
                qualified.add(node.dewey)
                order.append(node.dewey)
                below |= cand
        claimed[:, node.index] = below
    return OracleResult(per_node, qualified, sigma, order)


def containment_marginals(doc: PrxmlDocument, keywords: Iterable[str],
                          budget: int | None = None,
                          table: WorldTable | None = None) -> dict[Dewey, dict[str, float]]:
    """Pr(subtree of v contains k | v exists) for every node and keyword."""
    table = table or WorldTable(doc, budget)
    out: dict[Dewey, dict[str, float]] = {n.dewey: {} for n in doc.nodes}
    for k in keywords:
        m = table.probs @ table.contains(k)
        for node in doc.nodes:
            out[node.dewey][k] = float(m[node.index]) / doc.path_probability(node.dewey)
    return out
