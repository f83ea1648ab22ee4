"""Query evaluation: keyword distributions, the baseline stack algorithm and
the PI-index based algorithm with exact and Gaussian-approximate probability
computation.

Both algorithms walk the merged keyword lists in Dewey order, keeping the
current root-to-node path on a stack.  Nodes leave the stack in post-order,
so by the time a node is decided every one of its relevant descendants has
been decided already.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bounds import BoundPair, global_bounds
from .pi_index import KIIndex, PIIndex
from .prxml import PROB_TOL, Dewey, Kind, PrxmlDocument, PrxmlNode, is_ancestor

MAX_KEYWORDS = 12
METHODS = ("exactBA", "boundEmit", "exactPI", "gaussPI")


# -- keyword distributions ---------------------------------------------------

_OR_TABLES: dict[int, np.ndarray] = {}


def _or_table(n: int) -> np.ndarray:
    if n not in _OR_TABLES:
        idx = np.arange(1 << n)
        _OR_TABLES[n] = (idx[:, None] | idx[None, :]).ravel()
    return _OR_TABLES[n]


def _zeta(a: np.ndarray, n: int) -> np.ndarray:
    out = a.reshape((2,) * n)
    for axis in range(n):
        out = np.cumsum(out, axis=axis)
    return out.ravel()


def _moebius(a: np.ndarray, n: int) -> np.ndarray:
    out = a.reshape((2,) * n)
    for axis in range(n):
        out = np.diff(out, axis=axis, prepend=0.0)
    return out.ravel()


def or_convolve(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """out[S] = sum over A | B == S of a[A] * b[B]."""
    if n <= 6:
        return np.bincount(_or_table(n), weights=np.outer(a, b).ravel(), minlength=1 << n)
    return _moebius(_zeta(a, n) * _zeta(b, n), n)


@dataclass
class KeywordDistribution:
    """Probability over subsets of the query keywords present in a subtree,
    plus a DEAD cell for worlds whose subtree already holds an emitted result.

    Subset S is encoded as a bitmask over query positions; ``mass[-1]`` is
    DEAD.  Values are conditional on the owning node existing.
    """

    n: int
    mass: np.ndarray

    @classmethod
    def point(cls, n: int, subset: int = 0) -> KeywordDistribution:
        if not 0 <= n <= MAX_KEYWORDS:
            raise ValueError(f"queries are limited to {MAX_KEYWORDS} keywords")
        mass = np.zeros((1 << n) + 1)
        mass[subset] = 1.0
        return cls(n, mass)

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    @property
    def full(self) -> float:
        return float(self.mass[self.full_mask])

    @property
    def dead(self) -> float:
        return float(self.mass[-1])

    def total(self) -> float:
        return float(self.mass.sum())

    def lifted(self, lam: float) -> KeywordDistribution:
        """The child as seen from its parent: absent with probability 1 - lam."""
        mass = lam * self.mass
        mass[0] += 1.0 - lam
        return KeywordDistribution(self.n, mass)


def _tidy(mass: np.ndarray) -> np.ndarray:
    mass[mass < 0.0] = 0.0
    return mass


def combine_prob(child: KeywordDistribution, lam: float, parent: KeywordDistribution,
                 relation: Kind = Kind.IND) -> KeywordDistribution:
    """Fold a child's distribution into its parent's.

    ``relation`` is ``Kind.MUX`` when the parent is a MUX node (children are
    exclusive alternatives, accumulated additively) and anything else for
    independent children (lift, then subset-union convolution).
    """
    if child.n != parent.n:
        raise ValueError("distributions over different queries")
    n = parent.n
    if relation is Kind.MUX:
        mass = parent.mass + lam * child.mass
        mass[0] -= lam
        return KeywordDistribution(n, _tidy(mass))
    lifted = child.lifted(lam).mass
    out = np.empty_like(parent.mass)
    out[:-1] = or_convolve(parent.mass[:-1], lifted[:-1], n)
    out[-1] = 1.0 - (1.0 - parent.mass[-1]) * (1.0 - lifted[-1])
    return KeywordDistribution(n, _tidy(out))


def emit_and_kill(dist: KeywordDistribution, path_prob: float = 1.0) -> tuple[float, KeywordDistribution]:
    """Claim the full-set worlds: return their global mass and move them to DEAD."""
    full = dist.full
    if full <= 0.0:
        raise ValueError("nothing to emit: full-set cell is empty")
    mass = dist.mass.copy()
    mass[-1] += full
    mass[dist.full_mask] = 0.0
    return full * path_prob, KeywordDistribution(dist.n, mass)


def _query_masks(q: Sequence[str]) -> dict[str, int]:
    return {k: 1 << i for i, k in enumerate(q)}


def _own_mask(node: PrxmlNode, masks: dict[str, int]) -> int:
    m = 0
    for t in node.terms:
        m |= masks.get(t, 0)
    return m


# -- Gaussian approximation --------------------------------------------------

def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def gaussian_mass(mu: float, sigma2: float, t: int, ub: float) -> float:
    """Integral over [0, ub]^t of t independent N(mu, sigma2) densities.

    Signed: a negative ``ub`` gives a negative value, as the integral would.
    """
    s = math.sqrt(sigma2)
    return (normal_cdf((ub - mu) / s) - normal_cdf(-mu / s)) ** t


@dataclass
class GaussParams:
    mu: float
    sigma2: float
    t: int
    ub_limit: float

    def value(self) -> float:
        if self.sigma2 <= 0.0:
            return min(1.0, max(0.0, self.mu))
        if self.ub_limit <= 0.0:
            # empty integration box; an even power of the signed mass would be positive
            return 0.0
        return min(1.0, max(0.0, gaussian_mass(self.mu, self.sigma2, self.t, self.ub_limit)))


@dataclass(frozen=True)
class ApproxParams:
    select_fraction: float = 0.5
    # erf is accurate to double precision, far below any sensible tolerance;
    # kept so callers can state the accuracy they require.
    quad_tol: float = 1e-9

    def __post_init__(self) -> None:
        if not 0.0 < self.select_fraction <= 1.0:
            raise ValueError("select_fraction must lie in (0, 1]")
        if self.quad_tol < 1e-15:
            raise ValueError("quad_tol below double precision")


# -- results and instrumentation ---------------------------------------------

@dataclass(frozen=True)
class QuasiResult:
    node: Dewey
    prob: float
    method: str


@dataclass(frozen=True)
class TraceRow:
    node: Dewey
    lb: float
    ub: float
    decision: str
    prob: float


@dataclass
class QueryStats:
    convolutions: int = 0
    popped: int = 0
    pruned: int = 0
    bound_emitted: int = 0
    exact_calls: int = 0
    approx_calls: int = 0
    pruned_nodes: list[Dewey] = field(default_factory=list)


@dataclass
class QueryOutcome:
    results: list[QuasiResult]
    stats: QueryStats
    trace: list[TraceRow] = field(default_factory=list)

    def nodes(self) -> set[Dewey]:
        return {r.node for r in self.results}


# -- shared traversal --------------------------------------------------------

def _merged_postings(ki: KIIndex, q: Sequence[str]) -> list[Dewey] | None:
    lists = [ki.postings(k) for k in q]
    if any(not lst for lst in lists):
        return None
    out: list[Dewey] = []
    for d in heapq.merge(*lists):
        if not out or out[-1] != d:
            out.append(d)
    return out


def _walk(doc: PrxmlDocument, keyword_nodes: Sequence[Dewey],
          on_push: Callable[[PrxmlNode], None],
          on_pop: Callable[[PrxmlNode], None]) -> None:
    """Visit every node on a root path of a keyword node: push on the way down,
    pop in post-order."""
    stack: list[PrxmlNode] = []
    for d in keyword_nodes:
        while stack and not (stack[-1].dewey == d[: len(stack[-1].dewey)]):
            on_pop(stack.pop())
        depth = len(stack[-1].dewey) if stack else -1
        node = doc.node(d)
        path = []
        while len(node.dewey) > depth:
            path.append(node)
            if node.parent is None:
                break
            node = node.parent
        for n in reversed(path):
            stack.append(n)
            on_push(n)
    while stack:
        on_pop(stack.pop())


def _check_query(q: Sequence[str], sigma: float) -> list[str]:
    q = list(dict.fromkeys(q))
    if not q:
        raise ValueError("query must contain at least one keyword")
    if len(q) > MAX_KEYWORDS:
        raise ValueError(f"queries are limited to {MAX_KEYWORDS} keywords")
    if not 0.0 < sigma <= 1.0:
        raise ValueError("sigma must lie in (0, 1]")
    return q


# -- baseline ----------------------------------------------------------------

def baseline_query(ki: KIIndex, doc: PrxmlDocument, q: Sequence[str], sigma: float,
                   trace: bool = False) -> QueryOutcome:
    q = _check_query(q, sigma)
    stats = QueryStats()
    rows: list[TraceRow] = []
    results: list[QuasiResult] = []
    keyword_nodes = _merged_postings(ki, q)
    if keyword_nodes is None:
        return QueryOutcome([], stats, rows)
    masks = _query_masks(q)
    n = len(q)
    dists: dict[int, KeywordDistribution] = {}

    def push(node: PrxmlNode) -> None:
        dists[node.index] = KeywordDistribution.point(n, _own_mask(node, masks))

    def pop(node: PrxmlNode) -> None:
        dist = dists.pop(node.index)
        stats.popped += 1
        stats.convolutions += 1
        if node.is_ordinary:
            pi = doc.path_probability(node.dewey)
            p = dist.full * pi
            emitted = dist.full > 0.0 and p >= sigma - PROB_TOL
            if emitted:
                p, dist = emit_and_kill(dist, pi)
                results.append(QuasiResult(node.dewey, p, "exactBA"))
            if trace:
                rows.append(TraceRow(node.dewey, p, p, "emit" if emitted else "pass", p))
        parent = node.parent
        if parent is not None:
            dists[parent.index] = combine_prob(dist, node.prob, dists[parent.index], parent.kind)

    _walk(doc, keyword_nodes, push, pop)
    results.sort(key=lambda r: r.node)
    return QueryOutcome(results, stats, rows)


# -- bound store -------------------------------------------------------------

class BoundStore:
    """Bounds of undecided nodes corrected for results already emitted below them.

    Two maps keyed by Dewey code: base global bounds per node, and the
    global claim interval [lo, hi] of every emitted node.  An exact
    emission claims [p, p]; a bound emission claims [lb, ub], so its lb
    ends up tightening ancestors' upper bounds and its ub their lower bounds.

    ``structural`` (default) removes the exact probability that some emitted
    descendant claimed the world, combining claims through the document:
    claims of nested nodes are disjoint, siblings under independent edges
    combine as a union of independent events and MUX alternatives add up.
    ``product`` applies ``update_upper``/``update_lower`` style arithmetic to
    the list of claimed global probabilities.
    """

    def __init__(self, doc: PrxmlDocument, rule: str = "structural"):
        if rule not in ("structural", "product"):
            raise ValueError(f"unknown update rule {rule!r}")
        self.doc = doc
        self.rule = rule
        self.base: dict[Dewey, BoundPair] = {}
        self.claims: dict[Dewey, tuple[float, float]] = {}

    def set_base(self, node: Dewey, bounds: BoundPair) -> None:
        self.base[node] = bounds

    def record(self, node: Dewey, lo: float, hi: float) -> None:
        self.claims[node] = (lo, hi)

    def claimed_below(self, node: Dewey) -> list[Dewey]:
        return sorted(u for u in self.claims if is_ancestor(node, u))

    def read(self, node: Dewey) -> BoundPair:
        base = self.base[node]
        below = self.claimed_below(node)
        if not below:
            return base
        if self.rule == "product":
            los = [self.claims[u][0] for u in below]
            his = [self.claims[u][1] for u in below]
            ub = base.ub - 1.0 + math.prod(1.0 - p for p in los)
            lb = base.lb - math.fsum(his)
        else:
            pi = self.doc.path_probability(node)
            d_lo, d_hi = self._union(node, below)
            ub = base.ub - pi * d_lo
            lb = base.lb - pi * d_hi
        lb, ub = max(0.0, lb), max(0.0, ub)
        return BoundPair(min(lb, ub), ub, node)

    def _union(self, top: Dewey, below: list[Dewey]) -> tuple[float, float]:
        """Probability, given ``top`` exists, that an emitted strict descendant
        of ``top`` claimed the world; as a (low, high) pair."""
        relevant = set()
        for u in below:
            for i in range(len(top) + 1, len(u) + 1):
                relevant.add(u[:i])

        def claim(node: PrxmlNode, own: bool = True) -> tuple[float, float]:
            kids = [c for c in node.children if c.dewey in relevant]
            if node.kind is Kind.MUX:
                lo = hi = 0.0
                for c in kids:
                    cl, ch = claim(c)
                    lo, hi = lo + c.prob * cl, hi + c.prob * ch
            else:
                lo_miss = hi_miss = 1.0
                for c in kids:
                    cl, ch = claim(c)
                    lo_miss *= 1.0 - c.prob * cl
                    hi_miss *= 1.0 - c.prob * ch
                lo, hi = 1.0 - lo_miss, 1.0 - hi_miss
            if own and node.dewey in self.claims:
                # a node's claim is disjoint from its descendants' claims
                pi = self.doc.path_probability(node.dewey)
                own_lo, own_hi = self.claims[node.dewey]
                lo, hi = lo + own_lo / pi, hi + own_hi / pi
            return min(1.0, lo), min(1.0, hi)

        return claim(self.doc.node(top), own=False)


def update_bound_store(store: BoundStore, node: Dewey, prob: float,
                       ub: float | None = None) -> None:
    """Record an emission: ``prob`` alone for exact results, or (lb, ub) for a
    bound emission."""
    store.record(node, prob, prob if ub is None else ub)


# -- PI-based evaluation -----------------------------------------------------

class PIEvaluation:
    """State of one PI-based query: cached distributions, emissions, bounds."""

    def __init__(self, ki: KIIndex, pi: PIIndex, doc: PrxmlDocument, q: Sequence[str],
                 sigma: float, bound_rule: str = "sound", update_rule: str = "structural"):
        self.ki, self.pi, self.doc = ki, pi, doc
        self.q = list(q)
        self.sigma = sigma
        self.bound_rule = bound_rule
        self.masks = _query_masks(self.q)
        self.store = BoundStore(doc, update_rule)
        self.stats = QueryStats()
        self.cache: dict[Dewey, KeywordDistribution] = {}
        self.emitted: set[Dewey] = set()
        self.keyword_nodes: list[Dewey] = []
        self.relevant: set[Dewey] = set()
        self.s2: list[Dewey] = []
        self.ignored: set[Dewey] = set()

    def prepare(self, keyword_nodes: list[Dewey]) -> None:
        self.keyword_nodes = keyword_nodes
        for d in keyword_nodes:
            for i in range(len(d) + 1):
                self.relevant.add(d[:i])

    # distributions

    def _dist(self, node: PrxmlNode) -> KeywordDistribution:
        d = node.dewey
        hit = self.cache.get(d)
        if hit is not None:
            return hit
        own = 0 if d in self.ignored else _own_mask(node, self.masks)
        dist = KeywordDistribution.point(len(self.q), own)
        for c in node.children:
            if c.dewey in self.relevant:
                dist = combine_prob(self._dist(c), c.prob, dist, node.kind)
        if d in self.emitted and dist.full > 0.0:
            _, dist = emit_and_kill(dist)
        self.stats.convolutions += 1
        self.cache[d] = dist
        return dist

    def compute_prob_dist_exact(self, x: Dewey) -> float:
        self.stats.exact_calls += 1
        return self._dist(self.doc.node(x)).full * self.doc.path_probability(x)

    def approx_candidates(self, x: Dewey) -> list[Dewey]:
        return [d for d in self.keyword_nodes if is_ancestor(x, d) and d not in self.cache]

    def compute_prob_dist_approx(self, x: Dewey, ub: float, params: ApproxParams) -> tuple[float, bool]:
        """Gaussian estimate of x's probability.  Returns (value, used_gaussian)."""
        cands = self.approx_candidates(x)
        if not cands:
            return self.compute_prob_dist_exact(x), False
        self.stats.approx_calls += 1

        def weight(d: Dewey) -> float:
            prof = self.pi.profile(d)
            if prof is None:
                return 0.0
            return prof.path_prob * max(prof.marginals.get(k, 0.0) for k in self.q)

        ranked = sorted(cands, key=lambda d: (-weight(d), d))
        k = math.ceil(params.select_fraction * len(ranked))
        self.ignored.update(ranked[k:])
        mu = self._dist(self.doc.node(x)).full * self.doc.path_probability(x)
        sigma2 = 1.0 - k / len(ranked)
        if sigma2 <= 0.0:
            return mu, False
        return GaussParams(mu, sigma2, len(self.q), ub).value(), True

    def kill(self, x: Dewey) -> None:
        self.emitted.add(x)
        dist = self.cache.get(x)
        if dist is not None and dist.full > 0.0:
            self.cache[x] = emit_and_kill(dist)[1]
        self.s2 = [d for d in self.s2 if not is_ancestor(x, d)]

    def bounds(self, x: Dewey) -> BoundPair:
        prof = self.pi.profile(x)
        base = BoundPair(0.0, 0.0, x) if prof is None else global_bounds(prof, self.q, self.bound_rule)
        self.store.set_base(x, base)
        return self.store.read(x)


def pi_query(ki: KIIndex, pi: PIIndex, doc: PrxmlDocument, q: Sequence[str], sigma: float,
             mode: str = "exact", approx: ApproxParams | None = None, trace: bool = False,
             bound_rule: str = "sound", update_rule: str = "structural") -> QueryOutcome:
    if mode not in ("exact", "approx"):
        raise ValueError(f"unknown mode {mode!r}")
    q = _check_query(q, sigma)
    approx = approx or ApproxParams()
    ev = PIEvaluation(ki, pi, doc, q, sigma, bound_rule, update_rule)
    rows: list[TraceRow] = []
    results: list[QuasiResult] = []
    keyword_nodes = _merged_postings(ki, q)
    if keyword_nodes is None:
        return QueryOutcome([], ev.stats, rows)
    ev.prepare(keyword_nodes)
    threshold = sigma - PROB_TOL

    def pop(node: PrxmlNode) -> None:
        ev.stats.popped += 1
        if not node.is_ordinary:
            return
        x = node.dewey
        b = ev.bounds(x)
        prob, decision = 0.0, "prune"
        # every descendant has been decided already (post-order), so the
        # corrected lb is a bound on what is left for x
        if b.lb > 0.0 and b.lb >= threshold:
            prob, decision = b.lb, "boundEmit"
            ev.stats.bound_emitted += 1
            ev.kill(x)
            update_bound_store(ev.store, x, b.lb, b.ub)
            results.append(QuasiResult(x, b.lb, "boundEmit"))
        elif b.ub >= threshold:
            if mode == "exact":
                prob, method = ev.compute_prob_dist_exact(x), "exactPI"
            else:
                prob, gauss = ev.compute_prob_dist_approx(x, b.ub, approx)
                method = "gaussPI" if gauss else "exactPI"
            if prob > 0.0 and prob >= threshold:
                decision = method
                ev.kill(x)
                update_bound_store(ev.store, x, prob)
                results.append(QuasiResult(x, prob, method))
            else:
                decision = "below"
        if decision in ("prune", "below"):
            ev.stats.pruned += decision == "prune"
            if decision == "prune":
                ev.stats.pruned_nodes.append(x)
            ev.s2.append(x)
        if trace:
            rows.append(TraceRow(x, b.lb, b.ub, decision, prob))

    _walk(doc, keyword_nodes, lambda n: None, pop)
    results.sort(key=lambda r: r.node)
    return QueryOutcome(results, ev.stats, rows)

