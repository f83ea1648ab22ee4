"""Probabilistic XML documents with IND / MUX distributional nodes.

A document is an ordered tree of ordinary nodes (label + terms) and
distributional nodes.  Every node except the root carries the conditional
probability of its incoming edge.  Nodes are identified by Dewey codes:
tuples of 1-based child positions, the root being ``()``.

The XML dialect::

    <region>
      hazard
      <dist type="IND">
        <library prob="0.3">hazard building</library>
      </dist>
    </region>
"""

from __future__ import annotations

import enum
import hashlib
import math
import random
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterator, Sequence
from xml.sax.saxutils import escape, quoteattr

PROB_TOL = 1e-9

Dewey = tuple[int, ...]


class PrxmlError(ValueError):
    """Raised for documents that violate the data model or the dialect."""


class Kind(str, enum.Enum):
    ORD = "ORD"
    IND = "IND"
    MUX = "MUX"


def format_dewey(d: Dewey) -> str:
    return ".".join(["0", *map(str, d)])


def parse_dewey(text: str) -> Dewey:
    head, *rest = text.strip().split(".")
    if head != "0":
        raise ValueError(f"dewey code must start with the root component 0: {text!r}")
    comps = tuple(int(c) for c in rest)
    if any(c < 1 for c in comps):
        raise ValueError(f"dewey components must be positive: {text!r}")
    return comps


def is_ancestor_or_self(u: Dewey, v: Dewey) -> bool:
    return v[: len(u)] == u


def is_ancestor(u: Dewey, v: Dewey) -> bool:
    return len(u) < len(v) and v[: len(u)] == u


@dataclass(eq=False)
class PrxmlNode:
    kind: Kind
    label: str | None = None
    terms: tuple[str, ...] = ()
    prob: float = 1.0
    children: list[PrxmlNode] = field(default_factory=list)
    dewey: Dewey = ()
    parent: PrxmlNode | None = field(default=None, repr=False)
    index: int = -1

    @property
    def is_ordinary(self) -> bool:
        return self.kind is Kind.ORD

    def __repr__(self) -> str:
        name = self.label if self.is_ordinary else self.kind.value
        return f"<{name} {format_dewey(self.dewey)}>"


def ordinary(label: str, terms: Sequence[str] | str = (), children: Sequence[PrxmlNode] = (),
             prob: float = 1.0) -> PrxmlNode:
    if isinstance(terms, str):
        terms = tokenize(terms)
    return PrxmlNode(Kind.ORD, label, tuple(terms), prob, list(children))


def ind(children: Sequence[PrxmlNode], prob: float = 1.0) -> PrxmlNode:
    return PrxmlNode(Kind.IND, None, (), prob, list(children))


def mux(children: Sequence[PrxmlNode], prob: float = 1.0) -> PrxmlNode:
    return PrxmlNode(Kind.MUX, None, (), prob, list(children))


_WS = re.compile(r"\s+")


def tokenize(text: str | None) -> tuple[str, ...]:
    if not text:
        return ()
    seen: dict[str, None] = {}
    for tok in _WS.split(text.strip().lower()):
        if tok:
            seen.setdefault(tok, None)
    return tuple(seen)


class PrxmlDocument:
    """Immutable, validated probabilistic XML tree.

    Construction assigns Dewey codes, parent links and document-order
    indexes to the node tree passed in; the nodes must not be shared with
    another document.
    """

    def __init__(self, root: PrxmlNode):
        if not root.is_ordinary:
            raise PrxmlError("root must be an ordinary node")
        if root.prob != 1.0:
            raise PrxmlError("root must not carry an edge probability")
        self.root = root
        self.nodes: list[PrxmlNode] = []
        self._by_dewey: dict[Dewey, PrxmlNode] = {}
        self._path_prob: list[float] = []
        stack = [(root, (), None, 1.0)]
        while stack:
            node, dewey, parent, pp = stack.pop()
            _validate(node)
            node.dewey, node.parent, node.index = dewey, parent, len(self.nodes)
            self.nodes.append(node)
            self._by_dewey[dewey] = node
            self._path_prob.append(pp)
            for pos in range(len(node.children), 0, -1):
                child = node.children[pos - 1]
                stack.append((child, dewey + (pos,), node, pp * child.prob))
        self.counts = {k: 0 for k in Kind}
        for node in self.nodes:
            self.counts[node.kind] += 1

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[PrxmlNode]:
        return iter(self.nodes)

    def node(self, dewey: Dewey) -> PrxmlNode:
        try:
            return self._by_dewey[dewey]
        except KeyError:
            raise KeyError(f"unknown dewey code {format_dewey(dewey)}") from None

    def __contains__(self, dewey: Dewey) -> bool:
        return dewey in self._by_dewey

    def path_probability(self, dewey: Dewey) -> float:
        """Probability that the node exists: product of edge probabilities from the root."""
        return self._path_prob[self.node(dewey).index]

    def find(self, label: str) -> PrxmlNode:
        """First ordinary node with the given label, in document order."""
        for node in self.nodes:
            if node.label == label:
                return node
        raise KeyError(label)

    def optional_edges(self) -> int:
        n = 0
        for node in self.nodes[1:]:
            if node.prob < 1.0 or (node.parent.kind is Kind.MUX and len(node.parent.children) > 1):
                n += 1
        return n

    def ordinary_nodes(self) -> list[PrxmlNode]:
        return [n for n in self.nodes if n.is_ordinary]

    def vocabulary(self) -> set[str]:
        return {t for n in self.nodes for t in n.terms}

    def checksum(self) -> bytes:
        return hashlib.sha256(serialize_prxml(self).encode("utf-8")).digest()


def path_probability(doc: PrxmlDocument, v: Dewey) -> float:
    return doc.path_probability(v)


def _validate(node: PrxmlNode) -> None:
    for child in node.children:
        if not (0.0 < child.prob <= 1.0) or math.isnan(child.prob):
            raise PrxmlError(f"edge probability {child.prob!r} outside (0, 1]")
    if node.is_ordinary:
        return
    if node.label is not None or node.terms:
        raise PrxmlError("distributional nodes carry no label and no terms")
    if not node.children:
        raise PrxmlError(f"{node.kind.value} node without children")
    if node.kind is Kind.MUX:
        total = math.fsum(c.prob for c in node.children)
        if total > 1.0 + PROB_TOL:
            raise PrxmlError(f"MUX sum exceeds 1: {total!r}")


# -- dialect -----------------------------------------------------------------

def parse_prxml(text: str | bytes) -> PrxmlDocument:
    try:
        elem = ET.fromstring(text)
    except ET.ParseError as exc:
        raise PrxmlError(f"malformed XML: {exc}") from exc
    if elem.tag == "dist":
        raise PrxmlError("root must be an ordinary node")
    if "prob" in elem.attrib:
        raise PrxmlError("root must not carry an edge probability")
    return PrxmlDocument(_from_element(elem))


def _from_element(elem: ET.Element) -> PrxmlNode:
    prob = _parse_prob(elem.get("prob"))
    children = [_from_element(c) for c in elem]
    text = " ".join(filter(None, [elem.text, *(c.tail for c in elem)]))
    if elem.tag == "dist":
        kind = elem.get("type", "").upper()
        if kind not in ("IND", "MUX"):
            raise PrxmlError(f"dist element needs type IND or MUX, got {elem.get('type')!r}")
        if text.strip():
            raise PrxmlError("distributional nodes carry no terms")
        if not children:
            raise PrxmlError(f"{kind} node without children")
        return PrxmlNode(Kind(kind), None, (), prob, children)
    return PrxmlNode(Kind.ORD, elem.tag, tokenize(text), prob, children)


def _parse_prob(raw: str | None) -> float:
    if raw is None:
        return 1.0
    try:
        p = float(raw)
    except ValueError:
        raise PrxmlError(f"bad prob attribute {raw!r}") from None
    if not (0.0 < p <= 1.0):
        raise PrxmlError(f"prob attribute {raw!r} outside (0, 1]")
    return p


def serialize_prxml(doc: PrxmlDocument | PrxmlNode, indent: str = "  ") -> str:
    root = doc.root if isinstance(doc, PrxmlDocument) else doc
    out: list[str] = []
    _write(root, 0, indent, out)
    return "".join(out)


def _write(node: PrxmlNode, depth: int, indent: str, out: list[str]) -> None:
    pad = indent * depth
    if node.is_ordinary:
        tag, attrs = node.label, ""
    else:
        tag, attrs = "dist", f' type="{node.kind.value}"'
    if node.prob != 1.0:
        attrs += f" prob={quoteattr(repr(node.prob))}"
    text = escape(" ".join(node.terms))
    if not node.children:
        out.append(f"{pad}<{tag}{attrs}>{text}</{tag}>\n" if text else f"{pad}<{tag}{attrs}/>\n")
        return
    out.append(f"{pad}<{tag}{attrs}>{text}\n")
    for child in node.children:
        _write(child, depth + 1, indent, out)
    out.append(f"{pad}</{tag}>\n")


def same_structure(a: PrxmlDocument, b: PrxmlDocument, places: int = 12) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a.nodes, b.nodes):
        if (x.dewey, x.kind, x.label, x.terms) != (y.dewey, y.kind, y.label, y.terms):
            return False
        if round(x.prob - y.prob, places) != 0:
            return False
    return True


# -- synthetic generation ----------------------------------------------------

def _draw_prob(rng: random.Random, lo: float = 0.05, hi: float = 1.0) -> float:
    return max(0.001, math.floor(rng.uniform(lo, hi) * 1000) / 1000)


def generate_prxml(det: PrxmlDocument | PrxmlNode, seed: int,
                   ratio: Sequence[float] = (3, 3, 4), max_group: int = 3) -> PrxmlDocument:
    """Turn an ordinary-only tree into a PrXML document.

    Visits the tree in pre-order.  Each original child of a visited node is
    assigned IND, MUX or ordinary placement with weights ``ratio``; IND and
    MUX assigned children are grouped (at most ``max_group`` per group)
    under freshly inserted distributional nodes with random edge
    probabilities.  MUX groups get probabilities summing to at most 1.
    """
    if len(ratio) != 3 or min(ratio) <= 0:
        raise ValueError("ratio needs three positive weights (ind, mux, ordinary)")
    src = det.root if isinstance(det, PrxmlDocument) else det
    rng = random.Random(seed)
    kinds = (Kind.IND, Kind.MUX, Kind.ORD)

    def visit(node: PrxmlNode) -> PrxmlNode:
        if not node.is_ordinary:
            raise PrxmlError("generate_prxml expects an ordinary-only tree")
        # slot per original child: None for ordinary placement, else the dist node
        slots: list[PrxmlNode | None] = []
        layout: list[PrxmlNode | int] = []
        open_group: dict[Kind, tuple[PrxmlNode, int] | None] = {Kind.IND: None, Kind.MUX: None}
        for pos in range(len(node.children)):
            kind = rng.choices(kinds, weights=ratio)[0]
            if kind is Kind.ORD:
                slots.append(None)
                layout.append(pos)
                continue
            group = open_group[kind]
            if group is None or len(group[0].children) >= group[1]:
                group = (PrxmlNode(kind), rng.randint(1, max_group))
                open_group[kind] = group
                layout.append(group[0])
            group[0].children.append(PrxmlNode(Kind.ORD))  # placeholder
            slots.append(group[0])
        probs: dict[int, list[float]] = {}
        for item in layout:
            if isinstance(item, PrxmlNode):
                n = len(item.children)
                probs[id(item)] = ([_draw_prob(rng) for _ in range(n)] if item.kind is Kind.IND
                                   else _mux_probs(rng, n))
                item.children = []
        copy = PrxmlNode(Kind.ORD, node.label, node.terms)
        converted = [visit(c) for c in node.children]
        for item in layout:
            if isinstance(item, PrxmlNode):
                copy.children.append(item)
            else:
                copy.children.append(converted[item])
        for pos, slot in enumerate(slots):
            if slot is not None:
                child = converted[pos]
                child.prob = probs[id(slot)][len(slot.children)]
                slot.children.append(child)
        return copy

    return PrxmlDocument(visit(src))


def _mux_probs(rng: random.Random, n: int) -> list[float]:
    weights = [rng.uniform(0.1, 1.0) for _ in range(n)]
    budget = rng.uniform(0.6, 1.0)
    total = sum(weights)
    return [max(0.001, math.floor(w / total * budget * 1000) / 1000) for w in weights]


def random_tree(rng: random.Random, size: int, vocab: Sequence[str],
                term_rate: float = 0.3, max_fanout: int = 4) -> PrxmlNode:
    """Random ordinary-only tree with ``size`` nodes, labels ``n<i>``."""
    nodes = [ordinary("n0", _draw_terms(rng, vocab, term_rate))]
    for i in range(1, size):
        open_parents = [n for n in nodes if len(n.children) < max_fanout]
        parent = rng.choice(open_parents)
        node = ordinary(f"n{i}", _draw_terms(rng, vocab, term_rate))
        parent.children.append(node)
        nodes.append(node)
    return nodes[0]


def _draw_terms(rng: random.Random, vocab: Sequence[str], rate: float) -> tuple[str, ...]:
    return tuple(t for t in vocab if rng.random() < rate)
