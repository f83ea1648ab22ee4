"""Probabilistic inverted (PI) index and the plain keyword inverted (KI) index.

For every ordinary node the PI index keeps, per corpus term, the
probability that the node's subtree contains the term.  MUX nodes split
these values into mutually exclusive *parts*; a part holds the values for
all terms under one choice of branch for every MUX below the node.  Each
profile additionally keeps the exact per-term containment marginal, which
is what bound computation falls back on when parts are not enough.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

from .prxml import PROB_TOL, Dewey, Kind, PrxmlDocument

MAX_PARTS = 64

PI_MAGIC = b"PIX1"
KI_MAGIC = b"KIX1"


class IndexFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Part:
    """Term probabilities of one mutually exclusive alternative.

    ``merged`` parts stand for several alternatives folded together by
    taking per-term maxima; they overstate every term and are never used
    for lower bounds.
    """

    probs: dict[str, float] = field(default_factory=dict)
    merged: bool = False

    def __getitem__(self, term: str) -> float:
        return self.probs.get(term, 0.0)


EMPTY = Part()


def _clean(probs: dict[str, float]) -> dict[str, float]:
    return {k: min(1.0, v) for k, v in probs.items() if v > 0.0}


def op1_sibling_ind(p1: Part, lam1: float, p2: Part, lam2: float) -> Part:
    """Promote two independent siblings into their parent."""
    out = {k: lam1 * v for k, v in p1.probs.items()}
    for k, v in p2.probs.items():
        if k in out:
            out[k] = 1.0 - (1.0 - out[k]) * (1.0 - lam2 * v)
        else:
            out[k] = lam2 * v
    return Part(_clean(out), p1.merged or p2.merged)


def op2_child_ind(parent: Part, child: Part, lam: float) -> Part:
    """Promote an independent child with edge probability ``lam`` into its parent."""
    return op1_sibling_ind(parent, 1.0, child, lam)


def op3_sibling_mux(siblings: Sequence[tuple[Part, float]]) -> list[Part]:
    """One part per mutually exclusive sibling, in sibling order."""
    total = sum(lam for _, lam in siblings)
    if total > 1.0 + PROB_TOL:
        raise ValueError(f"MUX sum exceeds 1: {total!r}")
    return [op2_child_ind(EMPTY, part, lam) for part, lam in siblings]


def cross_ind(parents: Sequence[Part], children: Sequence[Part], lam: float,
              cap: int = MAX_PARTS) -> list[Part]:
    """Pairwise op2 over two part lists (cross product), capped at ``cap`` parts."""
    return cap_parts([op2_child_ind(p, c, lam) for p in parents for c in children], cap)


def combine_ind_with_parts(ind_part: Part, lam1: float, multi: Sequence[Part], lam2: float) -> list[Part]:
    """Independent node against each part of a multi-part sibling, order preserved."""
    return [op1_sibling_ind(ind_part, lam1, p, lam2) for p in multi]


def cap_parts(parts: list[Part], cap: int = MAX_PARTS) -> list[Part]:
    if len(parts) <= cap:
        return parts
    exact = [p for p in parts if not p.merged]
    keep = exact[: cap - 1]
    rest = [p for p in parts if p.merged] + exact[cap - 1:]
    merged: dict[str, float] = {}
    for p in rest:
        for k, v in p.probs.items():
            merged[k] = max(merged.get(k, 0.0), v)
    return keep + [Part(merged, True)]


@dataclass
class NodeTermProfile:
    node: Dewey
    path_prob: float
    parts: list[Part]
    marginals: dict[str, float]

    @property
    def approx(self) -> bool:
        return any(p.merged for p in self.parts)

    def terms(self) -> set[str]:
        return set(self.marginals)


@dataclass
class PIIndex:
    per_term: dict[str, list[Dewey]]
    profiles: dict[Dewey, NodeTermProfile]

    def profile(self, dewey: Dewey) -> NodeTermProfile | None:
        return self.profiles.get(dewey)


@dataclass
class KIIndex:
    per_term: dict[str, list[Dewey]]

    def postings(self, term: str) -> list[Dewey]:
        return self.per_term.get(term, [])


def build_indexes(doc: PrxmlDocument, cap: int = MAX_PARTS) -> tuple[PIIndex, KIIndex]:
    """Single bottom-up pass over the document in reverse document order.

    IND and ordinary nodes fold their children in with op2 (cross product
    when the child has several parts); a MUX node turns each child part into
    its own part; a MUX node is promoted into its parent like an
    independent child.
    """
    parts: dict[int, list[Part]] = {}
    margs: dict[int, dict[str, float]] = {}
    profiles: dict[Dewey, NodeTermProfile] = {}
    for node in reversed(doc.nodes):
        if node.kind is Kind.MUX:
            ps: list[Part] = []
            m: dict[str, float] = {}
            for c in node.children:
                ps.extend(op2_child_ind(EMPTY, cp, c.prob) for cp in parts.pop(c.index))
                for k, v in margs.pop(c.index).items():
                    m[k] = m.get(k, 0.0) + c.prob * v
            ps = cap_parts(ps, cap)
        else:
            own = {t: 1.0 for t in node.terms}
            ps, m = [Part(dict(own))], dict(own)
            for c in node.children:
                ps = cross_ind(ps, parts.pop(c.index), c.prob, cap)
                for k, v in margs.pop(c.index).items():
                    m[k] = 1.0 - (1.0 - m.get(k, 0.0)) * (1.0 - c.prob * v)
        m = {k: min(1.0, v) for k, v in m.items() if v > 0.0}
        parts[node.index], margs[node.index] = ps, m
        if node.is_ordinary and m:
            profiles[node.dewey] = NodeTermProfile(node.dewey, doc.path_probability(node.dewey), ps, m)
    pi_terms: dict[str, list[Dewey]] = {}
    ki_terms: dict[str, list[Dewey]] = {}
    for node in doc.nodes:
        prof = profiles.get(node.dewey)
        if prof is not None:
            for t in prof.marginals:
                pi_terms.setdefault(t, []).append(node.dewey)
        for t in node.terms:
            ki_terms.setdefault(t, []).append(node.dewey)
    return PIIndex(pi_terms, profiles), KIIndex(ki_terms)


# -- persistence -------------------------------------------------------------
#
# little-endian throughout.  PIX1 layout:
#   magic, 32-byte document checksum, u32 term count, terms (u32 len + utf8),
#   then per term: u32 posting count and postings of
#   u32 dewey len, u32 components, f64 path prob, f64 marginal,
#   u8 flags (bit 0: last part merged), u32 part count, f64 per part.
# KIX1 is the same without anything after the dewey code.

_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")


def _w_u32(out: BinaryIO, v: int) -> None:
    out.write(_U32.pack(v))


def _w_str(out: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    _w_u32(out, len(raw))
    out.write(raw)


def _w_dewey(out: BinaryIO, d: Dewey) -> None:
    _w_u32(out, len(d))
    out.write(struct.pack(f"<{len(d)}I", *d))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexFormatError("truncated index file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def f64(self) -> float:
        return _F64.unpack(self.take(8))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def dewey(self) -> Dewey:
        n = self.u32()
        return struct.unpack(f"<{n}I", self.take(4 * n))

    def done(self) -> None:
        if self.pos != len(self.data):
            raise IndexFormatError("trailing bytes in index file")


def _header(r: _Reader, magic: bytes) -> bytes:
    if r.take(4) != magic:
        raise IndexFormatError(f"bad magic, expected {magic!r}")
    return r.take(32)


def dump_pi(pi: PIIndex, checksum: bytes) -> bytes:
    out = io.BytesIO()
    out.write(PI_MAGIC)
    out.write(checksum)
    terms = sorted(pi.per_term)
    _w_u32(out, len(terms))
    for t in terms:
        _w_str(out, t)
    for t in terms:
        postings = pi.per_term[t]
        _w_u32(out, len(postings))
        for d in postings:
            prof = pi.profiles[d]
            _w_dewey(out, d)
            out.write(_F64.pack(prof.path_prob))
            out.write(_F64.pack(prof.marginals[t]))
            out.write(bytes([1 if prof.parts[-1].merged else 0]))
            _w_u32(out, len(prof.parts))
            for p in prof.parts:
                out.write(_F64.pack(p[t]))
    return out.getvalue()


def load_pi(data: bytes) -> tuple[PIIndex, bytes]:
    r = _Reader(data)
    checksum = _header(r, PI_MAGIC)
    terms = [r.string() for _ in range(r.u32())]
    per_term: dict[str, list[Dewey]] = {}
    raw: dict[Dewey, tuple[float, bool, list[dict[str, float]], dict[str, float]]] = {}
    for t in terms:
        lst = per_term[t] = []
        for _ in range(r.u32()):
            d = r.dewey()
            path_prob, marginal, flags = r.f64(), r.f64(), r.u8()
            values = [r.f64() for _ in range(r.u32())]
            entry = raw.get(d)
            if entry is None:
                entry = raw[d] = (path_prob, bool(flags & 1), [{} for _ in values], {})
            elif len(entry[2]) != len(values):
                raise IndexFormatError(f"inconsistent part count for node {d}")
            for part, v in zip(entry[2], values):
                if v > 0.0:
                    part[t] = v
            entry[3][t] = marginal
            lst.append(d)
    r.done()
    profiles = {}
    for d, (path_prob, merged_last, parts, margs) in raw.items():
        n = len(parts)
        profiles[d] = NodeTermProfile(
            d, path_prob, [Part(p, merged_last and i == n - 1) for i, p in enumerate(parts)], margs)
    return PIIndex(per_term, profiles), checksum


def dump_ki(ki: KIIndex, checksum: bytes) -> bytes:
    out = io.BytesIO()
    out.write(KI_MAGIC)
    out.write(checksum)
    terms = sorted(ki.per_term)
    _w_u32(out, len(terms))
    for t in terms:
        _w_str(out, t)
    for t in terms:
        _w_u32(out, len(ki.per_term[t]))
        for d in ki.per_term[t]:
            _w_dewey(out, d)
    return out.getvalue()


def load_ki(data: bytes) -> tuple[KIIndex, bytes]:
    r = _Reader(data)
    checksum = _header(r, KI_MAGIC)
    terms = [r.string() for _ in range(r.u32())]
    per_term = {t: [r.dewey() for _ in range(r.u32())] for t in terms}
    r.done()
    return KIIndex(per_term), checksum


def save_indexes(pi: PIIndex, ki: KIIndex, prefix: str, checksum: bytes) -> tuple[str, str]:
    pix, kix = f"{prefix}.pix", f"{prefix}.kix"
    with open(pix, "wb") as fh:
        fh.write(dump_pi(pi, checksum))
    with open(kix, "wb") as fh:
        fh.write(dump_ki(ki, checksum))
    return pix, kix


def load_indexes(prefix: str) -> tuple[PIIndex, KIIndex, bytes]:
    with open(f"{prefix}.pix", "rb") as fh:
        pi, c1 = load_pi(fh.read())
    with open(f"{prefix}.kix", "rb") as fh:
        ki, c2 = load_ki(fh.read())
    if c1 != c2:
        raise IndexFormatError("PI and KI files were built from different documents")
    return pi, ki, c1
