"""Benchmark harness: precision/recall of the approximate algorithm against
the baseline, F-measure aggregation and CSV reports over generated corpora.

A bench spec is a TOML file::

    name = "synthetic"
    sigmas = [0.3, 0.5, 0.7]
    modes = ["ba", "piea", "piaa"]

    [corpus]
    documents = 20
    size = 40          # ordinary nodes per deterministic tree
    vocabulary = 8     # terms t0..t7, or an explicit list
    term_rate = 0.25
    ratio = [3, 3, 4]
    seed = 1

    [queries]
    count = 6
    terms = [2, 3]     # min/max keywords per query
    seed = 2
    # list = [["t0", "t1"], ...] overrides random queries
"""

from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .engine import ApproxParams, QueryOutcome, baseline_query, pi_query
from .pi_index import build_indexes
from .prxml import Dewey, PrxmlDocument, generate_prxml, random_tree

MODES = ("ba", "piea", "piaa")
CSV_COLUMNS = ("corpus", "query", "sigma", "mode", "results", "precision", "recall",
               "fmeasure", "convolutions", "micros")


@dataclass
class PRReport:
    precision: float
    recall: float
    fmeasure: float
    query: str = ""
    sigma: float = 0.0
    corpus: str = ""
    mode: str = ""
    results: int = 0
    convolutions: dict[str, int] = field(default_factory=dict)
    micros: dict[str, int] = field(default_factory=dict)


def precision_recall(r_ba: Iterable[Dewey], r_approx: Iterable[Dewey]) -> tuple[float, float]:
    """Precision and recall of an approximate result set against the baseline.

    Two empty sets count as a perfect match; an empty side against a
    non-empty one scores 0 on the affected measure.
    """
    ba, ap = set(r_ba), set(r_approx)
    hit = len(ba & ap)
    precision = hit / len(ap) if ap else (1.0 if not ba else 0.0)
    recall = hit / len(ba) if ba else (1.0 if not ap else 0.0)
    return precision, recall


def _harmonic(p: float, r: float) -> float:
    return 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)


def f_measure(reports: Sequence[PRReport]) -> float:
    """Harmonic mean of the mean precision and the mean recall."""
    if not reports:
        raise ValueError("f_measure needs at least one report")
    p = sum(r.precision for r in reports) / len(reports)
    r = sum(r.recall for r in reports) / len(reports)
    return _harmonic(p, r)


# -- bench -------------------------------------------------------------------

@dataclass
class BenchSpec:
    name: str = "synthetic"
    sigmas: list[float] = field(default_factory=lambda: [0.3, 0.5, 0.7])
    modes: list[str] = field(default_factory=lambda: list(MODES))
    documents: int = 10
    size: int = 40
    vocabulary: list[str] = field(default_factory=lambda: [f"t{i}" for i in range(8)])
    term_rate: float = 0.25
    ratio: tuple[float, float, float] = (3, 3, 4)
    corpus_seed: int = 1
    query_count: int = 6
    query_terms: tuple[int, int] = (2, 3)
    query_seed: int = 2
    queries: list[list[str]] | None = None
    approx: ApproxParams = field(default_factory=ApproxParams)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> BenchSpec:
        corpus = raw.get("corpus", {})
        queries = raw.get("queries", {})
        spec = cls()
        spec.name = raw.get("name", spec.name)
        spec.sigmas = [float(s) for s in raw.get("sigmas", spec.sigmas)]
        spec.modes = [m.lower() for m in raw.get("modes", spec.modes)]
        bad = [m for m in spec.modes if m not in MODES]
        if bad:
            raise ValueError(f"unknown modes {bad}")
        spec.documents = int(corpus.get("documents", spec.documents))
        spec.size = int(corpus.get("size", spec.size))
        vocab = corpus.get("vocabulary", len(spec.vocabulary))
        spec.vocabulary = [f"t{i}" for i in range(vocab)] if isinstance(vocab, int) else list(vocab)
        spec.term_rate = float(corpus.get("term_rate", spec.term_rate))
        spec.ratio = tuple(corpus.get("ratio", spec.ratio))
        spec.corpus_seed = int(corpus.get("seed", spec.corpus_seed))
        spec.query_count = int(queries.get("count", spec.query_count))
        spec.query_terms = tuple(queries.get("terms", spec.query_terms))
        spec.query_seed = int(queries.get("seed", spec.query_seed))
        spec.queries = queries.get("list")
        if "select_fraction" in raw:
            spec.approx = ApproxParams(select_fraction=float(raw["select_fraction"]))
        return spec

    @classmethod
    def load(cls, path: str) -> BenchSpec:
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


def generate_corpus(spec: BenchSpec) -> list[PrxmlDocument]:
    rng = random.Random(spec.corpus_seed)
    docs = []
    for _ in range(spec.documents):
        det = random_tree(rng, spec.size, spec.vocabulary, spec.term_rate)
        docs.append(generate_prxml(det, rng.randrange(2**31), spec.ratio))
    return docs


def generate_queries(spec: BenchSpec) -> list[list[str]]:
    if spec.queries is not None:
        return [list(q) for q in spec.queries]
    rng = random.Random(spec.query_seed)
    lo, hi = spec.query_terms
    return [rng.sample(spec.vocabulary, rng.randint(lo, min(hi, len(spec.vocabulary))))
            for _ in range(spec.query_count)]


def _run(mode: str, doc, pi, ki, q, sigma, approx: ApproxParams) -> QueryOutcome:
    if mode == "ba":
        return baseline_query(ki, doc, q, sigma)
    return pi_query(ki, pi, doc, q, sigma, "exact" if mode == "piea" else "approx", approx)


def run_bench(spec: BenchSpec, timing: bool = True) -> list[PRReport]:
    """One report per (document, query, sigma, mode), scored against BA."""
    reports: list[PRReport] = []
    queries = generate_queries(spec)
    for i, doc in enumerate(generate_corpus(spec)):
        pi, ki = build_indexes(doc)
        corpus = f"{spec.name}/{i}"
        for q in queries:
            for sigma in spec.sigmas:
                t0 = time.monotonic_ns()
                base = baseline_query(ki, doc, q, sigma)
                base_us = (time.monotonic_ns() - t0) // 1000
                for mode in spec.modes:
                    if mode == "ba":
                        out, us = base, base_us
                    else:
                        t0 = time.monotonic_ns()
                        out = _run(mode, doc, pi, ki, q, sigma, spec.approx)
                        us = (time.monotonic_ns() - t0) // 1000
                    p, r = precision_recall(base.nodes(), out.nodes())
                    reports.append(PRReport(
                        p, r, _harmonic(p, r), " ".join(q), sigma, corpus, mode, len(out.results),
                        {mode: out.stats.convolutions}, {mode: us if timing else 0}))
    return reports


def reports_to_csv(reports: Sequence[PRReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([r.corpus, r.query, f"{r.sigma:g}", r.mode, r.results,
                    f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.fmeasure:.6f}",
                    r.convolutions[r.mode], r.micros[r.mode]])
    return buf.getvalue()


def summarize(reports: Sequence[PRReport], mode: str = "piaa") -> dict[float, tuple[float, float, float]]:
    """Per sigma: (mean precision, mean recall, F-measure) for ``mode``."""
    out = {}
    for sigma in sorted({r.sigma for r in reports}):
        sel = [r for r in reports if r.mode == mode and r.sigma == sigma]
        if sel:
            out[sigma] = (sum(r.precision for r in sel) / len(sel),
                          sum(r.recall for r in sel) / len(sel), f_measure(sel))
    return out
