"""``prxq`` command line.

Exit codes: 0 success, 2 parse/IO/usage errors, 3 index built from a
different document, 4 oracle budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import sys
from typing import Sequence, TextIO

from .engine import ApproxParams, baseline_query, pi_query
from .evaluation import BenchSpec, reports_to_csv, run_bench, summarize
from .pi_index import IndexFormatError, build_indexes, load_indexes, save_indexes
from .prxml import Kind, PrxmlError, format_dewey, generate_prxml, parse_prxml, serialize_prxml
from .worlds import BudgetExceeded, quasi_oracle

EXIT_OK, EXIT_INPUT, EXIT_MISMATCH, EXIT_BUDGET = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _fmt(p: float) -> str:
    return format(p, ".12g")


def _read_doc(path: str):
    try:
        with open(path, "rb") as fh:
            return parse_prxml(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc
    except PrxmlError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _sigma(raw: str) -> float:
    v = float(raw)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError("sigma must lie in (0, 1]")
    return v


def _ratio(raw: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in raw.split(":"))
    except ValueError:
        parts = ()
    if len(parts) != 3 or min(parts) <= 0:
        raise argparse.ArgumentTypeError("ratio must be three positive weights like 3:3:4")
    return parts


def _writer(out: TextIO):
    return csv.writer(out, lineterminator="\n")


def cmd_index(args, out: TextIO) -> int:
    doc = _read_doc(args.doc)
    pi, ki = build_indexes(doc)
    try:
        pix, kix = save_indexes(pi, ki, args.out, doc.checksum())
    except OSError as exc:
        raise CliError(f"cannot write index: {exc.strerror}") from exc
    parts = [len(p.parts) for p in pi.profiles.values()]
    counts = doc.counts
    print(f"nodes: {len(doc)} (ordinary {counts[Kind.ORD]}, ind {counts[Kind.IND]}, "
          f"mux {counts[Kind.MUX]})", file=out)
    print(f"terms: {len(pi.per_term)}  profiles: {len(parts)}  parts: {sum(parts)} "
          f"(max {max(parts, default=0)}, merged {sum(p.approx for p in pi.profiles.values())})",
          file=out)
    print(f"wrote {pix} {kix}", file=out)
    return EXIT_OK


def cmd_query(args, out: TextIO, err: TextIO) -> int:
    doc = _read_doc(args.doc)
    try:
        pi, ki, checksum = load_indexes(args.index)
    except OSError as exc:
        raise CliError(f"cannot read index {args.index}: {exc.strerror}") from exc
    except IndexFormatError as exc:
        raise CliError(f"bad index {args.index}: {exc}") from exc
    if checksum != doc.checksum():
        raise CliError("index was built from a different document", EXIT_MISMATCH)
    q = [k.lower() for k in args.keyword]
    want_trace = args.trace or args.explain
    if args.mode == "ba":
        outcome = baseline_query(ki, doc, q, args.sigma, trace=want_trace)
    else:
        outcome = pi_query(ki, pi, doc, q, args.sigma,
                           "exact" if args.mode == "piea" else "approx",
                           ApproxParams(select_fraction=args.select_fraction), trace=want_trace)
    w = _writer(out)
    w.writerow(["dewey", "probability", "method"])
    for r in outcome.results:
        w.writerow([format_dewey(r.node), _fmt(r.prob), r.method])
    if args.explain:
        ew = _writer(err)
        ew.writerow(["dewey", "lb", "ub"])
        for row in outcome.trace:
            ew.writerow([format_dewey(row.node), _fmt(row.lb), _fmt(row.ub)])
    if args.trace:
        ew = _writer(err)
        ew.writerow(["dewey", "decision", "probability"])
        for row in outcome.trace:
            ew.writerow([format_dewey(row.node), row.decision, _fmt(row.prob)])
        s = outcome.stats
        print(f"# convolutions={s.convolutions} popped={s.popped} pruned={s.pruned} "
              f"bound_emitted={s.bound_emitted}", file=err)
    return EXIT_OK


def cmd_oracle(args, out: TextIO) -> int:
    doc = _read_doc(args.doc)
    q = [k.lower() for k in args.keyword]
    try:
        res = quasi_oracle(doc, q, args.sigma)
    except BudgetExceeded as exc:
        raise CliError(str(exc), EXIT_BUDGET) from exc
    w = _writer(out)
    w.writerow(["dewey", "probability", "qualified"])
    for node in doc.ordinary_nodes():
        d = node.dewey
        w.writerow([format_dewey(d), _fmt(res.per_node[d]), str(d in res.qualified).lower()])
    return EXIT_OK


def cmd_generate(args, out: TextIO) -> int:
    det = _read_doc(args.doc)
    try:
        doc = generate_prxml(det, args.seed, args.ratio)
    except PrxmlError as exc:
        raise CliError(str(exc)) from exc
    text = serialize_prxml(doc)
    if args.out in (None, "-"):
        out.write(text)
    else:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc.strerror}") from exc
    return EXIT_OK


def cmd_bench(args, out: TextIO, err: TextIO) -> int:
    try:
        spec = BenchSpec.load(args.spec)
    except OSError as exc:
        raise CliError(f"cannot read {args.spec}: {exc.strerror}") from exc
    except ValueError as exc:  # TOMLDecodeError is a ValueError
        raise CliError(f"{args.spec}: {exc}") from exc
    reports = run_bench(spec, timing=not args.no_timing)
    text = reports_to_csv(reports)
    if args.out in (None, "-"):
        out.write(text)
    else:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc.strerror}") from exc
    if "piaa" in spec.modes:
        for sigma, (p, r, f) in summarize(reports).items():
            print(f"# piaa sigma={sigma:g} precision={p:.3f} recall={r:.3f} f={f:.3f}", file=err)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prxq", description="Probabilistic threshold keyword queries over PrXML.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and save PI/KI indexes")
    p.add_argument("-d", "--doc", required=True)
    p.add_argument("-o", "--out", required=True, help="output prefix")

    p = sub.add_parser("query", help="evaluate a threshold keyword query")
    p.add_argument("-d", "--doc", required=True)
    p.add_argument("-i", "--index", required=True, help="index prefix")
    p.add_argument("-k", "--keyword", action="append", required=True)
    p.add_argument("--sigma", type=_sigma, required=True)
    p.add_argument("--mode", choices=("ba", "piea", "piaa"), default="piea")
    p.add_argument("--select-fraction", type=float, default=0.5)
    p.add_argument("--explain", action="store_true", help="per-node bounds as CSV on stderr")
    p.add_argument("--trace", action="store_true", help="per-node decisions as CSV on stderr")

    p = sub.add_parser("oracle", help="exact answer by possible-world enumeration")
    p.add_argument("-d", "--doc", required=True)
    p.add_argument("-k", "--keyword", action="append", required=True)
    p.add_argument("--sigma", type=_sigma, required=True)

    p = sub.add_parser("generate", help="insert IND/MUX nodes into a deterministic tree")
    p.add_argument("-d", "--doc", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--ratio", type=_ratio, default=(3.0, 3.0, 4.0))
    p.add_argument("-o", "--out")

    p = sub.add_parser("bench", help="run a benchmark spec and write a CSV report")
    p.add_argument("--spec", required=True)
    p.add_argument("-o", "--out")
    p.add_argument("--no-timing", action="store_true", help="write 0 for timings (byte-stable output)")
    return ap


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        if args.command == "index":
            return cmd_index(args, out)
        if args.command == "query":
            return cmd_query(args, out, err)
        if args.command == "oracle":
            return cmd_oracle(args, out)
        if args.command == "generate":
            return cmd_generate(args, out)
        return cmd_bench(args, out, err)
    except CliError as exc:
        print(f"prxq: {exc}", file=err)
        return exc.code
    except ValueError as exc:
        print(f"prxq: {exc}", file=err)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
