"""Batch front end: ``bmolab --command {analyze,entropy,verify,stability}``.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 solver error.
Errors print one line ``bmolab:error:<kind>: <message>`` to stderr.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bmo import constants_report
from .entropy import solve_exponential
from .errors import ArbitrageDetected, BmoLabError, SpecError
from .fixtures import CORPUS_VERSION, DEFAULT_SEED
from .io import dumps, parse_spec
from .stability import convergence_experiment, uniform_approx_matrix
from .verify import verify_corpus

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3
DEFAULT_N_LIST = "1..1000:log16"
COMMANDS = ("analyze", "entropy", "verify", "stability")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def parse_int_list(text: str) -> list[int]:
    """``"1,2,5"``, ``"1..10"`` or ``"1..1000:log16"`` (16 log-spaced, deduplicated)."""
    text = text.strip()
    try:
        if ".." in text:
            span, _, spacing = text.partition(":")
            lo, hi = (int(x) for x in span.split(".."))
            if lo < 1 or hi < lo:
                raise ValueError
            if not spacing:
                return list(range(lo, hi + 1))
            if not spacing.startswith("log"):
                raise ValueError
            count = int(spacing[3:])
            if count < 2:
                raise ValueError
            pts = np.rint(np.geomspace(lo, hi, count)).astype(int)
            return sorted(set(int(x) for x in pts))
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"cannot parse integer list {text!r}") from None
    if not vals:
        raise InputError("integer list is empty")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bmolab", description=__doc__.splitlines()[0])
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--input", help="market or family JSON spec")
    p.add_argument("--output", help="output path (default: stdout)")
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--n-list", default=None, help=f"family members (default {DEFAULT_N_LIST})")
    p.add_argument("--k-list", default=None, help="truncation levels for the uniform-approximation grid")
    p.add_argument("--x", type=float, default=0.0, help="initial wealth for stability runs")
    p.add_argument("--corpus-size", type=int, default=100)
    p.add_argument("--version", action="version", version=f"bmolab {__version__}")
    return p


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _need_input(args):
    if not args.input:
        raise InputError(f"--command {args.command} needs --input")
    return parse_spec(args.input)


def cmd_analyze(args) -> int:
    spec = _need_input(args)
    m = spec.market
    report = constants_report(m.tree, -m.lam_dot_M())
    out = {"density_log": "-lambda . M", **report.to_dict()}
    _emit(dumps(out), args.output)
    return EXIT_OK


def cmd_entropy(args) -> int:
    spec = _need_input(args)
    s = solve_exponential(spec.market, tolerance=min(args.tolerance, 1e-12))
    d = s.to_dict()
    d["node_ids"] = list(spec.ids)
    _emit(dumps(d), args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.input:
        spec = parse_spec(args.input)
        report = verify_corpus(args.seed, tolerance=args.tolerance, markets=[spec.market])
    else:
        if args.corpus_size < 1:
            raise InputError("--corpus-size must be positive")
        report = verify_corpus(args.seed, args.corpus_size, tolerance=args.tolerance)
    report["header"]["bmolab_version"] = __version__
    _emit(dumps(report), args.output)
    if not report["passed"]:
        first = report["failures"][0]
        print(f"bmolab:error:verify: {len(report['failures'])} failing checks; "
              f"first {first['name']} on market {first['market']}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_stability(args) -> int:
    spec = _need_input(args)
    fam = spec.family
    if fam is None:
        raise InputError("--command stability needs a spec with a 'family' block")
    requested = parse_int_list(args.n_list or DEFAULT_N_LIST)
    ns = [n for n in requested if n >= fam.n_min]
    skipped = [n for n in requested if n < fam.n_min]
    if not ns:
        raise InputError(f"no admissible family member in n-list (first admissible n = {fam.n_min})")
    table = convergence_experiment(fam, args.x, ns, tolerance=1e-4)
    summary = {"header": {"bmolab_version": __version__, "corpus_version": CORPUS_VERSION,
                          "kind": fam.kind, "description": fam.description,
                          "n_min": fam.n_min, "skipped_n": skipped, "x": args.x},
               **table.summary()}
    if args.k_list:
        ks = parse_int_list(args.k_list)
        if args.x <= -min(ks) - 1:
            raise InputError(f"--x must exceed {-min(ks) - 1} for k-list {ks}")
        grid = uniform_approx_matrix(fam, args.x, ns, ks)
        summary["uniform_approximation"] = {
            "k": grid.ks, "n": grid.ns, "sup_gap": grid.sup_gap,
            "nonincreasing": grid.nonincreasing, "u_nk": grid.u_nk, "u_n": grid.u_n}
    csv_text = table.to_csv()
    if args.output is None:
        sys.stdout.write(csv_text)
    else:
        out = Path(args.output)
        out.write_text(csv_text)
        out.with_suffix(".json").write_text(dumps(summary))
    return EXIT_OK


HANDLERS = {"analyze": cmd_analyze, "entropy": cmd_entropy,
            "verify": cmd_verify, "stability": cmd_stability}


def _fail(kind: str, exc, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"bmolab:error:{kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not (args.tolerance > 0 and math.isfinite(args.tolerance)):
            raise InputError("--tolerance must be a positive number")
        return HANDLERS[args.command](args)
    except (InputError, SpecError, ArbitrageDetected) as exc:
        return _fail("input", exc, EXIT_INPUT)
    except OSError as exc:
        return _fail("input", exc, EXIT_INPUT)
    except (BmoLabError, RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail("solver", exc, EXIT_SOLVER)


if __name__ == "__main__":
    sys.exit(main())
