"""Command-line entry point: ``relhorn verify | bench | check-proof``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import driver
from . import lang
from . import proof as PR
from . import solver as S

EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="relhorn", description="Relational verification of recursive programs via CHCs.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="verify a relational property of two programs")
    v.add_argument("left", help="first program (.rvl)")
    v.add_argument("right", help="second program (.rvl)")
    v.add_argument("prop", help="property file (.rprop)")
    v.add_argument("--bound-start", type=int, default=1)
    v.add_argument("--bound-step", type=int, default=1)
    v.add_argument("--bound-max", type=int, default=5)
    v.add_argument("--solver-cmd", help="CHC solver command; {file} is replaced by the query path")
    v.add_argument("--timeout", type=float, default=300.0, help="global time budget in seconds")
    v.add_argument("--emit-smt2", metavar="F", help="write the last bounded CHC system here")
    v.add_argument("--emit-bounded", metavar="D", help="write bounded programs into this directory")
    v.add_argument("--proof-out", metavar="F", help="write the proof as JSON")
    v.add_argument("--jobs", type=int, default=1, help="accepted for symmetry with bench; a single job is sequential")
    v.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="run a benchmark manifest")
    b.add_argument("manifest")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--solver-cmd")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json", metavar="F", help="write the JSON report here instead of stdout")

    c = sub.add_parser("check-proof", help="re-check a proof document")
    c.add_argument("proof")
    return ap


def cmd_verify(args) -> int:
    solver = S.SolverConfig.from_env()
    if args.solver_cmd:
        solver.cmd = args.solver_cmd
    job = driver.JobConfig(args.left, args.right, args.prop, start=args.bound_start,
                           step=args.bound_step, bound_max=args.bound_max, solver=solver,
                           timeout=args.timeout, emit_smt2=args.emit_smt2,
                           emit_bounded=args.emit_bounded, proof_out=args.proof_out, seed=args.seed)
    verdict = driver.verify(job)
    print(driver.describe(verdict))
    return verdict.exit_code


def cmd_bench(args) -> int:
    rows = driver.run_suite(args.manifest, jobs=args.jobs, solver_cmd=args.solver_cmd, seed=args.seed)
    if rows:
        print(driver.format_table(rows))
    report = driver.report_json(rows)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(report + "\n")
    else:
        print(report)
    return 0 if all(r.ok for r in rows) else 1


def cmd_check_proof(args) -> int:
    try:
        doc = PR.load_proof_document(args.proof)
    except (OSError, ValueError, KeyError, lang.ParseError) as e:
        print(f"cannot read proof: {e}", file=sys.stderr)
        return EXIT_USAGE
    result = PR.check_proof(doc.tree, doc.tables)
    if not result:
        print(f"Rejected: {result}")
        return 1
    if not PR.root_matches(doc.tree, doc.mains[0], doc.mains[1], doc.pre, doc.post):
        print("Rejected: the root does not state the recorded programs and property")
        return 1
    print(f"Accepted: {result}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"verify": cmd_verify, "bench": cmd_bench, "check-proof": cmd_check_proof}
    try:
        return handlers[args.command](args)
    except (driver.ConfigError, S.SolverError) as e:
        print(f"relhorn: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"relhorn: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
