"""The verify loop, counterexample confirmation and the benchmark harness.

``verify`` deepens the recursion bound until the bounded CHC system either
yields a proof that generalizes (Verified), is refuted by a concrete input
pair (Refuted), or the schedule or time budget runs out (Inconclusive).
"""
from __future__ import annotations

import concurrent.futures as cf
import itertools
import json
import logging
import os
import random
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import bounding
from . import generalize
from . import infer
from . import lang
from . import logic
from . import proof as PR
from . import solver as S
from . import terms as T
from .chcgen import construct_chc
from .product import ProductCommand

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)


class ConfigError(Exception):
    """Bad input files or job settings (CLI exit code 3)."""


# ---------------------------------------------------------------------------
# inputs


def parse_property(text: str) -> tuple:
    """``pre:`` and ``post:`` lines of a ``.rprop`` file, as terms."""
    found = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep or key not in ("pre", "post"):
            raise ConfigError(f"line {lineno}: expected 'pre: ...' or 'post: ...'")
        if key in found:
            raise ConfigError(f"line {lineno}: duplicate '{key}'")
        try:
            found[key] = lang.parse_expr(rest)
        except lang.ParseError as e:
            raise ConfigError(f"line {lineno}: {e}") from None
    missing = {"pre", "post"} - set(found)
    if missing:
        raise ConfigError(f"property file lacks {', '.join(sorted(missing))}")
    return found["pre"], found["post"]


@dataclass
class Problem:
    """A parsed relational verification task over side-tagged programs."""
    sources: tuple      # the two program texts, untagged
    programs: tuple     # tagged Program per side
    pre: T.Term
    post: T.Term

    @property
    def tables(self) -> tuple:
        return (self.programs[0].table, self.programs[1].table)

    @property
    def inputs(self) -> tuple:
        names = set(self.programs[0].inputs()) | set(self.programs[1].inputs())
        return tuple(sorted(names | T.free_vars(self.pre)))


def load_problem(left: str, right: str, prop: str) -> Problem:
    """Parse and check two program texts and a property text."""
    progs = []
    for side, src in enumerate((left, right)):
        try:
            p = lang.parse_program(src)
            lang.check_program(p)
        except (lang.ParseError, lang.ResolveError, lang.LangTypeError) as e:
            raise ConfigError(f"program {side}: {e}") from None
        progs.append(lang.tag_program(p, side))
    pre, post = parse_property(prop)
    known = set()
    for p in progs:
        known |= set(p.main_vars())
    stray = (T.free_vars(pre) | T.free_vars(post)) - known
    if stray:
        raise ConfigError(f"property mentions unknown variables: {', '.join(sorted(stray))}")
    return Problem((left, right), tuple(progs), pre, post)


# ---------------------------------------------------------------------------
# configuration and verdicts


@dataclass
class JobConfig:
    left: str
    right: str
    prop: str
    start: int = 1
    step: int = 1
    bound_max: int = 5
    solver: S.SolverConfig = field(default_factory=S.SolverConfig.from_env)
    timeout: float = 300.0          # global, across all bounds
    emit_smt2: Optional[str] = None
    emit_bounded: Optional[str] = None
    proof_out: Optional[str] = None
    seed: int = 0
    cex_inputs: int = 200
    folded_solve: float = 0.0       # seconds per folded re-solve in syn; 0 disables

    def __post_init__(self):
        if self.start < 1 or self.step < 1:
            raise ConfigError("bound start and step must be at least 1")
        if self.bound_max < self.start:
            raise ConfigError("bound max must be at least the start bound")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")

    def bounds(self):
        return range(self.start, self.bound_max + 1, self.step)


@dataclass
class BoundRecord:
    bound: int
    predicates: int = 0
    clauses: int = 0
    outcome: str = ""
    seconds: float = 0.0
    note: str = ""


@dataclass
class Verified:
    proof: PR.ProofTree
    bound: int
    trace: list
    source: str = ""

    exit_code = 0


@dataclass
class Refuted:
    sigma: dict          # side-0 inputs
    tau: dict            # side-1 inputs
    outputs: tuple       # final states of both sides
    bound: int
    trace: list

    exit_code = 1

    @property
    def witness(self) -> dict:
        return {**self.sigma, **self.tau}


@dataclass
class Inconclusive:
    reason: str
    trace: list
    bound: int = 0

    exit_code = 2


# ---------------------------------------------------------------------------
# counterexamples


def _run_pair(commands, tables, sigma, tau, budget):
    """Both sides from split states; None when a run hits bot or its budget."""
    outs = []
    for side, state in ((0, sigma), (1, tau)):
        try:
            outs.append(lang.eval_command(commands[side], tables[side], state,
                                          lang.Budget(budget.steps, budget.depth)))
        except (lang.BottomReached, lang.BudgetExhausted, T.UndefinedVariable):
            return None
    return tuple(outs)


def _split(problem: Problem, inputs: dict) -> tuple:
    sides = ({}, {})
    for v, val in inputs.items():
        sides[lang.untag(v)[1]][v] = val
    return sides


def _violates(pre, post, sigma, tau, outs) -> bool:
    env_in = {**sigma, **tau}
    if not T.evaluate(pre, env_in):
        return False
    return not T.evaluate(post, {**env_in, **outs[0], **outs[1]})


def candidate_inputs(problem: Problem, rng: random.Random, exhaustive_box=(-2, 4),
                     max_exhaustive: int = 4000, random_count: int = 200):
    """Inputs satisfying pre: a small exhaustive box first, then samples."""
    names = problem.inputs
    lo, hi = exhaustive_box
    span = hi - lo + 1
    if span ** len(names) <= max_exhaustive:
        for vals in itertools.product(range(lo, hi + 1), repeat=len(names)):
            env = dict(zip(names, vals))
            if T.evaluate(problem.pre, env):
                yield env
    yield from infer.sample_models(problem.pre, names, random_count, rng, lo=-10, hi=20)


def find_counterexample(problem: Problem, bounded: tuple, rng: random.Random,
                        budget: Optional[lang.Budget] = None, random_count: int = 200):
    """A pre-satisfying input whose bot-free bounded runs violate post."""
    budget = budget or lang.Budget(200_000, 300)
    commands = (bounded[0].command, bounded[1].command)
    tables = (bounded[0].table, bounded[1].table)
    for env in candidate_inputs(problem, rng, random_count=random_count):
        sigma, tau = _split(problem, env)
        outs = _run_pair(commands, tables, sigma, tau, budget)
        if outs is not None and _violates(problem.pre, problem.post, sigma, tau, outs):
            return sigma, tau, outs
    return None


def replay(problem: Problem, verdict: Refuted, budget: Optional[lang.Budget] = None) -> bool:
    """Whether a witness still violates the property on the original programs."""
    budget = budget or lang.Budget(200_000, 300)
    pcd = ProductCommand.of(problem.programs[0].main, problem.programs[1].main)
    try:
        outs = lang.eval_product(pcd, *problem.tables, verdict.sigma, verdict.tau, budget)
    except (lang.BottomReached, lang.BudgetExhausted):
        return False
    return _violates(problem.pre, problem.post, verdict.sigma, verdict.tau, outs)


# ---------------------------------------------------------------------------
# the verify loop


def verify(job: JobConfig, problem: Optional[Problem] = None):
    """Run the iterative-deepening loop for one job."""
    if problem is None:
        try:
            texts = [Path(p).read_text() for p in (job.left, job.right, job.prop)]
        except OSError as e:
            raise ConfigError(str(e)) from None
        problem = load_problem(*texts)
    return verify_problem(problem, job)


def verify_problem(problem: Problem, job: JobConfig):
    t_start = time.monotonic()
    deadline = t_start + job.timeout
    rng = random.Random(job.seed)
    trace = []
    last_clauses = 0
    p0, p1 = problem.programs
    for n in job.bounds():
        if time.monotonic() > deadline:
            return Inconclusive("global timeout", trace, trace[-1].bound if trace else 0)
        rec = BoundRecord(n)
        trace.append(rec)
        t_bound = time.monotonic()
        b0 = bounding.bound(p0.main, p0.table, n)
        b1 = bounding.bound(p1.main, p1.table, n)
        if job.emit_bounded:
            _emit_bounded(job.emit_bounded, n, (b0, b1))
        gen = construct_chc(problem.pre, ProductCommand.of(b0.command, b1.command), problem.post,
                            (b0.table, b1.table))
        rec.predicates = len(gen.system.predicates)
        rec.clauses = len(gen.system.clauses)
        if rec.clauses < last_clauses:
            # deeper bounds only add copies, so this would be a generator bug
            raise AssertionError(f"clause count shrank at bound {n}")
        last_clauses = rec.clauses
        if job.emit_smt2:
            Path(job.emit_smt2).write_text(logic.to_smtlib(gen.system))
        remaining = deadline - time.monotonic()
        cfg = S.SolverConfig(job.solver.cmd, max(1.0, min(job.solver.timeout, remaining)),
                             job.solver.workdir, job.solver.keep_temp, job.solver.validate_timeout)
        verdict = S.solve(gen.system, cfg)
        rec.outcome = type(verdict).__name__
        log.info("bound %d: %d predicates, %d clauses, %s", n, rec.predicates, rec.clauses, rec.outcome)

        if isinstance(verdict, S.Solved):
            res = generalize.syn(gen, verdict.solution, (b0.table, b1.table), problem.tables,
                                 problem.pre, problem.post, (p0.main, p1.main), cfg=cfg,
                                 deadline=deadline, seed=job.seed,
                                 use_solver=job.folded_solve > 0, solver_budget=job.folded_solve)
            if res:
                check = PR.check_proof(res.proof, problem.tables)
                if check and PR.root_matches(res.proof, p0.main, p1.main, problem.pre, problem.post):
                    rec.outcome = "Verified"
                    rec.note = f"invariants: {res.source}, candidate {res.candidates}"
                    rec.seconds = time.monotonic() - t_bound
                    if job.proof_out:
                        PR.dump_proof(res.proof, problem.sources, problem.pre, problem.post, job.proof_out)
                    return Verified(res.proof, n, trace, res.source)
                rec.note = f"proof rejected by the checker: {check}"
            else:
                rec.note = "; ".join(res.diagnostics[-3:])
        elif isinstance(verdict, S.Unsolvable):
            cex = find_counterexample(problem, (b0, b1), rng, random_count=job.cex_inputs)
            if cex is not None:
                sigma, tau, outs = cex
                rec.outcome = "Refuted"
                rec.seconds = time.monotonic() - t_bound
                return Refuted(sigma, tau, outs, n, trace)
            rec.note = "no concrete counterexample found"
        else:
            rec.note = getattr(verdict, "reason", "")[:200]
        rec.seconds = time.monotonic() - t_bound
    last = trace[-1].bound if trace else 0
    if time.monotonic() > deadline:
        return Inconclusive("global timeout", trace, last)
    return Inconclusive("maximum bound reached", trace, last)


def _emit_bounded(directory: str, n: int, bounded: tuple) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for side, bp in enumerate(bounded):
        (out / f"side{side}.bound{n}.rvl").write_text(bounding.bounded_program_text(bp))


def describe(verdict) -> str:
    """One human-readable paragraph about a verdict."""
    lines = []
    if isinstance(verdict, Verified):
        lines.append(f"Verified at bound {verdict.bound} (proof of {verdict.proof.size()} nodes, "
                     f"invariants {verdict.source})")
    elif isinstance(verdict, Refuted):
        shown = ", ".join(f"{k}={v}" for k, v in sorted(verdict.witness.items()))
        outs = ", ".join(f"{k}={v}" for o in verdict.outputs for k, v in sorted(o.items())
                         if k not in verdict.witness)
        lines.append(f"Refuted at bound {verdict.bound}: inputs {shown}; outputs {outs}")
    else:
        lines.append(f"Inconclusive: {verdict.reason}")
    for r in verdict.trace:
        extra = f" ({r.note})" if r.note else ""
        lines.append(f"  bound {r.bound}: {r.predicates} predicates, {r.clauses} clauses, "
                     f"{r.outcome} in {r.seconds:.1f}s{extra}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# benchmark suite


@dataclass
class SuiteEntry:
    name: str
    prop_class: str
    left: str
    right: str
    prop: str
    expected: str
    reconstruction: bool = True
    bound_max: int = 5
    timeout: float = 300.0
    note: str = ""


@dataclass
class SuiteRow:
    name: str
    prop_class: str
    verdict: str
    expected: str
    bound: int
    seconds: float
    predicates: int
    clauses: int
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.verdict == self.expected


VERDICT_NAMES = ("Verified", "Refuted", "Inconclusive")


def load_manifest(path) -> list:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    base = path.parent
    defaults = doc.get("defaults", {})
    entries = []
    for i, raw in enumerate(doc.get("entry", [])):
        try:
            e = SuiteEntry(
                name=raw["name"], prop_class=raw.get("class", "equiv"),
                left=str(base / raw["left"]), right=str(base / raw["right"]),
                prop=str(base / raw["property"]), expected=raw.get("expected", "Verified"),
                reconstruction=raw.get("reconstruction", True),
                bound_max=raw.get("bound_max", defaults.get("bound_max", 5)),
                timeout=raw.get("timeout", defaults.get("timeout", 300.0)),
                note=raw.get("note", ""))
        except KeyError as k:
            raise ConfigError(f"{path}: entry {i} lacks {k}") from None
        if e.expected not in VERDICT_NAMES:
            raise ConfigError(f"{path}: entry {e.name}: unknown expected verdict {e.expected!r}")
        entries.append(e)
    return entries


def run_entry(entry: SuiteEntry, solver_cmd: Optional[str] = None, seed: int = 0) -> SuiteRow:
    """Verify one manifest entry; failures become an error row, never an exception."""
    t0 = time.monotonic()
    row = SuiteRow(entry.name, entry.prop_class, "Error", entry.expected, 0, 0.0, 0, 0)
    try:
        solver = S.SolverConfig.from_env()
        if solver_cmd:
            solver.cmd = solver_cmd
        job = JobConfig(entry.left, entry.right, entry.prop, bound_max=entry.bound_max,
                        timeout=entry.timeout, solver=solver, seed=seed)
        v = verify(job)
        row.verdict = type(v).__name__
        row.bound = v.bound
        row.predicates = max((r.predicates for r in v.trace), default=0)
        row.clauses = max((r.clauses for r in v.trace), default=0)
        if isinstance(v, Refuted):
            row.detail = ", ".join(f"{k}={x}" for k, x in sorted(v.witness.items()))
        elif isinstance(v, Inconclusive):
            row.detail = v.reason
    except Exception as e:  # isolate per-entry failures
        log.exception("entry %s failed", entry.name)
        row.detail = f"{type(e).__name__}: {e}"
    row.seconds = round(time.monotonic() - t0, 2)
    return row


def run_suite(manifest, jobs: int = 1, solver_cmd: Optional[str] = None, seed: int = 0) -> list:
    """Run every manifest entry, up to ``jobs`` at a time, in manifest order."""
    entries = load_manifest(manifest) if isinstance(manifest, (str, os.PathLike)) else list(manifest)
    if not entries:
        return []
    if jobs <= 1:
        return [run_entry(e, solver_cmd, seed) for e in entries]
    # processes, since the in-process SMT checks hold the GIL
    with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_entry, e, solver_cmd, seed) for e in entries]
        return [f.result() for f in futures]


COLUMNS = ("name", "class", "verdict", "expected", "bound", "time(s)", "preds", "clauses")


def format_table(rows) -> str:
    data = [(r.name, r.prop_class, r.verdict, r.expected, str(r.bound), f"{r.seconds:.1f}",
             str(r.predicates), str(r.clauses)) for r in rows]
    widths = [max([len(c)] + [len(d[i]) for d in data]) for i, c in enumerate(COLUMNS)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(COLUMNS, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for d, r in zip(data, rows):
        mark = "" if r.ok else "   <-- mismatch"
        lines.append("  ".join(c.ljust(w) for c, w in zip(d, widths)).rstrip() + mark)
    return "\n".join(lines)


def report_json(rows) -> str:
    out = []
    for r in rows:
        d = asdict(r)
        d["ok"] = r.ok
        out.append(d)
    return json.dumps({"entries": out, "mismatches": sum(not r.ok for r in rows)}, indent=1)
