"""External CHC solver bridge over SMT-LIB 2 HORN scripts."""
from __future__ import annotations

import logging
import os
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, replace
from typing import Optional, Union

from . import logic
from . import terms as T
from .logic import ChcSystem, Solution

log = logging.getLogger(__name__)

DEFAULT_CMD = "z3 {file}"
# Without eager inlining z3 never puts quantifiers in models, but it is often
# an order of magnitude slower. Used for the residual system of predicates
# whose default-mode interpretation came back quantified, and as a fallback.
NO_INLINE_CMD = "z3 fp.xform.inline_linear=false fp.xform.inline_eager=false fp.xform.slice=false {file}"


@dataclass
class SolverConfig:
    cmd: str = DEFAULT_CMD
    timeout: float = 120.0
    workdir: Optional[str] = None
    keep_temp: bool = False
    validate_timeout: float = 30.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("solver timeout must be positive")

    @classmethod
    def from_env(cls, **kw) -> "SolverConfig":
        cfg = cls(**kw)
        env = os.environ.get("SOLVER_CMD")
        if env:
            cfg.cmd = env
        return cfg


@dataclass(frozen=True)
class Solved:
    solution: dict
    seconds: float = 0.0


@dataclass(frozen=True)
class Unsolvable:
    trace: str = ""
    seconds: float = 0.0


@dataclass(frozen=True)
class Unknown:
    reason: str
    seconds: float = 0.0


SolverVerdict = Union[Solved, Unsolvable, Unknown]


class SolverError(Exception):
    pass


class ModelParseError(Exception):
    pass


# ---------------------------------------------------------------------------
# s-expressions

_SEXP_TOKEN = re.compile(r'\s+|;[^\n]*|(\()|(\))|(\|[^|]*\|)|("(?:[^"]|"")*")|([^\s()|";]+)')


def parse_sexps(text: str) -> list:
    """Parse every top-level s-expression in ``text``.

    Atoms become strings; quoted symbols keep their bars so that they can be
    told apart from keywords, and are unquoted by :func:`symbol`.
    """
    stack = [[]]
    pos = 0
    while pos < len(text):
        m = _SEXP_TOKEN.match(text, pos)
        if not m:
            raise ModelParseError(f"bad character at offset {pos}: {text[pos:pos + 20]!r}")
        pos = m.end()
        if m.group(1):
            stack.append([])
        elif m.group(2):
            if len(stack) == 1:
                raise ModelParseError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        elif m.group(3) or m.group(4) or m.group(5):
            stack[-1].append(m.group(3) or m.group(4) or m.group(5))
    if len(stack) != 1:
        raise ModelParseError("unbalanced '('")
    return stack[0]


def symbol(atom: str) -> str:
    if atom.startswith("|") and atom.endswith("|"):
        return atom[1:-1]
    return atom


def sexp_to_term(sx, env: dict) -> T.Term:
    """Translate a model s-expression into a term; ``env`` maps names."""
    if isinstance(sx, str):
        if re.fullmatch(r"\d+", sx):
            return T.Const(int(sx))
        if sx == "true":
            return T.TRUE
        if sx == "false":
            return T.FALSE
        name = symbol(sx)
        if name in env:
            return env[name]
        raise ModelParseError(f"unbound symbol {sx!r}")
    if not sx:
        raise ModelParseError("empty application")
    head, args = sx[0], sx[1:]
    if head == "let":
        inner = dict(env)
        for binding in args[0]:
            inner[symbol(binding[0])] = sexp_to_term(binding[1], env)
        return sexp_to_term(args[1], inner)
    if head == "!":
        return sexp_to_term(args[0], env)   # drop annotations
    if head in ("exists", "forall"):
        names = []
        inner = dict(env)
        for b in args[0]:
            if b[1] != "Int":
                raise ModelParseError(f"quantified variable of sort {b[1]!r}")
            names.append(symbol(b[0]))
            inner[names[-1]] = T.Var(names[-1])
        body = sexp_to_term(args[1], inner)
        if head == "exists":
            return T.Exists(tuple(names), body)
        return T.negate(T.Exists(tuple(names), T.negate(body)))
    kids = [sexp_to_term(a, env) for a in args]
    if head == "and":
        return T.conj(*kids)
    if head == "or":
        return T.disj(*kids)
    if head == "not":
        return T.negate(kids[0])
    if head == "=>":
        return T.implies(kids[0], kids[1])
    if head == "ite":
        return T.Ite(*kids)
    if head in ("=", "<", "<=", ">", ">="):
        if head == "=" and T.sort_of(kids[0], lambda _: T.INT) == T.BOOL:
            return T.disj(T.conj(kids[0], kids[1]), T.conj(T.negate(kids[0]), T.negate(kids[1])))
        if len(kids) > 2:
            return T.conj(*(T.cmp(head, a, b) for a, b in zip(kids, kids[1:])))
        return T.cmp(head, kids[0], kids[1])
    if head == "distinct" and len(kids) == 2:
        return T.cmp("!=", kids[0], kids[1])
    if head == "+":
        out = kids[0]
        for k in kids[1:]:
            out = T.add(out, k)
        return out
    if head == "-":
        if len(kids) == 1:
            k = kids[0]
            return T.Const(-k.value) if isinstance(k, T.Const) else T.Neg(k)
        out = kids[0]
        for k in kids[1:]:
            out = T.sub(out, k)
        return out
    if head in ("div", "mod") and len(kids) == 2 and isinstance(kids[1], T.Const):
        return T.IntDiv(head, kids[0], kids[1].value)
    if head == "*":
        consts = [k for k in kids if isinstance(k, T.Const)]
        others = [k for k in kids if not isinstance(k, T.Const)]
        coef = 1
        for c in consts:
            coef *= c.value
        if not others:
            return T.Const(coef)
        if len(others) == 1:
            return T.Scale(coef, others[0])
    raise ModelParseError(f"unsupported model term: {sx!r}")


def parse_model(text: str, system: Optional[ChcSystem] = None) -> Solution:
    """Turn a ``get-model`` response into interpretations over vocabularies.

    Without ``system`` the formal parameter names are kept. With it, the
    formals are mapped positionally onto each predicate's vocabulary, and
    predicates missing from the model are interpreted as False.
    """
    sexps = parse_sexps(text)
    if len(sexps) == 1 and isinstance(sexps[0], list):
        body = sexps[0]
        if body and body[0] == "model":
            body = body[1:]
    else:
        body = sexps
    preds = {p.name: p for p in system.predicates} if system else {}
    sol = {}
    for item in body:
        if not (isinstance(item, list) and item and item[0] == "define-fun"):
            continue
        _, name, formals, sort, expr = item
        name = symbol(name)
        if sort != "Bool":
            raise ModelParseError(f"{name}: non-boolean definition")
        names = [symbol(f[0]) for f in formals]
        if name in preds:
            vocab = preds[name].vocab
            if len(vocab) != len(names):
                raise ModelParseError(f"{name}: arity mismatch")
            env = {f: T.Var(v) for f, v in zip(names, vocab)}
        else:
            env = {f: T.Var(f) for f in names}
        sol[name] = sexp_to_term(expr, env)
    if system is not None:
        for p in system.predicates:
            sol.setdefault(p.name, T.FALSE)
    return sol


# ---------------------------------------------------------------------------


def run_solver(script: str, cfg: SolverConfig) -> tuple:
    """Run the configured solver on ``script``. Returns (status, stdout)."""
    fd, path = tempfile.mkstemp(suffix=".smt2", dir=cfg.workdir, text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(script)
        argv = [a.replace("{file}", path) for a in shlex.split(cfg.cmd)]
        if "{file}" not in cfg.cmd:
            argv.append(path)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=cfg.timeout)
        except subprocess.TimeoutExpired:
            return "timeout", ""
        except OSError as exc:
            raise SolverError(f"cannot run solver {argv[0]!r}: {exc}") from exc
        return "ok", proc.stdout + proc.stderr
    finally:
        if cfg.keep_temp:
            log.info("kept solver script %s", path)
        else:
            os.unlink(path)


def solve(sys: ChcSystem, cfg: Optional[SolverConfig] = None) -> SolverVerdict:
    """Solve ``sys`` externally and re-validate any claimed solution.

    Predicates whose interpretation comes back quantified are re-solved as a
    residual system with the others fixed. With the default command, a model
    that still cannot be used is retried once with :data:`NO_INLINE_CMD`.
    """
    cfg = cfg or SolverConfig.from_env()
    verdict = _solve_once(sys, cfg, residual=True)
    if cfg.cmd == DEFAULT_CMD and isinstance(verdict, Unknown) and verdict.reason.startswith("model"):
        left = cfg.timeout - verdict.seconds
        if left >= 1.0:
            log.info("retrying without inlining: %s", verdict.reason[:120])
            retry = replace(cfg, cmd=NO_INLINE_CMD, timeout=left)
            again = _solve_once(sys, retry, residual=False)
            return replace(again, seconds=again.seconds + verdict.seconds)
    return verdict


def solve_in_rounds(sys: ChcSystem, cfg: Optional[SolverConfig] = None) -> SolverVerdict:
    """Like :func:`solve`, but re-solves quantified predicates with ``cfg.cmd``.

    Each round fixes the quantifier-free interpretations and solves what is
    left. When a round closes no further predicate, the remaining quantified
    interpretations are kept as they are. The union is validated on ``sys``
    either way. Suited to large systems where solving without inlining stalls.
    """
    cfg = cfg or SolverConfig.from_env()
    sys.check_well_formed()
    t0 = time.monotonic()
    cur, sol, prev = sys, {}, None
    while True:
        left = cfg.timeout - (time.monotonic() - t0)
        if left < 1.0:
            return Unknown(f"solver timed out after {cfg.timeout}s", time.monotonic() - t0)
        status, out = run_solver(logic.to_smtlib(cur), replace(cfg, timeout=left))
        lines = out.strip().splitlines()
        first = lines[0].strip() if lines else ""
        if status == "timeout" or first != "sat":
            if cur is sys and first == "unsat":
                return Unsolvable("\n".join(lines[1:]), time.monotonic() - t0)
            return Unknown(f"round on {len(cur.predicates)} predicates gave {first or status}",
                           time.monotonic() - t0)
        try:
            part = parse_model("\n".join(lines[1:]), cur)
        except ModelParseError as exc:
            return Unknown(f"model unreadable: {exc}", time.monotonic() - t0)
        open_names = [p.name for p in cur.predicates if T.quantified(part[p.name])]
        stalled = len(open_names) == prev
        sol.update({k: v for k, v in part.items() if stalled or not T.quantified(v)})
        log.debug("round: %d of %d predicates quantified", len(open_names), len(cur.predicates))
        if not open_names or stalled:
            break
        prev = len(open_names)
        cur = logic.residual_system(cur, part, open_names)
    check = logic.validate_solution(sys, sol, cfg.validate_timeout)
    if not check:
        return Unknown(f"model failed validation: {check}", time.monotonic() - t0)
    return Solved(sol, time.monotonic() - t0)


def _solve_once(sys: ChcSystem, cfg: SolverConfig, residual: bool) -> SolverVerdict:
    sys.check_well_formed()
    script = logic.to_smtlib(sys)
    t0 = time.monotonic()
    status, out = run_solver(script, cfg)
    if status == "timeout":
        return Unknown(f"solver timed out after {cfg.timeout}s", time.monotonic() - t0)
    lines = out.strip().splitlines()
    first = lines[0].strip() if lines else ""
    if first == "unsat":
        return Unsolvable("\n".join(lines[1:]), time.monotonic() - t0)
    if first != "sat":
        return Unknown(f"solver said: {out.strip()[:500]}", time.monotonic() - t0)
    try:
        sol = parse_model("\n".join(lines[1:]), sys)
    except ModelParseError as exc:
        return Unknown(f"model unreadable: {exc}", time.monotonic() - t0)
    open_names = [p.name for p in sys.predicates if T.quantified(sol[p.name])]
    if open_names and residual:
        left = cfg.timeout - (time.monotonic() - t0)
        if left < 1.0:
            return Unknown(f"solver timed out after {cfg.timeout}s", time.monotonic() - t0)
        rest = logic.residual_system(sys, sol, open_names)
        sub = replace(cfg, cmd=NO_INLINE_CMD if cfg.cmd == DEFAULT_CMD else cfg.cmd, timeout=left)
        log.debug("%d quantified interpretations; solving the residual system", len(open_names))
        verdict = _solve_once(rest, sub, residual=False)
        if not isinstance(verdict, Solved):
            return Unknown(f"model quantified and the residual solve gave {type(verdict).__name__}",
                           time.monotonic() - t0)
        sol.update(verdict.solution)
    check = logic.validate_solution(sys, sol, cfg.validate_timeout)
    if not check:
        return Unknown(f"model failed validation: {check}", time.monotonic() - t0)
    return Solved(sol, time.monotonic() - t0)
