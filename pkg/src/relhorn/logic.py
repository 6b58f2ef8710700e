"""Predicates, Horn clauses, solution checking and entailment.

Formulas are :mod:`relhorn.terms` terms over integer variables. All
decision-procedure traffic goes through SMT-LIB 2 text: entailment checks
build a small script and hand it to z3's parser in-process, and CHC systems
are serialised to HORN scripts for the external solver (see ``solver``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from . import terms as T
from .terms import Term

DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class Predicate:
    name: str
    vocab: tuple

    def __post_init__(self):
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError(f"duplicate variable in vocabulary of {self.name}")

    @property
    def arity(self) -> int:
        return len(self.vocab)

    def __call__(self, *args) -> "App":
        return App(self, tuple(T.as_term(a) for a in args))

    def identity(self) -> "App":
        return App(self, tuple(T.Var(v) for v in self.vocab))

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class App:
    pred: Predicate
    args: tuple

    def __post_init__(self):
        if len(self.args) != self.pred.arity:
            raise ValueError(f"{self.pred.name} expects {self.pred.arity} args, got {len(self.args)}")

    def free_vars(self) -> frozenset:
        out = frozenset()
        for a in self.args:
            out |= T.free_vars(a)
        return out

    def instantiate(self, interp: Term) -> Term:
        """The interpretation with vocabulary replaced by the arguments."""
        return T.substitute(interp, dict(zip(self.pred.vocab, self.args)))

    def __str__(self):
        return f"{self.pred.name}({', '.join(T.pretty(a) for a in self.args)})"


@dataclass(frozen=True)
class Clause:
    """``head <= constraint /\\ apps``. A query clause has the query as head."""
    head: App
    constraint: Term = T.TRUE
    apps: tuple = ()

    def free_vars(self) -> frozenset:
        out = self.head.free_vars() | T.free_vars(self.constraint)
        for a in self.apps:
            out |= a.free_vars()
        return out

    def predicates(self) -> list:
        return [self.head.pred] + [a.pred for a in self.apps]

    def __str__(self):
        body = [str(a) for a in self.apps]
        if self.constraint != T.TRUE or not body:
            body.append(T.pretty(self.constraint))
        sep = " /\\ "
        return f"{self.head} <= {sep.join(body)}"


@dataclass
class ChcSystem:
    predicates: list = field(default_factory=list)
    clauses: list = field(default_factory=list)
    query: Predicate = field(default_factory=lambda: Predicate("query", ()))

    def add_predicate(self, p: Predicate) -> Predicate:
        self.predicates.append(p)
        return p

    def add(self, clause: Clause) -> Clause:
        self.clauses.append(clause)
        return clause

    def check_well_formed(self) -> None:
        names = {}
        for p in self.predicates + [self.query]:
            if names.setdefault(p.name, p) != p:
                raise ValueError(f"predicate name {p.name} used twice")
        for c in self.clauses:
            for p in c.predicates():
                if names.get(p.name) != p:
                    raise ValueError(f"clause mentions undeclared predicate {p.name}")

    def stats(self) -> dict:
        return {"predicates": len(self.predicates), "clauses": len(self.clauses)}


# a Solution maps predicate names to formulas over that predicate's vocabulary
Solution = dict


# ---------------------------------------------------------------------------
# substitution


def substitute(f: Term, binding: Mapping[str, Term]) -> Term:
    """Capture-free simultaneous substitution with a sort check."""
    for name, e in binding.items():
        if T.sort_of(T.as_term(e)) != T.INT:
            raise T.TermError(f"cannot substitute non-integer term for {name}")
    return T.substitute(f, {k: T.as_term(v) for k, v in binding.items()})


# ---------------------------------------------------------------------------
# entailment


@dataclass(frozen=True)
class Yes:
    def __bool__(self):
        return True


@dataclass(frozen=True)
class No:
    witness: dict

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Unknown:
    reason: str

    def __bool__(self):
        return False


EntailResult = Union[Yes, No, Unknown]


def smt_script(formula: Term) -> str:
    decls = "".join(f"(declare-const {T.smt_symbol(v)} Int)\n" for v in sorted(T.free_vars(formula)))
    return f"{decls}(assert {T.to_smt(formula)})\n"


def check_sat(formula: Term, timeout: float = DEFAULT_TIMEOUT):
    """Satisfiability of an integer formula. Returns ('sat', model) etc.

    Quantified formulas (from solver models) first get an attempt with
    quantifier elimination in front, then the plain solver.
    """
    import z3

    script = smt_script(formula)
    attempts = [(None, timeout)]
    if T.quantified(formula):
        attempts.insert(0, (("simplify", "qe2", "smt"), min(10.0, timeout)))
    for tactics, budget in attempts:
        ctx = z3.Context()
        s = z3.Then(*tactics, ctx=ctx).solver() if tactics else z3.Solver(ctx=ctx)
        s.set("timeout", max(1, int(budget * 1000)))
        s.from_string(script)
        res = s.check()
        if res == z3.sat:
            m = s.model()
            model = {}
            for d in m.decls():
                v = m[d]
                model[d.name()] = v.as_long() if z3.is_int_value(v) else v
            for v in T.free_vars(formula):
                model.setdefault(v, 0)
            return "sat", model
        if res == z3.unsat:
            return "unsat", None
    return "unknown", s.reason_unknown()


def entails(f: Term, g: Term, timeout: float = DEFAULT_TIMEOUT) -> EntailResult:
    """Decide validity of ``f ==> g`` over the integers."""
    status, info = check_sat(T.conj(f, T.negate(g)), timeout)
    if status == "unsat":
        return Yes()
    if status == "sat":
        return No(info)
    return Unknown(str(info))


def equivalent(f: Term, g: Term, timeout: float = DEFAULT_TIMEOUT) -> EntailResult:
    r = entails(f, g, timeout)
    return entails(g, f, timeout) if isinstance(r, Yes) else r


# ---------------------------------------------------------------------------
# solution checking


@dataclass(frozen=True)
class Valid:
    def __bool__(self):
        return True


@dataclass(frozen=True)
class Invalid:
    clause: Optional[Clause]
    witness: dict
    reason: str = ""

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Undecided:
    clause: Optional[Clause]
    reason: str

    def __bool__(self):
        return False


def clause_obligation(clause: Clause, sol: Mapping[str, Term]) -> tuple:
    """The (body, head) formulas of a clause under a solution."""
    body = T.conj(clause.constraint, *(a.instantiate(sol[a.pred.name]) for a in clause.apps))
    head = clause.head.instantiate(sol[clause.head.pred.name])
    return body, head


def validate_solution(sys: ChcSystem, sol: Mapping[str, Term],
                      timeout: float = DEFAULT_TIMEOUT):
    """Check every clause under ``sol``; the query must mean False."""
    sol = dict(sol)
    query_interp = sol.setdefault(sys.query.name, T.FALSE)
    r = entails(query_interp, T.FALSE, timeout)
    if isinstance(r, Unknown):
        return Undecided(None, f"query interpretation: {r.reason}")
    if isinstance(r, No):
        return Invalid(None, r.witness, "query interpretation is not False")
    for p in sys.predicates:
        if p.name not in sol:
            return Invalid(None, {}, f"no interpretation for {p.name}")
        extra = T.free_vars(sol[p.name]) - set(p.vocab)
        if extra:
            return Invalid(None, {}, f"interpretation of {p.name} mentions {sorted(extra)}")
    for clause in sys.clauses:
        body, head = clause_obligation(clause, sol)
        r = entails(body, head, timeout)
        if isinstance(r, No):
            return Invalid(clause, r.witness)
        if isinstance(r, Unknown):
            return Undecided(clause, r.reason)
    return Valid()


# ---------------------------------------------------------------------------
# SMT-LIB HORN emission


def clause_to_smt(clause: Clause, query: Predicate) -> str:
    body = [T.to_smt(clause.constraint)] if clause.constraint != T.TRUE else []
    body += [_app_smt(a) for a in clause.apps]
    if not body:
        body_s = "true"
    elif len(body) == 1:
        body_s = body[0]
    else:
        body_s = f"(and {' '.join(body)})"
    head_s = "false" if clause.head.pred == query else _app_smt(clause.head)
    inner = f"(=> {body_s} {head_s})"
    fv = sorted(clause.free_vars())
    if not fv:
        return f"(assert {inner})"
    binders = " ".join(f"({T.smt_symbol(v)} Int)" for v in fv)
    return f"(assert (forall ({binders}) {inner}))"


def _app_smt(a: App) -> str:
    if not a.args:
        return T.smt_symbol(a.pred.name)
    return f"({T.smt_symbol(a.pred.name)} {' '.join(T.to_smt(x) for x in a.args)})"


def to_smtlib(sys: ChcSystem) -> str:
    lines = ["(set-logic HORN)"]
    for p in sys.predicates:
        sorts = " ".join("Int" for _ in p.vocab)
        lines.append(f"(declare-fun {T.smt_symbol(p.name)} ({sorts}) Bool)")
    for c in sys.clauses:
        lines.append(clause_to_smt(c, sys.query))
    lines += ["(check-sat)", "(get-model)"]
    return "\n".join(lines) + "\n"


def residual_system(sys: ChcSystem, sol: Mapping[str, Term], open_names) -> ChcSystem:
    """The system left after fixing every predicate outside ``open_names``.

    Known interpretations are plugged into clause bodies, and clauses whose
    head is known become queries asserting that head. Any solution of the
    result, together with ``sol`` on the known predicates, solves ``sys``
    (provided it validates; callers still check the union).
    """
    open_names = set(open_names)
    out = ChcSystem([p for p in sys.predicates if p.name in open_names], [], sys.query)
    for c in sys.clauses:
        if c.head.pred.name not in open_names and not any(a.pred.name in open_names for a in c.apps):
            continue
        known = [a.instantiate(sol[a.pred.name]) for a in c.apps if a.pred.name not in open_names]
        apps = tuple(a for a in c.apps if a.pred.name in open_names)
        body = T.conj(c.constraint, *known)
        if c.head.pred == sys.query or c.head.pred.name in open_names:
            out.add(Clause(c.head, body, apps))
        else:
            out.add(Clause(sys.query(), T.conj(body, T.negate(c.head.instantiate(sol[c.head.pred.name]))), apps))
    return out


def restrict(sol: Mapping[str, Term], names: Sequence[str]) -> dict:
    return {n: sol[n] for n in names if n in sol}
