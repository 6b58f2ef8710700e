"""Term language shared by program expressions and logical formulas.

Integer terms are linear: sums, differences, negation and scaling by an
integer constant, plus ``div``/``mod`` by a constant (these only come from
solver models). Boolean terms are comparisons of integer terms combined
with the usual connectives. Formulas additionally use ``Implies`` and
``Ite``; the program parser never produces those.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Callable, Mapping, Union

Value = Union[int, bool]


class TermError(Exception):
    """Ill-typed or malformed term."""


class UndefinedVariable(Exception):
    def __init__(self, name: str):
        super().__init__(f"read of undefined variable {name!r}")
        self.name = name


class Term:
    __slots__ = ()

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)

    def __invert__(self):
        return negate(self)

    def __str__(self):
        return pretty(self)


@dataclass(frozen=True)
class Const(Term):
    value: Value

    # bool is an int subclass; keep them apart so True != 1 as terms
    def __eq__(self, other):
        return (
            isinstance(other, Const)
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    def __hash__(self):
        return hash((Const, type(self.value), self.value))


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Arith(Term):
    op: str  # '+' or '-'
    left: Term
    right: Term


@dataclass(frozen=True)
class Neg(Term):
    arg: Term


@dataclass(frozen=True)
class Scale(Term):
    coef: int
    arg: Term


@dataclass(frozen=True)
class IntDiv(Term):
    """SMT-LIB ``div`` or ``mod`` by a nonzero integer constant."""
    op: str  # 'div' or 'mod'
    arg: Term
    divisor: int

    def __post_init__(self):
        if self.op not in ("div", "mod") or self.divisor == 0:
            raise TermError(f"bad integer division {self.op} {self.divisor}")


@dataclass(frozen=True)
class Cmp(Term):
    op: str  # one of CMP_OPS
    left: Term
    right: Term


@dataclass(frozen=True)
class And(Term):
    args: tuple


@dataclass(frozen=True)
class Or(Term):
    args: tuple


@dataclass(frozen=True)
class Not(Term):
    arg: Term


@dataclass(frozen=True)
class Implies(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Ite(Term):
    cond: Term
    then: Term
    other: Term


@dataclass(frozen=True)
class Exists(Term):
    """Only produced by solver models (eagerly inlined predicates)."""
    names: tuple
    body: Term


TRUE = Const(True)
FALSE = Const(False)
CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")
_NEGATED_CMP = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def const(v: Value) -> Const:
    return Const(v)


def var(name: str) -> Var:
    return Var(name)


def as_term(x) -> Term:
    if isinstance(x, Term):
        return x
    if isinstance(x, (bool, int)):
        return Const(x)
    if isinstance(x, str):
        return Var(x)
    raise TermError(f"cannot convert {x!r} to a term")


def add(a, b) -> Term:
    return Arith("+", as_term(a), as_term(b))


def sub(a, b) -> Term:
    return Arith("-", as_term(a), as_term(b))


def cmp(op: str, a, b) -> Term:
    if op not in CMP_OPS:
        raise TermError(f"unknown comparison {op!r}")
    return Cmp(op, as_term(a), as_term(b))


def eq(a, b) -> Term:
    return cmp("=", a, b)


def conj(*args) -> Term:
    """Flattening conjunction with constant folding."""
    flat = []
    for a in args:
        a = as_term(a)
        if a == TRUE:
            continue
        if a == FALSE:
            return FALSE
        if isinstance(a, And):
            flat.extend(a.args)
        else:
            flat.append(a)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*args) -> Term:
    flat = []
    for a in args:
        a = as_term(a)
        if a == FALSE:
            continue
        if a == TRUE:
            return TRUE
        if isinstance(a, Or):
            flat.extend(a.args)
        else:
            flat.append(a)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def negate(a) -> Term:
    a = as_term(a)
    if a == TRUE:
        return FALSE
    if a == FALSE:
        return TRUE
    if isinstance(a, Not):
        return a.arg
    if isinstance(a, Cmp):
        return Cmp(_NEGATED_CMP[a.op], a.left, a.right)
    return Not(a)


def implies(a, b) -> Term:
    return Implies(as_term(a), as_term(b))


# ---------------------------------------------------------------------------
# structural traversal


def children(t: Term) -> tuple:
    if isinstance(t, (Const, Var)):
        return ()
    if isinstance(t, (Arith, Cmp, Implies)):
        return (t.left, t.right)
    if isinstance(t, (Neg, Not, Scale, IntDiv)):
        return (t.arg,)
    if isinstance(t, (And, Or)):
        return t.args
    if isinstance(t, Ite):
        return (t.cond, t.then, t.other)
    if isinstance(t, Exists):
        return (t.body,)
    raise TermError(f"not a term: {t!r}")


def rebuild(t: Term, kids) -> Term:
    kids = tuple(kids)
    if isinstance(t, (Const, Var)):
        return t
    if isinstance(t, Arith):
        return Arith(t.op, *kids)
    if isinstance(t, Cmp):
        return Cmp(t.op, *kids)
    if isinstance(t, Implies):
        return Implies(*kids)
    if isinstance(t, Neg):
        return Neg(kids[0])
    if isinstance(t, Not):
        return Not(kids[0])
    if isinstance(t, Scale):
        return Scale(t.coef, kids[0])
    if isinstance(t, IntDiv):
        return IntDiv(t.op, kids[0], t.divisor)
    if isinstance(t, And):
        return And(kids)
    if isinstance(t, Or):
        return Or(kids)
    if isinstance(t, Ite):
        return Ite(*kids)
    if isinstance(t, Exists):
        return Exists(t.names, kids[0])
    raise TermError(f"not a term: {t!r}")


def free_vars(t: Term) -> frozenset:
    out = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Var):
            out.add(cur.name)
        elif isinstance(cur, Exists):
            out |= free_vars(cur.body) - set(cur.names)
        else:
            stack.extend(children(cur))
    return frozenset(out)


def substitute(t: Term, binding: Mapping[str, Term]) -> Term:
    """Simultaneous, capture-avoiding substitution of variables by terms."""
    if not binding:
        return t

    def go(x):
        if isinstance(x, Var):
            r = binding.get(x.name)
            return x if r is None else as_term(r)
        if isinstance(x, Const):
            return x
        if isinstance(x, Exists):
            return _subst_exists(x, binding)
        return rebuild(x, (go(k) for k in children(x)))

    return go(t)


def _subst_exists(x: Exists, binding: Mapping[str, Term]) -> Term:
    inner = {k: v for k, v in binding.items() if k not in x.names}
    taken = set()
    for v in inner.values():
        taken |= free_vars(as_term(v))
    names = []
    for n in x.names:
        fresh = n
        while fresh in taken:
            fresh += "'"
        if fresh != n:
            inner[n] = Var(fresh)
        names.append(fresh)
    return Exists(tuple(names), substitute(x.body, inner))


def rename(t: Term, f: Callable[[str], str]) -> Term:
    return substitute(t, {v: Var(f(v)) for v in free_vars(t)})


# ---------------------------------------------------------------------------
# sorts


INT, BOOL = "Int", "Bool"


def sort_of(t: Term, var_sort: Callable[[str], str] = lambda _: INT) -> str:
    """Return the sort of ``t``, raising TermError if it is ill-typed."""
    if isinstance(t, Const):
        return BOOL if isinstance(t.value, bool) else INT
    if isinstance(t, Var):
        return var_sort(t.name)
    if isinstance(t, (Arith, Neg, Scale, IntDiv)):
        for k in children(t):
            if sort_of(k, var_sort) != INT:
                raise TermError(f"arithmetic on non-integer term in {pretty(t)}")
        return INT
    if isinstance(t, Cmp):
        ls, rs = sort_of(t.left, var_sort), sort_of(t.right, var_sort)
        if ls != rs or (t.op not in ("=", "!=") and ls != INT):
            raise TermError(f"ill-typed comparison {pretty(t)}")
        return BOOL
    if isinstance(t, (And, Or, Not, Implies, Exists)):
        for k in children(t):
            if sort_of(k, var_sort) != BOOL:
                raise TermError(f"connective over non-boolean term in {pretty(t)}")
        return BOOL
    if isinstance(t, Ite):
        if sort_of(t.cond, var_sort) != BOOL:
            raise TermError(f"ite condition is not boolean in {pretty(t)}")
        a, b = sort_of(t.then, var_sort), sort_of(t.other, var_sort)
        if a != b:
            raise TermError(f"ite branches disagree in {pretty(t)}")
        return a
    raise TermError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# evaluation


def evaluate(t: Term, env: Mapping[str, Value]) -> Value:
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Var):
        try:
            return env[t.name]
        except KeyError:
            raise UndefinedVariable(t.name) from None
    if isinstance(t, Arith):
        a, b = evaluate(t.left, env), evaluate(t.right, env)
        return a + b if t.op == "+" else a - b
    if isinstance(t, Neg):
        return -evaluate(t.arg, env)
    if isinstance(t, Scale):
        return t.coef * evaluate(t.arg, env)
    if isinstance(t, IntDiv):
        return smt_divmod(evaluate(t.arg, env), t.divisor)[0 if t.op == "div" else 1]
    if isinstance(t, Cmp):
        a, b = evaluate(t.left, env), evaluate(t.right, env)
        op = t.op
        if op == "=":
            return a == b
        if op == "!=":
            return a != b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        return a >= b
    if isinstance(t, And):
        return all(evaluate(a, env) for a in t.args)
    if isinstance(t, Or):
        return any(evaluate(a, env) for a in t.args)
    if isinstance(t, Not):
        return not evaluate(t.arg, env)
    if isinstance(t, Implies):
        return (not evaluate(t.left, env)) or evaluate(t.right, env)
    if isinstance(t, Ite):
        return evaluate(t.then if evaluate(t.cond, env) else t.other, env)
    if isinstance(t, Exists):
        raise TermError("cannot evaluate a quantified formula")
    raise TermError(f"not a term: {t!r}")


def smt_divmod(a: int, b: int) -> tuple:
    """Euclidean division as in SMT-LIB: ``a = b*q + r`` with ``0 <= r < |b|``."""
    r = a % abs(b)
    return (a - r) // b, r


# ---------------------------------------------------------------------------
# printing

_PREC = {Implies: 1, Or: 2, And: 3, Not: 4, Cmp: 5, Arith: 6, Scale: 7, Neg: 8}


def _prec(t):
    return _PREC.get(type(t), 9)


def pretty(t: Term) -> str:
    """Infix rendering; this is also the DSL's concrete expression syntax."""

    def wrap(k, min_prec):
        s = pretty(k)
        return f"({s})" if _prec(k) < min_prec else s

    if isinstance(t, Const):
        if isinstance(t.value, bool):
            return "true" if t.value else "false"
        return str(t.value)
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Arith):
        return f"{wrap(t.left, 6)} {t.op} {wrap(t.right, 7)}"
    if isinstance(t, Neg):
        return f"-{wrap(t.arg, 8)}"
    if isinstance(t, Scale):
        return f"{t.coef} * {wrap(t.arg, 8)}"
    if isinstance(t, IntDiv):
        return f"{t.op}({pretty(t.arg)}, {t.divisor})"
    if isinstance(t, Cmp):
        return f"{wrap(t.left, 6)} {t.op} {wrap(t.right, 6)}"
    if isinstance(t, And):
        return " && ".join(wrap(a, 4) for a in t.args) if t.args else "true"
    if isinstance(t, Or):
        return " || ".join(wrap(a, 3) for a in t.args) if t.args else "false"
    if isinstance(t, Not):
        return f"!{wrap(t.arg, 5)}"
    if isinstance(t, Implies):
        return f"{wrap(t.left, 2)} ==> {wrap(t.right, 1)}"
    if isinstance(t, Ite):
        return f"ite({pretty(t.cond)}, {pretty(t.then)}, {pretty(t.other)})"
    if isinstance(t, Exists):
        return f"(exists {', '.join(t.names)}. {pretty(t.body)})"
    raise TermError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# SMT-LIB 2

_SMT_CMP = {"=": "=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


def smt_symbol(name: str) -> str:
    return "|" + name + "|"


def to_smt(t: Term) -> str:
    if isinstance(t, Const):
        if isinstance(t.value, bool):
            return "true" if t.value else "false"
        return str(t.value) if t.value >= 0 else f"(- {-t.value})"
    if isinstance(t, Var):
        return smt_symbol(t.name)
    if isinstance(t, Arith):
        return f"({t.op} {to_smt(t.left)} {to_smt(t.right)})"
    if isinstance(t, Neg):
        return f"(- {to_smt(t.arg)})"
    if isinstance(t, Scale):
        return f"(* {to_smt(Const(t.coef))} {to_smt(t.arg)})"
    if isinstance(t, IntDiv):
        return f"({t.op} {to_smt(t.arg)} {to_smt(Const(t.divisor))})"
    if isinstance(t, Cmp):
        if t.op == "!=":
            return f"(not (= {to_smt(t.left)} {to_smt(t.right)}))"
        return f"({_SMT_CMP[t.op]} {to_smt(t.left)} {to_smt(t.right)})"
    if isinstance(t, And):
        if not t.args:
            return "true"
        return "(and " + " ".join(to_smt(a) for a in t.args) + ")"
    if isinstance(t, Or):
        if not t.args:
            return "false"
        return "(or " + " ".join(to_smt(a) for a in t.args) + ")"
    if isinstance(t, Not):
        return f"(not {to_smt(t.arg)})"
    if isinstance(t, Implies):
        return f"(=> {to_smt(t.left)} {to_smt(t.right)})"
    if isinstance(t, Ite):
        return f"(ite {to_smt(t.cond)} {to_smt(t.then)} {to_smt(t.other)})"
    if isinstance(t, Exists):
        binders = " ".join(f"({smt_symbol(n)} Int)" for n in t.names)
        return f"(exists ({binders}) {to_smt(t.body)})"
    raise TermError(f"not a term: {t!r}")


def quantified(t: Term) -> bool:
    stack = [t]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Exists):
            return True
        stack.extend(children(cur))
    return False


def size(t: Term) -> int:
    return 1 + sum(size(k) for k in children(t))


def conj_list(t: Term) -> list:
    return list(t.args) if isinstance(t, And) else [t]


def big_and(ts) -> Term:
    return reduce(lambda a, b: conj(a, b), ts, TRUE)
