"""The object language: AST, parser, printer and reference interpreter.

Concrete syntax (``.rvl`` files)::

    proc tri0(n) -> (ret) {
      if n <= 0 { ret := 0 } else { r := tri0(n - 1); ret := r + n }
    }
    main: ret := tri0(n)

Variables hold unbounded integers. Expressions are linear; ``*`` needs an
integer literal on one side.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from . import terms as T
from .terms import Term

# ---------------------------------------------------------------------------
# commands


class Command:
    __slots__ = ()

    def __str__(self):
        return print_command(self)


@dataclass(frozen=True)
class Skip(Command):
    pass


@dataclass(frozen=True)
class Assign(Command):
    target: str
    rhs: Term


@dataclass(frozen=True)
class If(Command):
    cond: Term
    then: Command
    other: Command


@dataclass(frozen=True)
class Call(Command):
    results: tuple
    callee: str
    args: tuple


@dataclass(frozen=True)
class Seq(Command):
    first: Command
    second: Command


@dataclass(frozen=True)
class Wrapped(Command):
    inner: Command


@dataclass(frozen=True)
class Bottom(Command):
    pass


SKIP = Skip()
BOTTOM = Bottom()


def seq(*cmds: Command) -> Command:
    """Right-associated sequence with skips dropped."""
    flat = []
    for c in cmds:
        flat.extend(items(c))
    if not flat:
        return SKIP
    out = flat[-1]
    for c in reversed(flat[:-1]):
        out = Seq(c, out)
    return out


def items(cmd: Command) -> tuple:
    """The non-Seq, non-Skip commands of ``cmd`` in order (possibly empty)."""
    out = []
    stack = [cmd]
    while stack:
        c = stack.pop()
        if isinstance(c, Seq):
            stack.append(c.second)
            stack.append(c.first)
        elif not isinstance(c, Skip):
            out.append(c)
    return tuple(out)


def flatten(cmd: Command) -> list:
    """Non-empty list view of a command sequence; a lone skip stays ``[Skip]``."""
    return list(items(cmd)) or [SKIP]


@dataclass(frozen=True)
class Procedure:
    name: str
    params: tuple
    body: Command
    outputs: tuple

    def local_vars(self) -> tuple:
        """All variables of a frame of this procedure, in canonical order."""
        return tuple(sorted(set(self.params) | set(self.outputs) | assigned_vars(self.body)))


LookupTable = Mapping[str, Procedure]


@dataclass(frozen=True)
class Program:
    main: Command
    table: Mapping[str, Procedure] = field(default_factory=dict)

    def main_vars(self) -> tuple:
        return tuple(sorted(assigned_vars(self.main) | read_vars(self.main)))

    def inputs(self) -> tuple:
        """Variables of ``main`` that may be read before being written."""
        return tuple(sorted(_read_before_write(self.main, frozenset())[0]))

    def outputs(self) -> tuple:
        return tuple(sorted(assigned_vars(self.main)))


# ---------------------------------------------------------------------------
# variable analyses


def assigned_vars(cmd: Command) -> frozenset:
    out = set()
    for c in _walk(cmd):
        if isinstance(c, Assign):
            out.add(c.target)
        elif isinstance(c, Call):
            out.update(c.results)
    return frozenset(out)


def read_vars(cmd: Command) -> frozenset:
    out = set()
    for c in _walk(cmd):
        if isinstance(c, Assign):
            out |= T.free_vars(c.rhs)
        elif isinstance(c, If):
            out |= T.free_vars(c.cond)
        elif isinstance(c, Call):
            for a in c.args:
                out |= T.free_vars(a)
    return frozenset(out)


def called(cmd: Command) -> frozenset:
    return frozenset(c.callee for c in _walk(cmd) if isinstance(c, Call))


def _walk(cmd):
    stack = [cmd]
    while stack:
        c = stack.pop()
        yield c
        if isinstance(c, Seq):
            stack.extend((c.second, c.first))
        elif isinstance(c, If):
            stack.extend((c.other, c.then))
        elif isinstance(c, Wrapped):
            stack.append(c.inner)


def _read_before_write(cmd, written):
    """Return (vars possibly read before written, vars definitely written).

    The written set is None after ``bot``: a path that never returns counts
    as writing everything.
    """
    if written is None:
        return set(), None
    if isinstance(cmd, Skip):
        return set(), written
    if isinstance(cmd, Bottom):
        return set(), None
    if isinstance(cmd, Assign):
        return set(T.free_vars(cmd.rhs) - written), written | {cmd.target}
    if isinstance(cmd, Call):
        reads = set()
        for a in cmd.args:
            reads |= T.free_vars(a) - written
        return reads, written | set(cmd.results)
    if isinstance(cmd, Seq):
        r1, w1 = _read_before_write(cmd.first, written)
        r2, w2 = _read_before_write(cmd.second, w1)
        return r1 | r2, w2
    if isinstance(cmd, If):
        r0 = set(T.free_vars(cmd.cond) - written)
        r1, w1 = _read_before_write(cmd.then, written)
        r2, w2 = _read_before_write(cmd.other, written)
        if w1 is None or w2 is None:
            return r0 | r1 | r2, w2 if w1 is None else w1
        return r0 | r1 | r2, w1 & w2
    if isinstance(cmd, Wrapped):
        return _read_before_write(cmd.inner, written)
    raise TypeError(cmd)


def _definitely_assigns(cmd, out: str) -> bool:
    w = _read_before_write(cmd, frozenset())[1]
    return w is None or out in w


# ---------------------------------------------------------------------------
# renaming


def map_vars(cmd: Command, f) -> Command:
    """Rename every variable of ``cmd`` through ``f`` (procedure names kept)."""
    ren = lambda t: T.rename(t, f)
    if isinstance(cmd, (Skip, Bottom)):
        return cmd
    if isinstance(cmd, Assign):
        return Assign(f(cmd.target), ren(cmd.rhs))
    if isinstance(cmd, If):
        return If(ren(cmd.cond), map_vars(cmd.then, f), map_vars(cmd.other, f))
    if isinstance(cmd, Call):
        return Call(tuple(f(r) for r in cmd.results), cmd.callee, tuple(ren(a) for a in cmd.args))
    if isinstance(cmd, Seq):
        return Seq(map_vars(cmd.first, f), map_vars(cmd.second, f))
    if isinstance(cmd, Wrapped):
        return Wrapped(map_vars(cmd.inner, f))
    raise TypeError(cmd)


def map_calls(cmd: Command, f) -> Command:
    """Rewrite every call node through ``f`` (which may return any command)."""
    if isinstance(cmd, Call):
        return f(cmd)
    if isinstance(cmd, If):
        return If(cmd.cond, map_calls(cmd.then, f), map_calls(cmd.other, f))
    if isinstance(cmd, Seq):
        return seq(map_calls(cmd.first, f), map_calls(cmd.second, f))
    if isinstance(cmd, Wrapped):
        return Wrapped(map_calls(cmd.inner, f))
    return cmd


def tag(name: str, side: int) -> str:
    return f"{name}_{side}"


def untag(name: str) -> tuple:
    base, _, s = name.rpartition("_")
    return base, int(s)


def tag_command(cmd: Command, side: int) -> Command:
    return map_vars(cmd, lambda v: tag(v, side))


def tag_table(table: LookupTable, side: int) -> dict:
    return {
        n: Procedure(
            p.name,
            tuple(tag(v, side) for v in p.params),
            tag_command(p.body, side),
            tuple(tag(v, side) for v in p.outputs),
        )
        for n, p in table.items()
    }


def tag_program(prog: Program, side: int) -> Program:
    return Program(tag_command(prog.main, side), tag_table(prog.table, side))


# ---------------------------------------------------------------------------
# parsing


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + msg)
        self.line, self.col = line, col


class ResolveError(Exception):
    """Unresolved procedure or arity mismatch."""


class LangTypeError(Exception):
    pass


KEYWORDS = {"proc", "main", "skip", "if", "else", "true", "false", "bot"}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\#\d+)?)
  | (?P<op>:=|==>|->|==|!=|<=|>=|&&|\|\||[-+*<>=!(){};:,])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            text = m.group()
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            toks.append(Token(kind, text, line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


class Parser:
    def __init__(self, src: str, allow_bottom: bool = False):
        self.toks = tokenize(src)
        self.i = 0
        self.allow_bottom = allow_bottom
        if not allow_bottom:
            # copy names such as f#2 only occur in printed bounded programs
            for t in self.toks:
                if "#" in t.text:
                    raise self.error(f"copy name {t.text!r} outside a bounded program", t)

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "kw")

    def accept(self, text) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t.text

    # -- program structure
    def program(self) -> Program:
        table = {}
        while self.at("proc"):
            start = self.tok
            proc = self.procedure()
            if proc.name in table:
                raise self.error(f"duplicate procedure {proc.name!r}", start)
            table[proc.name] = proc
        self.expect("main")
        self.expect(":")
        main = self.stmt()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r} after main command")
        return Program(main, table)

    def procedure(self) -> Procedure:
        self.expect("proc")
        name = self.ident()
        self.expect("(")
        params = self.names(")")
        self.expect(")")
        self.expect("->")
        self.expect("(")
        outputs = self.names(")")
        self.expect(")")
        self.expect("{")
        body = self.stmt()
        self.expect("}")
        for group, what in ((params, "parameter"), (outputs, "output")):
            if len(set(group)) != len(group):
                raise ParseError(f"duplicate {what} in procedure {name!r}")
        return Procedure(name, tuple(params), body, tuple(outputs))

    def names(self, closer) -> list:
        out = []
        if self.at(closer):
            return out
        out.append(self.ident())
        while self.accept(","):
            out.append(self.ident())
        return out

    def stmt(self) -> Command:
        cmds = [self.simple()]
        while self.accept(";"):
            if self.at("}") or self.tok.kind == "eof":
                break
            cmds.append(self.simple())
        return seq(*cmds) if len(cmds) > 1 else cmds[0]

    def simple(self) -> Command:
        if self.accept("skip"):
            return SKIP
        if self.at("bot"):
            if not self.allow_bottom:
                raise self.error("'bot' is not allowed in source programs")
            self.i += 1
            return BOTTOM
        if self.accept("if"):
            cond = self.expr()
            self.expect("{")
            then = self.stmt()
            self.expect("}")
            self.expect("else")
            self.expect("{")
            other = self.stmt()
            self.expect("}")
            return If(cond, then, other)
        if self.tok.kind == "ident":
            targets = [self.ident()]
            while self.accept(","):
                targets.append(self.ident())
            self.expect(":=")
            if self.tok.kind == "ident" and self.peek().text == "(":
                callee = self.ident()
                self.expect("(")
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                self.expect(")")
                return Call(tuple(targets), callee, tuple(args))
            if len(targets) != 1:
                raise self.error("multiple targets need a procedure call on the right")
            return Assign(targets[0], self.expr())
        raise self.error(f"expected a statement, found {self.tok.text or 'end of input'!r}")

    # -- expressions
    def expr(self) -> Term:
        return self.implication()

    def implication(self) -> Term:
        left = self.disjunction()
        if self.accept("==>"):
            return T.Implies(left, self.implication())
        return left

    def disjunction(self) -> Term:
        args = [self.conjunction()]
        while self.accept("||"):
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else T.Or(tuple(args))

    def conjunction(self) -> Term:
        args = [self.negation()]
        while self.accept("&&"):
            args.append(self.negation())
        return args[0] if len(args) == 1 else T.And(tuple(args))

    def negation(self) -> Term:
        if self.accept("!"):
            return T.Not(self.negation())
        return self.comparison()

    def comparison(self) -> Term:
        left = self.additive()
        for op in ("==", "!=", "<=", ">=", "<", ">", "="):
            if self.accept(op):
                return T.Cmp("=" if op == "==" else op, left, self.additive())
        return left

    def additive(self) -> Term:
        left = self.multiplicative()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            left = T.Arith(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Term:
        start = self.tok
        left = self.unary()
        while self.accept("*"):
            right = self.unary()
            k = _constant_value(left)
            if k is not None:
                left = T.Scale(k, right)
                continue
            k = _constant_value(right)
            if k is not None:
                left = T.Scale(k, left)
                continue
            raise LangTypeError(
                f"{start.line}:{start.col}: nonlinear multiplication; one factor must be an integer literal"
            )
        return left

    def unary(self) -> Term:
        if self.accept("-"):
            if self.tok.kind == "int":
                v = int(self.tok.text)
                self.i += 1
                return T.Const(-v)
            return T.Neg(self.unary())
        return self.atom()

    def atom(self) -> Term:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return T.Const(int(t.text))
        if self.accept("true"):
            return T.TRUE
        if self.accept("false"):
            return T.FALSE
        if t.kind == "ident":
            self.i += 1
            return T.Var(t.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"expected an expression, found {t.text or 'end of input'!r}")


def _constant_value(t: Term) -> Optional[int]:
    if isinstance(t, T.Const) and not isinstance(t.value, bool):
        return t.value
    return None


def parse_expr(src: str) -> Term:
    p = Parser(src)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}")
    return e


def parse_program(src: str, allow_bottom: bool = False) -> Program:
    """Parse, resolve and type-check a program.

    Raises ParseError (with line/column), ResolveError or LangTypeError.
    """
    prog = Parser(src, allow_bottom=allow_bottom).program()
    check_program(prog)
    return prog


def check_program(prog: Program) -> None:
    table = prog.table
    bodies = [("main", prog.main)] + [(n, p.body) for n, p in table.items()]
    for owner, body in bodies:
        for c in _walk(body):
            if isinstance(c, Call):
                proc = table.get(c.callee)
                if proc is None:
                    raise ResolveError(f"unresolved procedure {c.callee!r} called in {owner}")
                if len(c.args) != len(proc.params):
                    raise ResolveError(
                        f"{c.callee!r} expects {len(proc.params)} argument(s), got {len(c.args)} in {owner}"
                    )
                if len(c.results) != len(proc.outputs):
                    raise ResolveError(
                        f"{c.callee!r} returns {len(proc.outputs)} value(s), {len(c.results)} target(s) in {owner}"
                    )
                for a in c.args:
                    _expect_sort(a, T.INT, owner)
            elif isinstance(c, Assign):
                _expect_sort(c.rhs, T.INT, owner)
            elif isinstance(c, If):
                _expect_sort(c.cond, T.BOOL, owner)
    for p in table.values():
        for o in p.outputs:
            if not _definitely_assigns(p.body, o):
                warnings.warn(f"output {o!r} of {p.name!r} may be unassigned on some path", stacklevel=3)


def _expect_sort(t: Term, sort: str, owner: str) -> None:
    try:
        s = T.sort_of(t)
    except T.TermError as exc:
        raise LangTypeError(f"in {owner}: {exc}") from None
    if s != sort:
        raise LangTypeError(f"in {owner}: expected {sort} expression, got {T.pretty(t)}")


# ---------------------------------------------------------------------------
# printing


def print_command(cmd: Command, indent: int = 0) -> str:
    pad = "  " * indent
    parts = []
    for c in flatten(cmd):
        if isinstance(c, Skip):
            parts.append(pad + "skip")
        elif isinstance(c, Bottom):
            parts.append(pad + "bot")
        elif isinstance(c, Assign):
            parts.append(f"{pad}{c.target} := {T.pretty(c.rhs)}")
        elif isinstance(c, Call):
            args = ", ".join(T.pretty(a) for a in c.args)
            parts.append(f"{pad}{', '.join(c.results)} := {c.callee}({args})")
        elif isinstance(c, If):
            parts.append(
                f"{pad}if {T.pretty(c.cond)} {{\n{print_command(c.then, indent + 1)}\n"
                f"{pad}}} else {{\n{print_command(c.other, indent + 1)}\n{pad}}}"
            )
        elif isinstance(c, Wrapped):
            parts.append(f"{pad}[[\n{print_command(c.inner, indent + 1)}\n{pad}]]")
        else:
            raise TypeError(c)
    return ";\n".join(parts)


def print_program(prog: Program) -> str:
    chunks = []
    for p in prog.table.values():
        chunks.append(
            f"proc {p.name}({', '.join(p.params)}) -> ({', '.join(p.outputs)}) {{\n"
            f"{print_command(p.body, 1)}\n}}"
        )
    chunks.append(f"main:\n{print_command(prog.main, 1)}")
    return "\n\n".join(chunks) + "\n"


# ---------------------------------------------------------------------------
# interpreter


class BudgetExhausted(Exception):
    """The step or recursion-depth budget ran out (possible nontermination)."""


class BottomReached(Exception):
    """Execution reached a cut-off recursive call of a bounded program."""


@dataclass
class Budget:
    steps: int = 100_000
    depth: int = 200

    def tick(self):
        self.steps -= 1
        if self.steps < 0:
            raise BudgetExhausted("step budget exhausted")


def eval_command(cmd: Command, table: LookupTable, sigma: Mapping[str, int],
                 budget: Optional[Budget] = None) -> dict:
    """Big-step evaluation; returns the final state as a new dict."""
    budget = budget or Budget()
    state = dict(sigma)
    _exec(cmd, table, state, budget, 0)
    return state


def _exec(cmd, table, state, budget, depth):
    budget.tick()
    if isinstance(cmd, Skip):
        return
    if isinstance(cmd, Assign):
        state[cmd.target] = T.evaluate(cmd.rhs, state)
    elif isinstance(cmd, Seq):
        _exec(cmd.first, table, state, budget, depth)
        _exec(cmd.second, table, state, budget, depth)
    elif isinstance(cmd, If):
        branch = cmd.then if T.evaluate(cmd.cond, state) else cmd.other
        _exec(branch, table, state, budget, depth)
    elif isinstance(cmd, Call):
        if depth >= budget.depth:
            raise BudgetExhausted("recursion depth budget exhausted")
        proc = table[cmd.callee]
        # fresh frame holding only the bound parameters
        frame = {p: T.evaluate(a, state) for p, a in zip(proc.params, cmd.args)}
        _exec(proc.body, table, frame, budget, depth + 1)
        values = []
        for o in proc.outputs:
            if o not in frame:
                raise T.UndefinedVariable(o)
            values.append(frame[o])
        for r, v in zip(cmd.results, values):
            state[r] = v
    elif isinstance(cmd, Wrapped):
        _exec(cmd.inner, table, state, budget, depth)
    elif isinstance(cmd, Bottom):
        raise BottomReached()
    else:
        raise TypeError(cmd)


# short alias
eval = eval_command  # noqa: A001


def eval_product(pcd, table0: LookupTable, table1: LookupTable, sigma, tau,
                 budget: Optional[Budget] = None, order: Iterable[int] = (0, 1)):
    """Run both sides of a product command over disjoint states.

    ``pcd`` is anything with ``left``/``right`` sides exposing ``tag`` and
    ``cmds`` (see :class:`relhorn.product.ProductCommand`). Returns the
    pair of final states indexed by side tag.
    """
    if set(sigma) & set(tau):
        raise ValueError("product states must have disjoint domains")
    tables = {0: table0, 1: table1}
    init = {0: sigma, 1: tau}
    sides = {s.tag: s for s in (pcd.left, pcd.right)}
    out = {}
    for tag_ in order:
        out[tag_] = eval_command(seq(*sides[tag_].cmds), tables[tag_], init[tag_],
                                 Budget(budget.steps, budget.depth) if budget else None)
    return out[0], out[1]
