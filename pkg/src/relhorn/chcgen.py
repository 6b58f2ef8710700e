"""Compile a bounded relational triple into one CHC system.

The system encodes every proof path at once. Each procedure call that is
stepped into opens a *scope*: the callee body on one side, paired with a
prefix of the other side's remaining commands. Inside a scope the proof
state is a pair of residual command lists (one per side), and every pair
gets its own predicate. From a node either side may take a step (Comm), and
a call may swallow any prefix of the other side's residual into its scope
(Part). Sharing is by structural key, so the proof-path DAG stays finite.

Scope predicates are two-state. Alongside the current value of every
variable of both frames, they carry an entry ghost ``v@in`` fixed when the
scope is entered. A scope's exit predicate is therefore a summary relating
entry and exit states of the pair of frames. The root scope has no ghosts.

Two entry modes are supported:

``modular``
    Scope entries are unconstrained (``ghosts = current``). Summaries then
    hold for every calling context, which is what lets a summary from one
    unrolling depth serve as a hypothesis at the next.

``contextual``
    Scope entries are the states actually passed in by callers.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import lang
from . import terms as T
from .lang import Assign, Bottom, Call, Command, If, Skip, Wrapped
from .logic import App, ChcSystem, Clause, Predicate
from .product import ProductCommand, Side

GHOST = "@in"
MODES = ("modular", "contextual")


def ghost(v: str) -> str:
    return v + GHOST


def is_ghost(v: str) -> bool:
    return v.endswith(GHOST)


def unghost(v: str) -> str:
    return v[: -len(GHOST)] if is_ghost(v) else v


class UnboundedInput(Exception):
    pass


@dataclass(frozen=True)
class Frame:
    """Which procedure a side is executing in; ``None`` is the main command."""
    proc: Optional[str]
    vars: tuple


@dataclass(eq=False)
class Scope:
    id: int
    side: Optional[int]          # side that made the call; None for the root
    callee: Optional[str]
    frames: tuple                # Frame per side tag
    prefix: tuple                # other side's commands captured by the scope
    cur: tuple
    ghosts: tuple
    exit: Predicate
    entry: Optional["Node"] = None

    @property
    def vocab(self) -> tuple:
        return self.ghosts + self.cur

    def frame_vars(self, side: int) -> tuple:
        return self.frames[side].vars


@dataclass(frozen=True)
class Choice:
    """One way to make progress from a node.

    ``rule`` is ``assign``, ``if`` or ``call`` for a step on ``side``;
    ``exit`` closes the scope; ``bottom`` closes a path that reaches ``bot``.
    """
    rule: str
    side: Optional[int] = None
    succ: tuple = ()
    inner: Optional[Scope] = None
    cut: int = 0
    clauses: tuple = ()
    entry_args: tuple = ()       # callee scope entry state, for call steps


@dataclass(eq=False)
class Node:
    id: int
    scope: Scope
    res: tuple                   # residual command tuple per side tag
    pred: Predicate
    choices: list = field(default_factory=list)
    dead: bool = False

    @property
    def role(self) -> str:
        if self is self.scope.entry:
            return "pre"
        if not self.res[0] and not self.res[1]:
            return "post"
        return "intermediate"

    def product(self) -> ProductCommand:
        return ProductCommand(Side(0, self.res[0]), Side(1, self.res[1]))

    def key(self) -> tuple:
        return (self.scope.id, self.res)


@dataclass
class GenOutput:
    system: ChcSystem
    nodes: list
    scopes: list
    root: Scope
    node_index: dict
    mode: str
    root_clauses: tuple = ()     # indices of the pre and query clauses

    @property
    def pre_node(self) -> Node:
        return self.root.entry

    @property
    def post_node(self) -> Predicate:
        return self.root.exit

    def node_by_pred(self) -> dict:
        return {n.pred.name: n for n in self.nodes}


def _contains_bottom(items: Sequence[Command]) -> bool:
    return any(isinstance(c, Bottom) for c in items)


def _items(cmd: Command) -> tuple:
    out = []
    for c in lang.items(cmd):
        if isinstance(c, Wrapped):
            out.extend(_items(c.inner))
        else:
            out.append(c)
    return tuple(out)


def steppable_sides(res: tuple, reduce: bool = True) -> tuple:
    """Sides whose head command may be stepped from a node.

    Non-call commands of one side commute with everything on the other
    side, so with ``reduce`` the first non-call head (side 0 before side 1)
    is stepped alone. Only when both heads are calls does the choice of side
    and cut matter.
    """
    live = tuple(s for s in (0, 1) if res[s])
    if reduce:
        for s in live:
            if not isinstance(res[s][0], Call):
                return (s,)
    return live


class Generator:
    def __init__(self, tables: Sequence[Mapping], mode: str = "modular", reduce: bool = True):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.tables = tuple(tables)
        self.reduce = reduce
        self.mode = mode
        self.system = ChcSystem()
        self.nodes: list = []
        self.scopes: list = []
        self.node_memo: dict = {}
        self.scope_memo: dict = {}
        self.queue: deque = deque()
        self.fresh = 0

    # -- construction helpers -------------------------------------------------

    def frame(self, side: int, proc: Optional[str], main_vars=()) -> Frame:
        if proc is None:
            return Frame(None, tuple(main_vars))
        # every copy of a procedure shares one vocabulary
        base = proc.split("#", 1)[0]
        names = set()
        for name, p in self.tables[side].items():
            if name.split("#", 1)[0] == base:
                names |= set(p.local_vars())
        return Frame(proc, tuple(sorted(names)))

    def new_scope(self, side, callee, frames, prefix, ghosts=True, cur=None, exit_pred=None) -> Scope:
        sid = len(self.scopes)
        cur = tuple(cur) if cur is not None else frames[0].vars + frames[1].vars
        gh = tuple(ghost(v) for v in cur) if ghosts else ()
        exit_pred = exit_pred or self.system.add_predicate(Predicate(f"s{sid}", gh + cur))
        scope = Scope(sid, side, callee, frames, tuple(prefix), cur, gh, exit_pred)
        self.scopes.append(scope)
        return scope

    def node(self, scope: Scope, res: tuple, pred: Optional[Predicate] = None) -> Node:
        key = (scope.id, res)
        n = self.node_memo.get(key)
        if n is not None:
            return n
        nid = len(self.nodes)
        pred = pred or self.system.add_predicate(Predicate(f"n{nid}", scope.vocab))
        n = Node(nid, scope, res, pred)
        self.nodes.append(n)
        self.node_memo[key] = n
        self.queue.append(n)
        return n

    def add(self, head: App, constraint=T.TRUE, apps=()) -> int:
        self.system.add(Clause(head, constraint, tuple(apps)))
        return len(self.system.clauses) - 1

    def scope_for_call(self, caller: Node, side: int, call: Call, prefix: tuple) -> Scope:
        other = 1 - side
        key = (side, call.callee, caller.scope.frames[other], prefix)
        scope = self.scope_memo.get(key)
        if scope is None:
            frames = [None, None]
            frames[side] = self.frame(side, call.callee)
            frames[other] = caller.scope.frames[other]
            scope = self.new_scope(side, call.callee, tuple(frames), prefix)
            res = [None, None]
            res[side] = _items(self.tables[side][call.callee].body)
            res[other] = prefix
            scope.entry = self.node(scope, tuple(res))
            self.scope_memo[key] = scope
            if self.mode == "modular":
                args = [T.Var(v) for v in scope.cur] * 2
                self.add(scope.entry.pred(*args))
        return scope

    # -- expansion --------------------------------------------------------------

    def run(self):
        while self.queue:
            self.expand(self.queue.popleft())

    def expand(self, n: Node):
        scope = n.scope
        ident = n.pred.identity()
        if _contains_bottom(n.res[0]) or _contains_bottom(n.res[1]):
            n.dead = True
            c = self.add(scope.exit(*ident.args), T.FALSE, [ident])
            n.choices.append(Choice("bottom", clauses=(c,)))
            return
        if not n.res[0] and not n.res[1]:
            c = self.add(scope.exit(*ident.args), T.TRUE, [ident])
            n.choices.append(Choice("exit", clauses=(c,)))
            return
        for side in steppable_sides(n.res, self.reduce):
            self.step(n, side)

    def with_res(self, n: Node, side: int, items: tuple, other_items=None) -> tuple:
        res = list(n.res)
        res[side] = items
        if other_items is not None:
            res[1 - side] = other_items
        return tuple(res)

    def step(self, n: Node, side: int):
        head, rest = n.res[side][0], n.res[side][1:]
        ident = n.pred.identity()
        vocab = n.scope.vocab
        if isinstance(head, Skip):
            nxt = self.node(n.scope, self.with_res(n, side, rest))
            c = self.add(nxt.pred(*ident.args), T.TRUE, [ident])
            n.choices.append(Choice("assign", side, (nxt,), clauses=(c,)))
        elif isinstance(head, Assign):
            nxt = self.node(n.scope, self.with_res(n, side, rest))
            args = [head.rhs if v == head.target else T.Var(v) for v in vocab]
            c = self.add(nxt.pred(*args), T.TRUE, [ident])
            n.choices.append(Choice("assign", side, (nxt,), clauses=(c,)))
        elif isinstance(head, If):
            t = self.node(n.scope, self.with_res(n, side, _items(head.then) + rest))
            f = self.node(n.scope, self.with_res(n, side, _items(head.other) + rest))
            c1 = self.add(t.pred(*ident.args), head.cond, [ident])
            c2 = self.add(f.pred(*ident.args), T.negate(head.cond), [ident])
            n.choices.append(Choice("if", side, (t, f), clauses=(c1, c2)))
        elif isinstance(head, Call):
            other = n.res[1 - side]
            for j in range(len(other) + 1):
                self.step_call(n, side, head, rest, other[:j], other[j:], j)
        elif isinstance(head, Wrapped):
            nxt = self.node(n.scope, self.with_res(n, side, _items(head.inner) + rest))
            c = self.add(nxt.pred(*ident.args), T.TRUE, [ident])
            n.choices.append(Choice("assign", side, (nxt,), clauses=(c,)))
        else:
            raise TypeError(f"unexpected command {head!r}")

    def step_call(self, n: Node, side: int, call: Call, rest: tuple, prefix: tuple, remaining: tuple, j: int):
        other = 1 - side
        inner = self.scope_for_call(n, side, call, prefix)
        proc = self.tables[side][call.callee]
        params = dict(zip(proc.params, call.args))
        callee_vars = inner.frame_vars(side)
        other_vars = inner.frame_vars(other)

        def ghost_arg(v):
            return params[v] if v in params else T.Var(v + "!i")

        def arglist(callee_fn, other_fn):
            # scope vocab order is side 0 vars then side 1 vars
            parts = {side: [callee_fn(v) for v in callee_vars], other: [other_fn(v) for v in other_vars]}
            return parts[0] + parts[1]

        exit_args = arglist(ghost_arg, T.Var) + arglist(lambda v: T.Var(v + "!c"), lambda v: T.Var(v + "!o"))
        outs = {r: T.Var(o + "!c") for r, o in zip(call.results, proc.outputs)}
        after_res = self.with_res(n, side, rest, remaining)
        after = self.node(n.scope, after_res)
        cur_args = []
        for v in n.scope.vocab:
            if is_ghost(v):
                cur_args.append(T.Var(v))
            elif v in outs:
                cur_args.append(outs[v])
            elif v in other_vars:
                cur_args.append(T.Var(v + "!o"))
            else:
                cur_args.append(T.Var(v))
        ident = n.pred.identity()
        clauses = []
        entry_args = arglist(ghost_arg, T.Var)
        if self.mode == "contextual":
            clauses.append(self.add(inner.entry.pred(*(entry_args + entry_args)), T.TRUE, [ident]))
        clauses.append(self.add(after.pred(*cur_args), T.TRUE, [ident, inner.exit(*exit_args)]))
        n.choices.append(Choice("call", side, (after,), inner, j, tuple(clauses), tuple(entry_args)))


def _main_vars(pcd: ProductCommand, pre, post, extra=()) -> tuple:
    names = set(extra)
    for s in (pcd.left, pcd.right):
        names |= lang.assigned_vars(s.command) | lang.read_vars(s.command)
    names |= T.free_vars(pre) | T.free_vars(post)
    per_side = ([], [])
    for v in sorted(names):
        per_side[lang.untag(v)[1]].append(v)
    return tuple(per_side[0]), tuple(per_side[1])


def _check_bounded(tables):
    from .bounding import recursive_components
    for t in tables:
        for name, proc in t.items():
            if recursive_components(proc.body, t):
                raise UnboundedInput(f"call graph through {name!r} is cyclic; bound the program first")


def construct_chc(pre: T.Term, pcd: ProductCommand, post: T.Term, tables: Sequence[Mapping],
                  mode: str = "modular", main_vars=None, reduce: bool = True) -> GenOutput:
    """Build the CHC system for ``{pre} pcd {post}`` over bounded tables."""
    _check_bounded(tables)
    gen = Generator(tables, mode, reduce)
    mv = main_vars or _main_vars(pcd, pre, post)
    frames = (gen.frame(0, None, mv[0]), gen.frame(1, None, mv[1]))
    root = gen.new_scope(None, None, frames, (), ghosts=False)
    res = (pcd.side(0).cmds if not pcd.side(0).is_skip else (),
           pcd.side(1).cmds if not pcd.side(1).is_skip else ())
    root.entry = gen.node(root, tuple(_items(lang.seq(*r)) for r in res))
    c_pre = gen.add(root.entry.pred.identity(), pre)
    c_query = gen.add(gen.system.query(), T.negate(post), [root.exit.identity()])
    gen.run()
    out = _output(gen, root)
    out.root_clauses = (c_pre, c_query)
    return out


def construct_aux(pre_pred: Predicate, pcd: ProductCommand, post_pred: Predicate,
                  tables: Sequence[Mapping] = ({}, {}), reduce: bool = True) -> GenOutput:
    """Clauses for ``{P} pcd {Q}`` with P and Q given, over ``P``'s vocabulary."""
    gen = Generator(tables, reduce=reduce)
    gen.system.add_predicate(pre_pred)
    if post_pred != pre_pred:
        gen.system.add_predicate(post_pred)
    per_side = ([], [])
    for v in pre_pred.vocab:
        per_side[lang.untag(v)[1]].append(v)
    frames = (Frame(None, tuple(per_side[0])), Frame(None, tuple(per_side[1])))
    root = gen.new_scope(None, None, frames, (), ghosts=False, cur=pre_pred.vocab, exit_pred=post_pred)
    res = tuple(_items(pcd.side(s).command) for s in (0, 1))
    root.entry = gen.node(root, res, pred=pre_pred)
    gen.run()
    return _output(gen, root)


def _output(gen: Generator, root: Scope) -> GenOutput:
    index = {}
    for n in gen.nodes:
        index.setdefault(structural_key(n), []).append(n)
    return GenOutput(gen.system, gen.nodes, gen.scopes, root, index, gen.mode)


def structural_key(n: Node) -> tuple:
    s = n.scope
    return (s.side, s.callee, tuple(f.proc for f in s.frames), s.prefix, n.res)


# ---------------------------------------------------------------------------
# proof-path counting


def count_paths_gen(gen: GenOutput, node: Optional[Node] = None) -> int:
    """Proof trees implied by the node graph (AND over If, OR over choices)."""
    memo = {}

    def go(n: Node) -> int:
        if n.id in memo:
            return memo[n.id]
        total = 0
        for ch in n.choices:
            if ch.rule in ("exit", "bottom"):
                total += 1
            elif ch.rule == "if":
                total += go(ch.succ[0]) * go(ch.succ[1])
            elif ch.rule == "call":
                total += go(ch.inner.entry) * go(ch.succ[0])
            else:
                total += go(ch.succ[0])
        memo[n.id] = total
        return total

    return go(node or gen.pre_node)


def count_paths(pcd: ProductCommand, tables: Sequence[Mapping] = ({}, {}), reduce: bool = False) -> int:
    """Enumerate proof trees of a bounded product directly, without CHCs."""

    def flat(cmds) -> list:
        out = []
        for c in cmds:
            if isinstance(c, lang.Seq):
                out.extend(flat([c.first, c.second]))
            elif isinstance(c, Wrapped):
                out.extend(flat([c.inner]))
            elif not isinstance(c, Skip):
                out.append(c)
        return out

    def go(left: list, right: list) -> int:
        sides = [left, right]
        if any(isinstance(c, Bottom) for c in left + right):
            return 1
        if not left and not right:
            return 1
        total = 0
        order = [s for s in (0, 1) if sides[s]]
        if reduce:
            eager = [s for s in order if not isinstance(sides[s][0], Call)]
            order = eager[:1] or order
        for s in order:
            cmds = sides[s]
            head, rest = cmds[0], cmds[1:]

            def with_side(new, other=None):
                pair = [list(left), list(right)]
                pair[s] = new
                if other is not None:
                    pair[1 - s] = other
                return pair

            if isinstance(head, (Assign, Skip)):
                total += go(*with_side(rest))
            elif isinstance(head, If):
                total += (go(*with_side(flat([head.then]) + rest))
                          * go(*with_side(flat([head.other]) + rest)))
            elif isinstance(head, Call):
                body = flat([tables[s][head.callee].body])
                other = sides[1 - s]
                for j in range(len(other) + 1):
                    inner = with_side(body, other[:j])
                    total += go(*inner) * go(*with_side(rest, other[j:]))
        return total

    return go(flat(list(pcd.side(0).cmds)), flat(list(pcd.side(1).cmds)))
