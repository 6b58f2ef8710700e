"""Search the bounded proof space for a proof of the unbounded programs.

A *skeleton* fixes one proof path through the node graph built by
:mod:`relhorn.chcgen`: one choice per node, both branches of every
conditional, and for every call either a Step into the callee scope or an
Assume of an enclosing scope with the same copy-erased goal. Skeletons
never touch ``bot``, so they describe proofs of the original programs.

For each candidate skeleton the search folds the chosen path into a CHC
system in which every Assume reuses the hypothesis scope's predicates. The
invariants of the bounded solution are tried first; if they do not carry
over, the folded system is handed to the external solver. Either way the
resulting interpretations are validated before a proof tree is built.
"""
from __future__ import annotations

import itertools
import logging
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import infer
from . import lang
from . import logic
from . import solver as S
from . import terms as T
from .bounding import erase_copy
from .chcgen import GenOutput, Node, Scope, ghost, is_ghost, unghost
from .lang import Call, Wrapped
from .logic import ChcSystem, Clause, Predicate
from .product import ProductCommand, Side
from .proof import ProofTree

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# canonical goals


def _erase_items(items) -> tuple:
    out = []
    for c in items:
        c = lang.map_calls(c, lambda k: Call(k.results, erase_copy(k.callee), k.args))
        for x in lang.items(c):
            if isinstance(x, Wrapped):
                out.extend(_erase_items([x.inner]))
            else:
                out.append(x)
    return tuple(out)


def canonical_goal(pcd: ProductCommand) -> tuple:
    """Copy-erased, unwrapped, flattened key of a product, indexed by side tag."""
    sides = {pcd.left.tag: pcd.left, pcd.right.tag: pcd.right}
    return tuple(_erase_items(() if sides[t].is_skip else sides[t].cmds) for t in (0, 1))


def scope_goal(scope: Scope, tables) -> ProductCommand:
    """The wrapped entry product of a callee scope."""
    s = scope.side
    body = tables[s][scope.callee].body
    left = Side(s, (Wrapped(body),))
    right = Side(1 - s, scope.prefix)
    return ProductCommand(left, right)


def scope_key(scope: Scope) -> tuple:
    """Copy-erased goal of a callee scope.

    The callee is named by its original procedure rather than by its bounded
    body, since the last copy's body has ``bot`` where the recursion was cut.
    """
    other = scope.frames[1 - scope.side].proc
    prefix = canonical_goal(ProductCommand(Side(scope.side, ()), Side(1 - scope.side, scope.prefix)))
    return (scope.side, erase_copy(scope.callee), prefix, other and erase_copy(other))


def goal_procedures(pcd: ProductCommand, tables) -> tuple:
    """Name the procedure each side of a goal stands for, when there is one.

    A side stands for ``N`` if it is ``N``'s (wrapped) body or if its only
    procedure call is a call to ``N``. Returns a pair indexed by side tag.
    """
    names = []
    for tag in (0, 1):
        side = pcd.side(tag)
        items = () if side.is_skip else side.cmds
        name = None
        if len(items) == 1 and isinstance(items[0], Wrapped):
            inner = _erase_items([items[0].inner])
            for pname, proc in tables[tag].items():
                if _erase_items([proc.body]) == inner:
                    name = erase_copy(pname)
        if name is None:
            called = set()
            for c in items:
                called |= {erase_copy(x) for x in lang.called(c)}
            if len(called) == 1:
                name = called.pop()
        names.append(name)
    return tuple(names)


# ---------------------------------------------------------------------------
# skeletons


@dataclass(eq=False)
class SkScope:
    inst: int
    scope: Scope
    entry: Optional["SkNode"] = None


@dataclass(eq=False)
class SkNode:
    node: Node
    choice: object
    kids: list = field(default_factory=list)
    target: Optional[SkScope] = None   # callee scope instance, for calls
    assume: bool = False


@dataclass
class NotGeneralizable:
    diagnostics: list

    def __bool__(self):
        return False

    def __str__(self):
        return "; ".join(self.diagnostics[-5:]) or "no generalizable proof path"


@dataclass
class SynResult:
    proof: ProofTree
    source: str                        # "bounded" or "folded"
    candidates: int
    assumes: list
    system: ChcSystem
    interpretation: dict

    def __bool__(self):
        return True


class Search:
    def __init__(self, gen: GenOutput, tables: Sequence[Mapping]):
        self.gen = gen
        self.tables = tuple(tables)
        self.failed: set = set()
        self.fresh = itertools.count(1)
        self.keys = {}

    def key(self, scope: Scope):
        k = self.keys.get(scope.id)
        if k is None:
            k = self.keys[scope.id] = scope_key(scope)
        return k

    def order(self, n: Node, ctx: dict) -> list:
        """Assume first, then lockstep cuts, then the rest (larger cuts first)."""
        def rank(ch):
            if ch.rule != "call":
                return (0, 0, 0, 0)
            assume = 0 if self.key(ch.inner) in ctx else 1
            prefix = ch.inner.prefix
            lockstep = 0 if prefix and isinstance(prefix[-1], Call) and sum(
                isinstance(c, Call) for c in prefix) == 1 else 1
            alternate = 0 if ch.side != n.scope.side else 1
            return (assume, lockstep, alternate, -ch.cut)
        return sorted(n.choices, key=rank)

    def skeletons(self):
        root = SkScope(0, self.gen.root)
        for entry in self.node(self.gen.root.entry, {}):
            root.entry = entry
            yield root

    def node(self, n: Node, ctx: dict):
        memo = (n.id, frozenset(ctx))
        if memo in self.failed or n.dead:
            return
        found = False
        for sk in self._node(n, ctx):
            found = True
            yield sk
        if not found:
            self.failed.add(memo)

    def _node(self, n: Node, ctx: dict):
        for ch in self.order(n, ctx):
            if ch.rule == "exit":
                yield SkNode(n, ch)
            elif ch.rule == "assign":
                for k in self.node(ch.succ[0], ctx):
                    yield SkNode(n, ch, [k])
            elif ch.rule == "if":
                for a in self.node(ch.succ[0], ctx):
                    for b in self.node(ch.succ[1], ctx):
                        yield SkNode(n, ch, [a, b])
            elif ch.rule == "call":
                key = self.key(ch.inner)
                if key in ctx:
                    for after in self.node(ch.succ[0], ctx):
                        yield SkNode(n, ch, [after], ctx[key], assume=True)
                    continue
                target = SkScope(next(self.fresh), ch.inner)
                inner_ctx = dict(ctx)
                inner_ctx[key] = target
                for body in self.node(ch.inner.entry, inner_ctx):
                    target.entry = body
                    for after in self.node(ch.succ[0], ctx):
                        yield SkNode(n, ch, [after], target)


# ---------------------------------------------------------------------------
# folding a skeleton into a CHC system


class Folded:
    def __init__(self, gen: GenOutput, root: SkScope):
        self.gen = gen
        self.system = ChcSystem(query=gen.system.query)
        self.preds = {}
        self.origin = {}
        self.assumes = []
        self.ok = True
        self.emit_root(root)

    def pred(self, inst: int, p: Predicate) -> Predicate:
        key = (inst, p.name)
        q = self.preds.get(key)
        if q is None:
            q = self.preds[key] = self.system.add_predicate(Predicate(f"{p.name}_{inst}", p.vocab))
            self.origin[q.name] = p.name
        return q

    def rename(self, clause: Clause, mapping: dict) -> Clause:
        def app(a):
            return logic.App(mapping.get(a.pred.name, a.pred), a.args)
        return Clause(app(clause.head), clause.constraint, tuple(app(a) for a in clause.apps))

    def emit_root(self, root: SkScope):
        scope = root.scope
        c_pre, c_query = self.gen.root_clauses
        m = {scope.entry.pred.name: self.pred(0, scope.entry.pred), scope.exit.name: self.pred(0, scope.exit)}
        self.system.add(self.rename(self.gen.system.clauses[c_pre], m))
        self.system.add(self.rename(self.gen.system.clauses[c_query], m))
        self.emit_scope(root)

    def emit_scope(self, sk: SkScope):
        todo = [sk.entry]
        while todo:
            s = todo.pop()
            self.emit_node(s, sk)
            todo.extend(s.kids)

    def emit_node(self, s: SkNode, sk: SkScope):
        inst = sk.inst
        n, ch = s.node, s.choice
        here = self.pred(inst, n.pred)
        exit_p = self.pred(inst, sk.scope.exit)
        if ch.rule == "exit":
            self.system.add(Clause(exit_p.identity(), T.TRUE, (here.identity(),)))
            return
        m = {n.pred.name: here}
        for succ in ch.succ:
            m[succ.pred.name] = self.pred(inst, succ.pred)
        if ch.rule in ("assign", "if"):
            for idx in ch.clauses:
                self.system.add(self.rename(self.gen.system.clauses[idx], m))
            return
        target = s.target
        t_exit = self.pred(target.inst, target.scope.exit)
        t_entry = self.pred(target.inst, target.scope.entry.pred)
        if t_exit.vocab != ch.inner.exit.vocab:
            self.ok = False
            return
        m[ch.inner.exit.name] = t_exit
        self.system.add(self.rename(self.gen.system.clauses[ch.clauses[-1]], m))
        self.system.add(Clause(t_entry(*(ch.entry_args + ch.entry_args)), T.TRUE, (here.identity(),)))
        if s.assume:
            self.assumes.append(s)
        else:
            self.emit_scope(target)

    def from_bounded(self, sol: Mapping[str, T.Term]) -> dict:
        return {q: sol.get(orig, T.FALSE) for q, orig in self.origin.items()}


# ---------------------------------------------------------------------------
# proof construction


def erase(items) -> tuple:
    out = []
    for c in items:
        out.append(lang.map_calls(c, lambda k: Call(k.results, erase_copy(k.callee), k.args)))
    return tuple(out)


def pins(scope: Scope) -> T.Term:
    return T.conj(*(T.eq(T.Var(g), T.Var(unghost(g))) for g in scope.ghosts))


class ProofBuilder:
    def __init__(self, folded: Folded, interp: Mapping[str, T.Term], tables: Sequence[Mapping]):
        self.f = folded
        self.I = interp
        self.tables = tables          # original (unbounded) tagged tables

    def inv(self, inst: int, p: Predicate) -> T.Term:
        return self.I[self.f.pred(inst, p).name]

    def pcd(self, res: tuple, left: int) -> ProductCommand:
        return ProductCommand(Side(left, erase(res[left])), Side(1 - left, erase(res[1 - left])))

    def entry_pre(self, sk: SkScope) -> T.Term:
        return T.conj(self.inv(sk.inst, sk.scope.entry.pred), pins(sk.scope))

    def root(self, root: SkScope, pre, post, main0, main1) -> ProofTree:
        pcd = ProductCommand(Side(0, lang.items(main0)), Side(1, lang.items(main1)))
        inner = self.node(root.entry, root, 0, ())
        return ProofTree("Cons", pre, pcd, post, [inner], (), {"certificates": ["pre", "post"]})

    def node(self, s: SkNode, sk: SkScope, orient: int, ctx: tuple) -> ProofTree:
        n, ch = s.node, s.choice
        pre = self.inv(sk.inst, n.pred)
        post = self.inv(sk.inst, sk.scope.exit)
        pcd = self.pcd(n.res, orient)
        if ch.side is not None and ch.side != orient:
            child = self.node(s, sk, ch.side, ctx)
            return ProofTree("Comm", pre, pcd, post, [child], ctx)
        if ch.rule == "exit":
            skip = ProofTree("Skip", pre, pcd, pre, [], ctx)
            return ProofTree("Cons", pre, pcd, post, [skip], ctx)
        head = n.res[orient][0]
        if ch.rule == "assign":
            child = self.node(s.kids[0], sk, orient, ctx)
            a_pre = logic.substitute(child.pre, {head.target: head.rhs})
            assign = ProofTree("Assign", a_pre, pcd, post, [child], ctx)
            return ProofTree("Cons", pre, pcd, post, [assign], ctx)
        if ch.rule == "if":
            kids = []
            for k, cond in zip(s.kids, (head.cond, T.negate(head.cond))):
                sub = self.node(k, sk, orient, ctx)
                kids.append(ProofTree("Cons", T.conj(pre, cond), sub.pcd, post, [sub], ctx))
            return ProofTree("If", pre, pcd, post, kids, ctx)
        # call
        rest, other = n.res[orient][1:], n.res[1 - orient]
        j = ch.cut
        after = s.kids[0]
        a_pre = self.inv(sk.inst, after.node.pred)
        premise = self.premise(s, ctx)
        call_pcd = ProductCommand(Side(orient, (erase([head])[0],)), Side(1 - orient, erase(other[:j])))
        call = ProofTree("Call", pre, call_pcd, a_pre, [premise], ctx)
        if not rest and j == len(other):
            return ProofTree("Cons", pre, pcd, post, [call], ctx)
        after_pt = self.node(after, sk, orient, ctx)
        return ProofTree("Part", pre, pcd, post, [call, after_pt], ctx, {"cut": (1, j)})

    def premise(self, s: SkNode, ctx: tuple) -> ProofTree:
        target = s.target
        side = s.choice.side
        proc = self.tables[side][erase_copy(target.scope.callee)]
        pcd = ProductCommand(Side(side, (Wrapped(proc.body),)), Side(1 - side, erase(target.scope.prefix)))
        pre = self.entry_pre(target)
        post = self.inv(target.inst, target.scope.exit)
        sid = f"h{target.inst}"
        if s.assume:
            return ProofTree("Assume", pre, pcd, post, [], ctx, {"hypothesis": sid})
        inner_ctx = ctx + (sid,)
        body = self.node(target.entry, target, side, inner_ctx)
        body_pcd = ProductCommand(Side(side, lang.items(proc.body)), pcd.right)
        cons = ProofTree("Cons", pre, body_pcd, post, [body], inner_ctx)
        return ProofTree("Step", pre, pcd, post, [cons], ctx, id=sid)


# ---------------------------------------------------------------------------


def syn(gen: GenOutput, sol: Mapping[str, T.Term], bounded_tables: Sequence[Mapping],
        tables: Sequence[Mapping], pre: T.Term, post: T.Term, main: tuple,
        cfg: Optional[S.SolverConfig] = None, max_candidates: int = 8,
        deadline: Optional[float] = None, use_solver: bool = True,
        guess: bool = True, seed: int = 0, solver_budget: float = 20.0):
    """Find a generalizable proof path and turn it into a proof tree.

    ``bounded_tables`` are the tables the CHC system was built from,
    ``tables`` the original side-tagged ones the proof is stated over, and
    ``main`` the pair of original main commands.

    Invariants for a candidate come from the bounded solution when it
    generalizes as is, then from guess-and-check over concrete runs, then
    from a short external solve of the folded system. Every interpretation
    is validated before a proof is built from it.
    """
    cfg = cfg or S.SolverConfig.from_env()
    search = Search(gen, bounded_tables)
    diagnostics = []
    pending = []   # candidates left for the external solver

    def expired():
        return deadline is not None and time.monotonic() > deadline

    def done(idx, root, folded, interp, source):
        log.info("candidate %d: %s", idx, source)
        proof = ProofBuilder(folded, interp, tables).root(root, pre, post, *main)
        return SynResult(proof, source, idx, folded.assumes, folded.system, interp)

    tried = 0
    for root in itertools.islice(search.skeletons(), max_candidates):
        if expired():
            diagnostics.append("deadline reached")
            break
        tried += 1
        folded = Folded(gen, root)
        log.info("candidate %d: %d predicates, %d clauses, %d assumes", tried,
                 len(folded.system.predicates), len(folded.system.clauses), len(folded.assumes))
        if not folded.ok:
            diagnostics.append(f"candidate {tried}: vocabulary mismatch at an Assume")
            continue
        cand = folded.from_bounded(sol)
        check = logic.validate_solution(folded.system, cand, cfg.validate_timeout)
        if check:
            return done(tried, root, folded, cand, "bounded")
        diagnostics.append(f"candidate {tried}: bounded invariants do not generalize ({_why(check)})")
        if guess:
            guessed = infer.guess_and_check(folded, root, pre, random.Random(seed))
            if guessed is None:
                diagnostics.append(f"candidate {tried}: no inductive guess")
            else:
                check = logic.validate_solution(folded.system, guessed, cfg.validate_timeout)
                if check:
                    return done(tried, root, folded, guessed, "guessed")
                diagnostics.append(f"candidate {tried}: guessed invariants rejected ({_why(check)})")
        pending.append((tried, root, folded))

    if use_solver:
        for idx, root, folded in pending:
            if expired():
                diagnostics.append("deadline reached")
                break
            remaining = min(cfg.timeout, solver_budget)
            if deadline is not None:
                remaining = max(1.0, min(remaining, deadline - time.monotonic()))
            sub = S.SolverConfig(cfg.cmd, remaining, cfg.workdir, cfg.keep_temp, cfg.validate_timeout)
            verdict = S.solve(folded.system, sub)
            if isinstance(verdict, S.Solved):
                return done(idx, root, folded, verdict.solution, "folded")
            diagnostics.append(f"candidate {idx}: folded system {type(verdict).__name__}")
    if tried == 0:
        diagnostics.append("no bot-free proof path in the bounded proof space")
    return NotGeneralizable(diagnostics)


def _why(check) -> str:
    if isinstance(check, logic.Invalid):
        return f"clause {check.clause} fails" if check.clause else check.reason
    if isinstance(check, logic.Undecided):
        return f"undecided: {check.reason}"
    return str(check)
