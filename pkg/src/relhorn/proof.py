"""Relational proof trees and their independent checker.

A proof tree node records a rule name, a context (the ids of Step nodes
whose triples are available as hypotheses), a triple ``{pre} left x right
{post}`` and its premises. Rules act on the head of the left component of a
flattened sequence; ``Comm`` swaps the components so either side can be
stepped.

Formulas may mention ghost variables ``v@in``. They are logical constants
naming the value of ``v`` when the innermost enclosing procedure scope was
entered, and are renamed apart by the ``Call`` rule check. The checker only
relies on :mod:`relhorn.logic` for entailment; it never looks at how a
proof was produced.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import lang
from . import logic
from . import terms as T
from .lang import Assign, Call, Command, If, Wrapped
from .product import ProductCommand, Side, swap

RULES = ("Skip", "Assign", "If", "Assume", "Step", "Call", "Part", "Cons", "Comm")
ARITY = {"Skip": 0, "Assume": 0, "Assign": 1, "Step": 1, "Comm": 1, "Call": 1,
         "Cons": 1, "If": 2, "Part": 2}
GHOST = "@in"


@dataclass
class ProofTree:
    rule: str
    pre: T.Term
    pcd: ProductCommand
    post: T.Term
    children: list = field(default_factory=list)
    context: tuple = ()
    side_data: dict = field(default_factory=dict)
    id: str = ""

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def size(self) -> int:
        return sum(1 for _ in self.walk())


@dataclass(frozen=True)
class Accepted:
    entailments: int = 0

    def __bool__(self):
        return True


@dataclass(frozen=True)
class Rejected:
    node: Optional[ProofTree]
    reason: str

    def __bool__(self):
        return False

    def __str__(self):
        where = f"{self.node.rule} node {self.node.id}" if self.node is not None else "proof"
        return f"rejected at {where}: {self.reason}"


class _Reject(Exception):
    def __init__(self, node, reason):
        super().__init__(reason)
        self.node = node
        self.reason = reason


# ---------------------------------------------------------------------------
# helpers


def cmds(side: Side) -> tuple:
    return () if side.is_skip else side.cmds


def flat_items(cmd_list) -> tuple:
    out = []
    for c in cmd_list:
        out.extend(lang.items(c))
    return tuple(out)


def canonical(pcd: ProductCommand) -> tuple:
    """Product key modulo wrapping, sequencing and copy indices."""
    def norm(c):
        c = lang.map_calls(c, lambda k: Call(k.results, k.callee.split("#", 1)[0], k.args))
        out = []
        for item in lang.items(c):
            if isinstance(item, Wrapped):
                out.extend(norm(item.inner))
            else:
                out.append(item)
        return tuple(out)

    sides = {}
    for s in (pcd.left, pcd.right):
        sides[s.tag] = tuple(x for c in cmds(s) for x in norm(c))
    return (sides[0], sides[1])


def ghosts_of(*formulas) -> set:
    out = set()
    for f in formulas:
        out |= {v for v in T.free_vars(f) if v.endswith(GHOST)}
    return out


def unghost(v: str) -> str:
    return v[: -len(GHOST)]


def side_of(v: str) -> int:
    base = unghost(v) if v.endswith(GHOST) else v
    return lang.untag(base)[1]


# ---------------------------------------------------------------------------
# checker


class Checker:
    def __init__(self, tables: Sequence[Mapping], timeout: float = logic.DEFAULT_TIMEOUT):
        self.tables = tuple(tables)
        self.timeout = timeout
        self.entailments = 0
        self.steps: dict = {}

    def entails(self, node, f, g, what):
        self.entailments += 1
        r = logic.entails(f, g, self.timeout)
        if isinstance(r, logic.Unknown):
            raise _Reject(node, f"undecided side condition ({what}): {r.reason}")
        if isinstance(r, logic.No):
            raise _Reject(node, f"side condition fails ({what}); witness {r.witness}")

    def check(self, pt: ProofTree, context: tuple = ()):
        if pt.rule not in RULES:
            raise _Reject(pt, f"unknown rule {pt.rule!r}")
        if len(pt.children) != ARITY[pt.rule]:
            raise _Reject(pt, f"{pt.rule} needs {ARITY[pt.rule]} premise(s), has {len(pt.children)}")
        if tuple(pt.context) != tuple(context):
            raise _Reject(pt, "context does not match the enclosing derivation")
        getattr(self, "rule_" + pt.rule.lower())(pt)

    def same(self, node, a, b, what):
        if a != b:
            raise _Reject(node, f"{what} mismatch")

    def child_ok(self, pt, child, pcd, pre=None, post=None, context=None):
        self.same(pt, child.pcd, pcd, "premise product")
        if pre is not None:
            self.same(pt, child.pre, pre, "premise pre-condition")
        if post is not None:
            self.same(pt, child.post, post, "premise post-condition")
        self.check(child, pt.context if context is None else context)

    # -- rules -------------------------------------------------------------------

    def rule_skip(self, pt):
        if cmds(pt.pcd.left) or cmds(pt.pcd.right):
            raise _Reject(pt, "Skip needs skip on both sides")
        self.same(pt, pt.pre, pt.post, "Skip pre/post")

    def _head(self, pt, kind):
        items = cmds(pt.pcd.left)
        if not items or not isinstance(items[0], kind):
            raise _Reject(pt, f"{pt.rule} needs a {kind.__name__} at the head of the left side")
        return items[0], items[1:]

    def rule_assign(self, pt):
        head, rest = self._head(pt, Assign)
        child = pt.children[0]
        pcd = ProductCommand(Side(pt.pcd.left.tag, rest), pt.pcd.right)
        self.same(pt, pt.pre, logic.substitute(child.pre, {head.target: head.rhs}), "Assign pre-condition")
        self.child_ok(pt, child, pcd, post=pt.post)

    def rule_if(self, pt):
        head, rest = self._head(pt, If)
        tag = pt.pcd.left.tag
        t, f = pt.children
        self.child_ok(pt, t, ProductCommand(Side(tag, flat_items([head.then]) + rest), pt.pcd.right),
                      pre=T.conj(pt.pre, head.cond), post=pt.post)
        self.child_ok(pt, f, ProductCommand(Side(tag, flat_items([head.other]) + rest), pt.pcd.right),
                      pre=T.conj(pt.pre, T.negate(head.cond)), post=pt.post)

    def rule_comm(self, pt):
        self.child_ok(pt, pt.children[0], swap(pt.pcd), pt.pre, pt.post)

    def rule_cons(self, pt):
        child = pt.children[0]
        self.same(pt, child.pcd, pt.pcd, "Cons product")
        self.entails(pt, pt.pre, child.pre, "pre ==> premise pre")
        self.entails(pt, child.post, pt.post, "premise post ==> post")
        self.check(child, pt.context)

    def rule_part(self, pt):
        i, j = pt.side_data.get("cut", (None, None))
        left, right = cmds(pt.pcd.left), cmds(pt.pcd.right)
        if i is None or not (0 <= i <= len(left) and 0 <= j <= len(right)):
            raise _Reject(pt, "Part cut out of range")
        if (i, j) in ((0, 0), (len(left), len(right))):
            raise _Reject(pt, "degenerate Part cut")
        a, b = pt.children
        lt, rt = pt.pcd.left.tag, pt.pcd.right.tag
        self.child_ok(pt, a, ProductCommand(Side(lt, left[:i]), Side(rt, right[:j])), pre=pt.pre)
        self.child_ok(pt, b, ProductCommand(Side(lt, left[i:]), Side(rt, right[j:])), pre=a.post, post=pt.post)

    def rule_step(self, pt):
        items = cmds(pt.pcd.left)
        if len(items) != 1 or not isinstance(items[0], Wrapped):
            raise _Reject(pt, "Step needs a single wrapped command on the left")
        if not pt.id or pt.id in pt.context:
            raise _Reject(pt, "Step node needs a fresh id")
        self.steps[pt.id] = pt
        pcd = ProductCommand(Side(pt.pcd.left.tag, flat_items([items[0].inner])), pt.pcd.right)
        self.child_ok(pt, pt.children[0], pcd, pt.pre, pt.post, context=tuple(pt.context) + (pt.id,))

    def rule_assume(self, pt):
        hid = pt.side_data.get("hypothesis")
        if hid not in pt.context:
            raise _Reject(pt, "hypothesis is not in the context")
        hyp = self.steps.get(hid)
        if hyp is None:
            raise _Reject(pt, "hypothesis does not name an enclosing Step")
        if canonical(hyp.pcd) != canonical(pt.pcd):
            raise _Reject(pt, "goal differs from the hypothesis")
        items = cmds(pt.pcd.left)
        if len(items) != 1 or not isinstance(items[0], Wrapped):
            raise _Reject(pt, "Assume applies to a wrapped procedure body")
        gs = ghosts_of(pt.pre, pt.post, hyp.pre, hyp.post)
        pinned = T.conj(*(T.eq(T.Var(g), T.Var(unghost(g))) for g in sorted(gs)))
        self.entails(pt, pt.pre, hyp.pre, "goal pre ==> hypothesis pre")
        self.entails(pt, pt.pre, pinned, "goal pre fixes the entry ghosts")
        at_entry = T.substitute(pt.pre, {unghost(g): T.Var(g) for g in gs})
        self.entails(pt, T.conj(at_entry, hyp.post), pt.post, "hypothesis post ==> goal post")

    def rule_call(self, pt):
        items = cmds(pt.pcd.left)
        if len(items) != 1 or not isinstance(items[0], Call):
            raise _Reject(pt, "Call needs a single call on the left")
        call = items[0]
        s = pt.pcd.left.tag
        proc = self.tables[s].get(call.callee)
        if proc is None:
            raise _Reject(pt, f"unknown procedure {call.callee!r}")
        premise = pt.children[0]
        body_pcd = ProductCommand(Side(s, (Wrapped(proc.body),)), pt.pcd.right)
        self.same(pt, premise.pcd, body_pcd, "Call premise product")
        params = dict(zip(proc.params, call.args))

        def init(v):
            return params[v] if v in params else T.Var(v + "!i")

        def entry_map(f, at_exit):
            m = {}
            for v in T.free_vars(f):
                if v.endswith(GHOST):
                    base = unghost(v)
                    m[v] = init(base) if side_of(v) == s else T.Var(base)
                elif side_of(v) == s:
                    m[v] = T.Var(v + "!c") if at_exit else init(v)
                elif at_exit:
                    m[v] = T.Var(v + "!o")
            return m

        pre_in = T.substitute(premise.pre, entry_map(premise.pre, False))
        self.entails(pt, pt.pre, pre_in, "caller pre ==> callee pre with parameters bound")
        r_out = T.substitute(premise.post, entry_map(premise.post, True))
        q_map = {r: T.Var(o + "!c") for r, o in zip(call.results, proc.outputs)}
        for v in T.free_vars(pt.post):
            if not v.endswith(GHOST) and side_of(v) != s:
                q_map[v] = T.Var(v + "!o")
        q_out = T.substitute(pt.post, q_map)
        self.entails(pt, T.conj(pt.pre, r_out), q_out, "callee post ==> caller post")
        self.check(premise, pt.context)


def check_proof(pt: ProofTree, tables: Sequence[Mapping], timeout: float = logic.DEFAULT_TIMEOUT):
    """Check a proof tree against the (unbounded, side-tagged) tables."""
    checker = Checker(tables, timeout)
    try:
        checker.check(pt, ())
    except _Reject as exc:
        return Rejected(exc.node, exc.reason)
    except RecursionError:
        return Rejected(None, "proof too deep")
    return Accepted(checker.entailments)


# ---------------------------------------------------------------------------
# JSON


def term_to_json(t: T.Term) -> str:
    return T.to_smt(t)


def term_from_json(s: str) -> T.Term:
    from .solver import parse_sexps, sexp_to_term, symbol

    class AnyVar(dict):
        def __contains__(self, k):
            return True

        def __getitem__(self, k):
            return T.Var(k)

    (sx,) = parse_sexps(s)
    return sexp_to_term(sx, AnyVar())


def command_to_json(c: Command):
    if isinstance(c, lang.Skip):
        return {"skip": True}
    if isinstance(c, Assign):
        return {"assign": c.target, "rhs": term_to_json(c.rhs)}
    if isinstance(c, If):
        return {"if": term_to_json(c.cond), "then": [command_to_json(x) for x in lang.items(c.then)],
                "else": [command_to_json(x) for x in lang.items(c.other)]}
    if isinstance(c, Call):
        return {"call": c.callee, "results": list(c.results), "args": [term_to_json(a) for a in c.args]}
    if isinstance(c, Wrapped):
        return {"wrapped": [command_to_json(x) for x in lang.items(c.inner)]}
    if isinstance(c, lang.Bottom):
        return {"bot": True}
    if isinstance(c, lang.Seq):
        return {"seq": [command_to_json(x) for x in lang.items(c)]}
    raise TypeError(c)


def command_from_json(d) -> Command:
    if "skip" in d:
        return lang.SKIP
    if "assign" in d:
        return Assign(d["assign"], term_from_json(d["rhs"]))
    if "if" in d:
        return If(term_from_json(d["if"]), lang.seq(*map(command_from_json, d["then"])),
                  lang.seq(*map(command_from_json, d["else"])))
    if "call" in d:
        return Call(tuple(d["results"]), d["call"], tuple(term_from_json(a) for a in d["args"]))
    if "wrapped" in d:
        return Wrapped(lang.seq(*map(command_from_json, d["wrapped"])))
    if "bot" in d:
        return lang.BOTTOM
    if "seq" in d:
        return lang.seq(*map(command_from_json, d["seq"]))
    raise ValueError(f"bad command {d!r}")


def side_to_json(s: Side):
    return {"tag": s.tag, "cmds": [command_to_json(c) for c in cmds(s)]}


def side_from_json(d) -> Side:
    return Side(d["tag"], tuple(command_from_json(c) for c in d["cmds"]))


def tree_to_json(pt: ProofTree) -> dict:
    return {
        "id": pt.id,
        "rule": pt.rule,
        "context": list(pt.context),
        "pre": term_to_json(pt.pre),
        "left": side_to_json(pt.pcd.left),
        "right": side_to_json(pt.pcd.right),
        "post": term_to_json(pt.post),
        "side_data": {k: list(v) if isinstance(v, tuple) else v for k, v in pt.side_data.items()},
        "children": [tree_to_json(c) for c in pt.children],
    }


def tree_from_json(d) -> ProofTree:
    sd = dict(d.get("side_data", {}))
    if "cut" in sd:
        sd["cut"] = tuple(sd["cut"])
    return ProofTree(
        rule=d["rule"],
        pre=term_from_json(d["pre"]),
        pcd=ProductCommand(side_from_json(d["left"]), side_from_json(d["right"])),
        post=term_from_json(d["post"]),
        children=[tree_from_json(c) for c in d["children"]],
        context=tuple(d.get("context", ())),
        side_data=sd,
        id=d.get("id", ""),
    )


def dump_proof(pt: ProofTree, programs: Sequence[str], pre: T.Term, post: T.Term, path) -> None:
    """Write a self-contained proof document (programs, property, tree)."""
    doc = {
        "format": "relhorn-proof/1",
        "programs": list(programs),
        "pre": term_to_json(pre),
        "post": term_to_json(post),
        "tree": tree_to_json(pt),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_proof(path) -> tuple:
    """Read a proof document. Returns (tree, tagged tables, pre, post)."""
    with open(path) as fh:
        doc = json.load(fh)
    tables = []
    for side, src in enumerate(doc["programs"]):
        prog = lang.tag_program(lang.parse_program(src), side)
        tables.append(prog.table)
    return tree_from_json(doc["tree"]), tuple(tables), term_from_json(doc["pre"]), term_from_json(doc["post"])


@dataclass
class ProofDocument:
    tree: ProofTree
    tables: tuple
    mains: tuple
    pre: T.Term
    post: T.Term


def load_proof_document(path) -> ProofDocument:
    """Like :func:`load_proof`, also keeping the tagged main commands."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "relhorn-proof/1":
        raise ValueError("not a relhorn proof document")
    progs = [lang.tag_program(lang.parse_program(src), side) for side, src in enumerate(doc["programs"])]
    return ProofDocument(tree_from_json(doc["tree"]), tuple(p.table for p in progs),
                         tuple(p.main for p in progs), term_from_json(doc["pre"]), term_from_json(doc["post"]))


def root_matches(pt: ProofTree, main0: Command, main1: Command, pre: T.Term, post: T.Term) -> bool:
    """Whether ``pt`` proves exactly ``{pre} main0 x main1 {post}``."""
    if pt.context or pt.pre != pre or pt.post != post:
        return False
    want = ProductCommand(Side(0, lang.items(main0)), Side(1, lang.items(main1)))
    return pt.pcd == want
