"""Bounded under-approximation of recursive programs.

Every procedure on a call-graph cycle is cloned into copies ``f#0 ..
f#(n-1)``. Inside copy ``k`` a call to a procedure of the same strongly
connected component targets copy ``k+1``; in the last copy such a call
becomes ``bot``. A sequence never continues past ``bot``, so a branch that
starts with a cut-off call collapses to ``bot`` as a whole.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import lang
from .lang import BOTTOM, Bottom, Call, Command, If, Procedure, Seq, Wrapped

SEP = "#"


@dataclass(frozen=True)
class CopyName:
    base: str
    index: int

    def __str__(self):
        return f"{self.base}{SEP}{self.index}"

    @classmethod
    def parse(cls, name: str) -> "CopyName":
        base, sep, k = name.rpartition(SEP)
        if not sep:
            raise ValueError(f"{name!r} is not a copy name")
        return cls(base, int(k))


def erase_copy(name: str) -> str:
    """Map a (possibly) copied procedure name back to the original name."""
    return name.split(SEP, 1)[0]


def erase_copies(cmd: Command) -> Command:
    return lang.map_calls(cmd, lambda c: Call(c.results, erase_copy(c.callee), c.args))


@dataclass(frozen=True)
class BoundedProgram:
    command: Command
    table: Mapping[str, Procedure]
    bound: int
    recursive: frozenset = field(default_factory=frozenset)

    def program(self) -> lang.Program:
        return lang.Program(self.command, self.table)


def call_graph(cmd: Command, table: Mapping[str, Procedure]) -> dict:
    """Adjacency map over procedure names; ``"main"`` stands for ``cmd``."""
    graph = {"main": set(lang.called(cmd))}
    for name, proc in table.items():
        graph[name] = set(lang.called(proc.body))
    return graph


def strongly_connected_components(graph: Mapping[str, set]) -> list:
    """Tarjan's algorithm, iterative. Returns a list of frozensets."""
    index, low, on_stack = {}, {}, set()
    stack, comps, counter = [], [], [0]

    for root in graph:
        if root in index:
            continue
        work = [(root, iter(sorted(graph.get(root, ()))))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for succ in it:
                if succ not in index:
                    index[succ] = low[succ] = counter[0]
                    counter[0] += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(sorted(graph.get(succ, ())))))
                    advanced = True
                    break
                if succ in on_stack:
                    low[node] = min(low[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == node:
                        break
                comps.append(frozenset(comp))
    return comps


def recursive_components(cmd: Command, table: Mapping[str, Procedure]) -> dict:
    """Map each recursive procedure to its strongly connected component."""
    graph = call_graph(cmd, table)
    out = {}
    for comp in strongly_connected_components(graph):
        if len(comp) > 1 or any(p in graph.get(p, ()) for p in comp):
            for p in comp:
                out[p] = comp
    return out


def _truncate_after_bottom(cmd: Command) -> Command:
    if isinstance(cmd, If):
        return If(cmd.cond, _truncate_after_bottom(cmd.then), _truncate_after_bottom(cmd.other))
    if isinstance(cmd, Wrapped):
        return Wrapped(_truncate_after_bottom(cmd.inner))
    if isinstance(cmd, Seq):
        out = []
        for c in lang.items(cmd):
            c = _truncate_after_bottom(c)
            out.append(c)
            if isinstance(c, Bottom):
                break
        return lang.seq(*out)
    return cmd


def bound(cmd: Command, table: Mapping[str, Procedure], n: int) -> BoundedProgram:
    if n < 1:
        raise ValueError(f"bounding number must be >= 1, got {n}")
    sccs = recursive_components(cmd, table)

    def rewrite(body: Command, owner_scc: Optional[frozenset], k: int) -> Command:
        def on_call(c: Call) -> Command:
            if c.callee not in sccs:
                return c
            if owner_scc is not None and c.callee in owner_scc:
                if k + 1 >= n:
                    return BOTTOM
                return Call(c.results, str(CopyName(c.callee, k + 1)), c.args)
            return Call(c.results, str(CopyName(c.callee, 0)), c.args)

        return _truncate_after_bottom(lang.map_calls(body, on_call))

    new_table = {}
    for name, proc in table.items():
        if name in sccs:
            for k in range(n):
                cname = str(CopyName(name, k))
                new_table[cname] = Procedure(cname, proc.params, rewrite(proc.body, sccs[name], k), proc.outputs)
        else:
            new_table[name] = Procedure(name, proc.params, rewrite(proc.body, None, 0), proc.outputs)
    main = rewrite(cmd, None, 0)

    # keep only what main can reach
    reachable, todo = set(), list(lang.called(main))
    while todo:
        p = todo.pop()
        if p in reachable:
            continue
        reachable.add(p)
        todo.extend(lang.called(new_table[p].body))
    new_table = {k: v for k, v in new_table.items() if k in reachable}
    return BoundedProgram(main, new_table, n, frozenset(sccs))


def is_acyclic(bp: BoundedProgram) -> bool:
    graph = call_graph(bp.command, bp.table)
    return not any(
        len(c) > 1 or any(p in graph.get(p, ()) for p in c)
        for c in strongly_connected_components(graph)
    )


def bounded_program_text(bp: BoundedProgram) -> str:
    return lang.print_program(bp.program())


# ---------------------------------------------------------------------------
# under-approximation check


@dataclass
class SubsetReport:
    compared: int = 0
    excluded: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def paths_are_subset(bp: BoundedProgram, original, trials: int = 100,
                     inputs=None, lo: int = -3, hi: int = 6,
                     rng: Optional[random.Random] = None,
                     budget: Optional[lang.Budget] = None) -> SubsetReport:
    """Randomised check that bot-free bounded runs agree with the original.

    ``original`` is a ``(command, table)`` pair. ``inputs`` is either a list
    of states to try or ``None``, in which case ``trials`` random states over
    the command's input variables are drawn from ``[lo, hi]``.
    """
    cmd, table = original
    rng = rng or random.Random(0)
    if inputs is None:
        names = lang.Program(cmd, table).inputs()
        inputs = [{v: rng.randint(lo, hi) for v in names} for _ in range(trials)]
    report = SubsetReport()
    for sigma in inputs:
        try:
            got = lang.eval_command(bp.command, bp.table, sigma, _fresh(budget))
        except lang.BottomReached:
            report.excluded += 1
            continue
        want = lang.eval_command(cmd, table, sigma, _fresh(budget))
        report.compared += 1
        if got != want:
            report.mismatches.append((dict(sigma), got, want))
    return report


def _fresh(budget):
    return lang.Budget(budget.steps, budget.depth) if budget else None
