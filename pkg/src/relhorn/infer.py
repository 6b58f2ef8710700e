"""Guess-and-check invariants for a folded proof skeleton.

The folded system of a skeleton is recursive, which is where the external
CHC solver tends to diverge even when linear invariants exist. This module
instead runs the skeleton concretely on sampled inputs, records the state
reaching every predicate, proposes candidate conjuncts fitted to those
states (affine equalities plus octagon bounds), and prunes the candidates
with Houdini until what is left is inductive. Nothing produced here is
trusted: callers validate the result against the folded system.
"""
from __future__ import annotations

import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional

import sympy

from . import logic
from . import terms as T
from .logic import ChcSystem

log = logging.getLogger(__name__)


class OutOfFuel(Exception):
    pass


@dataclass
class Samples:
    states: dict = field(default_factory=dict)   # predicate name -> set of value tuples

    def add(self, pred, values: tuple):
        self.states.setdefault(pred.name, set()).add(values)

    def __len__(self):
        return sum(len(v) for v in self.states.values())


# ---------------------------------------------------------------------------
# sampling inputs


_SMALL = (-1, 0, 0, 1, 2)


def sample_models(pre: T.Term, names, count: int, rng: random.Random, lo=-3, hi=8) -> list:
    """Up to ``count`` distinct models of ``pre``, fixing variables at random."""
    names = sorted(names)
    out, seen = [], set()
    for _ in range(count * 3):
        if len(out) >= count:
            break
        order = names[:]
        rng.shuffle(order)
        fixed = pre
        for v in order:
            # boundary values matter most for guards like n <= 0
            val = rng.choice(_SMALL) if rng.random() < 0.5 else rng.randint(lo, hi)
            trial = T.conj(fixed, T.eq(T.Var(v), T.Const(val)))
            if logic.check_sat(trial, 5.0)[0] == "sat":
                fixed = trial
        status, model = logic.check_sat(fixed, 5.0)
        if status != "sat":
            break
        key = tuple(model.get(v, 0) for v in names)
        if key not in seen:
            seen.add(key)
            out.append(dict(zip(names, key)))
    return out


# ---------------------------------------------------------------------------
# concrete execution of a skeleton


class Runner:
    """Execute a skeleton the way its clauses describe, recording states."""

    def __init__(self, folded, rng: random.Random, fuel: int = 20000, lo=-3, hi=8):
        self.f = folded
        self.clauses = folded.gen.system.clauses
        self.rng = rng
        self.fuel = fuel
        self.lo, self.hi = lo, hi
        self.samples = Samples()

    def tick(self):
        self.fuel -= 1
        if self.fuel < 0:
            raise OutOfFuel()

    def record(self, inst, pred, state):
        p = self.f.pred(inst, pred)
        self.samples.add(p, tuple(state[v] for v in pred.vocab))

    def run_root(self, root, inputs: Mapping[str, int]):
        scope = root.scope
        state = {v: inputs.get(v, self.rng.randint(self.lo, self.hi)) for v in scope.vocab}
        return self.run_scope(root, state)

    def run_scope(self, sk, state: dict) -> dict:
        node = sk.entry
        while True:
            self.tick()
            self.record(sk.inst, node.node.pred, state)
            ch = node.choice
            if ch.rule == "exit":
                self.record(sk.inst, sk.scope.exit, state)
                return state
            if ch.rule == "assign":
                state = self.apply(self.clauses[ch.clauses[0]], state, ch.succ[0].pred)
                node = node.kids[0]
            elif ch.rule == "if":
                taken = 0 if T.evaluate(self.clauses[ch.clauses[0]].constraint, state) else 1
                state = self.apply(self.clauses[ch.clauses[taken]], state, ch.succ[taken].pred)
                node = node.kids[taken]
            else:
                state = self.call(node, state)
                node = node.kids[0]

    def apply(self, clause, state: dict, head_pred, extra=None) -> dict:
        env = dict(state)
        if extra:
            env.update(extra)
        return {v: T.evaluate(a, env) for v, a in zip(head_pred.vocab, clause.head.args)}

    def call(self, node, state: dict) -> dict:
        ch, target = node.choice, node.target
        env = dict(state)
        for a in ch.entry_args:
            for v in T.free_vars(a):
                if v not in env:
                    env[v] = self.rng.randint(self.lo, self.hi)
        entry_vals = [T.evaluate(a, env) for a in ch.entry_args]
        entry = dict(zip(target.scope.vocab, entry_vals + entry_vals))
        out = self.run_scope(target, entry)
        ret = self.clauses[ch.clauses[-1]]
        exit_app = ret.apps[1]
        bind = {}
        for arg, v in zip(exit_app.args, exit_app.pred.vocab):
            if isinstance(arg, T.Var) and arg.name not in state:
                bind[arg.name] = out[v]
        return self.apply(ret, state, ch.succ[0].pred, bind)


# ---------------------------------------------------------------------------
# candidate conjuncts


def affine_equalities(vocab, rows) -> list:
    """Equalities ``sum c_i v_i = d`` satisfied by every row (exact)."""
    rows = sorted(rows)
    if not rows:
        return []
    m = sympy.Matrix([list(r) + [1] for r in rows])
    out = []
    for vec in m.nullspace():
        den = sympy.ilcm(*[sympy.fraction(x)[1] for x in vec])
        coefs = [int(x * den) for x in vec]
        g = 0
        for c in coefs:
            g = sympy.igcd(g, c)
        coefs = [c // g for c in coefs] if g else coefs
        lhs = _linear(vocab, coefs[:-1])
        if lhs is None:
            continue
        out.append(T.eq(lhs, T.Const(-coefs[-1])))
    return out


def _linear(vocab, coefs):
    term = None
    for v, c in zip(vocab, coefs):
        if c == 0:
            continue
        piece = T.Var(v) if c == 1 else T.Scale(c, T.Var(v))
        term = piece if term is None else T.add(term, piece)
    return term


def octagon_bounds(vocab, rows, pairs: bool = True) -> list:
    """``lo <= e <= hi`` for ``e`` in {v, v - w, v + w}, fitted to ``rows``."""
    out = []
    cols = list(zip(*rows))
    idx = range(len(vocab))
    exprs = [(T.Var(vocab[i]), cols[i]) for i in idx]
    if pairs:
        for i, j in itertools.combinations(idx, 2):
            a, b = T.Var(vocab[i]), T.Var(vocab[j])
            exprs.append((T.sub(a, b), [x - y for x, y in zip(cols[i], cols[j])]))
            exprs.append((T.add(a, b), [x + y for x, y in zip(cols[i], cols[j])]))
    for e, vals in exprs:
        lo, hi = min(vals), max(vals)
        if lo == hi:
            continue  # covered by the affine hull
        out.append(T.cmp(">=", e, T.Const(lo)))
        out.append(T.cmp("<=", e, T.Const(hi)))
    return out


def candidates(system: ChcSystem, samples: Samples, pairs: bool = True) -> dict:
    cand = {}
    for p in system.predicates:
        rows = samples.states.get(p.name)
        if not rows:
            cand[p.name] = [T.FALSE]
            continue
        cand[p.name] = affine_equalities(p.vocab, rows) + octagon_bounds(p.vocab, list(rows), pairs)
    return cand


# ---------------------------------------------------------------------------
# Houdini


def houdini(system: ChcSystem, cand: dict, timeout: float = 10.0, max_rounds: int = 200) -> Optional[dict]:
    """Largest inductive subset of the candidate conjuncts, or None."""
    cand = {k: list(v) for k, v in cand.items()}
    for _ in range(max_rounds):
        changed = False
        for clause in system.clauses:
            body = T.conj(clause.constraint,
                          *(a.instantiate(T.conj(*cand[a.pred.name])) for a in clause.apps))
            if clause.head.pred == system.query:
                status, _ = logic.check_sat(body, timeout)
                if status != "unsat":
                    log.debug("houdini: query reachable (%s)", status)
                    return None
                continue
            name = clause.head.pred.name
            while cand[name]:
                heads = [clause.head.instantiate(c) for c in cand[name]]
                status, model = logic.check_sat(T.conj(body, T.negate(T.conj(*heads))), timeout)
                if status == "unsat":
                    break
                if status != "sat":
                    return None
                keep = []
                for c, h in zip(cand[name], heads):
                    try:
                        ok = T.evaluate(h, _total(model, h))
                    except T.UndefinedVariable:
                        ok = False
                    if ok:
                        keep.append(c)
                if len(keep) == len(cand[name]):
                    # the model was partial; fall back to one-at-a-time
                    keep = [c for c, h in zip(cand[name], heads)
                            if logic.entails(body, h, timeout)]
                    if len(keep) == len(cand[name]):
                        break
                cand[name] = keep
                changed = True
        if not changed:
            return {k: T.conj(*v) for k, v in cand.items()}
    return None


def _total(model: dict, f: T.Term) -> dict:
    env = {}
    for v in T.free_vars(f):
        val = model.get(v, 0)
        env[v] = val if isinstance(val, int) else 0
    return env


def guess_and_check(folded, root, pre: T.Term, rng: random.Random, n_inputs: int = 30,
                    timeout: float = 10.0) -> Optional[dict]:
    """Invariants for ``folded`` from concrete runs of ``root``, or None."""
    runner = Runner(folded, rng)
    inputs = sample_models(pre, root.scope.vocab, n_inputs, rng)
    for inp in inputs:
        runner.fuel = 20000
        try:
            runner.run_root(root, inp)
        except (OutOfFuel, RecursionError, T.UndefinedVariable):
            continue
    if not runner.samples:
        return None
    for pairs in (False, True):
        cand = candidates(folded.system, runner.samples, pairs)
        sol = houdini(folded.system, cand, timeout)
        if sol is not None:
            return sol
    return None
