"""The nine node invariants of the triangle's bounded proof grid.

Keys are (tri0 copy, tri1Aux copy). Each entry is (hypothesis, conclusion)
over n0 (tri0's parameter), x1 and acc1 (tri1Aux's parameters) and the two
results. ``n`` in the last row and column means tri0's parameter, the
only ``n`` that is live at those nodes.
"""
from relhorn import lang, logic, terms as T

NODES = {
    (0, 0): ("n0 = x1", "ret0 + acc1 = ret1"),
    (1, 0): ("n0 + 1 = x1", "ret0 + acc1 + x1 = ret1"),
    (2, 0): ("x1 = 0 && n0 = 2", "acc1 = ret1 && ret0 = 3"),
    (0, 1): ("n0 = x1 + 1", "ret0 + acc1 = ret1 + n0"),
    (1, 1): ("n0 = x1", "ret0 + acc1 = ret1"),
    (2, 1): ("x1 = 0 && n0 = 1", "acc1 = ret1 && ret0 = 1"),
    (0, 2): ("n0 = 0 && x1 = 2", "ret0 = 0 && acc1 = ret1 + 3"),
    (1, 2): ("n0 = 0 && x1 = 1", "ret0 = 0 && acc1 = ret1 + 1"),
    (2, 2): ("x1 <= 0 && n0 <= 0", "acc1 = ret1 && ret0 = 0"),
}


def _at_entry(t, side_vars):
    return logic.substitute(t, {v: T.Var(v + "@in") for v in side_vars})


def node_scopes(gen):
    """Yield ((i, j), scope, names) for every tri0#i x tri1Aux#j scope."""
    for s in gen.scopes:
        if s.callee is None or not s.prefix or not isinstance(s.prefix[-1], lang.Call):
            continue
        c = s.prefix[-1]
        if s.side == 1 and s.callee.startswith("tri1Aux#") and c.callee.startswith("tri0#"):
            i, j = int(c.callee.split("#")[1]), int(s.callee.split("#")[1])
            names = {"n0": _at_entry(c.args[0], s.frame_vars(0)), "x1": T.Var("x_1@in"),
                     "acc1": T.Var("acc_1@in"), "ret0": T.Var(c.results[0]), "ret1": T.Var("ret_1")}
        elif s.side == 0 and s.callee.startswith("tri0#") and c.callee.startswith("tri1Aux#"):
            i, j = int(s.callee.split("#")[1]), int(c.callee.split("#")[1])
            names = {"n0": T.Var("n_0@in"), "x1": _at_entry(c.args[0], s.frame_vars(1)),
                     "acc1": _at_entry(c.args[1], s.frame_vars(1)), "ret0": T.Var("ret_0"),
                     "ret1": T.Var(c.results[0])}
        else:
            continue
        yield (i, j), s, names


def node_formula(key, names):
    hyp, concl = (logic.substitute(lang.parse_expr(x), names) for x in NODES[key])
    return T.implies(hyp, concl)


def install(gen, sol):
    """``sol`` strengthened with the node invariant at every grid scope exit."""
    out = dict(sol)
    seen = set()
    for key, s, names in node_scopes(gen):
        out[s.exit.name] = T.conj(out[s.exit.name], node_formula(key, names))
        seen.add(key)
    return out, seen


def with_node_queries(gen):
    """A copy of the system that also demands every node invariant."""
    system = logic.ChcSystem(list(gen.system.predicates), list(gen.system.clauses), gen.system.query)
    for key, s, names in node_scopes(gen):
        f = node_formula(key, names)
        system.add(logic.Clause(system.query(), T.negate(f), (s.exit.identity(),)))
    return system
