import random

from relhorn import logic, terms as T
from relhorn.logic import ChcSystem, Clause, Predicate

x0, x1 = T.Var("x_0"), T.Var("x_1")


def test_substitute_examples():
    f = T.eq(x0, T.Const(3))
    assert logic.substitute(f, {"x_0": T.add(x0, T.Const(1))}) == T.eq(T.add(x0, T.Const(1)), T.Const(3))
    g = T.eq(T.Var("ret_0"), T.Var("ret_1"))
    assert logic.substitute(g, {"ret_0": T.Const(0)}) == T.eq(T.Const(0), T.Var("ret_1"))


def test_substitution_lemma():
    rng = random.Random(5)
    names = ["a", "b", "c"]
    for _ in range(100):
        lin = T.add(T.Scale(rng.randint(-3, 3), T.Var(rng.choice(names))), T.Var(rng.choice(names)))
        f = T.cmp(rng.choice(T.CMP_OPS), lin, T.Const(rng.randint(-5, 5)))
        target = rng.choice(names)
        e = T.add(T.Var(rng.choice(names)), T.Const(rng.randint(-3, 3)))
        env = {v: rng.randint(-6, 6) for v in names}
        updated = dict(env)
        updated[target] = T.evaluate(e, env)
        assert T.evaluate(logic.substitute(f, {target: e}), env) == T.evaluate(f, updated)


def small_system():
    r = Predicate("R", ("x",))
    sys = ChcSystem()
    sys.add_predicate(r)
    sys.add(Clause(r(T.Var("x")), T.eq(T.Var("x"), T.Const(1))))
    sys.add(Clause(sys.query(), T.cmp("<", T.Var("x"), T.Const(0)), (r(T.Var("x")),)))
    return sys


def test_validate_solution_valid():
    sys = small_system()
    assert logic.validate_solution(sys, {"R": T.eq(T.Var("x"), T.Const(1)), "query": T.FALSE})


def test_validate_solution_invalid_query():
    sys = small_system()
    res = logic.validate_solution(sys, {"R": T.TRUE, "query": T.FALSE})
    assert not res
    assert res.clause is sys.clauses[1]
    assert res.witness["x"] < 0


def test_validate_rejects_foreign_variables():
    sys = small_system()
    assert not logic.validate_solution(sys, {"R": T.eq(T.Var("y"), T.Const(1))})


def test_entails():
    assert logic.entails(T.eq(x0, T.Const(1)), T.cmp(">=", x0, T.Const(0)))
    res = logic.entails(T.TRUE, T.eq(x0, T.Const(0)))
    assert isinstance(res, logic.No)
    assert res.witness["x_0"] != 0


def test_smtlib_uses_horn_logic():
    text = logic.to_smtlib(small_system())
    assert "(set-logic HORN)" in text
    assert "(declare-fun |R| (Int) Bool)" in text
    assert text.rstrip().endswith("(get-model)")
