import random

import pytest
from hypothesis import given, settings, strategies as st

from relhorn import lang, terms as T
from relhorn.product import ProductCommand
from conftest import bench, parse


def read(name):
    with open(bench(name)) as fh:
        return fh.read()


def test_parse_tri0():
    prog = parse(read("tri0.rvl"))
    p = prog.table["tri0"]
    assert p.params == ("n",)
    assert p.outputs == ("ret",)
    assert isinstance(p.body, lang.If)
    assert p.body.cond == T.cmp("<=", T.Var("n"), T.Const(0))


def test_parse_skip():
    prog = parse("main: skip")
    assert prog.main == lang.SKIP
    assert prog.table == {}


def test_undeclared_procedure():
    with pytest.raises(lang.ResolveError):
        lang.check_program(parse("main: x := f(y)"))


def test_parse_error_reports_position():
    with pytest.raises(lang.ParseError):
        parse("main: x := ")


def test_eval_tri0():
    prog = parse(read("tri0.rvl"))
    assert lang.eval_command(prog.main, prog.table, {"n": 2})["ret"] == 3


def test_eval_skip():
    assert lang.eval_command(lang.SKIP, {}, {"x": 1}) == {"x": 1}


@pytest.mark.parametrize("n", [0, 1, 5, 9])
def test_tri_closed_form(n):
    for name in ("tri0.rvl", "tri1.rvl"):
        prog = parse(read(name))
        assert lang.eval_command(prog.main, prog.table, {"n": n})["ret"] == n * (n + 1) // 2


def test_eval_fresh_frame():
    prog = parse("proc f(a) -> (b) { b := a + c }\nmain: c := 1; r := f(2)")
    with pytest.raises(T.UndefinedVariable):
        lang.eval_command(prog.main, prog.table, {})


def test_budget_stops_runaway_recursion():
    prog = parse("proc f(a) -> (b) { b := f(a) }\nmain: r := f(0)")
    with pytest.raises(lang.BudgetExhausted):
        lang.eval_command(prog.main, prog.table, {}, lang.Budget(10_000, 50))


def test_eval_deterministic():
    prog = parse(read("tri1.rvl"))
    for n in range(-2, 6):
        assert lang.eval_command(prog.main, prog.table, {"n": n}) == lang.eval_command(prog.main, prog.table, {"n": n})


def tagged_tri():
    p0 = lang.tag_program(parse(read("tri0.rvl")), 0)
    p1 = lang.tag_program(parse(read("tri1.rvl")), 1)
    return p0, p1


def test_eval_product_skip():
    pcd = ProductCommand.of(lang.SKIP, lang.SKIP)
    assert lang.eval_product(pcd, {}, {}, {"x_0": 1}, {"x_1": 2}) == ({"x_0": 1}, {"x_1": 2})


def test_eval_product_tri():
    p0, p1 = tagged_tri()
    s, t = lang.eval_product(ProductCommand.of(p0.main, p1.main), p0.table, p1.table, {"n_0": 2}, {"n_1": 2})
    assert s["ret_0"] == 3 and t["ret_1"] == 3


def test_eval_product_disjoint_states():
    with pytest.raises(ValueError):
        lang.eval_product(ProductCommand.of(lang.SKIP, lang.SKIP), {}, {}, {"x": 1}, {"x": 2})


def test_eval_product_order_insensitive():
    p0, p1 = tagged_tri()
    pcd = ProductCommand.of(p0.main, p1.main)
    rng = random.Random(7)
    for _ in range(100):
        s, t = {"n_0": rng.randint(-3, 12)}, {"n_1": rng.randint(-3, 12)}
        a = lang.eval_product(pcd, p0.table, p1.table, s, t, order=(0, 1))
        b = lang.eval_product(pcd, p0.table, p1.table, s, t, order=(1, 0))
        assert a == b


@pytest.mark.parametrize("name", ["tri0.rvl", "tri1.rvl", "sumUp_1.rvl", "sumDown_1.rvl", "mult.rvl"])
def test_print_parse_round_trip(name):
    prog = parse(read(name))
    again = parse(lang.print_program(prog))
    assert again == prog
    assert parse(lang.print_program(again)) == again


# random linear expressions survive pretty-printing and re-parsing

names = st.sampled_from(["x", "y", "z"])
ints = st.integers(min_value=-20, max_value=20)
atoms = st.one_of(ints.map(T.Const), names.map(T.Var))


def _ext(children):
    return st.one_of(
        st.tuples(children, children).map(lambda p: T.add(*p)),
        st.tuples(children, children).map(lambda p: T.sub(*p)),
        st.tuples(st.integers(-5, 5), children).map(lambda p: T.Scale(p[0], p[1])),
        children.map(T.Neg),
    )


arith = st.recursive(atoms, _ext, max_leaves=8)
cmps = st.tuples(st.sampled_from(T.CMP_OPS), arith, arith).map(lambda p: T.cmp(*p))
formulas = st.recursive(cmps, lambda c: st.one_of(
    st.tuples(c, c).map(lambda p: T.And(p)),
    st.tuples(c, c).map(lambda p: T.Or(p)),
    c.map(T.Not),
    st.tuples(c, c).map(lambda p: T.Implies(*p)),
), max_leaves=4)
envs = st.fixed_dictionaries({"x": ints, "y": ints, "z": ints})


@settings(max_examples=150, deadline=None)
@given(arith, envs)
def test_expr_round_trip_arith(e, env):
    back = lang.parse_expr(T.pretty(e))
    assert T.evaluate(back, env) == T.evaluate(e, env)


@settings(max_examples=150, deadline=None)
@given(formulas, envs)
def test_expr_round_trip_formula(f, env):
    back = lang.parse_expr(T.pretty(f))
    assert T.evaluate(back, env) == T.evaluate(f, env)


def test_copy_names_only_in_bounded_programs():
    src = "proc f#1(x) -> (y) {\n  y := x\n}\nmain: y := f#1(x)\n"
    with pytest.raises(lang.ParseError):
        lang.parse_program(src)
    assert "f#1" in lang.parse_program(src, allow_bottom=True).table
