import pytest

from relhorn import driver, generalize, lang, logic, proof as PR, solver, terms as T
from relhorn.product import ProductCommand, Side
from conftest import bounded_system


def test_canonical_goal_erases_copies_and_wrappers():
    a = lang.Call(("r_0",), "tri0#2", (T.Var("n_0"),))
    b = lang.Call(("r_0",), "tri0", (T.Var("n_0"),))
    wrapped = ProductCommand(Side(0, (lang.Wrapped(a),)), Side(1, ()))
    plain = ProductCommand(Side(0, (b,)), Side(1, ()))
    assert generalize.canonical_goal(wrapped) == generalize.canonical_goal(plain)


def test_canonical_goal_is_indexed_by_tag():
    a = lang.Assign("x_0", T.Const(1))
    c = lang.Assign("x_1", T.Const(2))
    pcd = ProductCommand(Side(0, (a,)), Side(1, (c,)))
    swapped = ProductCommand(Side(1, (c,)), Side(0, (a,)))
    assert generalize.canonical_goal(pcd) == generalize.canonical_goal(swapped)


def test_canonical_goal_distinguishes_arguments():
    a = lang.Call(("r_0",), "f", (T.Var("n_0"),))
    b = lang.Call(("r_0",), "f", (T.sub(T.Var("n_0"), T.Const(1)),))
    key = lambda c: generalize.canonical_goal(ProductCommand(Side(0, (c,)), Side(1, ())))
    assert key(a) != key(b)


STRAIGHT = (
    "proc inc(x) -> (y) {\n  y := x + 1\n}\nmain: y := inc(x)\n",
    "main: y := 1 + x\n",
    "pre: x_0 = x_1\npost: y_0 = y_1\n",
)


def straight_problem():
    return driver.load_problem(*STRAIGHT)


def test_non_recursive_pair_has_no_assume():
    prob = straight_problem()
    b0, b1, gen = bounded_system(prob, 1)
    verdict = solver.solve(gen.system, solver.SolverConfig(timeout=60))
    assert isinstance(verdict, solver.Solved)
    p0, p1 = prob.programs
    res = generalize.syn(gen, verdict.solution, (b0.table, b1.table), prob.tables, prob.pre,
                         prob.post, (p0.main, p1.main), use_solver=False)
    assert res and res.source == "bounded"
    rules = {n.rule for n in res.proof.walk()}
    assert "Assume" not in rules and "Step" in rules
    assert PR.check_proof(res.proof, prob.tables)
    assert PR.root_matches(res.proof, p0.main, p1.main, prob.pre, prob.post)


def test_perturbed_solution_not_generalizable():
    prob = straight_problem()
    b0, b1, gen = bounded_system(prob, 1)
    junk = {p.name: T.TRUE for p in gen.system.predicates}
    assert not logic.validate_solution(gen.system, junk)
    p0, p1 = prob.programs
    res = generalize.syn(gen, junk, (b0.table, b1.table), prob.tables, prob.pre, prob.post,
                         (p0.main, p1.main), use_solver=False, guess=False)
    assert isinstance(res, generalize.NotGeneralizable)
    assert res.diagnostics


def test_goal_procedures_names_wrapped_body(tri):
    p0, p1 = tri.programs
    body = p0.table["tri0"].body
    pcd = ProductCommand(Side(0, (lang.Wrapped(body),)), Side(1, ()))
    assert generalize.goal_procedures(pcd, tri.tables)[0] == "tri0"


@pytest.mark.slow
def test_triangle_assume_goal(tri, tri_verdict):
    assert isinstance(tri_verdict, driver.Verified)
    assumes = [n for n in tri_verdict.proof.walk() if n.rule == "Assume"]
    assert assumes
    goals = {generalize.goal_procedures(n.pcd, tri.tables) for n in assumes}
    assert ("tri0", "tri1Aux") in goals
