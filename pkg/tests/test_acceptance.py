"""End-to-end acceptance criteria, one test per criterion.

Every test reports a single PASS/FAIL line, echoed again in the terminal
summary (see ``pytest_terminal_summary`` in conftest.py). All of them run
the external solver, so they are marked slow.
"""
import itertools
import random
import time
from pathlib import Path

import pytest

from relhorn import bounding, chcgen, driver, generalize, lang, logic, proof as PR
from relhorn import solver as S
from relhorn import terms as T
from relhorn.product import ProductCommand

import grid
from conftest import BENCH, bounded_system, tri_problem
from mutations import kill_rate

pytestmark = pytest.mark.slow

REPORT = []


def report(n: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    REPORT.append(line)
    print(line)
    return ok


def entries(manifest):
    return driver.load_manifest(BENCH / manifest)


def problem_of(e) -> driver.Problem:
    return driver.load_problem(*(Path(p).read_text() for p in (e.left, e.right, e.prop)))


@pytest.fixture(scope="module")
def benchmarks():
    """Every manifest benchmark except the triangle, verified once, in order."""
    out = []
    for e in entries("manifest.toml"):
        if e.name == "triangle":
            continue
        job = driver.JobConfig(e.left, e.right, e.prop, bound_max=e.bound_max, timeout=e.timeout)
        t0 = time.monotonic()
        v = driver.verify(job)
        out.append((e, v, time.monotonic() - t0))
    return out


# ---------------------------------------------------------------------------
# 1. triangle


def test_triangle_verified(tri, tri_verdict):
    v, secs = tri_verdict, tri_verdict.seconds
    ok = isinstance(v, driver.Verified) and v.bound <= 3 and secs <= 120
    goals = set()
    checked = False
    if isinstance(v, driver.Verified):
        goals = {generalize.goal_procedures(n.pcd, tri.tables) for n in v.proof.walk() if n.rule == "Assume"}
        checked = bool(PR.check_proof(v.proof, tri.tables))
    ok = ok and ("tri0", "tri1Aux") in goals and checked
    assert report(1, ok, f"{type(v).__name__} at bound {v.bound} in {secs:.1f}s, "
                         f"Assume goals {sorted(goals, key=str)}, checker {'accepts' if checked else 'rejects'}")


# ---------------------------------------------------------------------------
# 2. the nine grid invariants


def test_grid_invariants_validate():
    b0, b1, gen = bounded_system(tri_problem(), 3, "contextual")
    keys = {k for k, _, _ in grid.node_scopes(gen)}
    verdict = S.solve_in_rounds(grid.with_node_queries(gen), S.SolverConfig(timeout=900))
    ok, detail = False, f"node-query system: {type(verdict).__name__} {getattr(verdict, 'reason', '')[:120]}"
    if isinstance(verdict, S.Solved):
        sol, seen = grid.install(gen, verdict.solution)
        check = logic.validate_solution(gen.system, sol, 30)
        ok = bool(check) and seen == set(grid.NODES)
        detail = f"{len(seen)} nodes installed, validation {'passes' if check else 'fails: ' + str(check)}"
    ok = ok and keys == set(grid.NODES)
    assert report(2, ok, detail)


# ---------------------------------------------------------------------------
# 3. benchmark suite


def _lockstep_defeated(e, v) -> tuple:
    """The up x down hypothesis relates calls whose arguments differ."""
    prob = problem_of(e)
    for n in v.proof.walk():
        if n.rule == "Assume" and generalize.goal_procedures(n.pcd, prob.tables) == ("up", "down"):
            i, m = T.Var("i_0"), T.Var("m_1")
            return (not logic.entails(n.pre, T.eq(i, m)), f"hypothesis {T.pretty(n.pre)}")
    return False, "no up x down hypothesis"


def test_benchmarks_verify(benchmarks):
    rows, ok = [], len(benchmarks) == 8
    for e, v, secs in benchmarks:
        good = isinstance(v, driver.Verified) and secs <= 300
        rows.append(f"{e.name} {type(v).__name__} {secs:.0f}s")
        if good and e.name == "sumUpDown":
            beats, why = _lockstep_defeated(e, v)
            rows[-1] += f" (argument-equal lockstep {'not needed' if beats else 'used'}: {why})"
            good = beats
        ok = ok and good
    assert report(3, ok, "; ".join(rows))


# ---------------------------------------------------------------------------
# 4. mutants


def test_mutants_refuted():
    rows, ok = [], True
    es = entries("mutants.toml")
    for e in es:
        job = driver.JobConfig(e.left, e.right, e.prop, bound_max=e.bound_max, timeout=e.timeout)
        v = driver.verify(job)
        good = isinstance(v, driver.Refuted) and driver.replay(problem_of(e), v)
        ok = ok and good
        rows.append(f"{e.name} {type(v).__name__}{'' if good else ' (no replay)'}")
    ok = ok and len(es) == 10
    assert report(4, ok, "; ".join(rows))


# ---------------------------------------------------------------------------
# 5. checker mutation suite


def test_checker_kills_all_mutants(tri, tri_verdict):
    stats = kill_rate(tri_verdict.proof, tri.tables, PR.check_proof)
    killed = sum(k for k, _, _ in stats.values())
    total = sum(t for _, t, _ in stats.values())
    ok = set(stats) == set(PR.RULES) and len(stats) == 9 and killed == total and total > 0
    worst = {r: f"{k}/{t}" for r, (k, t, _) in stats.items() if k < t}
    assert report(5, ok, f"{killed}/{total} mutants killed across {len(stats)} rules"
                         + (f", survivors in {worst}" if worst else ""))


# ---------------------------------------------------------------------------
# 6. random agreement and path counting


def seeded_inputs(problem, count: int, rng: random.Random) -> list:
    """Pre-satisfying inputs: side-0 values drawn at random, the rest solved for."""
    names = problem.inputs
    out = []
    while len(out) < count:
        fixed = {v: rng.randint(-10, 40) for v in names if lang.untag(v)[1] == 0}
        f = T.conj(problem.pre, *(T.eq(T.Var(v), T.Const(x)) for v, x in fixed.items()))
        status, model = logic.check_sat(f, 5.0)
        if status == "sat":
            out.append({v: model.get(v, fixed.get(v, 0)) for v in names})
    return out


def agree(problem, inputs) -> list:
    bad = []
    pcd = ProductCommand.of(problem.programs[0].main, problem.programs[1].main)
    for env in inputs:
        sigma = {v: x for v, x in env.items() if lang.untag(v)[1] == 0}
        tau = {v: x for v, x in env.items() if lang.untag(v)[1] == 1}
        outs = lang.eval_product(pcd, *problem.tables, sigma, tau, lang.Budget(500_000, 500))
        if not T.evaluate(problem.post, {**env, **outs[0], **outs[1]}):
            bad.append(env)
    return bad


def small_mains():
    """Every main of at most three commands over a small command pool."""
    pool = ["x := x + 1", "y := f(x)", "if x > 0 { x := 0 } else { skip }"]
    for k in range(4):
        for combo in itertools.product(pool, repeat=k):
            yield "; ".join(combo) or "skip"


def flatten(cmds) -> list:
    out = []
    for c in cmds:
        if isinstance(c, lang.Seq):
            out += flatten([c.first, c.second])
        elif not isinstance(c, lang.Skip):
            out.append(c)
    return out


def brute_force(left, right, tables) -> list:
    """Every proof tree of a product, materialised as nested tuples."""
    if not left and not right:
        return [()]
    out = []
    for s, cmds in ((0, left), (1, right)):
        if not cmds:
            continue
        head, rest = cmds[0], cmds[1:]
        other = right if s == 0 else left

        def pair(mine, theirs):
            return (mine, theirs) if s == 0 else (theirs, mine)

        if isinstance(head, lang.Assign):
            out += [(s, t) for t in brute_force(*pair(rest, other), tables)]
        elif isinstance(head, lang.If):
            for a in brute_force(*pair(flatten([head.then]) + rest, other), tables):
                for b in brute_force(*pair(flatten([head.other]) + rest, other), tables):
                    out.append((s, "if", a, b))
        elif isinstance(head, lang.Call):
            body = flatten([tables[s][head.callee].body])
            for j in range(len(other) + 1):
                for a in brute_force(*pair(body, other[:j]), tables):
                    for b in brute_force(*pair(rest, other[j:]), tables):
                        out.append((s, "call", j, a, b))
    return out


def graph_count(pcd, tables) -> int:
    """Proof trees counted from the node graph of the CHC encoding."""
    vars0, vars1 = (lang.Program(lang.seq(*pcd.side(k).cmds), tables[k]).main_vars() for k in (0, 1))
    gen = chcgen.construct_chc(T.TRUE, pcd, T.TRUE, tables, reduce=False, main_vars=(vars0, vars1))
    return chcgen.count_paths_gen(gen)


BRUTE_LIMIT = 20_000


def path_count_check() -> tuple:
    """Compare path counts with enumeration over small mains; (counted, skipped, mismatched)."""
    src = "proc f(a) -> (b) { if a > 0 { b := a } else { b := 0 - a } }\n"
    counted = skipped = mismatched = 0
    mains = list(small_mains())
    for m0, m1 in itertools.product(mains, mains):
        p0 = lang.tag_program(lang.parse_program(src + "main: " + m0), 0)
        p1 = lang.tag_program(lang.parse_program(src + "main: " + m1), 1)
        pcd = ProductCommand.of(p0.main, p1.main)
        tables = (p0.table, p1.table)
        got = chcgen.count_paths(pcd, tables)
        if got > BRUTE_LIMIT:
            skipped += 1
            continue
        counted += 1
        want = len(brute_force(flatten(list(pcd.side(0).cmds)), flatten(list(pcd.side(1).cmds)), tables))
        mismatched += not (got == want == graph_count(pcd, tables))
    return counted, skipped, mismatched


def test_random_agreement_and_path_counts(tri, tri_verdict, benchmarks):
    rng = random.Random(2024)
    rows, ok = [], True
    verified = [("triangle", tri, tri_verdict)]
    verified += [(e.name, problem_of(e), v) for e, v, _ in benchmarks if e.prop_class == "equiv"]
    for name, prob, v in verified:
        if not isinstance(v, driver.Verified):
            continue
        bad = agree(prob, seeded_inputs(prob, 100, rng))
        ok = ok and not bad
        rows.append(f"{name} {100 - len(bad)}/100")
    ok = ok and len(rows) == len(verified)
    counted, skipped, mismatched = path_count_check()
    ok = ok and mismatched == 0 and counted > 0
    assert report(6, ok, f"agreement {', '.join(rows)}; path counts {counted - mismatched}/{counted} match "
                         f"({skipped} pairs over {BRUTE_LIMIT} trees not enumerated)")


# ---------------------------------------------------------------------------
# 7. bounded programs are subsets


def benchmark_programs():
    seen = {}
    for e in entries("manifest.toml") + entries("mutants.toml"):
        for path in (e.left, e.right):
            seen.setdefault(Path(path).name, path)
    return seen


def test_bounded_paths_subset():
    rng = random.Random(7)
    runs = mismatches = compared = 0
    for name, path in sorted(benchmark_programs().items()):
        prog = lang.parse_program(Path(path).read_text())
        for n in range(1, 5):
            bp = bounding.bound(prog.main, prog.table, n)
            rep = bounding.paths_are_subset(bp, (prog.main, prog.table), trials=100, rng=rng)
            runs += 1
            compared += rep.compared
            mismatches += len(rep.mismatches)
    assert report(7, mismatches == 0 and compared > 0,
                  f"{runs} program/bound pairs, {compared} bot-free runs compared, {mismatches} mismatches")


# ---------------------------------------------------------------------------
# 8. solving goes through SMT-LIB and every model is validated


def test_solving_via_smtlib_only(tri, monkeypatch, tmp_path):
    scripts, validated = [], []
    run, validate = S.run_solver, logic.validate_solution

    def spy_run(script, cfg):
        scripts.append(script)
        return run(script, cfg)

    def spy_validate(sys, sol, *a, **k):
        res = validate(sys, sol, *a, **k)
        validated.append(bool(res))
        return res

    monkeypatch.setattr(S, "run_solver", spy_run)
    monkeypatch.setattr(logic, "validate_solution", spy_validate)
    _, _, gen = bounded_system(tri, 2)
    v = S.solve(gen.system, S.SolverConfig(timeout=120))
    horn = all("(set-logic HORN)" in s and "(check-sat)" in s for s in scripts)
    solved_ok = isinstance(v, S.Solved) and validated and validated[-1]

    # a solver that answers sat with a bogus model must not yield Solved
    fake = tmp_path / "fake.sh"
    names = " ".join(f"(define-fun |{p.name}| ({' '.join(f'(x{i} Int)' for i in range(len(p.vocab)))}) Bool true)"
                     for p in gen.system.predicates)
    fake.write_text(f"#!/bin/sh\necho sat\necho '({names})'\n")
    fake.chmod(0o755)
    bogus = S.solve(gen.system, S.SolverConfig(cmd=f"{fake} {{file}}", timeout=30))
    rejected = not isinstance(bogus, S.Solved)

    ok = bool(scripts) and horn and bool(solved_ok) and rejected
    assert report(8, ok, f"{len(scripts)} SMT-LIB scripts sent, {len(validated)} models validated, "
                         f"bogus model {'rejected' if rejected else 'accepted'}")
