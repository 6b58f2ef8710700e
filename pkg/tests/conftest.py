import random
import time
from pathlib import Path

import pytest

from relhorn import bounding, chcgen, driver, lang, solver
from relhorn.product import ProductCommand

BENCH = Path(driver.__file__).parent / "benchmarks"


def bench(name: str) -> str:
    return str(BENCH / name)


def load_problem(left, right, prop) -> driver.Problem:
    return driver.load_problem(*(Path(bench(f)).read_text() for f in (left, right, prop)))


def tri_problem() -> driver.Problem:
    return load_problem("tri0.rvl", "tri1.rvl", "tri.rprop")


def bounded_system(problem, n, mode="modular"):
    p0, p1 = problem.programs
    b0 = bounding.bound(p0.main, p0.table, n)
    b1 = bounding.bound(p1.main, p1.table, n)
    gen = chcgen.construct_chc(problem.pre, ProductCommand.of(b0.command, b1.command),
                               problem.post, (b0.table, b1.table), mode=mode)
    return b0, b1, gen


@pytest.fixture(scope="session")
def tri():
    return tri_problem()


@pytest.fixture(scope="session")
def tri_verdict(tri):
    """The end-to-end triangle run, shared by every test that needs it."""
    job = driver.JobConfig(bench("tri0.rvl"), bench("tri1.rvl"), bench("tri.rprop"), bound_max=3, timeout=300)
    t0 = time.monotonic()
    verdict = driver.verify_problem(tri, job)
    verdict.seconds = time.monotonic() - t0
    return verdict


@pytest.fixture(scope="session")
def tri_bounded3(tri):
    b0, b1, gen = bounded_system(tri, 3)
    verdict = solver.solve(gen.system, solver.SolverConfig(timeout=300))
    assert isinstance(verdict, solver.Solved)
    return b0, b1, gen, verdict.solution


@pytest.fixture
def rng():
    return random.Random(1234)


def parse(src: str) -> lang.Program:
    return lang.parse_program(src)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.REPORT, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
