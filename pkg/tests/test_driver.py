import json
import random
from pathlib import Path

import pytest

from relhorn import cli, driver, lang, proof as PR, terms as T
from conftest import BENCH, bench, load_problem


def test_parse_property():
    pre, post = driver.parse_property("// equal inputs\npre: n_0 = n_1\npost: ret_0 = ret_1\n")
    assert pre == T.eq(T.Var("n_0"), T.Var("n_1"))
    assert post == T.eq(T.Var("ret_0"), T.Var("ret_1"))


@pytest.mark.parametrize("text", [
    "pre: n_0 = n_1\n",
    "pre: n_0 = n_1\npre: true\npost: true\n",
    "pre n_0 = n_1\npost: true\n",
    "pre: n_0 = = n_1\npost: true\n",
])
def test_parse_property_errors(text):
    with pytest.raises(driver.ConfigError):
        driver.parse_property(text)


def test_load_problem_rejects_stray_variable():
    src = "main: ret := n\n"
    with pytest.raises(driver.ConfigError):
        driver.load_problem(src, src, "pre: n_0 = m_1\npost: ret_0 = ret_1\n")


def test_problem_inputs_are_tagged(tri):
    assert set(tri.inputs) == {"n_0", "n_1"}


def test_job_config_validation():
    with pytest.raises(driver.ConfigError):
        driver.JobConfig("a", "b", "c", bound_max=0)
    job = driver.JobConfig("a", "b", "c", start=2, step=2, bound_max=7)
    assert list(job.bounds()) == [2, 4, 6]


def test_mutant_refuted_with_replayable_witness():
    prob = load_problem("tri0.rvl", "mutants/tri1_acc_plus1.rvl", "tri.rprop")
    job = driver.JobConfig("", "", "", bound_max=3, timeout=120)
    verdict = driver.verify_problem(prob, job)
    assert isinstance(verdict, driver.Refuted)
    assert verdict.witness == {"n_0": 1, "n_1": 1}
    assert driver.replay(prob, verdict)


def test_no_false_counterexample_for_equivalent_pair(tri):
    p0, p1 = tri.programs
    from relhorn import bounding
    bounded = (bounding.bound(p0.main, p0.table, 2), bounding.bound(p1.main, p1.table, 2))
    assert driver.find_counterexample(tri, bounded, random.Random(0), random_count=20) is None


def test_clause_counts_monotone_in_trace():
    prob = load_problem("tri0.rvl", "mutants/tri0_base1.rvl", "tri.rprop")
    verdict = driver.verify_problem(prob, driver.JobConfig("", "", "", bound_max=2, timeout=60))
    counts = [r.clauses for r in verdict.trace]
    assert counts == sorted(counts)


def test_empty_manifest(tmp_path, capsys):
    m = tmp_path / "empty.toml"
    m.write_text("# nothing to run\n")
    assert driver.run_suite(m) == []
    assert cli.main(["bench", str(m)]) == 0
    assert json.loads(capsys.readouterr().out) == {"entries": [], "mismatches": 0}


def test_manifest_paths_relative(tmp_path):
    m = tmp_path / "one.toml"
    m.write_text(f'[[entry]]\nname = "x"\nclass = "equiv"\nleft = "{bench("tri0.rvl")}"\n'
                 f'right = "{bench("tri1.rvl")}"\nproperty = "{bench("tri.rprop")}"\nexpected = "Verified"\n')
    (e,) = driver.load_manifest(m)
    assert e.name == "x" and Path(e.left).exists()


def test_bundled_manifests_load():
    entries = driver.load_manifest(BENCH / "manifest.toml")
    assert {e.name for e in entries} >= {"sumSimple", "sumUp", "sumDown", "sumUpDown", "sumSumAcc",
                                        "multMultAcc", "multR1", "multL1"}
    mutants = driver.load_manifest(BENCH / "mutants.toml")
    assert len(mutants) == 10 and all(e.expected == "Refuted" for e in mutants)
    for e in entries + mutants:
        assert all(Path(p).exists() for p in (e.left, e.right, e.prop))


def test_cli_usage_errors(tmp_path, capsys):
    assert cli.main(["verify", "missing.rvl", "also.rvl", "nope.rprop"]) == 3
    with pytest.raises(SystemExit) as ex:
        cli.main(["verify"])
    assert ex.value.code == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert cli.main(["check-proof", str(bad)]) == 3


def test_cli_refuted_exit_code(capsys):
    code = cli.main(["verify", bench("tri0.rvl"), bench("mutants/tri1_acc_plus1.rvl"),
                     bench("tri.rprop"), "--bound-max", "2", "--timeout", "120"])
    assert code == 1
    assert "Refuted" in capsys.readouterr().out


def test_cli_inconclusive_exit_code(capsys):
    code = cli.main(["verify", bench("tri0.rvl"), bench("tri1.rvl"), bench("tri.rprop"),
                     "--bound-max", "1", "--timeout", "60"])
    assert code == 2


def test_cli_emits_artifacts(tmp_path, capsys):
    smt = tmp_path / "q.smt2"
    cli.main(["verify", bench("tri0.rvl"), bench("tri1.rvl"), bench("tri.rprop"), "--bound-max", "1",
              "--emit-smt2", str(smt), "--emit-bounded", str(tmp_path / "b")])
    assert "(set-logic HORN)" in smt.read_text()
    files = sorted(p.name for p in (tmp_path / "b").iterdir())
    assert files
    for p in (tmp_path / "b").iterdir():
        lang.parse_program(p.read_text(), allow_bottom=True)


@pytest.mark.slow
def test_cli_check_proof_round_trip(tri, tri_verdict, tmp_path, capsys):
    path = tmp_path / "tri.json"
    PR.dump_proof(tri_verdict.proof, tri.sources, tri.pre, tri.post, path)
    assert cli.main(["check-proof", str(path)]) == 0
    doc = json.loads(path.read_text())
    doc["post"] = PR.term_to_json(T.eq(T.Var("ret_0"), T.add(T.Var("ret_1"), T.Const(1))))
    path.write_text(json.dumps(doc))
    assert cli.main(["check-proof", str(path)]) == 1


@pytest.mark.slow
def test_self_equivalence_verified():
    prob = load_problem("sumSimple_0.rvl", "sumSimple_0.rvl", "equiv_n.rprop")
    verdict = driver.verify_problem(prob, driver.JobConfig("", "", "", bound_max=3, timeout=300))
    assert isinstance(verdict, driver.Verified)
    assert PR.check_proof(verdict.proof, prob.tables)
