import json
from pathlib import Path

import pytest

from weylscope.cli import main

CORPUS = Path(__file__).resolve().parents[1] / "corpus"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_classify_warped_exit_and_verdict(capsys):
    code, out, _ = run(capsys, "classify", CORPUS / "warped_sinh.metric", "--samples", 50)
    rep = json.loads(out)
    assert code == 1
    assert (rep["verdict"], rep["rank"], rep["transversal_class"]) == ("Inconclusive_NegativeScaling", 1, "integrable")
    assert set(rep) >= {"tool_version", "input_hash", "config", "rank_histogram", "transversal_class",
                        "verdict", "residuals", "exceptional_points"}
    assert set(rep["residuals"]) == {"einstein", "rot", "frobenius", "contact"}


def test_classify_is_deterministic(capsys, tmp_path):
    args = ["classify", CORPUS / "r2_schwarzschild.metric", "--samples", 20, "--per-sample"]
    run(capsys, *args, "--output", tmp_path / "a.json")
    run(capsys, *args, "--output", tmp_path / "b.json")
    a, b = (tmp_path / "a.json").read_bytes(), (tmp_path / "b.json").read_bytes()
    assert a == b and json.loads(a)["per_sample"]


def test_threads_do_not_change_report(capsys, monkeypatch):
    args = ["classify", CORPUS / "s2xs2_rescaled.metric", "--samples", 10]
    _, one, _ = run(capsys, *args)
    monkeypatch.setenv("WEYLSCOPE_THREADS", "4")
    _, four, _ = run(capsys, *args)
    assert one == four


@pytest.mark.slow
def test_classify_rescaled_t11(capsys):
    code, out, _ = run(capsys, "classify", CORPUS / "t11_rescaled.metric", "--samples", 20, "--verify-samples", 3)
    assert code == 0 and json.loads(out)["verdict"] == "ConformallyEinstein"


def test_parse_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.metric"
    bad.write_text("coords x y\ng = [[1, 0], [1, 1]]\n")
    code, out, err = run(capsys, "classify", bad)
    assert code == 2 and out == "" and "SymmetryError" in err


def test_missing_file_and_bad_config(capsys, tmp_path):
    assert run(capsys, "analyze", tmp_path / "none.metric")[0] == 2
    assert run(capsys, "classify", CORPUS / "flat4.metric", "--samples", 0)[0] == 2


def test_analyze(capsys):
    code, out, _ = run(capsys, "analyze", CORPUS / "s4.metric", "--samples", 3)
    rep = json.loads(out)
    assert code == 0 and rep["modal_rank"] == 4
    assert all(abs(s["scalar_curvature"] - 12) < 1e-9 for s in rep["samples"])


def test_verify(capsys):
    code, out, _ = run(capsys, "verify", CORPUS / "warped_sinh.metric", "--phi", "0.1*sin(a1)*t", "--samples", 3,
                       "--verify-samples", 2)
    rep = json.loads(out)
    assert code == 0 and rep["weyl_divergence_transform"]["residual"] <= 1e-6
    assert rep["mean_curvature_transform"]["residual"] <= 1e-4


def test_sasaki_on_even_dimension(capsys):
    code, out, _ = run(capsys, "sasaki", CORPUS / "s2xs2.metric", "--samples", 5)
    assert code == 2 and not json.loads(out)["passed"]


def test_selftest(capsys):
    code, out, err = run(capsys, "selftest")
    assert code == 0 and json.loads(out)["passed"] and "FAIL" not in err


def test_generate(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", "conformal_rescale", "base=t11", 'phi="0.1*psi"', "--dir", tmp_path)
    path = Path(json.loads(out)["written"][0])
    assert code == 0 and path.exists() and path.name.startswith("conformal_rescale_")
    assert run(capsys, "generate", "torus")[0] == 2
    assert run(capsys, "generate", "sphere", "r=-1")[0] == 2
