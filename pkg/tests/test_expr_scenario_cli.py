import json
import os
from pathlib import Path

import numpy as np
import pytest

from flatbundles import cli
from flatbundles.errors import ParseError, ValidationError
from flatbundles.expr import evaluate_constant, parse_expression
from flatbundles.he_flow import load_checkpoint
from flatbundles.scenario import load_scenario

DEMOS = Path(__file__).resolve().parents[1] / "demos" / "scenarios"
GOOD_DEMOS = sorted(p for p in DEMOS.glob("*.json") if p.stem != "malformed")


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return str(p)


# --------------------------------------------------------------------------
# expressions


def test_expression_values():
    e = parse_expression("1 + 0.3*sin(2*pi*x1) - cos(x2)/2", 2)
    x = np.array([[0.25, 0.0], [0.0, np.pi]])
    assert np.allclose(e(x), [1.3 - 0.5, 1.5])
    assert evaluate_constant("exp(1)") == pytest.approx(np.e)
    assert evaluate_constant("-(2)") == -2.0


@pytest.mark.parametrize("text", ["x3", "x1 ** 2", "log(x1)", "sin(x1, x2)", "import os", "'a'", "x1 +", "f(x1)"])
def test_expression_rejects(text):
    with pytest.raises(ParseError):
        parse_expression(text, 2)


# --------------------------------------------------------------------------
# scenario parsing


def test_parse_error_location(tmp_path):
    with pytest.raises(ParseError) as info:
        load_scenario(str(DEMOS / "malformed.json"))
    assert info.value.line == 4 and info.value.column is not None


def test_invalid_json_location(tmp_path):
    with pytest.raises(ParseError) as info:
        load_scenario(write(tmp_path, '{\n  "task": "HN",\n  "manifold": {,}\n}'))
    assert info.value.line == 3


@pytest.mark.parametrize(
    "doc",
    [
        {"task": "Nope", "manifold": {"type": "circle"}},
        {"task": "HN", "manifold": {"type": "abstract", "generators": 2},
         "bundle": {"generators": [[[1]]]}, "degree": {"mode": "abstract", "weights": [1, 1]}},
        {"task": "HN", "manifold": {"type": "abstract", "generators": 1},
         "bundle": {"generators": [[[1]]]}, "degree": {"mode": "abstract", "weights": [1, 2]}},
        {"task": "HESolve", "manifold": {"type": "abstract", "generators": 1},
         "bundle": {"generators": [[[1]]]}, "degree": {"mode": "abstract", "weights": [1]}},
        {"task": "PrincipalHN", "manifold": {"type": "abstract", "generators": 1},
         "bundle": {"generators": [[[1]]]}, "degree": {"mode": "abstract", "weights": [1]}},
        {"task": "HN", "manifold": {"type": "circle"}, "grid": 4, "bundle": {"generators": [[[1]]]},
         "degree": {"mode": "numeric"}},
    ],
)
def test_validation_errors(tmp_path, doc):
    with pytest.raises(ValidationError):
        load_scenario(write(tmp_path, doc))


def test_overrides(tmp_path):
    sc = load_scenario(str(DEMOS / "diag_he_solve.json"), grid=32, seed=7)
    assert sc.manifold.N == 32 and sc.seed == 7
    assert load_scenario(str(DEMOS / "diag3_hn.json"), task="Classify").task == "Classify"


# --------------------------------------------------------------------------
# command line


@pytest.mark.parametrize("path", GOOD_DEMOS, ids=lambda p: p.stem)
def test_every_demo_runs(tmp_path, path):
    assert cli.main(["run", "--scenario", str(path), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert {"scenario_hash", "task", "conventions", "certification", "result", "timing"} <= set(rep)


def test_named_subcommands(tmp_path, capsys):
    assert cli.main(["classify", "--scenario", str(DEMOS / "unitary_classify.json"), "--out", str(tmp_path)]) == 0
    assert "PolystableNotStable" in capsys.readouterr().out
    assert cli.main(["principal", "classify", "--scenario", str(DEMOS / "sl2_unipotent_socle.json"),
                     "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["result"]["ad_verdict"] == "SemistableNotPolystable"
    assert cli.main(["oracle", "--scenario", str(DEMOS / "diag3_hn.json"), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "report.json").read_text())["result"]
    assert res["agree"] and res["oracle"]["ranks"] == [1, 2, 3]
    assert np.allclose(res["oracle"]["slopes"], [3, 1, -4])


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--scenario", str(DEMOS / "malformed.json"), "--out", str(tmp_path)]) == 2
    assert "line 4" in capsys.readouterr().err
    assert cli.main(["run", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    # a downstream failure: socle of an unstable bundle
    p = write(tmp_path, {"task": "Socle", "manifold": {"type": "abstract", "generators": 1},
                         "bundle": {"generators": [[["exp(3)", 0], [0, 1]]]},
                         "degree": {"mode": "abstract", "weights": [1]}})
    assert cli.main(["run", "--scenario", p, "--out", str(tmp_path)]) == 1
    assert "NotSemistable" in capsys.readouterr().err


def test_he_solve_outputs(tmp_path):
    assert cli.main(["he-solve", "--scenario", str(DEMOS / "diag_he_solve.json"), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["result"]["verdict"] == "Converged" and rep["result"]["residual"] < 1e-6
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert len(lines) > 2 and "residual" in lines[0]
    assert (tmp_path / "checkpoint.bin").exists()


@pytest.mark.parametrize("name", ["diag_he_solve", "diag3_hn", "sl2_diag_he"])
def test_reports_are_deterministic(tmp_path, name):
    texts = []
    for k in range(2):
        out = tmp_path / str(k)
        assert cli.main(["run", "--scenario", str(DEMOS / f"{name}.json"), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        rep.pop("timing")
        texts.append(json.dumps(rep, sort_keys=True))
    assert texts[0] == texts[1]


def test_resume_matches_uninterrupted(tmp_path):
    doc = json.loads((DEMOS / "diag_he_solve.json").read_text())
    full = write(tmp_path, doc, "full.json")
    assert cli.main(["run", "--scenario", full, "--out", str(tmp_path / "full")]) == 0
    ref = json.loads((tmp_path / "full" / "report.json").read_text())["result"]

    doc["params"]["max_steps"] = 8
    doc["params"]["checkpoint_every"] = 3
    cut = write(tmp_path, doc, "cut.json")
    assert cli.main(["run", "--scenario", cut, "--out", str(tmp_path / "part")]) == 0
    first = json.loads((tmp_path / "part" / "report.json").read_text())["result"]
    assert first["verdict"] != "Converged"
    assert load_checkpoint(str(tmp_path / "part" / "checkpoint.bin")).step == 8

    assert cli.main(["run", "--scenario", full, "--out", str(tmp_path / "part"), "--resume"]) == 0
    res = json.loads((tmp_path / "part" / "report.json").read_text())["result"]
    assert res["resumed"] and res["verdict"] == "Converged"
    assert abs(res["residual"] - ref["residual"]) <= 1e-9
    assert res["steps"] == ref["steps"]


def test_resume_ignores_foreign_checkpoint(tmp_path):
    out = str(tmp_path)
    assert cli.main(["run", "--scenario", str(DEMOS / "diag_he_solve.json"), "--out", out]) == 0
    # a different scenario does not pick up the stored state
    assert cli.main(["run", "--scenario", str(DEMOS / "jordan_he_solve.json"), "--out", out, "--resume"]) == 0
    rep = json.loads(Path(out, "report.json").read_text())["result"]
    assert not rep["resumed"] and rep["verdict"] == "Diverged"
    assert os.path.exists(Path(out, "trace.csv"))
