import json

import numpy as np
import pytest

from swapnpa.cli import main
from swapnpa.conic import parse_sdpa
from swapnpa.scenario import Scenario, dump_config


def run(capsys, *argv):
    code = main(list(argv) + ["--json"])
    out = capsys.readouterr()
    return code, json.loads(out.out), out.err


def test_evaluate_preset_34(capsys):
    code, doc, err = run(capsys, "evaluate", "--preset", "paper-34")
    assert code == 0
    assert doc["F"] == pytest.approx(6.9282, abs=1e-4)
    assert doc["independence_residual_max"] < 1e-10
    assert len(doc["correlators"]) == 4 * 3 * 4
    assert "F = 6.928203" in err


def test_evaluate_with_noise(capsys):
    _, doc, _ = run(capsys, "evaluate", "--preset", "paper-34", "--vE", "0.95", "--vI", "0.9")
    assert doc["F"] == pytest.approx(0.81225 * 4 * np.sqrt(3), abs=1e-12)
    assert doc["noise_scale"] == pytest.approx(0.81225)


def test_evaluate_diagonal_variants(capsys):
    values = {name: run(capsys, "evaluate", "--preset", name)[1]["F"] for name in ("paper-33a", "paper-33b")}
    assert values["paper-33a"] == pytest.approx(2.3283, abs=1e-4)
    assert values["paper-33a"] != values["paper-33b"]


def test_evaluate_dump_moments(capsys, tmp_path):
    path = tmp_path / "m.json"
    code, doc, _ = run(capsys, "evaluate", "--preset", "paper-33", "--degree", "1", "--dump-moments", str(path))
    moments = json.loads(path.read_text())
    assert code == 0 and doc["moments_file"] == str(path)
    assert len(moments) == 736


def test_zero_matrix_is_degenerate(capsys):
    code, doc, err = run(capsys, "bound", "--E", "zeros")
    assert code == 4
    assert "degenerate functional" in doc["error"] and "degenerate functional" in err


def test_zero_column_in_evaluate(capsys):
    code, _, _ = run(capsys, "evaluate", "--E", "1,0,1;1,0,1;1,0,1")
    assert code == 2


@pytest.mark.parametrize("argv", [
    ["bound", "--preset", "nope"],
    ["bound", "--E", "1,2;3"],
    ["bound", "--scenario", "3by3", "--E", "zeros"],
    ["bound", "--config", "/nonexistent.json"],
    ["bound", "--scenario", "2x2", "--E", "1,1;1,1"],
    ["bound"],
])
def test_configuration_errors(capsys, argv):
    code, doc, _ = run(capsys, *argv)
    assert code == 2 and "error" in doc


def test_bound_degree_one(capsys, tmp_path):
    code, doc, err = run(capsys, "bound", "--preset", "paper-33", "--degree", "1",
                         "--export-sdpa", str(tmp_path / "p.dat-s"))
    assert code == 0
    assert doc["statuses"] == {"complex": "optimal", "real": "optimal"}
    assert doc["F_q"] == pytest.approx(doc["F_r"], abs=1e-5) and doc["R"] == pytest.approx(1.0, abs=1e-5)
    assert doc["degree"] == 1 and doc["causal"] is True and doc["preset"] == "paper-33a"
    exported = [tmp_path / "p-complex.dat-s", tmp_path / "p-real.dat-s"]
    assert doc["exported"] == [str(p) for p in exported]
    assert parse_sdpa(exported[0]).block_dims[:5] == (28,) * 5


def test_bound_single_theory_and_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(dump_config(Scenario(3, 3, 1, True), None))
    code, doc, _ = run(capsys, "bound", "--config", str(cfg), "--E", "[[1,0,0],[0,1,0],[0,0,1]]",
                       "--theory", "complex")
    assert code == 0
    assert "F_r" not in doc and "R" not in doc
    assert doc["F_q"] > 0


def test_solver_failure_exit_code(capsys, monkeypatch):
    from swapnpa import moments
    from swapnpa.scenario import BoundResult, SolverStatus

    def trouble(problem, E, theory, **kw):
        return BoundResult(float("nan"), theory, SolverStatus.NUMERICAL_TROUBLE, float("inf"))

    monkeypatch.setattr(moments, "solve_bound", trouble)
    code, doc, err = run(capsys, "bound", "--preset", "paper-33", "--degree", "1")
    assert code == 3
    assert "numerical_trouble" in doc["error"] and "solver failure" in err


def test_optimize_single_trial(capsys, tmp_path):
    hist = tmp_path / "h.jsonl"
    code, doc, _ = run(capsys, "optimize", "--scenario", "3x4", "--degree", "1", "--budget", "1", "--seed", "7",
                       "--history", str(hist))
    assert code == 0 and doc["trials"] == 1
    assert len(hist.read_text().splitlines()) == 1
    assert np.max(np.abs(doc["canonical_E"])) == 1.0
    code, doc, _ = run(capsys, "optimize", "--scenario", "3x4", "--degree", "1", "--budget", "2", "--seed", "7",
                       "--history", str(hist))
    assert doc["trials"] == 2 and doc["new_trials"] == 1
    assert [json.loads(l)["index"] for l in hist.read_text().splitlines()] == [0, 1]


def test_json_output_is_deterministic(capsys):
    a = run(capsys, "evaluate", "--preset", "paper-33")[1]
    b = run(capsys, "evaluate", "--preset", "paper-33")[1]
    assert a == b
