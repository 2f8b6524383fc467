import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from qesscher.cli import EXIT_CONFIG, EXIT_CONTRACT, EXIT_NONCONVERGENCE, EXIT_OK, main, run
from qesscher.errors import ContractError
from qesscher.io import RunConfig, RunReport, decode_complex, decode_matrix, encode_matrix, load_schema

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def load(name):
    return RunConfig.from_json((CONFIGS / name).read_text())


def test_matrix_codec_round_trip():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert np.array_equal(decode_matrix(encode_matrix(M)), M)
    R = rng.standard_normal((2, 2))
    assert encode_matrix(R) == R.tolist()
    assert decode_complex([1.5, -2.0]) == 1.5 - 2j


def test_config_round_trip_and_unknown_field():
    cfg = load("quest_1q.json")
    assert RunConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ContractError):
        RunConfig.from_dict({"mode": "quest", "problem": {}, "bogus": 1})


def test_bernoulli_report():
    rep = run(load("bernoulli.json"))
    assert rep.solution["lambda_star"][0] == pytest.approx(math.log(3), abs=1e-8)
    assert RunReport.from_json(rep.to_json()).to_dict() == rep.to_dict()
    jsonschema.validate(rep.to_dict(), load_schema("report"))


def test_quest_report_audit_table(capsys, tmp_path):
    out = tmp_path / "r.json"
    assert main(["quest", str(CONFIGS / "quest_1q.json"), "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "5:exp" in text and "FAIL" not in text
    rep = RunReport.from_json(out.read_text())
    jsonschema.validate(rep.to_dict(), load_schema("report"))
    assert rep.solution["measured_error"] <= 1e-3
    assert len(rep.audit) == 5 and all(r["within_claim"] and r["matches_formula"] for r in rep.audit)


def test_report_deterministic_except_timing():
    a, b = run(load("quest_1q.json")), run(load("quest_1q.json"))
    assert a.deterministic_view() == b.deterministic_view()


def test_extract_and_sweep_accept_quest_config(capsys):
    assert main(["extract", str(CONFIGS / "quest_1q.json")]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["solution"]["trace_distance"] <= 1e-3
    assert main(["sweep", str(CONFIGS / "sweep_1q.json"), "--jobs", "2"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)["solution"]["rows"]
    assert len(rows) == 12
    assert all(r["queries_U_rho"] == r["degree_exp"] * r["degree_log"] for r in rows)


def test_generated_config_runs(capsys):
    assert main(["qesscher", str(CONFIGS / "quantum_generated.json")]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert abs(rep["solution"]["duality_gap"]) <= 1e-6


def test_empty_config_exit_1(tmp_path, capsys):
    p = tmp_path / "empty.json"
    p.write_text("")
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_bad_json_and_epsilon_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"mode": "quest",')
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "bad.json:1:18" in capsys.readouterr().err
    assert main(["quest", str(CONFIGS / "quest_1q.json"), "--epsilon", "3"]) == EXIT_CONFIG
    assert "epsilon" in capsys.readouterr().err


def test_wrong_mode_exit_1():
    assert main(["classical", str(CONFIGS / "quest_1q.json")]) == EXIT_CONFIG


def test_contract_error_exit_2(tmp_path):
    cfg = json.loads((CONFIGS / "quest_1q.json").read_text())
    cfg["problem"]["kappa"] = 2  # rho has eigenvalue 1/4 < 1/2
    p = tmp_path / "k.json"
    p.write_text(json.dumps(cfg))
    assert main(["quest", str(p)]) == EXIT_CONTRACT


def test_nonconvergence_exit_3(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "bernoulli.json").read_text())
    cfg["options"] = {"max_iter": 1}
    p = tmp_path / "n.json"
    p.write_text(json.dumps(cfg))
    assert main(["classical", str(p)]) == EXIT_NONCONVERGENCE
    assert "non-convergence" in capsys.readouterr().err


def test_gen_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen", "quest", "--seed", "5", "--n", "2", "--d", "2", "--out", str(a)]) == EXIT_OK
    assert main(["gen", "quest", "--seed", "5", "--n", "2", "--d", "2", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    jsonschema.validate(json.loads(a.read_text()), load_schema("config"))
    assert main(["run", str(a), "--epsilon", "0.01"]) == EXIT_OK


def test_no_config_uses_seeded_instance(capsys):
    assert main(["classical", "--seed", "3"]) == EXIT_OK
    first = json.loads(capsys.readouterr().out)
    assert main(["classical", "--seed", "3"]) == EXIT_OK
    second = json.loads(capsys.readouterr().out)
    first.pop("wall_ms"), second.pop("wall_ms")
    assert first == second


def test_help_runs(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["--help"])
    assert ei.value.code == 0
    assert "quest" in capsys.readouterr().out
