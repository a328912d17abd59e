import json

import numpy as np
import pytest
from click.testing import CliRunner

from slag.cli import ExperimentConfig, UsageError, emit_plot_data, main, run_experiment


def _run(tmp_path, exp_id, params=None, sub="a", seed=0):
    return run_experiment(ExperimentConfig(exp_id, params or {}, str(tmp_path / sub), seed))


def test_local_model_manifest(tmp_path):
    man = _run(tmp_path, "local-model", {"k": 1, "t": 0.5, "identity_samples": 500})
    assert man["summary"]["residual_max"] < 1e-10
    assert man["gates_passed"] and man["status"] == "ok"
    written = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(written["outputs"]) >= {"local_model.csv", "plot_ladder.csv"}
    assert written["versions"]["slag"]


def test_link_trefoil(tmp_path):
    man = _run(tmp_path, "link", {"pd": "trefoil"})
    assert json.loads((tmp_path / "a" / "link.json").read_text())["det"] == 3
    assert man["summary"]["det"] == 3


def test_unknown_id(tmp_path):
    with pytest.raises(UsageError, match="unknown experiment"):
        _run(tmp_path, "warp-drive")


def test_field_diagnostics():
    with pytest.raises(UsageError) as exc:
        ExperimentConfig("local-model", {"k": 9, "colour": 1}).validated()
    probs = exc.value.problems
    assert any("params.k" in p for p in probs) and any("params.colour" in p for p in probs)


def test_config_json_roundtrip():
    cfg = ExperimentConfig.from_json('{"id": "link", "params": {"pd": "hopf"}, "seed": 3}')
    assert cfg.validated().params == {"pd": "hopf"} and cfg.seed == 3
    with pytest.raises(UsageError):
        ExperimentConfig.from_json('{"id": "link", "bogus": 1}')


def test_empty_plot_data(tmp_path):
    files = emit_plot_data({}, tmp_path)
    heads = [open(f).read() for f in files]
    assert heads == ["log_t,log_weighted_residual\n", "t,lambda_t,abs_gap\n", "name,re,im\n"]


@pytest.mark.parametrize("exp_id,params", [
    ("local-model", {"k": 2, "t": 0.1, "identity_samples": 200}),
    ("z2-solve", {}),
    ("cone-eig", {"N": 100}),
    ("torus-solve", {"N": 16}),
    ("link", {"pd": "figure8"}),
    ("obstruct", {}),
])
def test_byte_identical_reruns(tmp_path, exp_id, params):
    a = _run(tmp_path, exp_id, params, "a", seed=7)
    b = _run(tmp_path, exp_id, params, "b", seed=7)
    csvs = {k: v for k, v in a["outputs"].items() if k.endswith(".csv")}
    assert csvs and all(b["outputs"][k] == v for k, v in csvs.items())


def test_error_recorded_in_manifest(tmp_path):
    with pytest.raises(Exception):
        _run(tmp_path, "link", {"pd": "X[1,2,3"})
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["status"] == "error" and "ParseError" in man["error"]


def test_cli_exit_codes(tmp_path):
    runner = CliRunner()
    ok = runner.invoke(main, ["link", "det", "--pd", "hopf", "--out", str(tmp_path / "l")])
    assert ok.exit_code == 0 and "manifest" in ok.output
    bad = runner.invoke(main, ["residual", "--k", "7", "--out", str(tmp_path / "r")])
    assert bad.exit_code == 2 and "params.k" in bad.output
    red = runner.invoke(main, ["mellin", "--out", str(tmp_path / "m")])
    assert red.exit_code == 1 and "FAIL" in red.output


def test_mellin_input_writes_expansion(tmp_path):
    r = np.linspace(0.01, 1.0, 200)
    src = tmp_path / "radial.csv"
    np.savetxt(src, np.c_[r, 2 * r**0.5 + 0.3 * r**1.5], delimiter=",", header="r,u", comments="")
    res = CliRunner().invoke(main, ["mellin", "--input", str(src), "--out", str(tmp_path / "m")])
    assert res.exit_code == 0
    rep = json.loads((tmp_path / "m" / "expansion.json").read_text())
    assert rep["leading_exponent"] == 0.5
    assert abs(rep["terms"]["0.5"][0] - 2.0) < 1e-9 and abs(rep["terms"]["1.5"][0] - 0.3) < 1e-9


def test_cone_gap_gate_ignores_input_order(tmp_path):
    res = CliRunner().invoke(main, ["cone", "eig", "--t", "0.0,0.1,0.2", "--N", "100",
                                    "--out", str(tmp_path / "c")])
    assert "PASS  gap_strictly_decreasing" in res.output


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"id": "cone-eig", "params": {"N": 100, "ts": [0.2, 0.1]}}))
    res = CliRunner().invoke(main, ["cone", "eig", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert res.exit_code == 0
    rows = (tmp_path / "o" / "eig.csv").read_text().splitlines()
    assert rows[0] == "t,lambda_t,abs_gap" and len(rows) == 3
    mismatch = CliRunner().invoke(main, ["link", "det", "--config", str(cfg)])
    assert mismatch.exit_code == 2


def test_obstruct_covering_file(tmp_path):
    cov = tmp_path / "cov.json"
    cov.write_text(json.dumps({"b1_L": 0, "b2_L": 0, "b1_cover": 1, "b2_cover": 0,
                               "chi_L": 0, "pi1_class": "finite"}))
    res = CliRunner().invoke(main, ["obstruct", "--config", str(cov), "--no-les",
                                    "--out", str(tmp_path / "v")])
    assert res.exit_code == 0
    verdict = json.loads((tmp_path / "v" / "verdict.json").read_text())
    assert verdict["verdict"] == "obstructed-nondegenerate"
