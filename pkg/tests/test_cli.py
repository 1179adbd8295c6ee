"""End-to-end tests of the command-line interface."""

import json

import numpy as np
import pytest

from robustsets.cli import main


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def train_csv(tmp_path):
    path = tmp_path / "train.csv"
    code = run(
        ["gen-data", "--kind", "linear_gaussian", "--d", 2, "--n", 60,
         "--noise", 0.5, "--seed", 3, "--out", path]
    )
    assert code == 0
    return path


@pytest.fixture
def query_csv(tmp_path):
    path = tmp_path / "query.csv"
    path.write_text("x1,x2\n0.1,0.2\n-0.3,0.5\n0.7,-0.2\n")
    return path


def test_gen_data_shape_and_header(tmp_path):
    out = tmp_path / "d.csv"
    assert run(["gen-data", "--d", 2, "--n", 10, "--out", out]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 11
    assert lines[0] == "x1,x2,y"


def test_gen_data_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["gen-data", "--d", 3, "--n", 25, "--seed", 7, "--noise", 0.4]
    assert run(args + ["--out", a]) == 0
    assert run(args + ["--out", b]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_data_bad_output_dir(tmp_path):
    code = run(["gen-data", "--d", 2, "--n", 5, "--out", tmp_path / "nope" / "x.csv"])
    assert code == 2


def test_unknown_method_is_usage_error(tmp_path, train_csv, query_csv):
    code = run(
        ["build-set", "--train", train_csv, "--query", query_csv,
         "--method", "m9", "--out", tmp_path / "b.json"]
    )
    assert code == 2


@pytest.mark.parametrize("method", ["m1", "m2", "m3", "m4", "finite", "gi"])
def test_build_set_produces_ordered_box(tmp_path, train_csv, query_csv, method):
    out = tmp_path / f"box_{method}.json"
    code = run(
        ["build-set", "--train", train_csv, "--query", query_csv,
         "--method", method, "--norm-bound", 3, "--resid-e", 1.0, "--out", out]
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["method"] == method
    lower, upper = np.array(payload["lower"]), np.array(payload["upper"])
    assert lower.shape == upper.shape == (3,)
    assert np.all(lower <= upper)
    assert "diagnostics" in payload


def test_build_set_dimension_mismatch(tmp_path, train_csv):
    bad_query = tmp_path / "bad.csv"
    bad_query.write_text("x1,x2,x3\n0.0,0.0,0.0\n")
    code = run(
        ["build-set", "--train", train_csv, "--query", bad_query,
         "--method", "m1", "--out", tmp_path / "b.json"]
    )
    assert code == 2


def test_build_set_parse_error_reports_line(tmp_path, query_csv, capsys):
    bad = tmp_path / "bad_train.csv"
    bad.write_text("x1,x2,y\n1.0,2.0,3.0\n1.0,oops,3.0\n")
    code = run(
        ["build-set", "--train", bad, "--query", query_csv,
         "--method", "m1", "--out", tmp_path / "b.json"]
    )
    assert code == 2
    assert ":3:" in capsys.readouterr().err


def test_solve_round_trip(tmp_path, train_csv, query_csv):
    box_path = tmp_path / "box.json"
    sol_path = tmp_path / "sol.json"
    assert run(
        ["build-set", "--train", train_csv, "--query", query_csv,
         "--method", "m2", "--norm-bound", 3, "--out", box_path]
    ) == 0
    assert run(
        ["solve", "--box", box_path, "--min-return", -5, "--out", sol_path]
    ) == 0
    payload = json.loads(sol_path.read_text())
    assert payload["status"] == "optimal"
    assert payload["kkt_residual"] <= 1e-6
    assert sum(payload["weights"]) == pytest.approx(1.0, abs=1e-8)


def test_solve_symmetric_degenerate_box_equal_weights(tmp_path):
    box_path = tmp_path / "box.json"
    sol_path = tmp_path / "sol.json"
    box_path.write_text(json.dumps({"lower": [1.0, 1.0, 1.0], "upper": [1.0, 1.0, 1.0]}))
    assert run(["solve", "--box", box_path, "--min-return", 0.5, "--out", sol_path]) == 0
    payload = json.loads(sol_path.read_text())
    assert np.allclose(payload["weights"], 1.0 / 3.0, atol=1e-6)


def test_solve_infeasible_is_exit_zero(tmp_path):
    box_path = tmp_path / "box.json"
    sol_path = tmp_path / "sol.json"
    box_path.write_text(json.dumps({"lower": [0.0, 0.1], "upper": [1.0, 1.0]}))
    assert run(["solve", "--box", box_path, "--min-return", 10, "--out", sol_path]) == 0
    assert json.loads(sol_path.read_text())["status"] == "infeasible"


def test_validate_writes_report_and_csv(tmp_path):
    prefix = tmp_path / "val"
    code = run(
        ["validate", "--method", "m1", "--d", 2, "--noise", 0.3, "--n", 200,
         "--m", 3, "--outer", 2, "--inner", 5, "--seed", 1, "--out", prefix]
    )
    assert code == 0  # vacuous bound at this n: reported, not failed
    report = json.loads((tmp_path / "val.json").read_text())
    assert report["method"] == "m1"
    assert len(report["reports"]) == 1
    assert report["reports"][0]["vacuous"] is True
    lines = (tmp_path / "val.csv").read_text().strip().splitlines()
    assert lines[0].startswith("n,bound,empirical")
    assert len(lines) == 2


def test_validate_sweep_and_determinism(tmp_path):
    args = ["validate", "--method", "m1", "--d", 2, "--noise", 0.3,
            "--sweep-n", "100,200", "--m", 3, "--outer", 2, "--inner", 4,
            "--seed", 5]
    assert run(args + ["--out", tmp_path / "a"]) == 0
    assert run(args + ["--out", tmp_path / "b"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    report = json.loads((tmp_path / "a.json").read_text())
    assert [r["n"] for r in report["reports"]] == [100, 200]


def test_config_file_with_flag_override(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("d=2\nn=8\nnoise=0.2\nseed=4\n# comment line\n")
    out = tmp_path / "d.csv"
    assert run(["gen-data", "--config", config, "--n", 12, "--out", out]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 13  # flag n=12 beats config n=8


def test_config_file_malformed(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("this is not a setting\n")
    assert run(["gen-data", "--config", config, "--out", tmp_path / "d.csv"]) == 2


def test_missing_subcommand_is_usage_error():
    assert run([]) == 2
