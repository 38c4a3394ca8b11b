import json
import math
import subprocess
import sys

import pytest

from coaldual.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_VERIFY, SEED_ENV, run


def invoke(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return json.loads(text)["rows"]


def test_density_both_methods_agree(capsys):
    code, out, _ = invoke(capsys, "density", "--alpha", "1", "--beta", "1", "--x", "0.5", "--y", "0.5", "--t", "1", "--method", "both")
    assert code == EXIT_OK
    rows = rows_of(out)
    assert [r["method"] for r in rows] == ["eigen", "dual"]
    assert abs(rows[0]["value"] - rows[1]["value"]) < 1e-6
    assert all("truncation_order" in r for r in rows)


def test_simplex_density(capsys):
    code, out, _ = invoke(capsys, "density", "--eps", "1,1,1", "--x", "0.2,0.3,0.5", "--y", "0.6,0.1,0.3", "--t", "0.5")
    assert code == EXIT_OK
    a, b = rows_of(out)
    assert a["value"] == pytest.approx(b["value"], rel=1e-7)


def test_subordinated_forest_hand_value(capsys):
    code, out, _ = invoke(capsys, "subforest", "pmf", "--theta", "2", "--t", str(math.log(2)))
    assert code == EXIT_OK
    rows = rows_of(out)
    assert rows[0]["k"] == 0 and abs(rows[0]["value"] - 2 / 9) < 1e-12
    assert rows[-1]["k"] == "norm_defect" and rows[-1]["value"] < 1e-10


def test_rate_hand_value(capsys):
    code, out, _ = invoke(capsys, "subforest", "rate", "--theta", "2", "--i", "1", "--j", "0")
    assert code == EXIT_OK and rows_of(out)[0]["value"] == pytest.approx(1.0, abs=1e-14)


def test_csv_output_has_meta_header_and_defect_row(capsys):
    code, out, _ = invoke(capsys, "lod", "pmf", "--theta", "2", "--t", "0.5", "--n", "20", "--format", "csv")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0].startswith("# meta: ")
    meta = json.loads(lines[0][len("# meta: "):])
    assert meta["command"] == "lod" and meta["parameters"]["theta"] == 2.0
    assert {"seed", "max_terms", "tail_tol", "version"} <= set(meta)
    assert lines[1] == "k,value,start,order"
    assert lines[-1].startswith("norm_defect,")
    assert len(lines) == 2 + 21 + 1


def test_entrance_pmf_from_cli(capsys):
    code, out, _ = invoke(capsys, "lod", "pmf", "--theta", "1", "--t", "0.5", "--n", "inf")
    assert code == EXIT_OK
    rows = rows_of(out)
    assert rows[-1]["k"] == "norm_defect" and rows[-1]["value"] < 1e-8


def test_invalid_input_exit_code(capsys):
    code, _, err = invoke(capsys, "density", "--alpha", "1", "--beta", "1", "--x", "0.5", "--y", "0.5")
    assert code == EXIT_INPUT and "missing --t" in err
    code, _, _ = invoke(capsys, "density", "--alpha", "-1", "--beta", "1", "--x", "0.5", "--y", "0.5", "--t", "1")
    assert code == EXIT_INPUT
    code, _, _ = invoke(capsys, "verify", "--suite", "nonsense")
    assert code == EXIT_INPUT


def test_numerical_failure_exit_code(capsys):
    code, _, err = invoke(capsys, "lod", "q", "--theta", "1", "--t", "0.005", "--k", "3")
    assert code == EXIT_NUMERIC and "numerical failure" in err
    code, _, _ = invoke(capsys, "density", "--alpha", "1", "--beta", "1", "--x", "0.4", "--y", "0.5", "--t", "0.001",
                        "--method", "eigen", "--max-terms", "50")
    assert code == EXIT_NUMERIC


def test_failed_verification_exit_code(capsys):
    # the finite-start versus entrance-law check does not reach its tolerance
    code, out, _ = invoke(capsys, "verify", "--suite", "3", "--seed", "42")
    assert code == EXIT_VERIFY
    status = {r["check"]: r["status"] for r in rows_of(out)}
    assert "fail" in status.values() and "pass" in status.values()


def test_passing_verification_exit_code(capsys):
    code, _, err = invoke(capsys, "verify", "--suite", "pgf,orthonormality")
    assert code == EXIT_OK
    assert err.count("PASS") == 8


def test_identical_runs_are_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        code = run(["simulate", "forest", "--n", "inf", "--theta", "2", "--t", "0.5", "--replicates", "5000",
                    "--seed", "7", "--format", "csv", "--out", str(path)])
        assert code == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert b"replicates" in outs[0].splitlines()[1]


def test_seed_from_environment(monkeypatch, capsys):
    args = ("simulate", "wf", "--alpha", "1", "--beta", "2", "--x", "0.3", "--t", "0.1", "--replicates", "200")
    monkeypatch.setenv(SEED_ENV, "123")
    _, env_out, _ = invoke(capsys, *args)
    _, flag_out, _ = invoke(capsys, *args, "--seed", "123")
    _, other_out, _ = invoke(capsys, *args, "--seed", "124")
    assert json.loads(env_out)["meta"]["seed"] == 123
    assert env_out == flag_out and env_out != other_out
    monkeypatch.setenv(SEED_ENV, "abc")
    code, _, _ = invoke(capsys, *args)
    assert code == EXIT_INPUT


def test_simulators_from_cli(capsys):
    code, out, _ = invoke(capsys, "simulate", "dual2d", "--alpha", "1", "--beta", "1", "--n", "3", "--k", "2",
                          "--t", "0.8", "--replicates", "2000", "--seed", "1")
    assert code == EXIT_OK
    assert sum(r["value"] for r in rows_of(out)) == pytest.approx(1.0)
    code, out, _ = invoke(capsys, "simulate", "subordinated", "--alpha", "1", "--beta", "2", "--x", "0.3",
                          "--t", "0.2", "--replicates", "500", "--seed", "1")
    assert code == EXIT_OK and rows_of(out)[0]["replicates"] == 500


def test_spectra_commands(tmp_path, capsys):
    code, out, _ = invoke(capsys, "spectra", "poisson", "--alpha", "1", "--beta", "2", "--r", "0.5", "--x", "0.3", "--y", "0.7")
    assert code == EXIT_OK
    series, bilinear = rows_of(out)
    assert series["value"] == pytest.approx(bilinear["value"], rel=1e-10)
    nu = tmp_path / "nu.csv"
    nu.write_text("atom,mass\n0.2,0.5\n0.7,0.5\n")
    code, out, _ = invoke(capsys, "spectra", "dn", "--alpha", "1", "--beta", "2", "--nu-file", str(nu), "--n", "5")
    assert code == EXIT_OK and len(rows_of(out)) == 6
    code, _, _ = invoke(capsys, "spectra", "dn", "--alpha", "1", "--beta", "2", "--nu-file", str(tmp_path / "none.csv"))
    assert code == EXIT_INPUT


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "coaldual.cli", "subforest", "pgf", "--theta", "2", "--t", "0.5", "--s", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["rows"][0]["value"] == pytest.approx(1.0, abs=1e-12)
