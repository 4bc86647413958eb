import json
import subprocess
import sys

import numpy as np
import pytest

from nlh import cli

WHITHAM = {
    "kernel": {"family": "gaussian", "params": {"width": float(np.sqrt(2.0))}},
    "spec": {"family": "whitham", "params": {"alpha": 1.0, "c": 0.96}},
    "solve": {"topology": "periodic", "n": 64, "period": float(np.pi / 0.1), "amplitude": 0.01,
              "guess": {"shape": "cos", "amplitude": 0.01, "rate": 0.2}},
}
ALLEN_CAHN = {
    "kernel": {"family": "mexican-hat", "params": {"widths": [1, 2], "weights": [2, -1]}},
    "spec": {"family": "allen-cahn", "params": {"F_coefs": [0, 0, 0.05, 0, 0.25]}},
}


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_kernel(capsys):
    code, out, _ = run(["validate-kernel", "--family", "gaussian", "--width", "1.0"], capsys)
    assert code == 0
    assert json.loads(out)["passed"] is True


def test_missing_csv_is_config_error(tmp_path, capsys):
    code, _, err = run(["validate-kernel", "--family", "tabulated", "--csv", str(tmp_path / "k.csv")], capsys)
    assert code == 2 and "error" in err


def test_asymmetric_table_fails_validation(tmp_path, capsys):
    table = tmp_path / "k.csv"
    table.write_text("r,value\n-1,0\n0,1\n2,0\n")
    code, out, _ = run(["validate-kernel", "--family", "tabulated", "--csv", str(table), "--decay-rate", "1"], capsys)
    assert code == 1
    assert json.loads(out)["passed"] is False


def test_unknown_key_rejected(tmp_path, capsys):
    bad = dict(ALLEN_CAHN, solver={"n": 8})
    code, _, err = run(["roots", "--config", write(tmp_path, "bad.json", bad)], capsys)
    assert code == 2 and "solver" in err


def test_roots_and_pairing(tmp_path, capsys):
    cfg = write(tmp_path, "ac.json", ALLEN_CAHN)
    code, out, _ = run(["roots", "--config", cfg], capsys)
    assert code == 0
    assert len(json.loads(out)) == 2
    code, out, _ = run(["pairing", "--config", cfg, "--csv", str(tmp_path / "gram.csv")], capsys)
    assert code == 0
    gram = np.loadtxt(tmp_path / "gram.csv", delimiter=",", skiprows=1)
    assert gram.shape == (4, 4)
    np.testing.assert_allclose(gram, -gram.T, atol=1e-14)


def test_cpq_command(capsys):
    code, out, _ = run(["cpq", "--max-sum", "5"], capsys)
    assert code == 0
    assert "1/2" in out


def test_solve_verify_and_determinism(tmp_path, capsys):
    cfg = write(tmp_path, "wh.json", WHITHAM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["solve", "whitham", "--config", cfg, "--out", str(a)], capsys)[0] == 0
    assert run(["solve", "whitham", "--config", cfg, "--out", str(b)], capsys)[0] == 0
    for name in ("profile.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

    code, out, _ = run(["verify", "noether", "--spec", cfg, "--profile", str(a / "profile.csv")], capsys)
    assert code == 0

    # a profile that is not a solution fails the constancy check
    rows = np.loadtxt(a / "profile.csv", delimiter=",", skiprows=1)
    rows[:, 1] += 0.003 * np.sin(3 * 2 * np.pi * np.arange(rows.shape[0]) / rows.shape[0])
    bad = tmp_path / "bad.csv"
    header = (a / "profile.csv").read_text().splitlines()[0]
    np.savetxt(bad, rows, delimiter=",", header=header, comments="", fmt="%.17g")
    meta = a / "profile.json"
    if meta.exists():
        (tmp_path / "bad.json").write_bytes(meta.read_bytes())
    code, _, err = run(["verify", "noether", "--spec", cfg, "--profile", str(bad)], capsys)
    assert code == 1 and err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nlh.cli", "cpq", "--max-sum", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)
