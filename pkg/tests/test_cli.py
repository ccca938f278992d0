import json
import subprocess
import sys

import pytest

from phenokpp.cli import main

CONSTANT = """
[[experiment]]
name = "flat"
[experiment.landscape]
kind = "constant"
params = { c = 0.25 }
[experiment.grid]
space_nodes = 8
pheno_nodes = 9
"""

DICHOTOMY = """
[[experiment]]
name = "dich"
simulate = true
horizon = {horizon}
coth_radius = 0.5
[experiment.landscape]
kind = "checkerboard"
params = {{ r0 = 1.0, kappa = 1.0, shift = 0.5 }}
[experiment.grid]
space_nodes = 16
pheno_nodes = 9
[experiment.sweep]
parameter = "c"
values = [-0.3, 0.3]
relative = true
"""


@pytest.fixture(autouse=True)
def _in_tmp(tmp_path, monkeypatch):
    # default output directories land in the test's temp dir
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def write(tmp_path):
    def _write(text, name="cfg.toml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return _write


def test_eigen_prints_lambda(write, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["eigen", "--config", write(CONSTANT), "--out", str(out)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("flat: lambda = ")
    assert float(line.split("=")[1]) == pytest.approx(0.25, abs=1e-9)
    assert (out / "flat.json").exists()


def test_missing_config_is_usage_error(capsys):
    assert main(["eigen"]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err
    assert json.loads(err[err.index("\n{") :])["error"] == "usage"


def test_unknown_command_and_no_command(capsys):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_config_errors_exit_2(write, tmp_path, capsys):
    out = tmp_path / "o"
    bad = CONSTANT.replace('name = "flat"', 'name = "flat"\ndiffusionn = 1')
    assert main(["eigen", "--config", write(bad), "--out", str(out)]) == 2
    payload = json.loads((out / "error.json").read_text())
    assert payload["key_path"] == "experiment[0].diffusionn"
    assert main(["eigen", "--config", str(tmp_path / "nope.toml")]) == 2
    # a sweep command needs a sweep
    assert main(["sweep", "--config", write(CONSTANT)]) == 2
    assert main(["eigen", "--config", write(CONSTANT), "--threads", "0"]) == 2


def test_dichotomy_contradiction_exit_1(write, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["dichotomy", "--config", write(DICHOTOMY.format(horizon=1.0)), "--out", str(out)]) == 1
    payload = json.loads((out / "error.json").read_text())
    assert payload["exit_code"] == 1
    assert payload["failures"][0]["failures"][0]["name"].startswith("extinct")
    record = json.loads((out / "dich.json").read_text())
    assert record["passed"] is False


def test_dichotomy_ok(write, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["dichotomy", "--config", write(DICHOTOMY.format(horizon=80.0)), "--out", str(out), "--threads", "2"]) == 0
    assert "dichotomy ok" in capsys.readouterr().out
    assert (out / "dich_lambda_vs_c.csv").exists()


def test_simulate_and_truncation(write, tmp_path, capsys):
    sim = CONSTANT.replace('name = "flat"', 'name = "flat"\nsimulate = true\nhorizon = 10.0')
    assert main(["simulate", "--config", write(sim), "--out", str(tmp_path / "s")]) == 0
    assert "verdict = persist" in capsys.readouterr().out
    trunc = CONSTANT + '[experiment.sweep]\nparameter = "R"\nvalues = [0.5, 1.0]\nkinds = ["periodic_dirichlet_theta"]\n'
    assert main(["truncation", "--config", write(trunc, "t.toml"), "--out", str(tmp_path / "t")]) == 0


def test_seed_check(capsys):
    assert main(["--seed-check"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and all(line.startswith("PASS") for line in lines)


def test_module_entry_point(write, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "phenokpp", "eigen", "--config", write(CONSTANT), "--out", str(tmp_path / "m")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "lambda" in proc.stdout
