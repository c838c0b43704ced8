import json

import numpy as np
import pytest

from nullrec import records
from nullrec.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main


def test_list_models(capsys):
    assert main(["list-models"]) == EXIT_PASS
    assert "gaussian_longtime" in capsys.readouterr().out


def test_validate_config_ok_and_gated(tmp_path, capsys):
    assert main(["validate-config", "smoke"]) == EXIT_PASS
    bad = tmp_path / "bad.ini"
    bad.write_text('[experiment]\nregime = "deviation_drift"\nmaster_seed = 1\n[model]\nname = "tanh_interface"\n')
    assert main(["validate-config", str(bad)]) == EXIT_CONFIG
    assert "slow noise" in capsys.readouterr().err


def test_usage_error_is_config_exit():
    assert main(["run"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_run_with_global_flags_anywhere(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["--seed", "11", "run", "smoke", "--out", str(out), "--plots", "--quiet"]) == EXIT_PASS
    rep = json.loads((out / "report.json").read_text())
    assert rep["master_seed"] == 11
    assert (out / "plot_convergence.py").exists()
    assert main(["plots", str(out)]) == EXIT_PASS


def test_run_exit_code_reflects_failure(tmp_path):
    cfg = tmp_path / "strict.ini"
    cfg.write_text("""
[experiment]
regime = "deviation_diffusive"
master_seed = 2
n_paths = 200
[model]
name = "gaussian_diffusion"
[initial]
y0 = [0.5]
[grid]
eps_schedule = [0.3]
horizons = [0.5]
limit_dt = 1e-3
[validators]
ks_final = 1e-6
martingale = false
tightness = false
self_check = false
[output]
sample_paths = 0
export_samples = false
""")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_FAIL


def test_compare(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    records.write_columns(a, {"time": np.ones(500), "x": rng.normal(size=500)})
    records.write_columns(b, {"time": np.ones(500), "x": rng.normal(size=500) + 1})
    assert main(["compare", str(a), str(a), "--column", "x", "--time", "1"]) == EXIT_PASS
    assert main(["compare", str(a), str(b), "--column", "x"]) == EXIT_FAIL
    assert main(["compare", str(a), str(b), "--column", "nope"]) == EXIT_CONFIG
    capsys.readouterr()


def test_interface_stats(capsys):
    assert main(["interface-stats", "gaussian_longtime"]) == EXIT_PASS
    out = json.loads(capsys.readouterr().out)
    assert out["beta"][0] == pytest.approx(np.sqrt(np.pi), abs=1e-6)
    assert main(["interface-stats", "gaussian_longtime", "--eps", "0.3", "--delta", "0.4", "--paths", "200"]) \
        == EXIT_PASS
    out = json.loads(capsys.readouterr().out)
    assert 0 < out["excursions"]["p_plus"] < 1
    assert main(["interface-stats", "gaussian_longtime", "--y", "1", "2"]) == EXIT_CONFIG
