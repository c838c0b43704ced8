import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from nullrec import harness
from nullrec.harness import REPORT_SCHEMA, ConfigError, ExperimentReport, MissingArtifactError, bundled_configs, \
    emit_plots, load_config, parse_config, run_experiment
from nullrec.validators import StatReport

MINIMAL = """
[experiment]
regime = "{regime}"
master_seed = 1
[model]
name = "{model}"
"""


def test_bundled_configs_validate():
    names = bundled_configs()
    assert {"smoke", "thm_diffusive", "thm_drift", "thm_longtime", "lemma_suite"} <= set(names)
    for n in names:
        cfg = load_config(n)
        assert cfg.regime in harness.REGIMES


def test_defaults_fill_in():
    cfg = parse_config(MINIMAL.format(regime="deviation_diffusive", model="gaussian_diffusion"))
    assert cfg["experiment"]["n_paths"] == 10000
    assert cfg["grid"]["eps_schedule"] == [0.1, 0.05, 0.025]
    assert cfg["initial"]["y0"] == [0.0]


def test_errors_are_enumerated():
    text = """
[experiment]
regime = "sideways"
n_paths = 1
[model]
name = "trivial"
[grid]
step_safety = 3
bogus = 1
[extra]
"""
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    msgs = err.value.errors
    assert any("regime" in m for m in msgs)
    assert any("master_seed" in m for m in msgs)
    assert any("n_paths" in m for m in msgs)
    assert any("step_safety" in m for m in msgs)
    assert any("grid.bogus" in m for m in msgs)
    assert any("[extra]" in m for m in msgs)


@pytest.mark.parametrize("regime,model", [("deviation_drift", "gaussian_diffusion"),
                                          ("longtime", "tanh_interface")])
def test_regime_gating(regime, model):
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.format(regime=regime, model=model))


def test_type_and_shape_errors():
    bad = MINIMAL.format(regime="deviation_diffusive", model="gaussian_diffusion") + \
        '[initial]\ny0 = [1.0, 2.0]\n[grid]\nhorizons = "soon"\n'
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert any("horizons" in m for m in err.value.errors)
    bad = MINIMAL.format(regime="deviation_diffusive", model="gaussian_diffusion") + '[initial]\ny0 = [1.0, 2.0]\n'
    with pytest.raises(ConfigError, match="y0"):
        parse_config(bad)
    with pytest.raises(ConfigError, match="not found"):
        load_config("no_such_config")


def test_overall_verdict_ignores_inconclusive():
    cfg = load_config("smoke")
    rep = ExperimentReport(cfg)
    rep.rows = [StatReport("e", "a", 0, 0, 0, 1, "pass"), StatReport("e", "b", 0, 0, 0, 1, "inconclusive")]
    assert rep.passed
    rep.rows.append(StatReport("e", "c", 0, 0, 0, 1, "fail"))
    assert not rep.passed


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    return run_experiment("smoke", out), out


def test_smoke_report_schema_and_files(smoke_run):
    rep, out = smoke_run
    data = json.loads((out / "report.json").read_text())
    jsonschema.validate(data, REPORT_SCHEMA)
    assert data["passed"] == rep.passed
    for name in data["artifacts"].values():
        assert (out / name).exists()
    head = (out / "summary.csv").read_text().splitlines()[0]
    assert head == "experiment,metric,value,target,stderr,threshold,verdict,n_samples"
    metrics = {r["metric"] for r in data["rows"]}
    assert any(m.startswith("ks[") for m in metrics) and any(m.startswith("martingale[") for m in metrics)


def test_smoke_csvs_identical_across_workers(smoke_run, tmp_path):
    _, out = smoke_run
    run_experiment("smoke", tmp_path, workers=2)
    for p in sorted(out.glob("*.csv")):
        assert p.read_bytes() == (tmp_path / p.name).read_bytes(), p.name


def test_plot_scripts_for_diffusive_report(smoke_run):
    rep, out = smoke_run
    scripts = emit_plots(out / "report.json")
    assert sorted(s.name for s in scripts) == ["plot_convergence.py", "plot_local_time.py",
                                              "plot_martingale.py", "plot_sample_paths.py"]
    pytest.importorskip("matplotlib")
    for s in scripts:
        subprocess.run([sys.executable, str(s)], check=True, cwd="/")
    assert (out / "convergence.png").exists()


def test_plots_without_rows_and_missing_csv(tmp_path):
    assert emit_plots({"artifacts": {}, "rows": []}, tmp_path) == []
    with pytest.raises(MissingArtifactError):
        emit_plots({"artifacts": {"ks_table": "ks_table.csv"}}, tmp_path)


def test_failing_validator_is_isolated(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise RuntimeError("validator exploded")

    monkeypatch.setattr(harness, "check_tightness_moments", boom)
    rep = run_experiment("smoke", tmp_path)
    tight = [r for r in rep.rows if r.metric == "tightness"]
    assert tight and tight[0].verdict == "fail" and "exploded" in tight[0].details["error"]
    assert any(r.metric.startswith("martingale[") for r in rep.rows)
    assert not rep.passed


LEMMA_TRIVIAL = """
[experiment]
name = "trivial_lemmas"
regime = "lemma_suite"
master_seed = 5
n_paths = 100
[model]
name = "trivial"
[validators]
lt_paths = 300
lt_dt = 1e-3
lt_gap_paths = 100
lt_gap_dt = 1e-3
lt_tol = 0.3
lt_gap = 0.3
excursion_paths = 3000
excursion_deltas = [0.4, 0.3, 0.2]
excursion_eps = 0.15
functional_eps = [0.4, 0.3, 0.2]
functional_paths = 200
cesaro_eps = [0.4, 0.3]
cesaro_paths = 50
scaling_eps = [0.4, 0.3]
scaling_paths = 50
"""


@pytest.mark.slow
def test_lemma_suite_on_trivial_model(tmp_path):
    rep = run_experiment(parse_config(LEMMA_TRIVIAL), tmp_path)
    bad = [(r.metric, r.verdict, r.details) for r in rep.rows if r.verdict == "fail"]
    assert not bad
    assert rep.passed


def test_longtime_pipeline_small(tmp_path):
    text = """
[experiment]
regime = "longtime"
master_seed = 3
n_paths = 200
[model]
name = "gaussian_longtime"
[initial]
y0 = [1.0]
[grid]
eps_schedule = [0.4, 0.3]
horizons = [0.5]
limit_dt = 1e-3
block_size = 100
limit_block_size = 100
[validators]
ks_final = 0.3
martingale_window = [0.25, 0.5]
boundary_eps = [0.3, 0.2]
boundary_paths = 200
boundary_tol = 1.0
[output]
sample_paths = 1
max_rows_per_path = 50
"""
    rep = run_experiment(parse_config(text), tmp_path)
    names = {r.metric for r in rep.rows}
    assert "cantor_off_band_increments" in names and "occupation_linear_r2" in names
    assert any(m.startswith("boundary_drift1") for m in names)
    assert any(m.startswith("martingale[control") for m in names)
    assert (tmp_path / "boundary_increments.csv").exists()
    scripts = {s.name for s in emit_plots(rep)}
    assert {"plot_occupation.py", "plot_boundary.py", "plot_convergence.py"} <= scripts
