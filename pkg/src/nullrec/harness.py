"""Experiment configuration, orchestration and reporting.

A configuration is an INI file whose values are JSON literals.  Sections:

``[experiment]``
    ``name``, ``regime`` (``deviation_diffusive``, ``deviation_drift``,
    ``longtime`` or ``lemma_suite``), ``master_seed``, ``n_paths``,
    ``workers``.
``[model]``
    ``name`` of a registered model and optional ``params`` (JSON object).
``[initial]``
    ``x0`` and ``y0``.
``[grid]``
    ``eps_schedule``, ``horizons``, ``step_safety``, ``limit_dt``,
    ``band_factor``, ``block_size``.
``[validators]``
    Thresholds and switches, see :data:`FIELDS`.
``[output]``
    ``directory``, ``sample_paths``, ``export_samples``.

Running an experiment writes ``report.json``, ``summary.csv``, data CSVs and
nothing else; plot scripts are emitted separately by :func:`emit_plots`.
"""

import configparser
import json
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, records
from .coefficients import AssumptionViolation, average_interface, estimate_a_pm, \
    interface_diffusion_alpha, interface_drift_beta, validate_assumptions
from .gluing import negative_control, standard_family
from .interface_stats import boundary_increment_limits, deviation_exponent, excursion_exit_stats
from .limits import limit_ensemble, limit_path
from .local_time import BandLocalTime, TanakaLocalTime, default_band, local_time_band, local_time_tanaka
from .models import get_model
from .sde import TimeGrid, ensemble_deviation, grid_for, simulate_ensemble, simulate_full, \
    solve_unperturbed
from .streams import derive_seed
from .validators import CutoffWeight, IndicatorPsi, MartingaleFunctional, StatReport, \
    band_occupation_fit, check_cesaro_averaging, check_deviation_scaling, \
    check_integral_functional_bound, check_tightness_moments, compare_marginals, \
    convergence_verdicts, failed_report, judge_abs, ks_distance, martingale_residual, noise_floor, \
    projections

REGIMES = ("deviation_diffusive", "deviation_drift", "longtime", "lemma_suite")
LIMIT_KIND = {"deviation_diffusive": "diffusive", "deviation_drift": "drift", "longtime": "longtime"}
BUNDLED = Path(__file__).parent / "configs"


class ConfigError(ValueError):
    """Invalid configuration; carries the list of problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class MissingArtifactError(FileNotFoundError):
    """A plot was requested for data that the report does not contain."""


def _pos(v):
    return v > 0


def _floats_pos(v):
    return isinstance(v, list) and len(v) > 0 and all(isinstance(e, (int, float)) and e > 0 for e in v)


# section -> key -> (type, default, predicate, message)
FIELDS = {
    "experiment": {
        "name": (str, "experiment", None, ""),
        "regime": (str, None, lambda v: v in REGIMES, f"regime must be one of {REGIMES}"),
        "master_seed": (int, None, lambda v: v >= 0, "master_seed must be a non-negative integer"),
        "n_paths": (int, 10000, lambda v: v >= 2, "n_paths must be at least 2"),
        "workers": (int, 1, lambda v: v >= 1, "workers must be at least 1"),
    },
    "model": {
        "name": (str, None, None, ""),
        "params": (dict, {}, None, ""),
    },
    "initial": {
        "x0": (float, 0.0, None, ""),
        "y0": (list, None, None, ""),
    },
    "grid": {
        "eps_schedule": (list, [0.1, 0.05, 0.025], _floats_pos, "eps_schedule must be positive numbers"),
        "horizons": (list, [0.5, 1.0], _floats_pos, "horizons must be positive numbers"),
        "step_safety": (float, 0.1, lambda v: 0 < v <= 1, "step_safety must lie in (0, 1]"),
        "limit_dt": (float, 1e-4, _pos, "limit_dt must be positive"),
        "band_factor": (float, 2.0, lambda v: v >= 1, "band_factor must be at least 1"),
        "block_size": (int, 2500, lambda v: v >= 1, "block_size must be positive"),
        "limit_block_size": (int, 256, lambda v: v >= 1, "limit_block_size must be positive"),
    },
    "validators": {
        "ks_final": (float, 0.06, _pos, "ks_final must be positive"),
        "ks_floors": (float, 2.0, _pos, "ks_floors must be positive"),
        "self_check": (bool, True, None, ""),
        "self_check_c": (float, 1.36, _pos, "self_check_c must be positive"),
        "martingale": (bool, True, None, ""),
        "martingale_window": (list, [0.5, 1.0], _floats_pos, "martingale_window must be two times"),
        "martingale_z": (float, 3.0, _pos, ""),
        "control_z": (float, 5.0, _pos, ""),
        "n_gluing": (int, 6, lambda v: v >= 5, "n_gluing must be at least 5"),
        "exclude_band": (bool, True, None, ""),
        "tightness": (bool, True, None, ""),
        "tightness_eps": (float, 0.05, _pos, ""),
        "tightness_p": (int, 8, lambda v: v >= 4, "tightness_p must be at least 4"),
        "tightness_min_exponent": (float, 1.5, _pos, ""),
        "tightness_base": (float, 0.5, _pos, ""),
        "tightness_lags": (list, [0.0025, 0.005, 0.01, 0.02, 0.05, 0.1], _floats_pos, ""),
        "mean_oracle": (bool, True, None, ""),
        "mean_oracle_tol": (float, 0.05, _pos, ""),
        "boundary": (bool, True, None, ""),
        "boundary_eps": (list, [0.1, 0.03, 0.01, 0.003], _floats_pos, ""),
        "boundary_gamma": (float, 0.2, lambda v: 0 < v < 0.5, "boundary_gamma must lie in (0, 1/2)"),
        "boundary_paths": (int, 10000, lambda v: v >= 2, ""),
        "boundary_tol": (float, 0.1, _pos, ""),
        "occupation_widths": (list, [0.05, 0.1, 0.2], _floats_pos, ""),
        "occupation_r2": (float, 0.95, _pos, ""),
        "quadrature_tol": (float, 1e-6, _pos, ""),
        "cesaro_tol": (float, 1e-4, _pos, ""),
        "lt_paths": (int, 10000, lambda v: v >= 2, ""),
        "lt_dt": (float, 1e-4, _pos, ""),
        "lt_gap_dt": (float, 1e-5, _pos, ""),
        "lt_gap_paths": (int, 2000, lambda v: v >= 2, ""),
        "lt_tol": (float, 0.03, _pos, ""),
        "lt_gap": (float, 0.05, _pos, ""),
        "excursion_eps": (float, 0.1, _pos, ""),
        "excursion_deltas": (list, [0.2, 0.1, 0.05], _floats_pos, ""),
        "excursion_paths": (int, 10000, lambda v: v >= 2, ""),
        "functional_eps": (list, [0.1, 0.05, 0.025], _floats_pos, ""),
        "functional_paths": (int, 2000, lambda v: v >= 2, ""),
        "cesaro_eps": (list, [0.1, 0.03, 0.01], _floats_pos, ""),
        "cesaro_paths": (int, 500, lambda v: v >= 2, ""),
        "cesaro_threshold": (float, 0.1, _pos, ""),
        "scaling_eps": (list, [0.2, 0.1, 0.05, 0.025], _floats_pos, ""),
        "scaling_paths": (int, 2000, lambda v: v >= 2, ""),
    },
    "output": {
        "directory": (str, "nullrec_out", None, ""),
        "sample_paths": (int, 3, lambda v: v >= 0, ""),
        "export_samples": (bool, True, None, ""),
        "max_rows_per_path": (int, 2000, lambda v: v >= 2, ""),
    },
}


@dataclass
class ExperimentConfig:
    """Validated configuration, one dict per section."""

    sections: dict
    source: str = ""

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def regime(self):
        return self.sections["experiment"]["regime"]

    def model(self):
        return get_model(self["model"]["name"], **self["model"]["params"])

    def to_dict(self):
        return json.loads(json.dumps(self.sections))


def _coerce(kind, raw):
    try:
        v = json.loads(raw)
    except json.JSONDecodeError:
        v = raw
    if kind is float and isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if kind is int and isinstance(v, int) and not isinstance(v, bool):
        return v
    if kind is bool and isinstance(v, bool):
        return v
    if kind is str and isinstance(v, str):
        return v
    if kind is list and isinstance(v, (int, float)) and not isinstance(v, bool):
        return [v]
    if isinstance(v, kind) and not (kind is int and isinstance(v, bool)):
        return v
    raise TypeError(f"expected {kind.__name__}, got {raw!r}")


def parse_config(text, source="<string>", overrides=None):
    """Parse and validate configuration text; raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    errors = []
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"unreadable configuration: {exc}"])
    sections = {}
    for sec in cp.sections():
        if sec not in FIELDS:
            errors.append(f"unknown section [{sec}]")
    for sec, spec in FIELDS.items():
        vals = {}
        present = cp[sec] if cp.has_section(sec) else {}
        for key in present:
            if key not in spec:
                errors.append(f"unknown key {sec}.{key}")
        for key, (kind, default, pred, msg) in spec.items():
            if key in present:
                try:
                    v = _coerce(kind, present[key])
                except TypeError as exc:
                    errors.append(f"{sec}.{key}: {exc}")
                    continue
            elif default is None and not (sec == "initial" and key == "y0"):
                errors.append(f"missing required key {sec}.{key}")
                continue
            else:
                v = default
            if v is not None and pred is not None and not pred(v):
                errors.append(f"{sec}.{key}: {msg or 'invalid value'}")
            vals[key] = v
        sections[sec] = vals
    for (sec, key), v in (overrides or {}).items():
        if v is not None:
            sections[sec][key] = v
    if not errors:
        errors.extend(_semantic_checks(sections))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(sections, source)


def _semantic_checks(sections):
    errors = []
    try:
        coeffs = get_model(sections["model"]["name"], **sections["model"]["params"])
    except (KeyError, TypeError) as exc:
        return [f"model: {exc}"]
    y0 = sections["initial"]["y0"]
    if y0 is None:
        sections["initial"]["y0"] = [0.0] * coeffs.d
    elif len(y0) != coeffs.d:
        errors.append(f"initial.y0 has length {len(y0)} but the model has slow dimension {coeffs.d}")
    regime = sections["experiment"]["regime"]
    if regime == "deviation_drift" and not coeffs.sigma_vanishes:
        errors.append("deviation_drift requires a model without slow noise")
    if regime == "longtime" and not coeffs.b1_vanishes:
        errors.append("longtime requires a model with b1 == 0")
    v = sections["validators"]
    if regime != "lemma_suite" and v["martingale"]:
        s, t = v["martingale_window"][:2] if len(v["martingale_window"]) >= 2 else (0, 0)
        if not 0 < s < t <= max(sections["grid"]["horizons"]):
            errors.append("validators.martingale_window must be 0 < s < t <= max horizon")
    if regime in ("deviation_diffusive", "deviation_drift"):
        if v["tightness"]:
            top = v["tightness_base"] + max(v["tightness_lags"])
            if top > max(sections["grid"]["horizons"]) + 1e-12:
                errors.append("tightness lags run past the horizon")
            if len(v["tightness_lags"]) < 4:
                errors.append("validators.tightness_lags needs at least four lags")
    if len(set(sections["grid"]["eps_schedule"])) != len(sections["grid"]["eps_schedule"]):
        errors.append("grid.eps_schedule has repeated values")
    return errors


def load_config(path, overrides=None):
    """Read a configuration from a path or a bundled name."""
    p = Path(path)
    if not p.exists():
        cand = BUNDLED / (str(path) if str(path).endswith(".ini") else f"{path}.ini")
        if cand.exists():
            p = cand
        else:
            raise ConfigError([f"configuration file {path} not found"])
    return parse_config(p.read_text(), str(p), overrides)


def bundled_configs():
    return sorted(q.stem for q in BUNDLED.glob("*.ini"))


# experiment report

@dataclass
class ExperimentReport:
    """Rows, artifacts and provenance of a run."""

    config: ExperimentConfig
    rows: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    averaged: dict = field(default_factory=dict)
    out_dir: str = ""
    wall_time: float = 0.0
    workers: int = 1

    @property
    def passed(self):
        """Overall verdict: every row that is not inconclusive passed."""
        return all(r.verdict == "pass" for r in self.rows if r.verdict != "inconclusive")

    def to_dict(self):
        c = self.config
        return {
            "schema_version": 1,
            "experiment": c["experiment"]["name"],
            "regime": c.regime,
            "model": {"name": c["model"]["name"], "params": c["model"]["params"]},
            "master_seed": c["experiment"]["master_seed"],
            "n_paths": c["experiment"]["n_paths"],
            "config": c.to_dict(),
            "averaged": _clean(self.averaged),
            "rows": [r.as_dict() for r in self.rows],
            "artifacts": dict(self.artifacts),
            "passed": self.passed,
            "wall_time": self.wall_time,
            "provenance": {"package_version": __version__, "numpy": np.__version__,
                           "python": platform.python_version(), "workers": self.workers},
        }


def _clean(obj):
    return StatReport("", "", 0, 0, 0, 0, "pass", details=obj).as_dict()["details"]


REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "experiment", "regime", "model", "master_seed", "n_paths", "config",
                 "averaged", "rows", "artifacts", "passed", "wall_time", "provenance"],
    "properties": {
        "schema_version": {"const": 1},
        "experiment": {"type": "string"},
        "regime": {"enum": list(REGIMES)},
        "model": {"type": "object", "required": ["name", "params"]},
        "master_seed": {"type": "integer", "minimum": 0},
        "n_paths": {"type": "integer", "minimum": 2},
        "config": {"type": "object"},
        "averaged": {"type": "object"},
        "rows": {"type": "array", "items": {
            "type": "object",
            "required": ["experiment", "metric", "value", "target", "stderr", "threshold", "verdict",
                         "n_samples", "wall_time", "details"],
            "properties": {"verdict": {"enum": ["pass", "fail", "inconclusive"]},
                           "metric": {"type": "string"}}}},
        "artifacts": {"type": "object", "additionalProperties": {"type": "string"}},
        "passed": {"type": "boolean"},
        "wall_time": {"type": "number"},
        "provenance": {"type": "object", "required": ["package_version", "workers"]},
    },
}

SUMMARY_HEADER = ["experiment", "metric", "value", "target", "stderr", "threshold", "verdict", "n_samples"]


def write_report(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records.write_csv(out / "summary.csv", SUMMARY_HEADER,
                      [[r.experiment, r.metric, r.value, r.target, r.stderr, r.threshold, r.verdict,
                        r.n_samples] for r in report.rows])
    report.artifacts["summary"] = "summary.csv"
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    return out / "report.json"


# pipelines

class _Runner:
    def __init__(self, cfg, out_dir, workers):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.workers = workers
        self.seed = cfg["experiment"]["master_seed"]
        self.n = cfg["experiment"]["n_paths"]
        self.g = cfg["grid"]
        self.v = cfg["validators"]
        self.o = cfg["output"]
        self.x0 = cfg["initial"]["x0"]
        self.y0 = np.asarray(cfg["initial"]["y0"], dtype=float)
        self.coeffs = cfg.model()
        self.report = ExperimentReport(cfg, out_dir=str(self.out), workers=workers)
        self.name = cfg["experiment"]["name"]

    def guarded(self, metric, fn):
        """Run a validator; a raised exception becomes a failing row."""
        t0 = time.perf_counter()
        try:
            rows = fn()
        except Exception as exc:  # noqa: BLE001 - isolate validator failures
            rows = [failed_report(self.name, metric, exc)]
        rows = rows if isinstance(rows, list) else [rows]
        dt = time.perf_counter() - t0
        for r in rows:
            if not r.wall_time:
                r.wall_time = dt / max(1, len(rows))
        self.report.rows.extend(rows)
        return rows

    def artifact(self, key, filename):
        self.report.artifacts[key] = filename
        return self.out / filename

    def averaged(self):
        avg = average_interface(self.coeffs)
        info = {"y_independent": avg.y_independent, "cesaro_error": avg.cesaro_error}
        if avg.y_independent:
            ap, am, beta, alpha = avg.constants()
            info.update(a_plus=ap, a_minus=am, beta=beta, alpha=alpha,
                        quadrature_error=avg.quadrature_error)
        self.report.averaged = info
        return avg


def _row(name, metric, value, target, threshold, stderr=float("nan"), n=0, details=None, verdict=None):
    verdict = verdict or judge_abs(value, target, threshold, 0.0)
    return StatReport(name, metric, float(value), float(target), float(stderr), float(threshold), verdict,
                      n_samples=n, details=details or {})


def _thin(n_rows, max_rows):
    stride = max(1, int(np.ceil(n_rows / max_rows)))
    idx = np.arange(0, n_rows, stride)
    if idx[-1] != n_rows - 1:
        idx = np.append(idx, n_rows - 1)
    return idx


def _export_samples(path, times, x, w):
    cols = {"time": np.repeat(times, x.shape[0]), "x": x.T.ravel()}
    for i in range(w.shape[-1]):
        cols[f"w{i + 1}"] = w[:, :, i].T.ravel()
    records.write_columns(path, cols)


def _martingale_rows(run, ens, fam, control):
    rows, table = [], []
    for f in fam + [control]:
        r = martingale_residual(ens.extras["mart_xs"], ens.extras[f"mart_{f.label}"], experiment=run.name,
                                metric=f"martingale[{f.label}]", z=run.v["martingale_z"],
                                expect_nonzero=not f.corrected, z_nonzero=run.v["control_z"])
        rows.append(r)
        d = r.details
        for b, (m, s, n) in enumerate(zip(d.get("bin_means", []), d.get("bin_stderr", []),
                                          d.get("bin_sizes", []))):
            table.append([f.label, int(not f.corrected), b, m, s, n])
    records.write_csv(run.artifact("martingale", "martingale.csv"),
                      ["function", "control", "bin", "mean", "stderr", "n"], table)
    return rows


def _interface_coeffs(avg, kind):
    ap, am, beta, alpha = avg.constants()
    if kind == "diffusive":
        beta = np.zeros_like(beta)
    elif kind == "drift":
        alpha = np.zeros_like(alpha)
    return beta, alpha


def _run_limit(run, avg, kind, T, record_times, with_functionals, seed_tag):
    grid = TimeGrid.covering(T, run.g["limit_dt"])
    fns = []
    fam = control = None
    if with_functionals and run.v["martingale"] and avg.y_independent:
        beta, alpha = _interface_coeffs(avg, kind)
        fam = standard_family(beta, alpha, run.v["n_gluing"])
        control = negative_control(beta, alpha)
        s, t = run.v["martingale_window"][:2]
        fns.append(MartingaleFunctional(fam + [control], s, t, run.v["exclude_band"]))
    if with_functionals and kind == "longtime":
        fns.append(_OccupationFunctional(run.v["occupation_widths"]))
    ens = limit_ensemble(kind, run.coeffs, avg, run.y0, grid, run.n, derive_seed(run.seed, seed_tag),
                         record_times=grid.times[grid.nearest_index(record_times)], functionals=fns,
                         workers=run.workers, block_size=run.g["limit_block_size"],
                         band_factor=run.g["band_factor"], x0=run.x0)
    return grid, ens, fam, control


class _OccupationFunctional:
    """Fraction of output steps with ``|x| < h`` for several widths."""

    def __init__(self, widths):
        self.widths = list(widths)

    def __call__(self, blk):
        return {"occupation": np.stack([np.mean(np.abs(blk.x[:-1]) < h, axis=0) for h in self.widths],
                                       axis=1)}


def _ks_and_self_rows(run, pre, lim, lim2, horizons, final_threshold):
    rows_tab = compare_marginals(pre, lim, horizons)
    records.write_csv(run.artifact("ks_table", "ks_table.csv"),
                      ["time", "projection", "eps", "ks", "p_value", "noise_floor"],
                      [[r.time, r.projection, r.eps, r.ks, r.p_value, r.noise_floor] for r in rows_tab])
    out = convergence_verdicts(rows_tab, final_threshold, run.v["ks_floors"], run.name)
    if lim2 is not None and run.v["self_check"]:
        T = horizons[-1]
        for proj in lim[T]:
            a, b = lim[T][proj], lim2[T][proj]
            ks, p = ks_distance(a, b)
            thr = noise_floor(a.size, b.size, run.v["self_check_c"])
            out.append(StatReport(run.name, f"self_ks[{proj}](t={T:g})", ks, 0.0, float(noise_floor(a.size, b.size)),
                                  float(thr), "pass" if ks <= thr else "fail", n_samples=a.size,
                                  details={"p_value": p}))
    return out


def _sample_paths(run, kind, avg, finest_eps, T, exponent):
    n_sp = run.o["sample_paths"]
    if n_sp <= 0:
        return
    regime = "longtime" if kind == "longtime" else "standard"
    grid = grid_for(finest_eps, T, regime, run.g["step_safety"])
    seed = derive_seed(run.seed, 1, len(run.g["eps_schedule"]) - 1)
    y_ref = None if kind == "longtime" else solve_unperturbed(run.coeffs, run.y0, grid)
    rows = []
    for i in range(n_sp):
        b = simulate_full(run.coeffs, finest_eps, run.x0, run.y0, grid, seed, regime, i, run.g["step_safety"])
        idx = _thin(grid.n_steps + 1, run.o["max_rows_per_path"])
        Lb = local_time_band(b.x, np.diff(b.x) ** 2, default_band(grid.dt, run.g["band_factor"]), grid.dt).L
        Lt = local_time_tanaka(b.x).L
        w = b.y if y_ref is None else (b.y - y_ref) * finest_eps ** -exponent
        for j in idx:
            rows.append(["prelimit", i, b.times[j], b.x[j], *w[j], Lb[j], Lt[j]])
    lgrid = TimeGrid.covering(T, run.g["limit_dt"])
    for i in range(n_sp):
        lp = limit_path(kind, run.coeffs, avg, run.y0, lgrid, derive_seed(run.seed, 2), i, run.g["band_factor"])
        idx = _thin(lgrid.n_steps + 1, run.o["max_rows_per_path"])
        for j in idx:
            rows.append(["limit", i, lp.times[j], lp.x[j], *lp.w[j], lp.L[j], lp.L[j]])
    d = run.coeffs.d
    records.write_csv(run.artifact("sample_paths", "sample_paths.csv"),
                      ["source", "path", "t", "x", *[f"w{i + 1}" for i in range(d)], "L_band", "L_tanaka"], rows)


def _deviation_pipeline(run):
    regime = run.cfg.regime
    kind = LIMIT_KIND[regime]
    exponent = 0.5 if kind == "diffusive" else 1.0
    avg = run.averaged()
    horizons = sorted(run.g["horizons"])
    T = horizons[-1]
    v = run.v
    tight_times = [v["tightness_base"]] + [v["tightness_base"] + h for h in v["tightness_lags"]]
    pre = {}
    tight_samples = None
    for i, eps in enumerate(run.g["eps_schedule"]):
        grid = grid_for(eps, T, "standard", run.g["step_safety"])
        y_ref = solve_unperturbed(run.coeffs, run.y0, grid)
        times = list(horizons)
        with_tight = v["tightness"] and abs(eps - v["tightness_eps"]) < 1e-12
        if with_tight:
            times += tight_times
        steps = np.unique(grid.nearest_index(times))
        res = simulate_ensemble(run.coeffs, eps, run.x0, run.y0, grid, run.n, derive_seed(run.seed, 1, i),
                                record_times=grid.times[steps], workers=run.workers,
                                block_size=run.g["block_size"], step_safety=run.g["step_safety"])
        zeta = ensemble_deviation(res, y_ref, exponent)
        pre[eps] = {}
        for h in horizons:
            j = int(np.argmin(np.abs(res.times - h)))
            pre[eps][h] = projections(res.x[:, j], zeta[:, j])
        if with_tight:
            idx = [int(np.argmin(np.abs(res.times - t))) for t in tight_times]
            tight_samples = (zeta[:, idx], res.times[idx])
        if run.o["export_samples"]:
            hidx = [int(np.argmin(np.abs(res.times - h))) for h in horizons]
            _export_samples(run.artifact(f"samples_eps{eps:g}", f"samples_eps{eps:g}.csv"),
                            res.times[hidx], res.x[:, hidx], zeta[:, hidx])
    lgrid, ens, fam, control = _run_limit(run, avg, kind, T, horizons, True, 2)
    lim = {h: projections(ens.x[:, j], ens.w[:, j]) for j, h in enumerate(horizons)}
    lim2 = None
    if v["self_check"]:
        _, ens2, _, _ = _run_limit(run, avg, kind, T, horizons, False, 3)
        lim2 = {h: projections(ens2.x[:, j], ens2.w[:, j]) for j, h in enumerate(horizons)}
    if run.o["export_samples"]:
        _export_samples(run.artifact("samples_limit", "samples_limit.csv"), np.asarray(horizons), ens.x, ens.w)
    run.guarded("ks", lambda: _ks_and_self_rows(run, pre, lim, lim2, horizons, v["ks_final"]))
    if fam is not None:
        run.guarded("martingale", lambda: _martingale_rows(run, ens, fam, control))
    if tight_samples is not None:
        run.guarded("tightness", lambda: check_tightness_moments(
            tight_samples[0], tight_samples[1], v["tightness_p"], v["tightness_min_exponent"],
            experiment=run.name))
    if kind == "drift" and v["mean_oracle"]:
        run.guarded("mean_oracle", lambda: _drift_mean_oracle(run, avg, ens, T))
    run.guarded("sample_paths", lambda: _sample_paths(run, kind, avg, min(run.g["eps_schedule"]), T, exponent)
                or [])


def _drift_mean_oracle(run, avg, ens, T):
    ap, am, beta, _ = avg.constants()
    if ap != am or np.any(run.coeffs.b1_jac(run.y0[None])):
        return []
    target = beta[0] * np.sqrt(ap) * np.sqrt(2.0 * T / np.pi)
    val = ens.w[:, -1, 0]
    m, se = val.mean(), val.std(ddof=1) / np.sqrt(val.size)
    tol = run.v["mean_oracle_tol"] * abs(target)
    return [_row(run.name, f"mean_w1(t={T:g})", m, target, tol, se, val.size)]


def _longtime_pipeline(run):
    avg = run.averaged()
    horizons = sorted(run.g["horizons"])
    T = horizons[-1]
    v = run.v
    pre = {}
    for i, eps in enumerate(run.g["eps_schedule"]):
        grid = grid_for(eps, T, "longtime", run.g["step_safety"])
        steps = np.unique(grid.nearest_index(horizons))
        res = simulate_ensemble(run.coeffs, eps, run.x0, run.y0, grid, run.n, derive_seed(run.seed, 1, i),
                                regime="longtime", record_times=grid.times[steps], workers=run.workers,
                                block_size=run.g["block_size"], step_safety=run.g["step_safety"])
        pre[eps] = {h: projections(res.x[:, j], res.y[:, j]) for j, h in enumerate(horizons)}
        if run.o["export_samples"]:
            _export_samples(run.artifact(f"samples_eps{eps:g}", f"samples_eps{eps:g}.csv"),
                            res.times, res.x, res.y)
    lgrid, ens, fam, control = _run_limit(run, avg, "longtime", T, horizons, True, 2)
    lim = {h: projections(ens.x[:, j], ens.w[:, j]) for j, h in enumerate(horizons)}
    lim2 = None
    if v["self_check"]:
        _, ens2, _, _ = _run_limit(run, avg, "longtime", T, horizons, False, 3)
        lim2 = {h: projections(ens2.x[:, j], ens2.w[:, j]) for j, h in enumerate(horizons)}
    if run.o["export_samples"]:
        _export_samples(run.artifact("samples_limit", "samples_limit.csv"), np.asarray(horizons), ens.x, ens.w)
    run.guarded("ks", lambda: _ks_and_self_rows(run, pre, lim, lim2, horizons, v["ks_final"]))
    run.guarded("cantor", lambda: _cantor_row(run, ens))
    run.guarded("occupation", lambda: _occupation_rows(run, ens))
    if fam is not None:
        run.guarded("martingale", lambda: _martingale_rows(run, ens, fam, control))
    if v["boundary"]:
        run.guarded("boundary", lambda: _boundary_rows(run, avg))
    run.guarded("sample_paths", lambda: _sample_paths(run, "longtime", avg, min(run.g["eps_schedule"]), T, 0.0)
                or [])


def _cantor_row(run, ens):
    viol = int(ens.extras["cantor_violations"].sum())
    steps = int(ens.extras["cantor_steps"].sum())
    return _row(run.name, "cantor_off_band_increments", viol, 0, 0, 0.0, steps,
                {"steps_checked": steps}, "pass" if viol == 0 else "fail")


def _occupation_rows(run, ens):
    occ = ens.extras["occupation"]
    widths = run.v["occupation_widths"]
    means = occ.mean(axis=0)
    ses = occ.std(axis=0, ddof=1) / np.sqrt(occ.shape[0])
    records.write_csv(run.artifact("occupation", "occupation.csv"), ["width", "fraction", "stderr"],
                      [[h, m, s] for h, m, s in zip(widths, means, ses)])
    r = band_occupation_fit(widths, means, run.v["occupation_r2"], run.name)
    return r


def _boundary_rows(run, avg):
    v = run.v
    tab = boundary_increment_limits(run.coeffs, run.y0, v["boundary_eps"], v["boundary_paths"],
                                    derive_seed(run.seed, 4), "longtime", v["boundary_gamma"],
                                    starts=(0.0, 1.0, -1.0), avg=avg, workers=run.workers,
                                    step_safety=run.g["step_safety"])
    tab.to_csv(run.artifact("boundary_increments", "boundary_increments.csv"))
    last = min(tab.at_start(0.0), key=lambda r: r.eps)
    rows = []
    tol = v["boundary_tol"]
    for i in range(tab.beta_target.size):
        tgt = tab.beta_target[i]
        rows.append(_row(run.name, f"boundary_drift{i + 1}(eps={last.eps:g})", last.mean_dy_over_delta[i], tgt,
                         tol * abs(tgt), last.mean_dy_over_delta_se[i], last.n_paths,
                         {"relative_error": float(last.mean_dy_over_delta[i] / tgt - 1) if tgt else None,
                          "raw_estimate": float(last.mean_dy_over_delta_raw[i])}))
        tgt2 = tab.alpha_target[i, i]
        rows.append(_row(run.name, f"boundary_second{i + 1}{i + 1}(eps={last.eps:g})",
                         last.mean_dydy_over_delta[i, i], tgt2, tol * abs(tgt2),
                         last.mean_dydy_over_delta_se[i, i], last.n_paths,
                         {"relative_error": float(last.mean_dydy_over_delta[i, i] / tgt2 - 1) if tgt2 else None}))
    return rows


def _lemma_pipeline(run):
    c = run.coeffs
    v = run.v
    name = run.name
    y = run.y0

    def assumptions():
        rep = validate_assumptions(c, strict=False)
        return _row(name, "assumptions", len(rep.messages), 0, 0, verdict="pass" if rep.ok else "fail",
                    details={"messages": rep.messages, "phi_sq_range": [rep.phi_sq_min, rep.phi_sq_max],
                             "b_hat_l1": rep.b_hat_l1, "sigma_hat_sq_l1": rep.sigma_hat_sq_l1})

    def speeds():
        ces = estimate_a_pm(c, y)
        rows = [_row(name, "cesaro_spread", ces.error, 0, v["cesaro_tol"])]
        for key, val in (("a_plus", ces.a_plus), ("a_minus", ces.a_minus)):
            if key in c.analytic_refs:
                rows.append(_row(name, key, val, c.analytic_refs[key], v["cesaro_tol"]))
        return rows

    def quadrature():
        beta, be = interface_drift_beta(c, y, abs_tol=1e-9)
        alpha, ae = interface_diffusion_alpha(c, y, abs_tol=1e-9)
        rows = [_row(name, "quadrature_error", max(be.max(), ae.max()), 0, v["quadrature_tol"])]
        if "beta" in c.analytic_refs:
            ref = np.asarray(c.analytic_refs["beta"])
            rows.append(_row(name, "beta", float(np.abs(beta - ref).max()), 0, v["quadrature_tol"],
                             details={"value": beta, "reference": ref}))
        if "alpha" in c.analytic_refs:
            ref = np.asarray(c.analytic_refs["alpha"])
            rows.append(_row(name, "alpha", float(np.abs(alpha - ref).max()), 0, v["quadrature_tol"],
                             details={"value": alpha, "reference": ref}))
        return rows

    def local_times():
        return local_time_rows(name, v["lt_paths"], v["lt_dt"], v["lt_gap_paths"], v["lt_gap_dt"],
                               derive_seed(run.seed, 5), v["lt_tol"], v["lt_gap"], run.workers)

    def excursions():
        return excursion_rows(name, c, y, v["excursion_eps"], v["excursion_deltas"], v["excursion_paths"],
                              derive_seed(run.seed, 6), run.workers)

    def functional():
        return check_integral_functional_bound(c, IndicatorPsi(), v["functional_eps"], 1.0,
                                               v["functional_paths"], derive_seed(run.seed, 7),
                                               workers=run.workers, experiment=name)

    def cesaro():
        return check_cesaro_averaging(c, average_interface(c), CutoffWeight(), v["cesaro_eps"], 1.0,
                                      v["cesaro_paths"], derive_seed(run.seed, 8), v["cesaro_threshold"],
                                      workers=run.workers, experiment=name)

    def scaling():
        target = 2.0 * deviation_exponent(c)
        return check_deviation_scaling(c, v["scaling_eps"], y, 1.0, v["scaling_paths"],
                                       derive_seed(run.seed, 9), target=target, workers=run.workers,
                                       experiment=name)

    for metric, fn in (("assumptions", assumptions), ("speeds", speeds), ("quadrature", quadrature),
                       ("local_time", local_times), ("excursions", excursions),
                       ("integral_functional", functional), ("cesaro", cesaro), ("deviation_scaling", scaling)):
        run.guarded(metric, fn)


def local_time_rows(name, n_paths, dt, gap_paths, gap_dt, seed, tol=0.03, gap_tol=0.05, workers=None):
    """Estimator checks on Brownian paths: means against ``sqrt(2/pi)`` and the cross gap."""
    bm = get_model("trivial")
    target = float(np.sqrt(2.0 / np.pi))

    def run_lt(n, step, s):
        grid = TimeGrid.covering(1.0, step)
        res = simulate_ensemble(bm, 1.0, 0.0, [0.0], grid, n, s,
                                observers=[BandLocalTime(default_band(grid.dt)), TanakaLocalTime()],
                                workers=workers, step_safety=1.0)
        return res.extras["lt_band"][:, -1], res.extras["lt_tanaka"][:, -1], res.extras["lt_tanaka_clamp"]

    lb, lt, clamp = run_lt(n_paths, dt, seed)
    rows = []
    for label, L in (("band", lb), ("tanaka", lt)):
        m, se = L.mean(), L.std(ddof=1) / np.sqrt(L.size)
        rows.append(_row(name, f"local_time_mean[{label}](dt={dt:g})", m, target, tol * target, se, L.size,
                         {"relative_error": float(m / target - 1)}))
    gap_coarse = float(np.abs(lb - lt).mean())
    gb, gt, _ = run_lt(gap_paths, gap_dt, derive_seed(seed, 1))
    gap = np.abs(gb - gt)
    rows.append(_row(name, f"local_time_gap(dt={gap_dt:g})", gap.mean(), 0.0, gap_tol,
                     gap.std(ddof=1) / np.sqrt(gap.size), gap.size,
                     {f"gap_at_dt={dt:g}": gap_coarse, "max_tanaka_clamp": float(clamp.max())},
                     "pass" if gap.mean() <= gap_tol else "fail"))
    return rows


def excursion_rows(name, coeffs, y, eps, deltas, n_paths, seed, workers=None):
    """Exit-side probabilities, mean exit time and the third-moment trend."""
    rows = []
    deltas = sorted(deltas, reverse=True)
    d0 = deltas[0]
    ph2 = coeffs.phi_sq(np.linspace(-50, 50, 2001), np.broadcast_to(y, (2001, coeffs.d)))
    third = []
    for j, dlt in enumerate(deltas):
        starts = (0.0, 0.5) if dlt == d0 else (0.0,)
        for s in starts:
            st = excursion_exit_stats(coeffs, eps, s * dlt, y, dlt, max(s * dlt, 0.5 * dlt), n_paths,
                                      derive_seed(seed, j, int(s * 10)), "longtime" if coeffs.b1_vanishes
                                      else "standard", workers=workers)
            if dlt == d0:
                tgt = 0.5 + 0.5 * s
                rows.append(_row(name, f"exit_up(x={s:g}delta,delta={dlt:g})", st.p_plus, tgt,
                                 3 * st.p_plus_se, st.p_plus_se, n_paths, {"z": (st.p_plus - tgt) / st.p_plus_se},
                                 "pass" if abs(st.p_plus - tgt) <= 3 * st.p_plus_se else "fail"))
                if s == 0.0 and np.ptp(ph2) == 0:
                    tgt_t = dlt ** 2 / ph2[0]
                    rows.append(_row(name, f"exit_time(delta={dlt:g})", st.theta_mean, tgt_t, 0.05 * tgt_t,
                                     st.theta_se, n_paths))
            if s == 0.0:
                third.append(st.third_moment_over_delta)
    third = np.asarray(third)
    # a slow coordinate that never moves makes every ratio zero
    dec = bool(np.all(third == 0) or np.all(np.diff(third) < 0))
    rows.append(_row(name, "third_moment_ratio_decreasing", float(dec), 1.0, 0.0, n=n_paths,
                     details={"deltas": deltas, "ratios": third.tolist()}, verdict="pass" if dec else "fail"))
    return rows


PIPELINES = {"deviation_diffusive": _deviation_pipeline, "deviation_drift": _deviation_pipeline,
             "longtime": _longtime_pipeline, "lemma_suite": _lemma_pipeline}


def run_experiment(config, out_dir=None, workers=None):
    """Run a configured experiment and write its report.

    Parameters
    ----------
    config : ExperimentConfig or str or Path
        Parsed configuration, a path, or a bundled configuration name.
    out_dir : str, optional
        Overrides ``[output] directory``.
    workers : int, optional
        Overrides ``[experiment] workers``; results do not depend on it.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    workers = workers or cfg["experiment"]["workers"] or 1
    out = out_dir or cfg["output"]["directory"]
    t0 = time.perf_counter()
    run = _Runner(cfg, out, workers)
    try:
        validate_assumptions(run.coeffs)
    except AssumptionViolation as exc:
        run.report.rows.append(failed_report(run.name, "assumptions", exc))
    else:
        PIPELINES[cfg.regime](run)
    run.report.wall_time = time.perf_counter() - t0
    write_report(run.report, out)
    return run.report


# plot scripts

_PLOT_HEADER = '''"""Generated plot script; run with python from any directory."""
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    with open(os.path.join(HERE, name), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows

'''

_PLOTS = {
    "ks_table": ("plot_convergence.py", '''
rows = read("{csv}")
fig, ax = plt.subplots(figsize=(6, 4))
keys = sorted({{(r["time"], r["projection"]) for r in rows}})
for t, p in keys:
    sel = [r for r in rows if r["time"] == t and r["projection"] == p]
    ax.loglog([float(r["eps"]) for r in sel], [float(r["ks"]) for r in sel], "o-", label=f"{{p}} t={{t}}")
floor = float(rows[0]["noise_floor"])
ax.axhline(floor, color="k", ls="--", lw=0.8, label="noise floor")
ax.set_xlabel("eps")
ax.set_ylabel("KS distance to limit")
ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(HERE, "convergence.png"), dpi=150)
'''),
    "sample_paths": ("plot_sample_paths.py", '''
rows = read("{csv}")
fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
for col, src in enumerate(("prelimit", "limit")):
    for pid in sorted({{r["path"] for r in rows if r["source"] == src}}):
        sel = [r for r in rows if r["source"] == src and r["path"] == pid]
        t = [float(r["t"]) for r in sel]
        axes[0, col].plot(t, [float(r["x"]) for r in sel], lw=0.6)
        axes[1, col].plot(t, [float(r["w1"]) for r in sel], lw=0.6)
    axes[0, col].set_title(src)
axes[0, 0].set_ylabel("fast coordinate")
axes[1, 0].set_ylabel("slow coordinate")
for ax in axes[1]:
    ax.set_xlabel("t")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "sample_paths.png"), dpi=150)
'''),
    "sample_paths_lt": ("plot_local_time.py", '''
rows = read("{csv}")
fig, ax = plt.subplots(figsize=(6, 4))
for src, style in (("prelimit", "-"), ("limit", "--")):
    for pid in sorted({{r["path"] for r in rows if r["source"] == src}}):
        sel = [r for r in rows if r["source"] == src and r["path"] == pid]
        ax.plot([float(r["t"]) for r in sel], [float(r["L_band"]) for r in sel], style, lw=0.8,
                label=f"{{src}} {{pid}}")
ax.set_xlabel("t")
ax.set_ylabel("local time at 0")
ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(HERE, "local_time.png"), dpi=150)
'''),
    "martingale": ("plot_martingale.py", '''
rows = read("{csv}")
fig, ax = plt.subplots(figsize=(7, 4))
labels = []
for i, r in enumerate(rows):
    z = float(r["mean"]) / float(r["stderr"]) if float(r["stderr"]) > 0 else 0.0
    ax.plot(i, z, "o", color="C3" if r["control"] == "1" else "C0")
    labels.append(f"{{r['function']}}:{{r['bin']}}")
ax.axhline(3, color="k", ls="--", lw=0.8)
ax.axhline(-3, color="k", ls="--", lw=0.8)
ax.set_xticks(range(len(labels)))
ax.set_xticklabels(labels, rotation=90, fontsize=6)
ax.set_ylabel("bin mean / stderr")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "martingale.png"), dpi=150)
'''),
    "occupation": ("plot_occupation.py", '''
rows = read("{csv}")
w = [float(r["width"]) for r in rows]
f = [float(r["fraction"]) for r in rows]
e = [float(r["stderr"]) for r in rows]
fig, ax = plt.subplots(figsize=(5, 4))
ax.errorbar(w, f, yerr=e, fmt="o-")
ax.set_xlabel("band width")
ax.set_ylabel("fraction of time in band")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "occupation.png"), dpi=150)
'''),
    "boundary_increments": ("plot_boundary.py", '''
rows = [r for r in read("{csv}") if float(r["start_x"]) == 0.0]
eps = [float(r["eps"]) for r in rows]
fig, axes = plt.subplots(1, 2, figsize=(9, 4))
axes[0].errorbar(eps, [float(r["drift1"]) for r in rows], yerr=[float(r["drift1_se"]) for r in rows], fmt="o-")
axes[0].axhline(float(rows[0]["beta1"]), color="k", ls="--")
axes[0].set_ylabel("mean increment / delta")
axes[1].errorbar(eps, [float(r["second11"]) for r in rows], yerr=[float(r["second11_se"]) for r in rows],
                 fmt="o-")
axes[1].axhline(float(rows[0]["alpha11"]), color="k", ls="--")
axes[1].set_ylabel("mean squared increment / delta")
for ax in axes:
    ax.set_xscale("log")
    ax.set_xlabel("eps")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "boundary_increments.png"), dpi=150)
'''),
}


def emit_plots(report, out_dir=None):
    """Write matplotlib scripts for every figure the report's data support.

    Parameters
    ----------
    report : str, Path, dict or ExperimentReport
        A ``report.json`` path or its contents.
    out_dir : str, optional
        Directory of the data files; defaults to the report's directory.

    Returns
    -------
    list of Path
        Written scripts.  A report without data artifacts yields none.
    """
    if isinstance(report, ExperimentReport):
        rep, base = report.to_dict(), Path(out_dir or report.out_dir)
    elif isinstance(report, dict):
        rep, base = report, Path(out_dir or ".")
    else:
        path = Path(report)
        with open(path) as fh:
            rep = json.load(fh)
        base = Path(out_dir) if out_dir else path.parent
    arts = dict(rep.get("artifacts", {}))
    if "sample_paths" in arts:
        arts["sample_paths_lt"] = arts["sample_paths"]
    written = []
    for key, (script, body) in _PLOTS.items():
        if key not in arts:
            continue
        csv_name = arts[key]
        if not (base / csv_name).exists():
            raise MissingArtifactError(f"report lists {csv_name} but {base / csv_name} is missing")
        target = base / script
        target.write_text(_PLOT_HEADER + body.format(csv=csv_name))
        written.append(target)
    return written


def summarize(report):
    """Plain-text table of a report's rows."""
    lines = [f"{'metric':48s} {'value':>12s} {'target':>10s} {'threshold':>10s}  verdict"]
    for r in report.rows:
        lines.append(f"{r.metric[:48]:48s} {r.value:12.5g} {r.target:10.4g} {r.threshold:10.4g}  {r.verdict}")
    lines.append(f"overall: {'pass' if report.passed else 'fail'}")
    return "\n".join(lines)


def default_out(cfg):
    return os.fspath(cfg["output"]["directory"])
