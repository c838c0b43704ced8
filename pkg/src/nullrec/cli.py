"""Command-line entry point ``nullrec``.

Exit codes: 0 when every validator passes, 1 when one fails, 2 for
configuration or usage errors.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import records
from .coefficients import AssumptionViolation, average_interface, validate_assumptions
from .harness import ConfigError, MissingArtifactError, bundled_configs, emit_plots, load_config, \
    run_experiment, summarize
from .interface_stats import CensoringError, ScheduleError, excursion_exit_stats
from .models import get_model, list_models
from .streams import default_workers
from .validators import ks_distance, noise_floor

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common():
    # SUPPRESS lets the flags appear before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed override")
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                   help="worker processes (default: $NULLREC_WORKERS or 1); results do not depend on it")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory override")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="nullrec", parents=[common],
                                     description="Fast-slow diffusion experiments with interface limits.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list-models", parents=[common], help="list registered coefficient models")

    p = sub.add_parser("validate-config", parents=[common], help="check a configuration without running it")
    p.add_argument("config", help="path or bundled name (" + ", ".join(bundled_configs()) + ")")

    p = sub.add_parser("run", parents=[common], help="run an experiment and write its report")
    p.add_argument("config", help="path or bundled configuration name")
    p.add_argument("--plots", action="store_true", help="also emit plot scripts")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("interface-stats", parents=[common],
                       help="averaged interface data and optional exit statistics for a model")
    p.add_argument("model")
    p.add_argument("--params", default="{}", help="model parameters as a JSON object")
    p.add_argument("--y", type=float, nargs="+", default=None, help="slow point (default: origin)")
    p.add_argument("--eps", type=float, default=None, help="run exit statistics at this eps")
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--start", type=float, default=0.0, help="start in units of delta")
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--regime", choices=("longtime", "standard"), default=None)

    p = sub.add_parser("compare", parents=[common], help="two-sample KS distance between CSV columns")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--column", required=True)
    p.add_argument("--column-second", default=None, help="column in the second file (default: same)")
    p.add_argument("--time", type=float, default=None, help="restrict to rows with this time value")
    p.add_argument("--threshold", type=float, default=None,
                   help="fail above this distance (default: 5%% noise floor)")

    p = sub.add_parser("plots", parents=[common], help="emit plot scripts for a report")
    p.add_argument("report", help="report.json path or a run directory")
    return parser


def _column(path, name, t):
    cols = records.read_columns(path)
    if name not in cols:
        raise KeyError(f"{path} has no column {name!r}")
    v = np.asarray(cols[name], dtype=float)
    if t is not None:
        if "time" not in cols:
            raise KeyError(f"{path} has no time column")
        v = v[np.isclose(np.asarray(cols["time"], dtype=float), t)]
    return v


def _cmd_list_models(args):
    for name in list_models():
        c = get_model(name)
        print(f"{name:22s} d={c.d} k={c.k}")
    return EXIT_PASS


def _overrides(args):
    return {("experiment", "master_seed"): args.seed, ("experiment", "workers"): args.workers,
            ("output", "directory"): args.out}


def _cmd_validate(args):
    cfg = load_config(args.config, _overrides(args))
    validate_assumptions(cfg.model())
    print(f"{args.config}: ok ({cfg.regime}, model {cfg['model']['name']})")
    return EXIT_PASS


def _cmd_run(args):
    cfg = load_config(args.config, _overrides(args))
    workers = args.workers or cfg["experiment"]["workers"] or default_workers()
    report = run_experiment(cfg, args.out, workers)
    if args.plots:
        emit_plots(report)
    if not args.quiet:
        print(summarize(report))
        print(f"report: {report.out_dir}/report.json")
    return EXIT_PASS if report.passed else EXIT_FAIL


def _cmd_interface_stats(args):
    c = get_model(args.model, **json.loads(args.params))
    validate_assumptions(c)
    y = np.zeros(c.d) if args.y is None else np.asarray(args.y, dtype=float)
    if y.shape != (c.d,):
        raise ConfigError([f"--y needs {c.d} values"])
    avg = average_interface(c)
    out = {"model": args.model, "y": y.tolist(), "a_plus": float(avg.a_plus(y[None])[0]),
           "a_minus": float(avg.a_minus(y[None])[0]), "beta": avg.beta(y[None])[0].tolist(),
           "alpha": avg.alpha(y[None])[0].tolist()}
    if args.eps is not None:
        regime = args.regime or ("longtime" if c.b1_vanishes else "standard")
        start = args.start * args.delta
        st = excursion_exit_stats(c, args.eps, start, y, args.delta, max(abs(start), 0.5 * args.delta),
                                  args.paths, 0 if args.seed is None else args.seed, regime,
                                  workers=args.workers)
        out["excursions"] = {"eps": args.eps, "delta": args.delta, "start": start, "regime": regime,
                             "p_plus": st.p_plus, "p_plus_se": st.p_plus_se, "theta_mean": st.theta_mean,
                             "theta_se": st.theta_se,
                             "mean_dy_over_delta": st.mean_dy_over_delta.tolist(),
                             "mean_dydy_over_delta": st.mean_dydy_over_delta.tolist(),
                             "third_moment_over_delta": st.third_moment_over_delta,
                             "censored": st.n_censored}
    print(json.dumps(out, indent=2))
    return EXIT_PASS


def _cmd_compare(args):
    a = _column(args.first, args.column, args.time)
    b = _column(args.second, args.column_second or args.column, args.time)
    ks, p = ks_distance(a, b)
    floor = float(noise_floor(a.size, b.size))
    thr = floor if args.threshold is None else args.threshold
    print(json.dumps({"ks": ks, "p_value": p, "noise_floor": floor, "threshold": thr,
                      "n_first": int(a.size), "n_second": int(b.size)}, indent=2))
    return EXIT_PASS if ks <= thr else EXIT_FAIL


def _cmd_plots(args):
    path = Path(args.report)
    if path.is_dir():
        path = path / "report.json"
    if not path.exists():
        raise ConfigError([f"no report at {path}"])
    for script in emit_plots(path, args.out):
        print(script)
    return EXIT_PASS


COMMANDS = {"list-models": _cmd_list_models, "validate-config": _cmd_validate, "run": _cmd_run,
            "interface-stats": _cmd_interface_stats, "compare": _cmd_compare, "plots": _cmd_plots}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_CONFIG
    for key in ("seed", "workers", "out"):
        setattr(args, key, getattr(args, key, None))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (CensoringError, ScheduleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (AssumptionViolation, KeyError, ValueError, MissingArtifactError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
