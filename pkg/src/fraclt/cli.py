"""Command-line interface: ``fraclt <subcommand> [flags]``.

Exit status is 0 on success, 1 for configuration errors (bad flags, bad
input files, inadmissible functionals) and 2 for numerical or diagnostic
failures (quadrature not converging, identity violations, failed verdicts).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from . import svgplot
from .errors import ConfigurationError, FracltError, NumericalError
from .fbm import as_hurst, asymptotic_variance_v2, read_path_csv, simulate_fbm, write_path_csv
from .functionals import BivariateF, KernelG, QuadratureConfig, get_functional, kernel_limit_constant, limit_constant
from .harness import ExperimentConfig, ExperimentReport, parse_regime, read_config_file, run_experiment
from .quadvar import (
    centered_quadvar_abs,
    crossing_constant,
    crossing_decomposition_check,
    regime_limit,
    scaled_statistic,
)
from .statistics import (
    StatisticPath,
    local_time_path,
    occupation_local_time_oracle,
    read_statistic_csv,
    v_statistic_bivariate,
    v_statistic_univariate,
    write_statistic_csv,
)

logger = logging.getLogger("fraclt")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as configuration errors (exit 1)."""

    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def default_threads() -> int:
    env = os.environ.get("FRACLT_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigurationError(f"FRACLT_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise ConfigurationError("FRACLT_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $FRACLT_THREADS or the number of logical cores); never changes results")
    g.add_argument("--json-errors", action="store_true", help="print errors as a JSON object on stderr")
    g.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="logging verbosity on stderr (default: INFO)")
    return p


def _add_path_input(p):
    p.add_argument("--path", required=True, help="trajectory CSV with header t,x")
    p.add_argument("--hurst", type=float, required=True, help="Hurst parameter the statistics assume")
    p.add_argument("--sigma", type=float, default=1.0, help="scale sigma of the trajectory (default 1)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="fraclt", description="Local times and high-frequency statistics of fractional Brownian motion.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="simulate an fBm path and write it as CSV")
    p.add_argument("--hurst", type=float, required=True, help="Hurst parameter in (0, 1)")
    p.add_argument("--n", type=int, required=True, help="observation frequency; the grid is i/n, i = 0..[nT]+1")
    p.add_argument("--sigma", type=float, default=1.0, help="scale (default 1)")
    p.add_argument("--horizon", type=float, default=1.0, help="time horizon T (default 1)")
    p.add_argument("--seed", type=int, required=True, help="random seed (required)")
    p.add_argument("--replicate", type=int, default=0, help="replicate index within the seed (default 0)")
    p.add_argument("--method", choices=["auto", "circulant", "dense"], default="auto", help="generator (default auto)")
    p.add_argument("--out", required=True, help="output CSV (t,x)")

    p = sub.add_parser("localtime", parents=[common], help="occupation-measure local-time estimate from a path CSV")
    _add_path_input(p)
    p.add_argument("--level", type=float, default=0.0, help="level x (default 0)")
    p.add_argument("--time", type=float, default=None, help="time t (default: the path horizon)")
    p.add_argument("--epsilon", type=float, default=None, help="bandwidth (default 4 m^{-H})")
    p.add_argument("--refinement", type=_positive_int, default=None,
                   help="grid refinement factor m/n; the CSV path is linearly interpolated (default 1)")
    p.add_argument("--out", default=None, help="optionally write the estimate at every grid time as CSV (t,value)")

    p = sub.add_parser("vstat", parents=[common], help="V(g) or V(f) along a path CSV")
    _add_path_input(p)
    p.add_argument("--f", dest="functional", required=True, help="functional name: f1, f2, zero, indicator, gauss")
    p.add_argument("--un-exponent", type=float, default=None, help="u_n = n^a (default a = H)")
    p.add_argument("--level", type=float, default=0.0, help="level x (default 0)")
    p.add_argument("--increment-scale", choices=["hurst", "un"], default="hurst",
                   help="scale of the increment argument of f: n^H or u_n (default hurst)")
    p.add_argument("--out", required=True, help="output CSV (t,value)")

    p = sub.add_parser("quadvar", parents=[common], help="scaled centered quadratic variation of |X| from a path CSV")
    _add_path_input(p)
    p.add_argument("--regime", default=None, help="scale as this regime instead of the one of H (lt, boundary, clt, rosenblatt)")
    p.add_argument("--unscaled", action="store_true", help="write S_n(t) without the regime scaling")
    p.add_argument("--out", required=True, help="output CSV (t,value)")

    p = sub.add_parser("constants", parents=[common], help="limit constants")
    p.add_argument("--quantity", choices=["limit", "v2", "crossing"], default="limit",
                   help="limit: constant of V(f) or integral of g; v2: asymptotic variance; crossing: -(2/3)E|N|^3")
    p.add_argument("--f", dest="functional", default="f1", help="functional name for --quantity limit (default f1)")
    p.add_argument("--sigma", type=float, default=1.0, help="sigma (default 1)")
    p.add_argument("--hurst", type=float, default=None, help="Hurst parameter for --quantity v2")
    p.add_argument("--degree", type=_positive_int, default=64, help="Gauss rule degree (default 64)")
    p.add_argument("--digits", type=int, default=6, help="decimals printed (default 6)")

    for name, helptext in (("experiment", "run a Monte Carlo experiment and write a JSON report"),
                           ("audit", "check generator covariances against the exact fBm covariance")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", default=None, help="flat key = value config file; flags override its entries")
        p.add_argument("--name", default=None, help="experiment name; its prefix selects the kind (prop2-*, audit*, else consistency)")
        p.add_argument("--kind", choices=["consistency", "regime", "audit"], default=None, help="experiment kind")
        p.add_argument("--hurst", type=float, default=None, help="Hurst parameter")
        p.add_argument("--sigma", type=float, default=None, help="sigma")
        p.add_argument("--reps", type=_positive_int, default=None, help="replicates")
        p.add_argument("--n-grid", default=None, help="comma-separated increasing frequencies, each dividing the last")
        p.add_argument("--n", type=int, default=None, help="single frequency (shorthand for --n-grid N)")
        p.add_argument("--seed", type=int, default=None, help="random seed (required here or in the config)")
        p.add_argument("--horizon", type=float, default=None, help="time horizon T")
        p.add_argument("--out", required=True, help="output JSON report")
        p.add_argument("--csv", default=None, help="also write per-n summaries as CSV")
        p.add_argument("--allow-failures", action="store_true", help="exit 0 even when a verdict fails")
        p.add_argument("--record-wall-clock", action="store_true",
                       help="add wall-clock seconds to the report (breaks byte-identical reruns)")
        if name == "experiment":
            p.add_argument("--functional", default=None, help="functional for consistency experiments")
            p.add_argument("--level", type=float, default=None, help="level x")
            p.add_argument("--un-exponent", type=float, default=None, help="u_n = n^a")
            p.add_argument("--oversample", type=_positive_int, default=None, help="simulation oversampling for the oracle")
            p.add_argument("--refinement", type=_positive_int, default=None, help="oracle grid refinement m/n")
            p.add_argument("--epsilon-factor", type=float, default=None, help="oracle bandwidth factor c in c m^{-H}")
            p.add_argument("--time-points", type=_positive_int, default=None, help="points of the uniformity time grid")
            p.add_argument("--check-regime", default=None, help="run another regime's checks (negative control)")
            p.add_argument("--allow-regime-mismatch", action="store_true", help="permit --check-regime to differ from H")
            p.add_argument("--path-hurst", type=float, default=None, help="simulate data with this H instead")
            p.add_argument("--crossing-constant", choices=["corrected", "literal"], default=None,
                           help="local-time constant in the LT/boundary checks: corrected -(2/3)E|N|^3 "
                                "(default) or literal +(1/3)E|N|^3")
            p.add_argument("--tolerance", type=float, default=None, help="main tolerance of the experiment")
            p.add_argument("--z-threshold", type=float, default=None, help="z-score threshold")
        else:
            p.add_argument("--pairs", type=_positive_int, default=None, help="covariance pairs to sample (default 10)")

    p = sub.add_parser("plot", parents=[common], help="SVG chart from a report or statistic CSVs")
    p.add_argument("--kind", required=True, choices=["error-vs-n", "variance-slope", "path-overlay"], help="chart type")
    p.add_argument("--report", default=None, help="JSON report (error-vs-n, variance-slope)")
    p.add_argument("--csv", dest="csvs", action="append", default=[],
                   help="statistic CSV (t,value) for path-overlay; repeat for several curves")
    p.add_argument("--label", dest="labels", action="append", default=[], help="legend label per --csv")
    p.add_argument("--out", required=True, help="output SVG")
    return parser


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------


def _log_config(args, extra: Optional[dict] = None):
    cfg = {k: v for k, v in vars(args).items() if k not in ("json_errors", "log_level")}
    if extra:
        cfg.update(extra)
    logger.info("resolved config: %s", json.dumps(cfg, sort_keys=True, default=str))


def _cmd_simulate(args) -> int:
    _log_config(args)
    path = simulate_fbm(args.n, args.hurst, args.sigma, args.horizon, args.seed,
                        replicate=args.replicate, method=args.method, workers=args.threads)
    write_path_csv(path, args.out)
    logger.info("wrote %d points (%s) to %s", path.values.size, path.generator.value, args.out)
    return EXIT_OK


def _load_path(args):
    return read_path_csv(args.path, hurst=as_hurst(args.hurst), sigma=args.sigma)


def _cmd_localtime(args) -> int:
    path = _load_path(args)
    _log_config(args, {"n": path.n})
    refinement = args.refinement or 1
    est = occupation_local_time_oracle(path, args.level, args.time, args.epsilon, refinement)
    print(json.dumps(est.as_dict(), sort_keys=True))
    if args.out:
        times = path.times[: path.steps + 1]
        vals, _, _, _ = local_time_path(path, args.level, times, est.bandwidth, refinement)
        write_statistic_csv(StatisticPath(times, vals, {"statistic": "local time"}), args.out)
    return EXIT_OK


def _cmd_vstat(args) -> int:
    path = _load_path(args)
    _log_config(args, {"n": path.n})
    f = get_functional(args.functional)
    if isinstance(f, KernelG):
        a = args.hurst if args.un_exponent is None else args.un_exponent
        stat = v_statistic_univariate(path, f, a, args.level)
    else:
        stat = v_statistic_bivariate(path, f, args.un_exponent, args.level, increment_scale=args.increment_scale)
    write_statistic_csv(stat, args.out)
    print(f"{stat.final:.17g}")
    return EXIT_OK


def _cmd_quadvar(args) -> int:
    path = _load_path(args)
    _log_config(args, {"n": path.n})
    check = crossing_decomposition_check(path, args.sigma, details=True)
    logger.info("crossing decomposition residual %.3g (scale %.3g)", check.pointwise_residual, check.scale)
    stat = centered_quadvar_abs(path, args.sigma)
    if args.unscaled:
        out = StatisticPath(stat.times, stat.values, {"statistic": "S_n"})
    else:
        regime = None
        if args.regime:
            regime = regime_limit(args.hurst, args.sigma, parse_regime(args.regime))
        out = scaled_statistic(stat, regime)
        if out.config.get("regime_mismatch"):
            logger.warning("scaling as %s although H=%s belongs to another regime", out.config["regime"], args.hurst)
    write_statistic_csv(out, args.out)
    print(f"{out.final:.17g}")
    return EXIT_OK


def _cmd_constants(args) -> int:
    _log_config(args)
    if args.quantity == "v2":
        if args.hurst is None:
            raise ConfigurationError("--quantity v2 needs --hurst")
        value = asymptotic_variance_v2(args.sigma, args.hurst)
    elif args.quantity == "crossing":
        value = crossing_constant(args.sigma)
    else:
        f = get_functional(args.functional)
        if isinstance(f, BivariateF):
            value = float(limit_constant(f, args.sigma, QuadratureConfig(degree=args.degree)))
        else:
            value = kernel_limit_constant(f)
    print(f"{value:.{max(args.digits, 0)}f}")
    return EXIT_OK


_FLAG_TO_KEY = {
    "name": "name", "kind": "kind", "hurst": "hurst", "sigma": "sigma", "reps": "replicates", "seed": "seed",
    "horizon": "horizon", "functional": "functional", "level": "level", "un_exponent": "un_exponent",
    "oversample": "oversample", "refinement": "refinement", "epsilon_factor": "epsilon_factor",
    "time_points": "time_points", "check_regime": "check_regime", "path_hurst": "path_hurst",
    "crossing_constant": "crossing_constant", "tolerance": "tolerance", "z_threshold": "z_threshold",
    "pairs": "audit_pairs",
}


def _experiment_config(args, audit: bool) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for flag, key in _FLAG_TO_KEY.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if args.n_grid is not None and args.n is not None:
        raise ConfigurationError("give either --n-grid or --n, not both")
    if args.n_grid is not None:
        values["n_grid"] = args.n_grid
    elif args.n is not None:
        values["n_grid"] = str(args.n)
    if getattr(args, "allow_regime_mismatch", False):
        values["allow_regime_mismatch"] = True
    if args.record_wall_clock:
        values["record_wall_clock"] = True
    if values.get("seed") in (None, "", "none"):
        raise ConfigurationError("a seed is required (--seed or 'seed' in the config file)")
    if audit:
        values["kind"] = "audit"
        values.setdefault("name", "audit")
        values.setdefault("n_grid", "256")
        values.setdefault("replicates", 20000)
    if "hurst" not in values:
        raise ConfigurationError("a Hurst parameter is required (--hurst or 'hurst' in the config file)")
    return ExperimentConfig.from_mapping(values)


def _cmd_experiment(args, audit: bool = False) -> int:
    cfg = _experiment_config(args, audit).resolved()
    threads = args.threads or default_threads()
    logger.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    logger.info("running %s experiment %r on %d thread(s)", cfg.kind, cfg.name, threads)
    report = run_experiment(cfg, threads)
    report.write(args.out, args.csv)
    for v in report.verdicts:
        logger.info("%s %s: effect %s, CI %s", "PASS" if v["passed"] else "FAIL", v["rule"],
                    v["effect_size"], v["ci95"])
    if not report.passed and not args.allow_failures:
        failed = [v["rule"] for v in report.verdicts if not v["passed"]]
        raise NumericalError(f"{len(failed)} verdict(s) failed: {', '.join(failed)}", {"report": args.out})
    return EXIT_OK


def _cmd_plot(args) -> int:
    _log_config(args)
    if args.kind == "path-overlay":
        if not args.csvs:
            raise ConfigurationError("path-overlay needs at least one --csv")
        labels = args.labels + [None] * (len(args.csvs) - len(args.labels))
        curves = []
        for src, label in zip(args.csvs, labels):
            stat = read_statistic_csv(src)
            curves.append((label or os.path.basename(src), stat.times, stat.values))
        svg = svgplot.path_overlay(curves)
    else:
        if not args.report:
            raise ConfigurationError(f"{args.kind} needs --report")
        report = ExperimentReport.read(args.report).to_dict()
        svg = svgplot.error_vs_n(report) if args.kind == "error-vs-n" else svgplot.variance_slope(report)
    svgplot.write_svg(svg, args.out)
    return EXIT_OK


_HANDLERS = {
    "simulate": _cmd_simulate,
    "localtime": _cmd_localtime,
    "vstat": _cmd_vstat,
    "quadvar": _cmd_quadvar,
    "constants": _cmd_constants,
    "experiment": _cmd_experiment,
    "audit": lambda a: _cmd_experiment(a, audit=True),
    "plot": _cmd_plot,
}


def _report_error(exc: BaseException, code: int, as_json: bool) -> None:
    if as_json:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        diag = getattr(exc, "diagnostics", None)
        if diag:
            payload["diagnostics"] = diag
        print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
    else:
        print(f"fraclt: error: {exc}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s", force=True)
        return _HANDLERS[args.command](args)
    except NumericalError as exc:
        _report_error(exc, EXIT_NUMERICAL, json_errors)
        return EXIT_NUMERICAL
    except (FracltError, ValueError) as exc:
        _report_error(exc, EXIT_CONFIG, json_errors)
        return EXIT_CONFIG
    except OSError as exc:
        _report_error(exc, EXIT_CONFIG, json_errors)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
