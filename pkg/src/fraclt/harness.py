"""Seeded Monte Carlo experiments for the local-time limit theorems.

Three experiment kinds share one configuration type:

``consistency``
    V(f)_t against c * L_t(x) for a growing grid of frequencies.
``regime``
    The scaled centered quadratic variation of |X| in the regime selected by H
    (or forced through ``check_regime`` for negative controls).
``audit``
    Empirical covariances of the generator against the exact fBm covariance.

All frequencies of one replicate are read off a single trajectory simulated at
the finest frequency (a nested design), so every n shares the same local-time
oracle.  Replicates run on a thread pool; results are gathered in replicate
order, which makes reports byte-identical for any number of threads.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigurationError, FracltError
from .fbm import (
    FbmPath,
    Regime,
    as_hurst,
    asymptotic_variance_v2,
    classify_regime,
    fbm_covariance,
    grid_steps,
    simulate_fbm,
)
from .functionals import (
    BivariateF,
    KernelG,
    abs_normal_moment,
    check_condition_A_gamma,
    get_functional,
    kernel_limit_constant,
    limit_constant,
)
from .quadvar import centered_quadvar_abs, crossing_constant, regime_limit
from .statistics import (
    local_time_path,
    occupation_local_time_oracle,
    v_statistic_bivariate,
    v_statistic_univariate,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
#: Minimum replicate count for experiments whose verdicts rest on z-scores or p-values.
MIN_REPLICATES_FOR_TESTS = 30
#: Spawn-key offset for auxiliary streams (audit pair selection), disjoint from replicate keys.
_AUX_KEY = 2**32

_KINDS = ("consistency", "regime", "audit")
_DEFAULT_TOL = {
    "consistency": 0.10,
    Regime.LT: 0.15,
    Regime.BOUNDARY: 0.15,
    Regime.CLT: 0.10,
    Regime.ROSENBLATT: 0.15,
    "audit": 4.0,
}


def _infer_kind(name: str) -> str:
    low = name.lower()
    if low.startswith("audit"):
        return "audit"
    if low.startswith(("prop2", "regime")):
        return "regime"
    return "consistency"


def parse_regime(value) -> Regime:
    """Regime from its name, case-insensitively (``lt``, ``boundary``, ``clt``, ``rosenblatt``)."""
    if isinstance(value, Regime):
        return value
    try:
        return Regime(str(value).strip().upper())
    except ValueError:
        choices = ", ".join(r.value.lower() for r in Regime)
        raise ConfigurationError(f"unknown regime {value!r}; choose from {choices}") from None


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {value!r}")


def _parse_int_list(value) -> tuple:
    if isinstance(value, str):
        parts = [p for p in value.replace(";", ",").split(",") if p.strip()]
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            raise ConfigurationError(f"n_grid must be a comma-separated list of integers: {value!r}") from None
    return tuple(int(v) for v in value)


def read_config_file(path) -> dict:
    """Raw key/value pairs of a flat config file; the implicit section header is added here."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            parser.read_string("[config]\n" + fh.read(), source=str(path))
    except (configparser.Error, OSError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if parser.sections() != ["config"]:
        raise ConfigurationError(f"{path}: sections are not allowed in experiment configs")
    return dict(parser["config"])


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's output.

    Optional fields left as ``None`` are filled in by :meth:`resolved`
    (``kind`` from the name, ``oversample`` and ``refinement`` from whether a
    local-time oracle is needed, ``un_exponent`` = H, ``tolerance`` from the
    experiment kind).  The worker count is deliberately not part of the
    configuration.
    """

    name: str = "consistency"
    hurst: float = 0.3
    sigma: float = 1.0
    n_grid: tuple = (1024, 4096, 16384)
    replicates: int = 200
    seed: int = 0
    kind: Optional[str] = None
    functional: str = "f1"
    level: float = 0.0
    un_exponent: Optional[float] = None
    horizon: float = 1.0
    oversample: Optional[int] = None
    refinement: Optional[int] = None
    epsilon_factor: float = 4.0
    time_points: int = 16
    check_regime: Optional[str] = None
    allow_regime_mismatch: bool = False
    path_hurst: Optional[float] = None
    crossing_constant: str = "corrected"
    tolerance: Optional[float] = None
    z_threshold: float = 4.0
    audit_pairs: int = 10
    record_wall_clock: bool = False

    _FLOATS = ("hurst", "sigma", "level", "un_exponent", "horizon", "epsilon_factor",
               "path_hurst", "tolerance", "z_threshold")
    _INTS = ("replicates", "seed", "oversample", "refinement", "time_points", "audit_pairs")
    _BOOLS = ("allow_regime_mismatch", "record_wall_clock")

    def __post_init__(self):
        object.__setattr__(self, "n_grid", _parse_int_list(self.n_grid))
        as_hurst(self.hurst)
        if self.path_hurst is not None:
            as_hurst(self.path_hurst)
        if not self.n_grid:
            raise ConfigurationError("n_grid is empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigurationError(f"n_grid must be strictly increasing, got {list(self.n_grid)}")
        if self.n_grid[0] < 2:
            raise ConfigurationError("every n in n_grid must be >= 2")
        if self.replicates < 2:
            raise ConfigurationError("replicates must be >= 2")
        if not self.sigma > 0 or not self.horizon > 0:
            raise ConfigurationError("sigma and horizon must be positive")
        if self.kind is not None and self.kind not in _KINDS:
            raise ConfigurationError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.crossing_constant not in ("corrected", "literal"):
            raise ConfigurationError("crossing_constant must be 'corrected' or 'literal'")
        if self.time_points < 1 or self.audit_pairs < 1:
            raise ConfigurationError("time_points and audit_pairs must be positive")
        if not self.epsilon_factor > 0:
            raise ConfigurationError("epsilon_factor must be positive")
        if self.check_regime is not None:
            object.__setattr__(self, "check_regime", parse_regime(self.check_regime).value)

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        """Build from string-valued (or typed) key/value pairs; unknown keys are rejected."""
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        kw: dict[str, Any] = {}
        for key, raw in data.items():
            if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none", "null")):
                kw[key] = None
                continue
            try:
                if key in cls._FLOATS:
                    kw[key] = float(raw)
                elif key in cls._INTS:
                    kw[key] = int(raw)
                elif key in cls._BOOLS:
                    kw[key] = _parse_bool(raw)
                elif key == "n_grid":
                    kw[key] = _parse_int_list(raw)
                else:
                    kw[key] = str(raw).strip()
            except ValueError as exc:
                raise ConfigurationError(f"config key {key!r}: {exc}") from None
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Read a flat ``key = value`` file (``#`` comments allowed, no sections)."""
        return cls.from_mapping(read_config_file(path))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- resolution -----------------------------------------------------------

    @property
    def checked_regime(self) -> Regime:
        return Regime(self.check_regime) if self.check_regime else classify_regime(self.hurst)

    def needs_oracle(self) -> bool:
        kind = self.kind or _infer_kind(self.name)
        if kind == "consistency":
            return True
        if kind == "regime":
            return self.checked_regime in (Regime.LT, Regime.BOUNDARY)
        return False

    def resolved(self) -> "ExperimentConfig":
        kind = self.kind or _infer_kind(self.name)
        cfg = self.replace(kind=kind)
        changes: dict[str, Any] = {}
        if kind == "regime":
            own = classify_regime(self.hurst)
            if self.check_regime and Regime(self.check_regime) is not own and not self.allow_regime_mismatch:
                raise ConfigurationError(
                    f"check_regime={self.check_regime} does not match H={self.hurst} ({own.value}); "
                    "set allow_regime_mismatch for a negative control"
                )
            changes["check_regime"] = cfg.checked_regime.value
            if self.replicates < MIN_REPLICATES_FOR_TESTS:
                raise ConfigurationError(
                    f"regime experiments need replicates >= {MIN_REPLICATES_FOR_TESTS}, got {self.replicates}"
                )
        oracle = cfg.needs_oracle()
        oversample = self.oversample if self.oversample is not None else (16 if oracle else 1)
        if oversample < 1:
            raise ConfigurationError("oversample must be >= 1")
        changes["oversample"] = oversample
        if oracle:
            refinement = self.refinement if self.refinement is not None else max(1, oversample // 2)
            if refinement < 1:
                raise ConfigurationError("refinement must be >= 1")
            changes["refinement"] = refinement
        if kind == "consistency" and self.un_exponent is None:
            changes["un_exponent"] = float(self.hurst)
        if self.path_hurst is None:
            changes["path_hurst"] = float(self.hurst)
        if self.tolerance is None:
            key = kind if kind != "regime" else Regime(changes["check_regime"])
            changes["tolerance"] = _DEFAULT_TOL[key]
        n_max = self.n_grid[-1]
        for n in self.n_grid:
            if n_max % n:
                raise ConfigurationError(f"n={n} does not divide the finest frequency {n_max}")
        return cfg.replace(**changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def time_grid(self) -> np.ndarray:
        return self.horizon * np.arange(1, self.time_points + 1) / self.time_points


# ---------------------------------------------------------------------------
# statistics helpers
# ---------------------------------------------------------------------------


def _finite(x) -> Optional[float]:
    x = float(x)
    return x if math.isfinite(x) else None


def median_ci(x: np.ndarray, level: float = 0.95) -> tuple:
    """Distribution-free confidence interval for the median from binomial order statistics."""
    s = np.sort(np.asarray(x, dtype=float))
    k = len(s)
    j = int(stats.binom.ppf((1 - level) / 2, k, 0.5))
    lo = s[max(j - 1, 0)]
    hi = s[min(k - j, k - 1)]
    return float(lo), float(hi)


def fisher_ci(r: float, k: int, level: float = 0.95) -> tuple:
    if k <= 3 or not math.isfinite(r):
        return (None, None)
    zc = stats.norm.ppf(0.5 + level / 2)
    z = math.atanh(max(min(r, 1 - 1e-15), -1 + 1e-15))
    se = 1.0 / math.sqrt(k - 3)
    return math.tanh(z - zc * se), math.tanh(z + zc * se)


def summarize(x: Sequence[float]) -> dict:
    """Moments, quantiles, 95% intervals and normality z-scores of a sample."""
    x = np.asarray(x, dtype=float)
    k = len(x)
    mean = float(np.mean(x))
    var = float(np.var(x, ddof=1)) if k > 1 else math.nan
    se = math.sqrt(var / k) if k > 1 else math.nan
    q25, med, q75 = (float(v) for v in np.percentile(x, [25, 50, 75]))
    out = {
        "count": k,
        "mean": mean,
        "mean_ci95": [mean - 1.96 * se, mean + 1.96 * se],
        "median": med,
        "median_ci95": list(median_ci(x)),
        "q25": q25,
        "q75": q75,
        "iqr": q75 - q25,
        "variance": var,
        "variance_ci95": [
            (k - 1) * var / stats.chi2.ppf(0.975, k - 1),
            (k - 1) * var / stats.chi2.ppf(0.025, k - 1),
        ] if k > 1 else [math.nan, math.nan],
        "skewness": None,
        "excess_kurtosis": None,
        "skew_z": None,
        "kurtosis_z": None,
    }
    if k > 2 and var > 0:
        out["skewness"] = float(stats.skew(x, bias=False))
        out["excess_kurtosis"] = float(stats.kurtosis(x, fisher=True, bias=False))
    if k >= MIN_REPLICATES_FOR_TESTS and var > 0:
        out["skew_z"] = float(stats.skewtest(x).statistic)
        out["kurtosis_z"] = float(stats.kurtosistest(x).statistic)
    return out


def _regression(x, y) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 2:
        return {"slope": None, "stderr": None, "intercept": None, "points": int(ok.sum())}
    if ok.sum() == 2:
        slope = float((y[ok][1] - y[ok][0]) / (x[ok][1] - x[ok][0]))
        return {"slope": slope, "stderr": None, "intercept": float(y[ok][0] - slope * x[ok][0]), "points": 2}
    res = stats.linregress(x[ok], y[ok])
    return {"slope": float(res.slope), "stderr": float(res.stderr),
            "intercept": float(res.intercept), "points": int(ok.sum())}


@dataclass
class Verdict:
    """Outcome of one acceptance rule, always with its effect size and interval."""

    rule: str
    description: str
    passed: bool
    effect_size: Any
    ci95: Any
    threshold: Any
    n: Optional[int] = None
    note: Optional[str] = None

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _clean(obj):
    """Make a structure JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite(obj)
    if isinstance(obj, Regime):
        return obj.value
    return obj


@dataclass
class ExperimentReport:
    config: dict
    per_n: list
    regressions: dict
    verdicts: list
    runtime: dict
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(v["passed"] for v in self.verdicts)

    def verdict(self, rule: str) -> dict:
        for v in self.verdicts:
            if v["rule"] == rule:
                return v
        raise KeyError(rule)

    def to_dict(self) -> dict:
        return _clean({
            "schema_version": self.schema_version,
            "config": self.config,
            "per_n": self.per_n,
            "regressions": self.regressions,
            "verdicts": self.verdicts,
            "runtime": self.runtime,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def write(self, dest, csv_dest=None) -> None:
        with open(dest, "w") as fh:
            fh.write(self.to_json())
        if csv_dest is not None:
            write_summary_csv(self, csv_dest)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        required = ("config", "per_n", "regressions", "verdicts", "runtime")
        if not isinstance(data, dict) or any(k not in data for k in required):
            raise ConfigurationError(f"report must be an object with keys {', '.join(required)}")
        if not data["per_n"]:
            raise ConfigurationError("report has no per-n entries")
        return cls(data["config"], data["per_n"], data["regressions"], data["verdicts"], data["runtime"],
                   data.get("schema_version", SCHEMA_VERSION))

    @classmethod
    def read(cls, src) -> "ExperimentReport":
        try:
            with open(src) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{src}: not valid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigurationError(f"cannot read report {src}: {exc}") from None
        return cls.from_dict(data)


_CSV_FIELDS = ("n", "metric", "count", "mean", "median", "median_ci_lo", "median_ci_hi", "iqr",
               "variance", "skewness", "excess_kurtosis", "skew_z", "kurtosis_z")


def write_summary_csv(report: ExperimentReport, dest) -> None:
    """One row per (n, metric) summary in the report."""
    data = report.to_dict()
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_FIELDS)
        for entry in data["per_n"]:
            for metric, summ in entry.items():
                if not isinstance(summ, dict) or "median" not in summ:
                    continue
                ci = summ.get("median_ci95") or [None, None]
                row = [entry.get("n"), metric, summ["count"], summ["mean"], summ["median"], ci[0], ci[1],
                       summ["iqr"], summ["variance"], summ["skewness"], summ["excess_kurtosis"],
                       summ["skew_z"], summ["kurtosis_z"]]
                w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])


# ---------------------------------------------------------------------------
# execution plumbing
# ---------------------------------------------------------------------------


def _run_replicates(func: Callable[[int], Any], replicates: int, threads: int) -> list:
    """func(r) for r = 0..replicates-1, returned in replicate order."""
    threads = max(1, int(threads or 1))
    if threads == 1:
        return [func(r) for r in range(replicates)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, range(replicates)))


def _simulate(cfg: ExperimentConfig, replicate: int) -> FbmPath:
    """Finest-frequency path of replicate r, relabelled with the assumed H when they differ."""
    path = simulate_fbm(
        cfg.n_grid[-1], cfg.path_hurst, cfg.sigma, cfg.horizon, cfg.seed,
        replicate=replicate, oversample=cfg.oversample,
        coarsest=cfg.n_grid[0] if len(cfg.n_grid) > 1 else None,
    )
    if cfg.path_hurst != cfg.hurst:
        path = dataclasses.replace(path, hurst=as_hurst(cfg.hurst))
    return path


def _at(path: FbmPath, n: int) -> FbmPath:
    return path if n == path.n else path.subsample(path.n // n)


def _oracle(cfg: ExperimentConfig, path: FbmPath, times) -> dict:
    m = path.n * cfg.refinement
    eps = cfg.epsilon_factor * float(m) ** (-cfg.hurst)
    values, eps, m, method = local_time_path(path, cfg.level, times, eps, cfg.refinement)
    est = occupation_local_time_oracle(path, cfg.level, cfg.horizon, eps, cfg.refinement)
    return {"path": values, "final": est.value, "delta": est.stability_delta, "flagged": est.flagged,
            "bandwidth": eps, "grid_frequency": m, "method": est.method}


def _oracle_summary(records: list) -> dict:
    first = records[0]["oracle"]
    deltas = np.array([r["oracle"]["delta"] for r in records])
    flagged = sum(bool(r["oracle"]["flagged"]) for r in records)
    return {
        "bandwidth": first["bandwidth"],
        "grid_frequency": first["grid_frequency"],
        "method": first["method"],
        "stability_delta_median": float(np.median(deltas)),
        "stability_delta_max": float(np.max(deltas)),
        "flagged": int(flagged),
        "flagged_fraction": flagged / len(records),
    }


def _runtime(cfg: ExperimentConfig, started: float, generators) -> dict:
    out = {
        "replicate_seeds": {
            "seed": cfg.seed,
            "replicates": cfg.replicates,
            "derivation": "Philox(SeedSequence(seed, spawn_key=(replicate,)))",
        },
        "generators": sorted(set(generators)),
    }
    if cfg.record_wall_clock:
        out["wall_clock_seconds"] = time.perf_counter() - started
    return out


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# consistency of V(f) and V(g)
# ---------------------------------------------------------------------------


def _resolve_statistic(cfg: ExperimentConfig):
    f = get_functional(cfg.functional)
    if isinstance(f, BivariateF):
        report = check_condition_A_gamma(f, 2.0)
        if not report.admissible:
            raise ConfigurationError(f"functional {f.name!r} is not admissible: {report.message}")
        return f, float(limit_constant(f, cfg.sigma)), report.as_dict()
    if isinstance(f, KernelG):
        return f, kernel_limit_constant(f), {"functional": f.name, "l1_norm": f.l1_norm, "admissible": True}
    raise ConfigurationError(f"functional {cfg.functional!r} cannot be used in a consistency experiment")


def run_consistency_experiment(config: ExperimentConfig, threads: int = 1, *, functional=None) -> ExperimentReport:
    """V(f)_t^n against c * L_t(x) over ``n_grid``; c is the limit constant of f.

    ``functional`` may pass a :class:`BivariateF` or :class:`KernelG` object
    directly instead of the registered name in the config.  Admissibility is
    checked before anything is simulated.
    """
    started = time.perf_counter()
    cfg = config.replace(kind="consistency").resolved()
    if functional is None:
        f, c, admissibility = _resolve_statistic(cfg)
    else:
        f = functional
        if isinstance(f, BivariateF):
            rep = check_condition_A_gamma(f, 2.0)
            if not rep.admissible:
                raise ConfigurationError(f"functional {f.name!r} is not admissible: {rep.message}")
            c, admissibility = float(limit_constant(f, cfg.sigma)), rep.as_dict()
        elif isinstance(f, KernelG):
            c, admissibility = kernel_limit_constant(f), {"functional": f.name, "admissible": True}
        else:
            raise ConfigurationError("functional must be a BivariateF or KernelG")
        cfg = cfg.replace(functional=f.name)
    logger.info("consistency experiment %s: functional=%s c=%.12g", cfg.name, f.name, c)
    times = cfg.time_grid()

    def one(r: int) -> dict:
        path = _simulate(cfg, r)
        oracle = _oracle(cfg, path, times)
        rows = []
        for n in cfg.n_grid:
            p = _at(path, n)
            if isinstance(f, KernelG):
                stat = v_statistic_univariate(p, f, cfg.un_exponent, cfg.level)
            else:
                stat = v_statistic_bivariate(p, f, cfg.un_exponent, cfg.level)
            vt = np.array([stat.at(t) for t in times])
            target = c * oracle["path"]
            v1 = float(vt[-1])
            rows.append({
                "statistic": v1,
                "error": abs(v1 - c * oracle["final"]),
                "ratio": v1 / (c * oracle["final"]) if c != 0 and oracle["final"] > 0 else math.nan,
                "sup_error": float(np.max(np.abs(vt - target))),
            })
        return {"oracle": oracle, "rows": rows, "generator": path.generator.value}

    records = _run_replicates(one, cfg.replicates, threads)
    oracle_info = _oracle_summary(records)
    oracle_info["local_time"] = summarize([r["oracle"]["final"] for r in records])

    per_n = []
    for j, n in enumerate(cfg.n_grid):
        entry = {"n": n}
        for metric in ("statistic", "error", "sup_error", "ratio"):
            vals = np.array([r["rows"][j][metric] for r in records])
            if metric == "ratio" and not np.all(np.isfinite(vals)):
                entry[metric] = None
                continue
            entry[metric] = summarize(vals)
        entry["oracle"] = oracle_info
        per_n.append(entry)

    med_err = [e["error"]["median"] for e in per_n]
    med_sup = [e["sup_error"]["median"] for e in per_n]
    logn = np.log(np.array(cfg.n_grid, dtype=float))
    regressions = {
        "log_median_error_vs_log_n": _regression(logn, np.log(np.where(np.array(med_err) > 0, med_err, np.nan))),
        "log_median_sup_error_vs_log_n": _regression(logn, np.log(np.where(np.array(med_sup) > 0, med_sup, np.nan))),
    }

    verdicts = []
    all_zero = all(e["error"]["q75"] == 0 and e["error"]["q25"] == 0 and e["error"]["mean"] == 0 for e in per_n)
    decreasing = _strictly_decreasing(med_err) if len(med_err) > 1 else True
    verdicts.append(Verdict(
        rule="consistency.median-error-decreasing",
        description=f"median |V({f.name})_T - c L_T(x)| strictly decreasing over n_grid (or identically zero)",
        passed=bool(decreasing or all_zero),
        effect_size=med_err,
        ci95=[e["error"]["median_ci95"] for e in per_n],
        threshold="strictly decreasing",
    ).as_dict())
    last = per_n[-1]
    if c == 0:
        verdicts.append(Verdict(
            rule="consistency.zero-functional",
            description="the limit constant is 0, so every error must vanish identically",
            passed=bool(all_zero),
            effect_size=max(e["error"]["mean"] for e in per_n),
            ci95=None, threshold=0.0, n=cfg.n_grid[-1],
        ).as_dict())
    else:
        ratio = last["ratio"]
        tol = cfg.tolerance
        med = ratio["median"] if ratio else math.nan
        verdicts.append(Verdict(
            rule="consistency.final-ratio",
            description=f"median V({f.name})_T / (c L_T(x)) within [1-tol, 1+tol] at the finest n",
            passed=bool(ratio is not None and abs(med - 1.0) <= tol),
            effect_size=med,
            ci95=ratio["median_ci95"] if ratio else None,
            threshold=[1.0 - tol, 1.0 + tol], n=cfg.n_grid[-1],
            note="oracle flagged on {} of {} replicates".format(oracle_info["flagged"], cfg.replicates),
        ).as_dict())

    runtime = _runtime(cfg, started, [r["generator"] for r in records])
    runtime["limit_constant"] = c
    runtime["admissibility"] = admissibility
    return ExperimentReport(cfg.to_dict(), per_n, regressions, verdicts, runtime)


# ---------------------------------------------------------------------------
# regimes of the centered quadratic variation of |X|
# ---------------------------------------------------------------------------


def _regime_constant(cfg: ExperimentConfig) -> float:
    if cfg.crossing_constant == "literal":
        return abs_normal_moment(3, cfg.sigma) / 3.0
    return crossing_constant(cfg.sigma)


def _target_variance(cfg: ExperimentConfig) -> Optional[float]:
    try:
        return asymptotic_variance_v2(cfg.sigma, cfg.hurst, tol=1e-10)
    except FracltError:
        return None


def _z_verdict(rule, description, summ, key, threshold, n) -> dict:
    z = summ.get(key)
    return Verdict(rule=rule, description=description,
                   passed=bool(z is not None and abs(z) < threshold),
                   effect_size=summ.get("skewness" if key == "skew_z" else "excess_kurtosis"),
                   ci95=None, threshold=threshold, n=n, note=f"z = {z}").as_dict()


def _variance_verdict(rule, description, summ, target, tol, n) -> dict:
    var = summ["variance"]
    passed = target is not None and abs(var - target) <= tol * target
    return Verdict(rule=rule, description=description, passed=bool(passed),
                   effect_size=(var / target) if target else None,
                   ci95=[lim / target for lim in summ["variance_ci95"]] if target else None,
                   threshold=[1.0 - tol, 1.0 + tol], n=n,
                   note=f"sample variance {var!r}, target {target!r}").as_dict()


def run_regime_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Scaled S_n(T) over ``n_grid`` with the checks of the selected regime.

    H decides the regime unless ``check_regime`` overrides it, which requires
    ``allow_regime_mismatch`` (negative controls).  ``path_hurst`` simulates
    data with a different H than the one the checks assume.
    """
    started = time.perf_counter()
    cfg = config.replace(kind="regime").resolved()
    regime = Regime(cfg.check_regime)
    limit = regime_limit(cfg.hurst, cfg.sigma, regime)
    const = _regime_constant(cfg)
    oracle_needed = regime in (Regime.LT, Regime.BOUNDARY)
    times = cfg.time_grid()
    own = classify_regime(cfg.hurst)
    logger.info("regime experiment %s: H=%s checks=%s constant=%.12g", cfg.name, cfg.hurst, regime.value, const)

    def one(r: int) -> dict:
        path = _simulate(cfg, r)
        out = {"generator": path.generator.value, "S": [], "S_path": None}
        if oracle_needed:
            out["oracle"] = _oracle(cfg, path, times)
        for n in cfg.n_grid:
            stat = centered_quadvar_abs(_at(path, n), cfg.sigma)
            out["S"].append(stat.final)
            if n == cfg.n_grid[-1]:
                idx = [grid_steps(n, t) for t in times]
                out["S_path"] = stat.values[idx]
        return out

    records = _run_replicates(one, cfg.replicates, threads)
    S = np.array([r["S"] for r in records])                      # replicates x len(n_grid)
    L = np.array([r["oracle"]["final"] for r in records]) if oracle_needed else None
    ns = np.array(cfg.n_grid, dtype=float)
    scaled = S * ns ** limit.scaling_exponent
    n_max = cfg.n_grid[-1]
    tol, zt = cfg.tolerance, cfg.z_threshold

    per_n = []
    for j, n in enumerate(cfg.n_grid):
        entry = {"n": n, "S": summarize(S[:, j]), "scaled": summarize(scaled[:, j])}
        if regime is Regime.LT:
            entry["ratio"] = summarize(scaled[:, j] / (const * L))
        if regime is Regime.BOUNDARY:
            entry["residual"] = summarize(scaled[:, j] - const * L)
        if oracle_needed:
            entry["oracle"] = _oracle_summary(records)
        per_n.append(entry)

    logn = np.log(ns)
    regressions: dict = {
        "log_variance_S_vs_log_n": _regression(logn, np.log([e["S"]["variance"] for e in per_n])),
    }
    verdicts = []
    last = per_n[-1]

    if regime is Regime.LT:
        iqrs = [e["ratio"]["iqr"] for e in per_n]
        regressions["log_ratio_iqr_vs_log_n"] = _regression(logn, np.log(iqrs))
        med = last["ratio"]["median"]
        verdicts.append(Verdict(
            rule="regime.lt.median-ratio",
            description="median n^{H-1} S_n(T) / (constant * L_T(0)) within [1-tol, 1+tol] at the finest n",
            passed=bool(abs(med - 1.0) <= tol), effect_size=med, ci95=last["ratio"]["median_ci95"],
            threshold=[1.0 - tol, 1.0 + tol], n=n_max,
            note=f"constant {const!r} ({cfg.crossing_constant})",
        ).as_dict())
        verdicts.append(Verdict(
            rule="regime.lt.iqr-shrinking",
            description="interquartile range of the ratio strictly decreasing over n_grid",
            passed=bool(len(iqrs) > 1 and _strictly_decreasing(iqrs)), effect_size=iqrs,
            ci95=None, threshold="strictly decreasing",
            note=f"log-log slope {regressions['log_ratio_iqr_vs_log_n']['slope']}",
        ).as_dict())

    elif regime is Regime.BOUNDARY:
        target = _target_variance(cfg)
        res = scaled[:, -1] - const * L
        rs = last["residual"]
        verdicts.append(_variance_verdict(
            "regime.boundary.residual-variance",
            "variance of n^{-1/2} S_n(T) - constant * L_T(0) within tol of v^2",
            rs, target, tol, n_max))
        se = math.sqrt(rs["variance"] / rs["count"])
        verdicts.append(Verdict(
            rule="regime.boundary.residual-mean",
            description="residual mean zero (|mean| / standard error below the z threshold)",
            passed=bool(abs(rs["mean"]) < zt * se), effect_size=rs["mean"], ci95=rs["mean_ci95"],
            threshold=zt, n=n_max, note=f"z = {rs['mean'] / se}",
        ).as_dict())
        verdicts.append(_z_verdict("regime.boundary.residual-skewness", "residual skewness z-score", rs,
                                   "skew_z", zt, n_max))
        verdicts.append(_z_verdict("regime.boundary.residual-kurtosis", "residual excess-kurtosis z-score", rs,
                                   "kurtosis_z", zt, n_max))
        rho = float(np.corrcoef(res, L)[0, 1])
        lo, hi = fisher_ci(rho, len(res))
        verdicts.append(Verdict(
            rule="regime.boundary.residual-correlation",
            description="95% Fisher interval of corr(residual, L_T(0)) contains 0",
            passed=bool(lo is not None and lo <= 0.0 <= hi), effect_size=rho, ci95=[lo, hi],
            threshold=0.0, n=n_max,
            note="uncorrelatedness only; full independence is not tested",
        ).as_dict())

    elif regime is Regime.CLT:
        target = _target_variance(cfg)
        sc = last["scaled"]
        verdicts.append(_variance_verdict("regime.clt.variance", "variance of n^{-1/2} S_n(T) within tol of v^2",
                                          sc, target, tol, n_max))
        verdicts.append(_z_verdict("regime.clt.skewness", "skewness z-score of n^{-1/2} S_n(T)", sc,
                                   "skew_z", zt, n_max))
        verdicts.append(_z_verdict("regime.clt.kurtosis", "excess-kurtosis z-score of n^{-1/2} S_n(T)", sc,
                                   "kurtosis_z", zt, n_max))
        paths = np.array([r["S_path"] for r in records]) * float(n_max) ** limit.scaling_exponent
        var_t = np.var(paths, axis=0, ddof=1)
        reg = _regression(np.log(times), np.log(var_t))
        regressions["log_variance_vs_log_t"] = reg
        slope, err = reg["slope"], reg["stderr"]
        verdicts.append(Verdict(
            rule="regime.clt.variance-linear-in-t",
            description="log Var(n^{-1/2} S_n(t)) against log t has slope 1 within tol",
            passed=bool(slope is not None and abs(slope - 1.0) <= 0.15),
            effect_size=slope,
            ci95=[slope - 1.96 * err, slope + 1.96 * err] if err is not None else None,
            threshold=[0.85, 1.15], n=n_max,
        ).as_dict())

    else:
        reg = regressions["log_variance_S_vs_log_n"]
        target = 4.0 * cfg.hurst - 2.0
        slope, err = reg["slope"], reg["stderr"]
        verdicts.append(Verdict(
            rule="regime.rosenblatt.log-variance-slope",
            description="slope of log Var S_n(T) against log n equals 4H-2 within tol",
            passed=bool(slope is not None and abs(slope - target) <= tol), effect_size=slope,
            ci95=[slope - 1.96 * err, slope + 1.96 * err] if err is not None else None,
            threshold=[target - tol, target + tol],
        ).as_dict())
        sc = last["scaled"]
        kz = sc["kurtosis_z"]
        verdicts.append(Verdict(
            rule="regime.rosenblatt.excess-kurtosis",
            description="excess kurtosis of n^{1-2H} S_n(T) positive with z above the threshold",
            passed=bool(kz is not None and kz > zt), effect_size=sc["excess_kurtosis"], ci95=None,
            threshold=zt, n=n_max, note=f"z = {kz}",
        ).as_dict())

    runtime = _runtime(cfg, started, [r["generator"] for r in records])
    runtime["regime"] = {"checked": regime.value, "of_hurst": own.value, "mismatch": regime is not own,
                         "path_hurst": cfg.path_hurst, "scaling_exponent": limit.scaling_exponent,
                         "constant": const, "target_variance": _target_variance(cfg)}
    return ExperimentReport(cfg.to_dict(), per_n, regressions, verdicts, runtime)


# ---------------------------------------------------------------------------
# generator audit
# ---------------------------------------------------------------------------


def _audit_pairs(cfg: ExperimentConfig, points: int) -> list:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(_AUX_KEY,))))
    idx = rng.integers(1, points, size=(cfg.audit_pairs, 2))
    return sorted((int(min(a, b)), int(max(a, b))) for a, b in idx)


def run_generator_audit(config: ExperimentConfig, generator: Optional[Callable] = None,
                        threads: int = 1) -> ExperimentReport:
    """Compare sample covariances of the generator with sigma^2 times the fBm covariance.

    The audit runs at the finest n of the grid.  ``generator`` defaults to
    :func:`simulate_fbm` and is called with the same keyword arguments; a
    replacement must return an :class:`FbmPath` or an array of grid values.
    The standard error of each sample covariance uses the Gaussian fourth
    moment Var(X_s X_t) = C_ss C_tt + C_st^2.
    """
    started = time.perf_counter()
    cfg = config.replace(kind="audit").resolved()
    gen = generator or simulate_fbm
    n = cfg.n_grid[-1]
    points = grid_steps(n, cfg.horizon) + 2
    pairs = _audit_pairs(cfg, points)
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])

    def one(r: int):
        out = gen(n=n, hurst=cfg.path_hurst, sigma=cfg.sigma, horizon=cfg.horizon, seed=cfg.seed, replicate=r)
        if isinstance(out, FbmPath):
            values, kind = out.values, out.generator.value
        else:
            values, kind = np.asarray(out, dtype=float), "Injected"
        if values.shape != (points,):
            raise ConfigurationError(f"generator returned {values.shape[0]} points, expected {points}")
        return values[ii] * values[jj], kind

    results = _run_replicates(one, cfg.replicates, threads)
    prods = np.array([p for p, _ in results])
    emp = prods.mean(axis=0)
    s, t = ii / n, jj / n
    c_st = cfg.sigma**2 * fbm_covariance(s, t, cfg.hurst)
    c_ss = cfg.sigma**2 * fbm_covariance(s, s, cfg.hurst)
    c_tt = cfg.sigma**2 * fbm_covariance(t, t, cfg.hurst)
    se = np.sqrt((c_ss * c_tt + c_st**2) / cfg.replicates)
    z = (emp - c_st) / se
    pair_rows = [
        {"s": float(a), "t": float(b), "empirical": float(e), "exact": float(c), "se": float(q), "z": float(zz)}
        for a, b, e, c, q, zz in zip(s, t, emp, c_st, se, z)
    ]
    per_n = [{"n": n, "pairs": pair_rows, "max_abs_z": float(np.max(np.abs(z)))}]
    worst = int(np.argmax(np.abs(z)))
    verdicts = [Verdict(
        rule="audit.covariance",
        description=f"all {len(pairs)} sampled covariances within {cfg.tolerance} Monte Carlo standard errors",
        passed=bool(np.all(np.abs(z) < cfg.tolerance)),
        effect_size=float(emp[worst] - c_st[worst]),
        ci95=[float(emp[worst] - 1.96 * se[worst] - c_st[worst]), float(emp[worst] + 1.96 * se[worst] - c_st[worst])],
        threshold=cfg.tolerance, n=n,
        note=f"max |z| = {float(np.max(np.abs(z)))!r} at (s, t) = ({float(s[worst])!r}, {float(t[worst])!r})",
    ).as_dict()]
    regressions = {"z_scores": {"mean": float(np.mean(z)), "rms": float(np.sqrt(np.mean(z * z)))}}
    runtime = _runtime(cfg, started, [k for _, k in results])
    return ExperimentReport(cfg.to_dict(), per_n, regressions, verdicts, runtime)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Dispatch on the (possibly inferred) experiment kind."""
    kind = config.kind or _infer_kind(config.name)
    if kind == "audit":
        return run_generator_audit(config, threads=threads)
    if kind == "regime":
        return run_regime_experiment(config, threads)
    return run_consistency_experiment(config, threads)
