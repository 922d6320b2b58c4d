"""Local-time oracle and the high-frequency statistics V(g), V(f).

Summation conventions::

    V(g)_t = (u_n / n) * sum_{i=1}^{[nt]} g(u_n (X_{i/n} - x))
    V(f)_t = (u_n / n) * sum_{i=0}^{[nt]} f(u_n (X_{i/n} - x), n^H Delta_i X)

with u_n = n^a.  Statistic paths hold the partial sums at every grid time
i/n, i = 0..[nT], accumulated in index order.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .fbm import FbmPath, grid_steps
from .functionals import BivariateF, KernelG, get_functional

logger = logging.getLogger(__name__)

#: Relative change under refinement doubling above which an oracle estimate is flagged.
STABILITY_THRESHOLD = 0.15
#: Default oracle bandwidth is EPSILON_FACTOR * m^{-H}.
EPSILON_FACTOR = 4.0


@dataclass(frozen=True, eq=False)
class StatisticPath:
    """Partial sums of a statistic at the grid times i/n."""

    times: np.ndarray
    values: np.ndarray
    config: dict = field(default_factory=dict)

    def at(self, t: float) -> float:
        n = self.config.get("n")
        idx = grid_steps(n, t) if n else int(np.searchsorted(self.times, t, side="right") - 1)
        if idx < 0 or idx >= len(self.values):
            raise ConfigurationError(f"time {t} outside the statistic grid")
        return float(self.values[idx])

    @property
    def final(self) -> float:
        return float(self.values[-1])


def write_statistic_csv(stat: StatisticPath, dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(stat.times, stat.values):
            w.writerow([f"{t:.17g}", f"{v:.17g}"])


def read_statistic_csv(src) -> StatisticPath:
    with open(src, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["t", "value"]:
            raise ConfigurationError(f"{src}: expected header 't,value', got {header}")
        try:
            rows = [(float(r[0]), float(r[1])) for r in reader if r]
        except (ValueError, IndexError) as exc:
            raise ConfigurationError(f"{src}: malformed row ({exc})") from None
    if not rows:
        raise ConfigurationError(f"{src}: no data rows")
    arr = np.array(rows)
    return StatisticPath(arr[:, 0], arr[:, 1], {"source": str(src)})


def _resolve(functional, kind):
    if isinstance(functional, str):
        functional = get_functional(functional)
    if not isinstance(functional, kind):
        raise ConfigurationError(
            f"expected a {kind.__name__}, got {type(functional).__name__} ({getattr(functional, 'name', functional)!r})"
        )
    return functional


def _check_exponent(a: float) -> list:
    if not 0.0 < a < 1.0:
        msg = f"u_n = n^{a}: u_n -> inf and u_n/n -> 0 need 0 < exponent < 1"
        warnings.warn(msg, stacklevel=3)
        return [msg]
    return []


def v_statistic_univariate(path: FbmPath, g, un_exponent: float, x: float = 0.0) -> StatisticPath:
    """V(g)_t for every grid t; the sum starts at i = 1."""
    g = _resolve(g, KernelG)
    notes = _check_exponent(un_exponent)
    n = path.n
    u = float(n) ** un_exponent
    X = path.values[: path.steps + 1]
    terms = np.asarray(g.eval(u * (X - x)), dtype=float)
    terms[0] = 0.0
    values = (u / n) * np.cumsum(terms)
    cfg = dict(statistic="V(g)", functional=g.name, un_exponent=un_exponent, level=x,
               n=n, hurst=path.hurst.value, sigma=path.sigma, warnings=notes)
    return StatisticPath(np.arange(path.steps + 1) / n, values, cfg)


def v_statistic_bivariate(
    path: FbmPath, f, un_exponent: Optional[float] = None, x: float = 0.0, *, increment_scale: str = "hurst"
) -> StatisticPath:
    """V(f)_t for every grid t; the sum starts at i = 0.

    The level argument is scaled by u_n = n^un_exponent (default H).  The
    increment argument is scaled by n^H (``increment_scale="hurst"``) so
    that it is N(0, sigma^2) as the limit theorem requires; pass
    ``increment_scale="un"`` to scale it by u_n as well.  Both coincide for
    u_n = n^H.
    """
    f = _resolve(f, BivariateF)
    h = path.hurst.value
    a = h if un_exponent is None else float(un_exponent)
    notes = _check_exponent(a)
    n = path.n
    u = float(n) ** a
    if increment_scale == "hurst":
        v = float(n) ** h
    elif increment_scale == "un":
        v = u
    else:
        raise ConfigurationError(f"increment_scale must be 'hurst' or 'un', got {increment_scale!r}")
    X = path.values
    k = path.steps + 1
    y = u * (X[:k] - x)
    z = v * (X[1 : k + 1] - X[:k])
    terms = np.asarray(f.eval(y, z), dtype=float)
    values = (u / n) * np.cumsum(terms)
    cfg = dict(statistic="V(f)", functional=f.name, un_exponent=a, level=x, n=n,
               hurst=h, sigma=path.sigma, increment_scale=increment_scale, warnings=notes)
    return StatisticPath(np.arange(k) / n, values, cfg)


def crossing_count(path: FbmPath, x: float = 0.0, t: Optional[float] = None) -> int:
    """Number of i <= [nt] with (X_{i/n} - x)(X_{(i+1)/n} - x) < 0."""
    k = (path.steps if t is None else grid_steps(path.n, t)) + 1
    d = path.values - x
    return int(np.count_nonzero(d[:k] * d[1 : k + 1] < 0))


# ---------------------------------------------------------------------------
# local-time oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalTimeEstimate:
    level: float
    time: float
    value: float
    bandwidth: float
    refinement: int
    grid_frequency: int
    stability_delta: float
    flagged: bool
    method: str

    def as_dict(self):
        return dict(self.__dict__)


def _grid_at(path: FbmPath, factor: int):
    """Trajectory at frequency n*factor: exact if simulated that fine, else linear interpolation."""
    fine = path.fine_grid(factor)
    if fine is not None:
        return fine, "exact"
    X = path.values
    coarse_idx = np.arange(len(X), dtype=float)
    fine_idx = np.arange((len(X) - 1) * factor + 1) / factor
    return np.interp(fine_idx, coarse_idx, X), "interpolated"


def occupation_density(grid: np.ndarray, m: int, x: float, epsilon: float, times) -> np.ndarray:
    """(1/2eps) * left Riemann sum of the occupation time of [x-eps, x+eps] up to each t."""
    inside = (np.abs(grid - x) <= epsilon).astype(np.int64)
    counts = np.concatenate([[0], np.cumsum(inside)])
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.empty(times.shape)
    for j, t in enumerate(times):
        k = grid_steps(m, t)
        if k >= len(grid):
            raise ConfigurationError(f"time {t} beyond the trajectory")
        frac = m * t - k
        occ = counts[k] + (frac * inside[k] if frac > 1e-12 else 0.0)
        out[j] = occ / m / (2.0 * epsilon)
    return out


def default_refinement(path: FbmPath) -> int:
    return path.oversample // 2 if path.oversample >= 2 else 1


def default_epsilon(m: int, hurst: float) -> float:
    return EPSILON_FACTOR * float(m) ** (-hurst)


def local_time_path(
    path: FbmPath, x: float, times, epsilon: Optional[float] = None, refinement: Optional[int] = None
):
    """Oracle estimates at several times sharing one bandwidth; returns (values, epsilon, m, method)."""
    r = default_refinement(path) if refinement is None else int(refinement)
    if r < 1:
        raise ConfigurationError("refinement must be >= 1")
    m = path.n * r
    eps = default_epsilon(m, path.hurst.value) if epsilon is None else float(epsilon)
    if not eps > 0:
        raise ConfigurationError("epsilon must be positive")
    grid, method = _grid_at(path, r)
    return occupation_density(grid, m, x, eps, times), eps, m, method


def occupation_local_time_oracle(
    path: FbmPath,
    x: float = 0.0,
    t: Optional[float] = None,
    epsilon: Optional[float] = None,
    refinement: Optional[int] = None,
) -> LocalTimeEstimate:
    """Estimate L_t(x) as the occupation time of [x - eps, x + eps] divided by 2 eps.

    The occupation time is a Riemann sum on the grid of frequency
    ``m = refinement * n``.  That grid is taken from the path's fine
    trajectory when it was simulated with enough oversampling, otherwise the
    observations are linearly interpolated.  ``stability_delta`` is the
    relative change of the estimate when the grid is doubled and the
    bandwidth halved; estimates above 0.15 are flagged, not rejected.
    """
    t = path.horizon if t is None else float(t)
    if t > path.horizon + 1e-12 or t < 0:
        raise ConfigurationError(f"t={t} outside [0, horizon={path.horizon}]")
    vals, eps, m, method = local_time_path(path, x, [t], epsilon, refinement)
    r = m // path.n
    grid2, method2 = _grid_at(path, 2 * r)
    val2 = occupation_density(grid2, 2 * m, x, eps / 2.0, [t])[0]
    val = float(vals[0])
    denom = max(val, val2)
    delta = abs(val2 - val) / denom if denom > 0 else 0.0
    flagged = delta > STABILITY_THRESHOLD
    if flagged:
        logger.debug("local-time oracle unstable at x=%g t=%g: delta=%.3f", x, t, delta)
    return LocalTimeEstimate(
        level=float(x), time=t, value=val, bandwidth=eps, refinement=r, grid_frequency=m,
        stability_delta=float(delta), flagged=bool(flagged),
        method=method if method == method2 else f"{method}/{method2}",
    )
