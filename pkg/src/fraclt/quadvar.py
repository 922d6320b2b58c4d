"""Centered quadratic variation of |X| and its regime-dependent scalings.

    S_n(t) = sum_{i=0}^{[nt]} ((n^H Delta_i |X|)^2 - sigma^2)

splits pathwise as ``S_n(t)/n = M_t - 2 n^{-H} V(f2)_t`` where ``M_t`` is the
centered quadratic variation of X itself.  The correction comes from the
steps on which X changes sign, through the pointwise identity

    (Delta|X|)^2 - (Delta X)^2 = -4 |X_i X_{i+1}| 1{X_i X_{i+1} < 0}

(by the reverse triangle inequality the left side is never positive).  In
consequence the local-time term in the limits for H <= 1/2 carries the
constant ``-(2/3) E|N|^3``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AlgebraViolationError, ConfigurationError, NumericalError
from .fbm import FbmPath, Regime, classify_regime
from .functionals import abs_normal_moment
from .statistics import StatisticPath, v_statistic_bivariate

#: Pointwise identity residuals above this times max|X|^2 signal an indexing bug.
ALGEBRA_TOL = 1e-12
#: The summed decomposition accumulates roundoff over [nT] terms, so it gets more slack.
SUM_TOL = 1e-9


@dataclass(frozen=True)
class RegimeLimit:
    """Scaling and limit shape of S_n in one regime (limits are descriptors only)."""

    regime: Regime
    scaling_exponent: float
    limit_descriptor: dict
    checkable_signatures: tuple

    def factor(self, n: int) -> float:
        return float(n) ** self.scaling_exponent


def crossing_constant(sigma: float = 1.0) -> float:
    """Coefficient of L_t(0) in the limit of the scaled S_n for H <= 1/2: -(2/3) E|N|^3."""
    return -2.0 * abs_normal_moment(3, sigma) / 3.0


def regime_limit(hurst: float, sigma: float = 1.0, regime: Optional[Regime] = None) -> RegimeLimit:
    """The limit description of S_n for H (or for an explicitly chosen regime)."""
    h = float(hurst)
    reg = classify_regime(h) if regime is None else Regime(regime)
    c3 = crossing_constant(sigma)
    if reg is Regime.LT:
        return RegimeLimit(reg, h - 1.0,
                           {"kind": "local-time multiple", "constant": c3, "level": 0.0},
                           ("median ratio to constant * L_t(0)", "IQR shrinking in n"))
    if reg is Regime.BOUNDARY:
        return RegimeLimit(reg, -0.5,
                           {"kind": "v W_t + constant * L_t(0)", "constant": c3,
                            "components": "independent"},
                           ("residual variance v^2", "residual normality", "residual uncorrelated with L"))
    if reg is Regime.CLT:
        return RegimeLimit(reg, -0.5, {"kind": "v W_t"},
                           ("variance v^2", "normality", "variance linear in t"))
    return RegimeLimit(reg, 1.0 - 2.0 * h, {"kind": "sigma^2 R_t", "process": "Rosenblatt"},
                       ("log-variance slope 4H-2", "positive excess kurtosis"))


@dataclass(frozen=True, eq=False)
class QuadVarStatistic:
    times: np.ndarray
    values: np.ndarray
    sigma_assumed: float
    n: int
    hurst: float
    path_meta: dict = field(default_factory=dict)
    sigma_mismatch: bool = False

    @property
    def final(self) -> float:
        return float(self.values[-1])


def _path_meta(path: FbmPath) -> dict:
    return dict(hurst=path.hurst.value, sigma=path.sigma, n=path.n, horizon=path.horizon,
                seed=path.seed, replicate=path.replicate, generator=str(path.generator.value))


def centered_quadvar_abs(path: FbmPath, sigma: Optional[float] = None) -> QuadVarStatistic:
    """S_n(t) at every grid t = i/n, i = 0..[nT]."""
    sigma = path.sigma if sigma is None else float(sigma)
    n, h = path.n, path.hurst.value
    k = path.steps + 1
    a = np.abs(path.values)
    d = (float(n) ** h) * (a[1 : k + 1] - a[:k])
    values = np.cumsum(d * d - sigma**2)
    mismatch = not math.isclose(sigma, path.sigma, rel_tol=1e-12)
    return QuadVarStatistic(np.arange(k) / n, values, sigma, n, h, _path_meta(path), mismatch)


def centered_quadvar(path: FbmPath, sigma: Optional[float] = None) -> np.ndarray:
    """sum_{i<=[nt]} ((n^H Delta_i X)^2 - sigma^2), the X-analogue of S_n."""
    sigma = path.sigma if sigma is None else float(sigma)
    k = path.steps + 1
    d = (float(path.n) ** path.hurst.value) * np.diff(path.values[: k + 1])
    return np.cumsum(d * d - sigma**2)


@dataclass(frozen=True)
class DecompositionCheck:
    pointwise_residual: float
    decomposition_residual: float
    scale: float

    def __float__(self):
        return self.pointwise_residual


def crossing_decomposition_check(path: FbmPath, sigma: Optional[float] = None, *, details: bool = False):
    """Max residual of (Delta|X|)^2 - (Delta X)^2 = -4 |X_i X_{i+1}| 1{X_i X_{i+1} < 0}.

    Also checks ``S_n(t)/n = M_t - 2 n^{-H} V(f2)_t`` along the whole grid.
    Raises :class:`AlgebraViolationError` when either residual exceeds
    ``ALGEBRA_TOL`` (pointwise) or ``SUM_TOL`` (summed) relative to its
    natural scale.
    """
    sigma = path.sigma if sigma is None else float(sigma)
    k = path.steps + 1
    X = path.values[: k + 1]
    peak = float(np.max(np.abs(X)))
    # differences can reach 2 * peak, and their squares must stay finite
    if not math.isfinite(4.0 * peak * peak):
        raise NumericalError("path values too large to square in double precision", {"max_abs": peak})
    lhs = np.diff(np.abs(X)) ** 2 - np.diff(X) ** 2
    prod = X[:-1] * X[1:]
    rhs = np.where(prod < 0, -4.0 * np.abs(prod), 0.0)
    scale = peak * peak
    pointwise = float(np.max(np.abs(lhs - rhs))) if k else 0.0

    n, h = path.n, path.hurst.value
    s_abs = centered_quadvar_abs(path, sigma).values / n
    m_part = centered_quadvar(path, sigma) / n
    v2 = v_statistic_bivariate(path, "f2", h, 0.0).values
    rhs_sum = m_part - 2.0 * float(n) ** (-h) * v2
    dscale = max(1.0, float(np.max(np.abs(s_abs))), float(np.max(np.abs(m_part))))
    decomposition = float(np.max(np.abs(s_abs - rhs_sum)))

    if pointwise > ALGEBRA_TOL * max(scale, 1e-300) or decomposition > SUM_TOL * dscale:
        raise AlgebraViolationError(
            "crossing decomposition violated",
            {"pointwise": pointwise, "decomposition": decomposition, "scale": scale},
        )
    result = DecompositionCheck(pointwise, decomposition, scale)
    return result if details else pointwise


def scaled_statistic(stat: QuadVarStatistic, regime: Optional[RegimeLimit] = None) -> StatisticPath:
    """n^{exponent} S_n(t) for the regime's scaling (default: the path's own regime)."""
    if regime is None:
        regime = regime_limit(stat.hurst, stat.sigma_assumed)
    own = None
    try:
        own = classify_regime(stat.hurst)
    except ConfigurationError:
        pass
    cfg = dict(statistic="scaled S_n", regime=regime.regime.value, scaling_exponent=regime.scaling_exponent,
               n=stat.n, hurst=stat.hurst, sigma=stat.sigma_assumed,
               regime_mismatch=own is not regime.regime, sigma_mismatch=stat.sigma_mismatch)
    return StatisticPath(stat.times, regime.factor(stat.n) * stat.values, cfg)


def estimate_sigma2(path: FbmPath) -> float:
    """n^{2H} sum_{i<[nT]} (Delta_i X)^2 / [nT]; unbiased for sigma^2, never used by the checks."""
    k = path.steps
    if k < 1:
        raise ConfigurationError("need at least one increment")
    d = np.diff(path.values[: k + 1])
    return float(path.n) ** (2 * path.hurst.value) * float(np.sum(d * d)) / k
