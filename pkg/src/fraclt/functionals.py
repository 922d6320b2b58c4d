"""Test functionals for the high-frequency statistics and their limit constants.

Two families live here:

* :class:`KernelG` -- univariate kernels ``g`` for ``V(g)``; the limit of the
  statistic is ``L_t(x) * integral(g)``.
* :class:`BivariateF` -- functions ``f(y, z)`` of the scaled level and scaled
  increment for ``V(f)``, together with a dominating pair ``h1(y) h2(z)``.
  The limit is ``L_t(x) * integral f(y, z) phi_{sigma^2}(z) dy dz``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.special
from scipy.stats import qmc

from .errors import ConfigurationError, NumericalError

logger = logging.getLogger(__name__)

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def abs_normal_moment(p: float, sigma: float = 1.0) -> float:
    """E|N|^p for N ~ N(0, sigma^2)."""
    return sigma**p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# crossing functionals
# ---------------------------------------------------------------------------


def f1_eval(y, z):
    """1{y (y + z) < 0}: the scaled path crosses the level during the step."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    out = (y * (y + z) < 0).astype(float)
    return float(out) if out.ndim == 0 else out


def f2_eval(y, z):
    """-2 y (y + z) 1{y (y + z) < 0}."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    prod = y * (y + z)
    out = np.where(prod < 0, -2.0 * prod, 0.0)
    return float(out) if out.ndim == 0 else out


def _crossing_breakpoints(z):
    return sorted({0.0, -float(z)})


@dataclass(frozen=True)
class KernelG:
    """Univariate kernel g in L^1 for V(g)."""

    name: str
    eval: Callable
    l1_norm: Optional[float] = None

    def __post_init__(self):
        computed = _integrate_abs(self.eval)
        if self.l1_norm is None:
            object.__setattr__(self, "l1_norm", computed)
        elif abs(computed - self.l1_norm) > 0.01 * abs(self.l1_norm):
            raise ConfigurationError(
                f"kernel {self.name!r}: supplied l1_norm {self.l1_norm} but |g| integrates to {computed:.6g}"
            )


def _integrate_abs(g, bound: float = 1e3) -> float:
    pts = [-bound, -1.0, 0.0, 1.0, bound]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = scipy.integrate.quad(lambda y: abs(float(g(y))), a, b, limit=200)
        total += val
    return total


@dataclass(frozen=True)
class BivariateF:
    """A functional f(y, z) with its dominating pair for condition (A-gamma).

    ``breakpoints`` optionally returns the y-locations where ``f(., z)`` is
    discontinuous; quadrature uses them as subdivision points.
    ``inner_closed_form`` optionally gives ``integral f(y, z) dy`` exactly.
    """

    name: str
    eval: Callable
    h1: Callable
    h2: Callable
    gamma: float = 2.0
    breakpoints: Optional[Callable] = field(default=None, repr=False)
    inner_closed_form: Optional[Callable] = field(default=None, repr=False)
    closed_form_constant: Optional[Callable] = field(default=None, repr=False)


def _h1_power(p: float):
    return lambda y: 1.0 / np.maximum(1.0, np.abs(np.asarray(y, dtype=float)) ** p)


def _h2_power(p: float):
    return lambda z: np.maximum(1.0, np.abs(np.asarray(z, dtype=float)) ** p)


def make_f1(p: float = 5.0) -> BivariateF:
    return BivariateF(
        name="f1",
        eval=f1_eval,
        h1=_h1_power(p),
        h2=_h2_power(p),
        gamma=2.0,
        breakpoints=_crossing_breakpoints,
        inner_closed_form=lambda z: np.abs(z),
        closed_form_constant=lambda sigma: sigma * SQRT_2_OVER_PI,
    )


def make_f2(p: float = 5.0) -> BivariateF:
    h1p = _h1_power(p)
    h2p = _h2_power(p)
    return BivariateF(
        name="f2",
        eval=f2_eval,
        h1=lambda y: 4.0 * np.abs(y) * h1p(y),
        h2=lambda z: np.abs(z) * h2p(z),
        gamma=2.0,
        breakpoints=_crossing_breakpoints,
        inner_closed_form=lambda z: np.abs(z) ** 3 / 3.0,
        closed_form_constant=lambda sigma: abs_normal_moment(3, sigma) / 3.0,
    )


def make_zero() -> BivariateF:
    return BivariateF(
        name="zero",
        eval=lambda y, z: np.zeros(np.broadcast(np.asarray(y), np.asarray(z)).shape),
        h1=lambda y: np.exp(-np.asarray(y, dtype=float) ** 2),
        h2=lambda z: np.ones_like(np.asarray(z, dtype=float)),
        gamma=2.0,
        inner_closed_form=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        closed_form_constant=lambda sigma: 0.0,
    )


def _indicator(y):
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) <= 1.0, 0.5, 0.0)


def _gauss(y):
    y = np.asarray(y, dtype=float)
    return np.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)


def make_indicator() -> KernelG:
    return KernelG("indicator", _indicator, 1.0)


def make_gauss() -> KernelG:
    return KernelG("gauss", _gauss, 1.0)


_REGISTRY = {
    "f1": make_f1,
    "f2": make_f2,
    "zero": make_zero,
    "indicator": make_indicator,
    "gauss": make_gauss,
}


def functional_names() -> list[str]:
    return list(_REGISTRY)


def get_functional(name: str):
    """Look up a registered functional by name (``f1``, ``f2``, ``indicator``, ``gauss``, ``zero``)."""
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown functional {name!r}; choose from {', '.join(_REGISTRY)}"
        ) from None


# ---------------------------------------------------------------------------
# condition (A-gamma)
# ---------------------------------------------------------------------------


@dataclass
class AdmissibilityReport:
    functional: str
    gamma: float
    admissible: bool
    integral: float
    truncation: float
    tail_ratio: float
    domination_ok: bool
    domination_violations: int
    h1_vanishes: bool
    message: str

    def as_dict(self):
        return dict(self.__dict__)


def _moment_block(h1, gamma, a, b):
    def integrand(y):
        return abs(y) ** gamma * float(h1(y))

    val, _ = scipy.integrate.quad(integrand, a, b, limit=200)
    return val


def check_condition_A_gamma(
    f: BivariateF,
    gamma: Optional[float] = None,
    *,
    ratio_tol: float = 1e-4,
    max_doublings: int = 40,
    n_grid: int = 10_000,
    box: float = 50.0,
    seed: int = 0,
) -> AdmissibilityReport:
    """Numerically check ``integral |y|^gamma h1(y) dy < inf`` and ``|f| <= h1 h2``.

    The moment integral is accumulated over blocks ``[2^k, 2^{k+1}]`` on both
    sides; it is declared convergent once the last block contributes less
    than ``ratio_tol`` of the running total.  Domination is sampled on a
    scrambled Halton grid over ``[-box, box]^2``.  Divergence is reported,
    not raised.
    """
    gamma = f.gamma if gamma is None else float(gamma)
    if gamma < 0:
        raise ConfigurationError("gamma must be non-negative")

    total = _moment_block(f.h1, gamma, -1.0, 1.0)
    ratio = math.inf
    upper = 1.0
    converged = False
    for _ in range(max_doublings):
        lo, hi = upper, 2.0 * upper
        block = _moment_block(f.h1, gamma, lo, hi) + _moment_block(f.h1, gamma, -hi, -lo)
        total += block
        upper = hi
        ratio = block / total if total > 0 else (0.0 if block == 0 else math.inf)
        if ratio < ratio_tol:
            converged = True
            break

    far = np.array([1e3, -1e3, 1e6, -1e6])
    h1_far = np.asarray(f.h1(far), dtype=float)
    vanishes = bool(np.all(h1_far[2:] <= h1_far[:2] + 1e-300) and np.all(h1_far[2:] < 1e-3))

    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    pts = qmc.scale(sampler.random(n_grid), [-box, -box], [box, box])
    y, z = pts[:, 0], pts[:, 1]
    lhs = np.abs(np.asarray(f.eval(y, z), dtype=float))
    rhs = np.asarray(f.h1(y), dtype=float) * np.asarray(f.h2(z), dtype=float)
    violations = int(np.count_nonzero(lhs > rhs * (1 + 1e-12) + 1e-300))

    admissible = converged and violations == 0 and vanishes
    if admissible:
        msg = f"admissible for gamma={gamma}"
    else:
        reasons = []
        if not converged:
            reasons.append("moment integral does not converge")
        if violations:
            reasons.append(f"domination fails at {violations} grid points")
        if not vanishes:
            reasons.append("h1 does not vanish at infinity")
        msg = f"inadmissible for gamma={gamma}: " + "; ".join(reasons)
    return AdmissibilityReport(
        functional=f.name,
        gamma=gamma,
        admissible=admissible,
        integral=total,
        truncation=upper,
        tail_ratio=ratio,
        domination_ok=violations == 0,
        domination_violations=violations,
        h1_vanishes=vanishes,
        message=msg,
    )


# ---------------------------------------------------------------------------
# limit constant of V(f)
# ---------------------------------------------------------------------------


@dataclass
class QuadratureConfig:
    """Quadrature settings for :func:`limit_constant`.

    ``z_rule="hermite"`` is plain Gauss-Hermite over the whole line.
    ``z_rule="laguerre"`` integrates each half line separately with
    Gauss-Laguerre nodes in ``u = z^2 / (2 sigma^2)``; it is exact when the
    inner integral behaves like ``|z|^(2k+1)``, the kinked shape produced by
    crossing functionals, where Gauss-Hermite only converges algebraically.
    ``"auto"`` picks laguerre for functionals that declare breakpoints.
    """

    degree: int = 64
    z_rule: str = "auto"
    y_truncation: Optional[float] = None
    y_tail_tol: float = 1e-12
    epsabs: float = 1e-12
    epsrel: float = 1e-10
    refine_rtol: float = 1e-4


def _y_truncation(f: BivariateF, tol: float) -> float:
    """Smallest power of two Y with integral of h1 beyond Y under ``tol``."""
    def h1s(y):
        return float(f.h1(y))

    y = 1.0
    for _ in range(40):
        tail, _ = scipy.integrate.quad(h1s, y, np.inf, limit=200)
        tail_neg, _ = scipy.integrate.quad(h1s, -np.inf, -y, limit=200)
        if tail + tail_neg < tol:
            return y
        y *= 2.0
    return y


def _inner_y(f: BivariateF, z: float, ymax: float, cfg: QuadratureConfig) -> float:
    pts = [-ymax, ymax]
    if f.breakpoints is not None:
        pts += [p for p in f.breakpoints(z) if -ymax < p < ymax]
    pts = sorted(set(pts))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = scipy.integrate.quad(
            lambda y: float(f.eval(y, z)), a, b, epsabs=cfg.epsabs, epsrel=cfg.epsrel, limit=200
        )
        total += val
    return total


def _z_nodes(sigma: float, degree: int, rule: str):
    """Nodes and weights so that sum w_i h(z_i) ~ E[h(N(0, sigma^2))]."""
    if rule == "hermite":
        x, w = scipy.special.roots_hermite(degree)
        return math.sqrt(2.0) * sigma * x, w / math.sqrt(math.pi)
    if rule == "laguerre":
        # int_0^inf h(z) phi(z) dz = (2 pi)^{-1/2} int_0^inf h(sigma sqrt(2u)) (2u)^{-1/2} e^{-u} du
        u, w = scipy.special.roots_laguerre(degree)
        z = sigma * np.sqrt(2.0 * u)
        w = w / (np.sqrt(2.0 * u) * math.sqrt(2.0 * math.pi))
        return np.concatenate([-z[::-1], z]), np.concatenate([w[::-1], w])
    raise ConfigurationError(f"unknown z_rule {rule!r}")


def _limit_by_quadrature(f: BivariateF, sigma: float, degree: int, cfg: QuadratureConfig, ymax: float):
    rule = cfg.z_rule
    if rule == "auto":
        rule = "laguerre" if f.breakpoints is not None else "hermite"
    z, w = _z_nodes(sigma, degree, rule)
    inner = np.array([_inner_y(f, zi, ymax, cfg) for zi in z])
    return float(np.sum(w * inner))


@dataclass
class LimitConstant:
    value: float
    quadrature: float
    refined: float
    closed_form: Optional[float]
    degree: int
    y_truncation: float

    def __float__(self):
        return self.value


def limit_constant(
    f: BivariateF, sigma: float = 1.0, quadrature: Optional[QuadratureConfig] = None, *, details: bool = False
):
    """integral over R^2 of f(y, z) phi_{sigma^2}(z) dy dz.

    Nested quadrature: adaptive in y over a truncation read off the tail of
    ``h1``, a Gauss rule in z.  The rule is re-run at twice the degree; a
    relative disagreement above ``refine_rtol`` raises :class:`NumericalError`.
    For functionals that carry a closed form (f1, f2) the closed form is
    returned and the quadrature must agree with it to ``refine_rtol``.
    """
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    cfg = quadrature or QuadratureConfig()
    ymax = cfg.y_truncation or _y_truncation(f, cfg.y_tail_tol)
    q1 = _limit_by_quadrature(f, sigma, cfg.degree, cfg, ymax)
    q2 = _limit_by_quadrature(f, sigma, 2 * cfg.degree, cfg, ymax)
    scale = max(abs(q1), abs(q2), 1e-300)
    diag = {"degree": cfg.degree, "quadrature": q1, "refined": q2, "y_truncation": ymax}
    if abs(q1 - q2) > cfg.refine_rtol * scale and abs(q1 - q2) > cfg.epsabs:
        raise NumericalError(
            f"quadrature for {f.name} did not converge: {q1!r} vs {q2!r} at degree {cfg.degree}/{2 * cfg.degree}",
            diag,
        )
    closed = None
    if f.closed_form_constant is not None:
        closed = float(f.closed_form_constant(sigma))
        if abs(q2 - closed) > cfg.refine_rtol * max(abs(closed), 1e-300) and abs(q2 - closed) > cfg.epsabs:
            raise NumericalError(
                f"quadrature {q2!r} disagrees with closed form {closed!r} for {f.name}",
                {**diag, "closed_form": closed},
            )
    value = closed if closed is not None else q2
    result = LimitConstant(value, q1, q2, closed, cfg.degree, ymax)
    return result if details else value


def kernel_limit_constant(g: KernelG) -> float:
    """For V(g) the limit is L_t(x) times integral g."""
    pts = [-1e3, -1.0, 0.0, 1.0, 1e3]
    return sum(
        scipy.integrate.quad(lambda y: float(g.eval(y)), a, b, limit=200)[0]
        for a, b in zip(pts[:-1], pts[1:])
    )
