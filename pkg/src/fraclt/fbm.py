"""Fractional Brownian motion: covariance algebra and exact path synthesis.

Paths are sampled on the grid ``i/n``, ``i = 0 .. [nT]+1``, as
``X = sigma * B^H``.  The default generator is circulant embedding of the
fractional Gaussian noise autocovariance (Davies-Harte), which is exact and
O(N log N); a dense Cholesky factorization of the full path covariance is
available as a fallback and as a cross-check.
"""
from __future__ import annotations

import csv
import enum
import functools
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.special

from .errors import ConfigurationError, ResourceError, UnsupportedRegimeError

logger = logging.getLogger(__name__)

#: Largest number of grid points the dense generator will factorize.
DENSE_SIZE_CAP = 4096
#: Embedding eigenvalues in [-CLIP_TOL * max, 0) are clipped to zero.
CLIP_TOL = 1e-8

# lags below this use the closed form directly; above it the binomial series
_SERIES_LAG = 8
_SERIES_TERMS = 16
#: Lags 2..7 converge like 4^{-j}; 40 terms reach double precision at lag 2.
_SERIES_TERMS_NEAR = 40


class Regime(str, enum.Enum):
    """Case split for the quadratic variation of |X|."""

    LT = "LT"  # H < 1/2
    BOUNDARY = "BOUNDARY"  # H = 1/2
    CLT = "CLT"  # 1/2 < H < 3/4
    ROSENBLATT = "ROSENBLATT"  # 3/4 < H < 1


class GeneratorKind(str, enum.Enum):
    CIRCULANT = "CirculantEmbedding"
    DENSE = "DenseFactorization"
    INJECTED = "Injected"


@dataclass(frozen=True)
class HurstParameter:
    """Hurst index in the open interval (0, 1)."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0) or math.isnan(v):
            raise ConfigurationError(f"Hurst parameter must lie in (0, 1), got {self.value!r}")
        object.__setattr__(self, "value", v)

    @property
    def regime(self) -> Regime:
        return classify_regime(self.value)

    def __float__(self):
        return self.value


HurstLike = Union[float, HurstParameter]


def as_hurst(h: HurstLike) -> HurstParameter:
    return h if isinstance(h, HurstParameter) else HurstParameter(h)


def classify_regime(h: float) -> Regime:
    """Map H to its quadratic-variation regime; H = 3/4 is unsupported."""
    h = float(h)
    if not 0.0 < h < 1.0:
        raise ConfigurationError(f"Hurst parameter must lie in (0, 1), got {h!r}")
    if h < 0.5:
        return Regime.LT
    if h == 0.5:
        return Regime.BOUNDARY
    if h < 0.75:
        return Regime.CLT
    if h == 0.75:
        raise UnsupportedRegimeError(
            "H = 3/4 is not covered: the quadratic variation needs logarithmic corrections there"
        )
    return Regime.ROSENBLATT


# ---------------------------------------------------------------------------
# covariance algebra
# ---------------------------------------------------------------------------


def fbm_covariance(s, t, hurst: HurstLike):
    """E[B_s B_t] = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2.

    Accepts scalars or broadcastable arrays; negative times raise.
    """
    h2 = 2.0 * as_hurst(hurst).value
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(s_arr < 0) or np.any(t_arr < 0):
        raise ConfigurationError("fbm_covariance is defined for non-negative times only")
    out = 0.5 * (s_arr**h2 + t_arr**h2 - np.abs(t_arr - s_arr) ** h2)
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=64)
def _series_coefficients(h2: float, terms: int) -> np.ndarray:
    """C(2H, 2j) for j = 1..terms by the ratio recursion.

    Every coefficient carries the factor 2H(2H - 1) explicitly, so they stay
    accurate to full relative precision even when H is close to 1/2.
    """
    out = np.empty(terms)
    c = 0.5 * h2 * (h2 - 1.0)
    for j in range(terms):
        out[j] = c
        m = 2 * j + 2
        c *= (h2 - m) * (h2 - m - 1) / ((m + 1) * (m + 2))
    return out


def _binomial_series(kf: np.ndarray, h2: float, terms: int) -> np.ndarray:
    inv2 = kf ** (-2.0)
    acc = np.zeros_like(kf)
    # Horner from the smallest term up; all terms share one sign
    for c in _series_coefficients(h2, terms)[::-1]:
        acc = (acc + c) * inv2
    return kf**h2 * acc


def increment_autocovariance(k, hurst: HurstLike):
    """Autocovariance of the unit-variance increments ``n^H Delta_i X / sigma`` at lag k.

    gamma(k) = ((k+1)^{2H} + |k-1|^{2H} - 2 k^{2H}) / 2.  This is also
    cov(B_1, B_{k+1} - B_k), so the same function serves as rho_k in v^2.
    The closed form cancels badly at long lags and whenever H is near 1/2,
    so lags k >= 2 use the expansion
    ``gamma(k) = k^{2H} * sum_j C(2H, 2j) k^{-2j}`` (more terms below lag 8)
    and lag 1 uses gamma(1) = expm1((2H - 1) log 2).
    """
    h2 = 2.0 * as_hurst(hurst).value
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise ConfigurationError("lag must be non-negative")
    kf = k_arr.astype(float)
    out = np.empty(kf.shape)
    low = kf < 2
    kl = kf[low]
    out[low] = 0.5 * ((kl + 1.0) ** h2 + np.abs(kl - 1.0) ** h2 - 2.0 * kl**h2)
    out[kf == 1] = math.expm1((h2 - 1.0) * math.log(2.0))
    near = (kf >= 2) & (kf < _SERIES_LAG)
    far = kf >= _SERIES_LAG
    if np.any(near):
        out[near] = _binomial_series(kf[near], h2, _SERIES_TERMS_NEAR)
    if np.any(far):
        out[far] = _binomial_series(kf[far], h2, _SERIES_TERMS)
    return float(out) if out.ndim == 0 else out


def rho_level_increment(i, hurst: HurstLike):
    """corr(X_{i/n}, Delta_i^n X) = ((i+1)^{2H} - i^{2H} - 1) / (2 i^H), i >= 1."""
    h = as_hurst(hurst).value
    i_arr = np.asarray(i, dtype=float)
    if np.any(i_arr < 1):
        raise ConfigurationError("rho_level_increment needs i >= 1")
    # (i+1)^{2H} - i^{2H} without cancellation
    diff = i_arr ** (2 * h) * np.expm1(2 * h * np.log1p(1.0 / i_arr))
    out = (diff - 1.0) / (2.0 * i_arr**h)
    return float(out) if out.ndim == 0 else out


def v2_series(hurst: HurstLike, tol: float = 1e-12, lag_cutoff: int = 64):
    """Sum of squared increment autocovariances over k >= 1.

    Lags up to ``lag_cutoff`` are summed directly.  The remaining tail is
    summed in closed form through Hurwitz zeta values of the binomial
    expansion of gamma(k)^2; the number of expansion terms grows until the
    remainder bound drops below ``tol``.

    Returns ``(total, tail_bound, terms)``.
    """
    h = as_hurst(hurst).value
    if h >= 0.75:
        raise ConfigurationError(
            "variance diverges in Rosenblatt regime: sum of rho_k^2 is infinite for H >= 3/4"
        )
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    K = int(lag_cutoff)
    if K < _SERIES_LAG:
        raise ConfigurationError(f"lag_cutoff must be at least {_SERIES_LAG}")
    head = float(np.sum(increment_autocovariance(np.arange(1, K + 1), h) ** 2))

    h2 = 2.0 * h
    damp = (1.0 - K**-2.0) ** -2
    terms = 2
    while True:
        # |r_J(k)| <= k^{2H-2J-2}/(1-k^-2) and |gamma_J(k)| <= k^{2H-2}/(1-k^-2)
        bound = 3.0 * damp * float(scipy.special.zeta(2 * terms + 4 - 2 * h2, K + 1))
        if bound < tol or terms >= 40:
            break
        terms += 1
    a = _series_coefficients(h2, terms)
    tail = 0.0
    for m in range(2 * terms, 1, -1):
        lo, hi = max(1, m - terms), min(terms, m - 1)
        coef = sum(a[j - 1] * a[m - j - 1] for j in range(lo, hi + 1))
        if coef != 0.0:
            tail += coef * float(scipy.special.zeta(2 * m - 2 * h2, K + 1))
    return head + tail, bound, terms


def asymptotic_variance_v2(sigma: float, hurst: HurstLike, tol: float = 1e-10) -> float:
    """v^2 = 2 sigma^4 (1 + 2 sum_{k>=1} rho_k^2), finite only for H < 3/4."""
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")
    total, _, _ = v2_series(hurst, tol=tol / (4.0 * sigma**4))
    return float(2.0 * sigma**4 * (1.0 + 2.0 * total))


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------


def replicate_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Counter-based stream for replicate ``replicate`` of experiment ``seed``.

    The stream depends only on the pair, never on scheduling order.
    """
    seed = int(seed)
    replicate = int(replicate)
    if seed < 0 or replicate < 0:
        raise ConfigurationError("seed and replicate index must be non-negative")
    if seed >= 2**64:
        raise ConfigurationError("seed must fit in 64 bits")
    ss = np.random.SeedSequence(seed, spawn_key=(replicate,))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# path container
# ---------------------------------------------------------------------------


def grid_steps(n: int, horizon: float) -> int:
    """[nT], robust to float noise in n*T."""
    x = n * horizon
    r = round(x)
    return int(r) if abs(x - r) < 1e-9 * max(1.0, abs(x)) else int(math.floor(x))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FbmPath:
    """A sampled trajectory of sigma * B^H on the grid i/n, i = 0..[nT]+1.

    ``fine_values`` optionally holds the same trajectory at frequency
    ``n * oversample`` (the coarse values are its every ``oversample``-th
    point).  The local-time oracle uses it when present.
    """

    hurst: HurstParameter
    sigma: float
    n: int
    horizon: float
    values: np.ndarray
    seed: Optional[int] = None
    replicate: int = 0
    generator: GeneratorKind = GeneratorKind.INJECTED
    fine_values: Optional[np.ndarray] = field(default=None, repr=False)
    oversample: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hurst", as_hurst(self.hurst))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.fine_values is not None:
            object.__setattr__(self, "fine_values", _frozen(self.fine_values))
        expected = grid_steps(self.n, self.horizon) + 2
        if self.values.shape != (expected,):
            raise ConfigurationError(
                f"path needs [nT]+2 = {expected} values, got shape {self.values.shape}"
            )
        if self.fine_values is not None:
            if self.fine_values.shape[0] < (expected - 1) * self.oversample + 1:
                raise ConfigurationError("fine_values too short for the declared oversample")

    @classmethod
    def from_values(cls, values, n, hurst=0.5, sigma=1.0, horizon=None, **kw) -> "FbmPath":
        """Wrap an arbitrary (injected) trajectory.  ``horizon`` defaults to (len-2)/n."""
        values = np.asarray(values, dtype=float)
        if horizon is None:
            horizon = (values.shape[0] - 2) / n
        return cls(hurst=as_hurst(hurst), sigma=sigma, n=int(n), horizon=float(horizon),
                   values=values, **kw)

    @classmethod
    def from_function(cls, func, n, horizon=1.0, hurst=0.5, sigma=1.0) -> "FbmPath":
        """Evaluate a deterministic function s -> X_s on the grid."""
        t = np.arange(grid_steps(n, horizon) + 2) / n
        return cls.from_values(np.asarray(func(t), dtype=float), n, hurst, sigma, horizon)

    @property
    def steps(self) -> int:
        """[nT]: index of the last increment inside the horizon."""
        return self.values.shape[0] - 2

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) / self.n

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def fine_grid(self, factor: int) -> Optional[np.ndarray]:
        """The trajectory at frequency ``n*factor`` if ``factor`` divides ``oversample``."""
        if factor == 1:
            return self.values
        if self.fine_values is None or self.oversample % factor:
            return None
        step = self.oversample // factor
        return self.fine_values[::step]

    def subsample(self, factor: int) -> "FbmPath":
        """The same trajectory observed at frequency n/factor."""
        factor = int(factor)
        if factor < 1 or self.n % factor:
            raise ConfigurationError(f"cannot subsample n={self.n} by {factor}")
        n_new = self.n // factor
        length = grid_steps(n_new, self.horizon) + 2
        src = self.fine_values if self.fine_values is not None else self.values
        step = factor * (self.oversample if self.fine_values is not None else 1)
        if (length - 1) * step >= src.shape[0]:
            raise ConfigurationError("trajectory too short to subsample at this factor")
        return replace(
            self,
            n=n_new,
            values=src[: (length - 1) * step + 1 : step],
            fine_values=src if step > 1 else None,
            oversample=step if step > 1 else 1,
        )

    def scaled(self, c: float) -> "FbmPath":
        fine = None if self.fine_values is None else c * self.fine_values
        return replace(self, values=c * self.values, fine_values=fine, sigma=abs(c) * self.sigma)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


class _EmbeddingIndefinite(Exception):
    pass


@functools.lru_cache(maxsize=32)
def _embedding_sqrt_eigs(half: int, h: float) -> np.ndarray:
    """sqrt(lambda_k / M) for k = 0..half of the size M = 2*half circulant."""
    lags = np.arange(half + 1)
    gamma = increment_autocovariance(lags, h)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = scipy.fft.rfft(row).real
    lam_max = lam.max()
    lam_min = lam.min()
    if lam_min < -CLIP_TOL * lam_max:
        raise _EmbeddingIndefinite(f"min eigenvalue {lam_min:.3e} (max {lam_max:.3e})")
    if lam_min < 0:
        logger.warning("clipping %d embedding eigenvalues down to %.3e", int((lam < 0).sum()), lam_min)
        lam = np.clip(lam, 0.0, None)
    out = np.sqrt(lam / (2 * half))
    out.setflags(write=False)
    return out


def _fgn_circulant(num_increments: int, h: float, rng: np.random.Generator, workers=None) -> np.ndarray:
    half = scipy.fft.next_fast_len(max(2, num_increments), real=True)
    sq = _embedding_sqrt_eigs(half, h)
    m = 2 * half
    z = rng.standard_normal(m)
    # Hermitian-symmetric spectrum -> real output with covariance = circulant
    w = np.empty(half + 1, dtype=complex)
    w[0] = sq[0] * z[0]
    w[half] = sq[half] * z[1]
    w[1:half] = sq[1:half] * (z[2 : half + 1] + 1j * z[half + 1 : m]) / math.sqrt(2.0)
    y = scipy.fft.irfft(np.conj(w), n=m, workers=workers) * m
    return y[:num_increments]


def _fbm_dense(num_points: int, h: float, rng: np.random.Generator, cap: int) -> np.ndarray:
    if num_points > cap:
        raise ResourceError(f"dense factorization of {num_points} points exceeds cap {cap}")
    t = np.arange(1, num_points, dtype=float)
    cov = fbm_covariance(t[:, None], t[None, :], h)
    chol = scipy.linalg.cholesky(cov, lower=True)
    z = rng.standard_normal(num_points - 1)
    return np.concatenate([[0.0], chol @ z])


def simulate_fbm(
    n: int,
    hurst: HurstLike,
    sigma: float = 1.0,
    horizon: float = 1.0,
    seed: int = 0,
    *,
    replicate: int = 0,
    method: str = "auto",
    oversample: int = 1,
    dense_cap: int = DENSE_SIZE_CAP,
    workers: Optional[int] = None,
    coarsest: Optional[int] = None,
) -> FbmPath:
    """Exact sample of ``sigma * B^H`` at times i/n, i = 0..[nT]+1.

    Parameters
    ----------
    method : {"auto", "circulant", "dense"}
        Circulant embedding falls back to dense factorization automatically
        if the embedding is indefinite beyond clipping tolerance.
    oversample : int
        Simulate at frequency ``n*oversample`` and keep the fine trajectory
        alongside the coarse one.
    workers : int, optional
        Passed to the FFT; never changes the output.
    coarsest : int, optional
        Smallest frequency the returned path must support via
        :meth:`FbmPath.subsample`; the fine trajectory is extended so that
        the final increment at that frequency exists.
    """
    h = as_hurst(hurst)
    if int(n) != n or n < 2:
        raise ConfigurationError("n must be an integer >= 2")
    if not sigma > 0 or not horizon > 0:
        raise ConfigurationError("sigma and horizon must be positive")
    if int(oversample) != oversample or oversample < 1:
        raise ConfigurationError("oversample must be a positive integer")
    if method not in ("auto", "circulant", "dense"):
        raise ConfigurationError(f"unknown method {method!r}")
    n, oversample = int(n), int(oversample)
    coarse_points = grid_steps(n, horizon) + 2
    num_points = (coarse_points - 1) * oversample + 1
    if coarsest is not None:
        fine_n = n * oversample
        if coarsest < 1 or fine_n % coarsest:
            raise ConfigurationError(f"coarsest={coarsest} must divide n*oversample={fine_n}")
        num_points = max(num_points, (grid_steps(coarsest, horizon) + 1) * (fine_n // coarsest) + 1)
    rng = replicate_rng(seed, replicate)

    kind = GeneratorKind.CIRCULANT
    if method == "dense":
        unit = _fbm_dense(num_points, h.value, rng, dense_cap)
        kind = GeneratorKind.DENSE
    else:
        try:
            fgn = _fgn_circulant(num_points - 1, h.value, rng, workers=workers)
            unit = np.concatenate([[0.0], np.cumsum(fgn)])
        except _EmbeddingIndefinite as exc:
            logger.warning("circulant embedding indefinite (%s); falling back to dense factorization", exc)
            unit = _fbm_dense(num_points, h.value, replicate_rng(seed, replicate), dense_cap)
            kind = GeneratorKind.DENSE

    fine = float(sigma) * (n * oversample) ** (-h.value) * unit
    fine[0] = 0.0
    return FbmPath(
        hurst=h,
        sigma=float(sigma),
        n=n,
        horizon=float(horizon),
        values=fine[: (coarse_points - 1) * oversample + 1 : oversample],
        seed=int(seed),
        replicate=int(replicate),
        generator=kind,
        fine_values=fine if num_points > coarse_points else None,
        oversample=oversample,
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_path_csv(path: FbmPath, dest) -> None:
    """Write ``t,x`` rows with 17 significant digits (lossless for doubles)."""
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x"])
        for t, x in zip(path.times, path.values):
            w.writerow([f"{t:.17g}", f"{x:.17g}"])


def read_path_csv(src, hurst: HurstLike = 0.5, sigma: float = 1.0, seed=None) -> FbmPath:
    """Read a ``t,x`` CSV; the frequency n is recovered from the time step."""
    src = Path(src)
    with open(src, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["t", "x"]:
            raise ConfigurationError(f"{src}: expected header 't,x', got {header}")
        rows = [r for r in reader if r]
    if len(rows) < 3:
        raise ConfigurationError(f"{src}: need at least 3 grid points")
    try:
        t = np.array([float(r[0]) for r in rows])
        x = np.array([float(r[1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"{src}: malformed row ({exc})") from None
    dt = t[1] - t[0]
    if not dt > 0:
        raise ConfigurationError(f"{src}: time column must be increasing")
    n = int(round(1.0 / dt))
    if not np.allclose(t, np.arange(len(t)) / n, rtol=0, atol=1e-9):
        raise ConfigurationError(f"{src}: times are not a uniform grid i/n")
    return FbmPath.from_values(x, n, hurst=hurst, sigma=sigma,
                               horizon=(len(t) - 2) / n, seed=seed)
