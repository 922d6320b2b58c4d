"""Centered quadratic variation of |X|, its crossing decomposition and scalings."""
import math

import numpy as np
import pytest

from fraclt import quadvar
from fraclt.errors import AlgebraViolationError, ConfigurationError, NumericalError
from fraclt.fbm import FbmPath, Regime, simulate_fbm
from fraclt.functionals import abs_normal_moment
from fraclt.quadvar import (
    ALGEBRA_TOL,
    centered_quadvar,
    centered_quadvar_abs,
    crossing_constant,
    crossing_decomposition_check,
    estimate_sigma2,
    regime_limit,
    scaled_statistic,
)
from fraclt.statistics import v_statistic_bivariate


class TestQuadVar:
    @pytest.mark.parametrize("sigma", [1.0, 2.0])
    def test_constant_path(self, sigma):
        path = FbmPath.from_values(np.full(52, -2.0), n=50, sigma=sigma)
        s = centered_quadvar_abs(path)
        np.testing.assert_array_equal(s.values, -(np.arange(51) + 1) * sigma**2)

    def test_nonnegative_path_matches_signed_version(self, bm_path):
        pos = FbmPath.from_values(np.abs(bm_path.values) + 0.1, bm_path.n, 0.5)
        np.testing.assert_allclose(centered_quadvar_abs(pos).values, centered_quadvar(pos), rtol=1e-12, atol=1e-9)

    @pytest.mark.parametrize("h", [0.2, 0.5, 0.8])
    def test_abs_never_exceeds_signed(self, h):
        # |(|a| - |b|)| <= |a - b| termwise, so S_n(|X|) <= S_n(X) pathwise
        path = simulate_fbm(2048, h, seed=3)
        assert np.all(centered_quadvar_abs(path).values <= centered_quadvar(path) + 1e-9)

    def test_signed_version_is_order_root_n(self, bm_path):
        m = centered_quadvar(bm_path)
        # n^{-1/2} M_n(T) is O(1) for H = 1/2
        assert abs(m[-1]) / math.sqrt(bm_path.n) < 6

    def test_sigma_mismatch_flag(self, bm_path):
        assert not centered_quadvar_abs(bm_path).sigma_mismatch
        s = centered_quadvar_abs(bm_path, sigma=1.3)
        assert s.sigma_mismatch
        assert scaled_statistic(s).config["sigma_mismatch"]

    def test_path_metadata(self, rough_path):
        s = centered_quadvar_abs(rough_path)
        assert s.path_meta["seed"] == 99 and s.path_meta["generator"] == "CirculantEmbedding"
        assert s.n == 1024 and s.hurst == 0.3


class TestDecomposition:
    @pytest.mark.parametrize("h", [0.1, 0.3, 0.5, 0.7, 0.9])
    @pytest.mark.parametrize("seed", [0, 1])
    def test_fbm_paths(self, h, seed):
        path = simulate_fbm(4096, h, seed=seed)
        res = crossing_decomposition_check(path, details=True)
        print(f"H={h} seed={seed}: pointwise {res.pointwise_residual:.2e}, summed {res.decomposition_residual:.2e}")
        assert res.pointwise_residual <= ALGEBRA_TOL * res.scale

    def test_injected_paths(self, rng):
        for _ in range(20):
            path = FbmPath.from_values(rng.standard_cauchy(302), n=300, hurst=rng.uniform(0.05, 0.95))
            assert crossing_decomposition_check(path) <= ALGEBRA_TOL * np.max(np.abs(path.values)) ** 2

    def test_identity_by_hand(self):
        # X = 1 -> -3: (|..| diff)^2 - (diff)^2 = 4 - 16 = -12 = -4 * 3
        path = FbmPath.from_values([1.0, -3.0, -3.0], n=1, hurst=0.5)
        s = centered_quadvar_abs(path, sigma=0.0).values
        m = centered_quadvar(path, sigma=0.0)
        assert m[0] - s[0] == 12.0
        assert 2 * v_statistic_bivariate(path, "f2").values[0] == 12.0

    def test_summed_form(self, rough_path):
        n, h = rough_path.n, 0.3
        lhs = centered_quadvar_abs(rough_path).values / n
        rhs = centered_quadvar(rough_path) / n - 2 * n ** (-h) * v_statistic_bivariate(rough_path, "f2").values
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10)

    def test_violation_raises(self, rough_path, monkeypatch):
        real = quadvar.centered_quadvar
        monkeypatch.setattr(quadvar, "centered_quadvar", lambda p, s=None: real(p, s) + 1e-3)
        with pytest.raises(AlgebraViolationError) as info:
            crossing_decomposition_check(rough_path)
        assert info.value.diagnostics["decomposition"] > 0

    def test_float_conversion(self, bm_path):
        res = crossing_decomposition_check(bm_path, details=True)
        assert float(res) == res.pointwise_residual == crossing_decomposition_check(bm_path)

    def test_overflowing_path_is_reported(self):
        path = FbmPath.from_values([1e300, -1e300, 1e300], n=1, hurst=0.5)
        with pytest.raises(NumericalError, match="too large"):
            crossing_decomposition_check(path)


class TestRegimes:
    def test_crossing_constant(self):
        assert crossing_constant(1.0) == pytest.approx(-(2 / 3) * 2 * math.sqrt(2 / math.pi), rel=1e-15)
        assert crossing_constant(2.0) == pytest.approx(8 * crossing_constant(1.0))
        assert crossing_constant(1.0) == pytest.approx(-(2 / 3) * abs_normal_moment(3))

    @pytest.mark.parametrize(
        "h, regime, exponent",
        [(0.3, Regime.LT, -0.7), (0.5, Regime.BOUNDARY, -0.5), (0.6, Regime.CLT, -0.5),
         (0.85, Regime.ROSENBLATT, 1 - 1.7)],
    )
    def test_regime_limit(self, h, regime, exponent):
        lim = regime_limit(h)
        assert lim.regime is regime
        assert lim.scaling_exponent == pytest.approx(exponent)
        assert lim.factor(10_000) == pytest.approx(10_000.0**exponent)
        assert lim.checkable_signatures

    def test_explicit_regime_override(self, bm_path):
        stat = centered_quadvar_abs(bm_path)
        out = scaled_statistic(stat, regime_limit(0.5, regime=Regime.CLT))
        assert out.config["regime_mismatch"]
        assert not scaled_statistic(stat).config["regime_mismatch"]
        np.testing.assert_allclose(out.values, stat.values / math.sqrt(4096))

    def test_lt_scaled_statistic_tracks_local_time(self):
        from fraclt.statistics import occupation_local_time_oracle

        ratios = []
        for r in range(30):
            path = simulate_fbm(2**14, 0.25, seed=8, replicate=r, oversample=16)
            lt = occupation_local_time_oracle(path).value
            if lt > 0.3:
                ratios.append(scaled_statistic(centered_quadvar_abs(path)).final / (crossing_constant() * lt))
        print("median ratio", np.median(ratios), "from", len(ratios))
        assert np.median(ratios) == pytest.approx(1.0, abs=0.15)

    def test_signed_part_shrinks(self):
        # M_n(T) has spread of order n^{1/2}, so n^{H-1} M_n(T) shrinks like n^{H-1/2}
        spread = []
        for n in (256, 4096):
            vals = [centered_quadvar(simulate_fbm(n, 0.3, seed=4, replicate=r))[-1] * n ** (0.3 - 1) for r in range(200)]
            spread.append(np.std(vals))
        print("spread", spread)
        assert spread[1] / spread[0] == pytest.approx(16 ** (0.3 - 0.5), rel=0.2)


class TestSigmaEstimate:
    @pytest.mark.parametrize("h, sigma", [(0.3, 1.0), (0.5, 2.0), (0.7, 0.5)])
    def test_estimate(self, h, sigma):
        path = simulate_fbm(2**14, h, sigma=sigma, seed=12)
        est = estimate_sigma2(path)
        print(f"H={h}: sigma^2 {sigma ** 2}, estimate {est:.4f}")
        assert est == pytest.approx(sigma**2, rel=0.08)

    def test_too_short(self):
        with pytest.raises(ConfigurationError):
            estimate_sigma2(FbmPath.from_values([0.0, 1.0], n=10, horizon=0.0))
