"""V-statistics, crossing counts and the occupation-density local-time oracle."""
import math
import warnings

import numpy as np
import pytest

from fraclt.errors import ConfigurationError
from fraclt.fbm import FbmPath, simulate_fbm
from fraclt.functionals import limit_constant, make_f1
from fraclt.statistics import (
    STABILITY_THRESHOLD,
    StatisticPath,
    crossing_count,
    default_epsilon,
    default_refinement,
    local_time_path,
    occupation_local_time_oracle,
    read_statistic_csv,
    v_statistic_bivariate,
    v_statistic_univariate,
    write_statistic_csv,
)


class TestOracle:
    def test_line_path_density_is_one(self, line_path):
        est = occupation_local_time_oracle(line_path, x=0.0, t=1.0, epsilon=0.01, refinement=4)
        print(est.as_dict())
        assert est.value == pytest.approx(1.0, rel=0.02)
        assert est.method == "interpolated"
        assert not est.flagged

    def test_line_path_before_crossing(self, line_path):
        assert occupation_local_time_oracle(line_path, 0.0, t=0.25, epsilon=0.01).value == 0.0

    def test_level_never_visited(self):
        path = FbmPath.from_function(lambda t: t, n=1000)
        est = occupation_local_time_oracle(path, x=5.0)
        assert est.value == 0.0 and est.stability_delta == 0.0

    def test_slope_two(self):
        # X_s = 2s - 1 spends 1/2 time unit per unit of level
        path = FbmPath.from_function(lambda t: 2 * t - 1, n=10_000)
        assert occupation_local_time_oracle(path, 0.0, epsilon=0.01).value == pytest.approx(0.5, rel=0.02)

    def test_defaults(self, rough_path):
        est = occupation_local_time_oracle(rough_path)
        assert est.refinement == default_refinement(rough_path) == 8
        assert est.grid_frequency == 1024 * 8
        assert est.bandwidth == pytest.approx(default_epsilon(8192, 0.3))
        assert est.method == "exact"
        assert est.value > 0

    def test_time_path_monotone(self, bm_path):
        times = np.linspace(0.0, 1.0, 17)
        vals, eps, m, method = local_time_path(bm_path, 0.0, times)
        assert method == "exact" and m == 4096 * 2
        assert np.all(np.diff(vals) >= 0) and vals[0] == 0.0

    @pytest.mark.parametrize("kw", [{"epsilon": 0.0}, {"epsilon": -1.0}, {"refinement": 0}, {"t": 1.5}])
    def test_bad_arguments(self, bm_path, kw):
        with pytest.raises(ConfigurationError):
            occupation_local_time_oracle(bm_path, **kw)

    def test_flag_threshold(self):
        assert STABILITY_THRESHOLD == 0.15

    def test_occupation_time_formula(self):
        # int_R L_1(x) dx = 1 and int L_1(x) 1{x in A} dx = time spent in A
        path = simulate_fbm(4096, 0.4, seed=7, oversample=64)
        fine = path.fine_grid(64)
        levels = np.linspace(fine.min(), fine.max(), 201)
        dx = levels[1] - levels[0]
        vals = np.array([occupation_local_time_oracle(path, x, epsilon=dx / 2, refinement=64).value
                         for x in levels])
        total = float(np.sum(vals) * dx)
        print("int L(x) dx =", total)
        assert total == pytest.approx(1.0, rel=0.05)

    @pytest.mark.slow
    def test_brownian_mean_local_time(self):
        # E L_1(0) = sqrt(2/pi) for standard Brownian motion
        reps = 2000
        vals = np.array([
            occupation_local_time_oracle(simulate_fbm(4096, 0.5, seed=31, replicate=r, oversample=16),
                                         refinement=16).value
            for r in range(reps)
        ])
        se = vals.std(ddof=1) / math.sqrt(reps)
        print(f"mean {vals.mean():.5f} +- {se:.5f}, target {math.sqrt(2 / math.pi):.5f}")
        assert abs(vals.mean() - math.sqrt(2 / math.pi)) < 3 * se


class TestUnivariate:
    def test_indicator_on_line(self, line_path):
        v = v_statistic_univariate(line_path, "indicator", 0.5)
        print("V(indicator)_1 on the line:", v.final)
        assert v.final == pytest.approx(1.0, rel=0.05)
        assert v.at(0.25) == 0.0

    def test_zero_path(self):
        path = FbmPath.from_values(np.full(102, 3.0), n=100)
        assert np.all(v_statistic_univariate(path, "indicator", 0.5).values == 0.0)
        assert v_statistic_univariate(path, "gauss", 0.5).final < 1e-190

    def test_sum_starts_at_one(self):
        path = FbmPath.from_values(np.zeros(12), n=10)
        v = v_statistic_univariate(path, "indicator", 0.5)
        # X_0 = 0 is not counted; X_1..X_10 are, each with kernel weight 1/2
        assert v.values[0] == 0.0
        assert v.final == pytest.approx(math.sqrt(10) / 10 * 10 * 0.5, rel=1e-14)

    @pytest.mark.parametrize("a", [0.0, 1.0, 1.3, -0.2])
    def test_exponent_warning(self, bm_path, a):
        with pytest.warns(UserWarning, match="exponent"):
            v = v_statistic_univariate(bm_path, "gauss", a)
        assert v.config["warnings"]

    def test_no_warning_inside(self, bm_path):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            v_statistic_univariate(bm_path, "gauss", 0.4)

    def test_wrong_kind(self, bm_path):
        with pytest.raises(ConfigurationError):
            v_statistic_univariate(bm_path, "f1", 0.5)

    def test_gauss_kernel_tracks_oracle(self):
        errs = []
        for r in range(20):
            path = simulate_fbm(2**16, 0.5, seed=5, replicate=r, oversample=2)
            lt = occupation_local_time_oracle(path, refinement=2).value
            v = v_statistic_univariate(path, "gauss", 0.4).final
            if lt > 0.2:
                errs.append(abs(v - lt) / lt)
        print("median relative error", np.median(errs), "over", len(errs))
        assert np.median(errs) < 0.10


class TestBivariate:
    def test_no_sign_change(self):
        path = FbmPath.from_function(lambda t: 1 + t, n=500, hurst=0.3)
        for name in ("f1", "f2"):
            assert np.all(v_statistic_bivariate(path, name).values == 0.0)

    @pytest.mark.parametrize("h", [0.3, 0.5, 0.7])
    def test_alternating_path(self, h):
        n, a = 200, 0.01
        path = FbmPath.from_values(a * (-1.0) ** np.arange(n + 2), n=n, hurst=h)
        u = n**h
        v1 = v_statistic_bivariate(path, "f1")
        v2 = v_statistic_bivariate(path, "f2")
        k = np.arange(n + 1) + 1
        np.testing.assert_allclose(v1.values, u * k / n, rtol=1e-13)
        np.testing.assert_allclose(v2.values, (u / n) * k * 2 * (u * a) ** 2, rtol=1e-13)

    def test_crossing_count_identity(self, rough_path):
        v = v_statistic_bivariate(rough_path, "f1")
        count = crossing_count(rough_path)
        assert v.final == pytest.approx(rough_path.n ** 0.3 * count / rough_path.n, rel=1e-14)
        assert crossing_count(rough_path, t=0.5) <= count

    def test_monotone_in_t(self, rough_path):
        for name in ("f1", "f2"):
            assert np.all(np.diff(v_statistic_bivariate(rough_path, name).values) >= 0)

    def test_f1_invariant_under_rescaling(self, rough_path):
        a = v_statistic_bivariate(rough_path, "f1").values
        b = v_statistic_bivariate(rough_path.scaled(3.5), "f1").values
        np.testing.assert_array_equal(a, b)

    def test_f2_scales_quadratically(self, rough_path):
        # sigma^3 in the constant times L shrinking by 1/sigma leaves sigma^2
        a = v_statistic_bivariate(rough_path, "f2").final
        b = v_statistic_bivariate(rough_path.scaled(2.0), "f2").final
        assert b == pytest.approx(4 * a, rel=1e-12)

    def test_increment_scale_options(self, rough_path):
        a = v_statistic_bivariate(rough_path, "f2", 0.3, increment_scale="un").values
        b = v_statistic_bivariate(rough_path, "f2", 0.3, increment_scale="hurst").values
        np.testing.assert_array_equal(a, b)
        with pytest.raises(ConfigurationError):
            v_statistic_bivariate(rough_path, "f2", increment_scale="bogus")

    def test_level_shift(self, rough_path):
        shifted = FbmPath.from_values(rough_path.values + 0.2, rough_path.n, 0.3)
        a = v_statistic_bivariate(shifted, "f1", x=0.2).values
        b = v_statistic_bivariate(FbmPath.from_values(rough_path.values, rough_path.n, 0.3), "f1").values
        np.testing.assert_allclose(a, b)

    def test_sum_index_range(self):
        # three steps in [0, 1] at n = 3; increments i = 0..3 enter, the last reaching past T
        path = FbmPath.from_values([1.0, 1.0, 1.0, 1.0, -1.0], n=3, hurst=0.5)
        v = v_statistic_bivariate(path, "f1")
        assert len(v.values) == 4
        assert v.values[2] == 0.0 and v.final > 0

    def test_consistency_on_fbm(self):
        path = simulate_fbm(2**15, 0.3, seed=11, oversample=16)
        lt = occupation_local_time_oracle(path, refinement=8).value
        v = v_statistic_bivariate(path, "f1").final
        c = limit_constant(make_f1(), 1.0)
        print(f"V(f1) = {v:.4f}, c L = {c * lt:.4f}")
        assert v == pytest.approx(c * lt, rel=0.2)


class TestStatisticCsv:
    def test_round_trip(self, tmp_path, rough_path):
        v = v_statistic_bivariate(rough_path, "f2")
        dest = tmp_path / "v.csv"
        write_statistic_csv(v, dest)
        back = read_statistic_csv(dest)
        np.testing.assert_array_equal(back.values, v.values)
        np.testing.assert_array_equal(back.times, v.times)

    @pytest.mark.parametrize("body", ["x,y\n1,2\n", "t,value\n", "t,value\n0,abc\n", ""])
    def test_malformed(self, tmp_path, body):
        p = tmp_path / "bad.csv"
        p.write_text(body)
        with pytest.raises(ConfigurationError):
            read_statistic_csv(p)

    def test_at_outside_grid(self):
        s = StatisticPath(np.arange(5) / 4, np.arange(5.0), {"n": 4})
        assert s.at(0.5) == 2.0
        with pytest.raises(ConfigurationError):
            s.at(2.0)
