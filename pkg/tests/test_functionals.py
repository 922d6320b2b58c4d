"""Crossing functionals, condition (A-gamma) and limit constants."""
import math

import numpy as np
import pytest

from fraclt.errors import ConfigurationError, NumericalError
from fraclt.functionals import (
    BivariateF,
    KernelG,
    QuadratureConfig,
    abs_normal_moment,
    check_condition_A_gamma,
    f1_eval,
    f2_eval,
    functional_names,
    get_functional,
    kernel_limit_constant,
    limit_constant,
    make_f1,
    make_f2,
)

SQRT_2_OVER_PI = 0.7978845608028653558798921198687637369517  # mpmath, 40 digits
F2_CONSTANT = 0.5319230405352435705865947465791758246345  # (2/3) sqrt(2/pi)


class TestCrossingFunctionals:
    @pytest.mark.parametrize(
        "y, z, v1, v2",
        [(1, -2, 1.0, 2.0), (1, 1, 0.0, 0.0), (0, 5, 0.0, 0.0), (-1, 1, 0.0, 0.0),
         (-0.5, 2.0, 1.0, 1.5), (2.0, -2.0, 0.0, 0.0)],
    )
    def test_values(self, y, z, v1, v2):
        assert f1_eval(y, z) == v1
        assert f2_eval(y, z) == v2

    def test_vectorised_and_signs(self, rng):
        y, z = rng.normal(size=1000), rng.normal(size=1000) * 3
        a, b = f1_eval(y, z), f2_eval(y, z)
        assert set(np.unique(a)) <= {0.0, 1.0}
        assert np.all(b >= 0)
        np.testing.assert_array_equal(b > 0, a > 0)

    def test_registry(self):
        assert set(functional_names()) == {"f1", "f2", "zero", "indicator", "gauss"}
        assert isinstance(get_functional("f2"), BivariateF)
        assert isinstance(get_functional("gauss"), KernelG)
        with pytest.raises(ConfigurationError, match="unknown functional"):
            get_functional("f3")


class TestKernel:
    def test_l1_norm_computed(self):
        g = KernelG("tri", lambda y: np.maximum(0.0, 1 - np.abs(np.asarray(y, dtype=float))))
        assert g.l1_norm == pytest.approx(1.0, rel=1e-8)

    def test_wrong_supplied_norm(self):
        with pytest.raises(ConfigurationError):
            KernelG("box", lambda y: np.where(np.abs(np.asarray(y)) <= 1, 0.5, 0.0), l1_norm=1.5)

    @pytest.mark.parametrize("name", ["indicator", "gauss"])
    def test_builtin_integrate_to_one(self, name):
        assert kernel_limit_constant(get_functional(name)) == pytest.approx(1.0, rel=1e-8)


class TestConditionA:
    @pytest.mark.parametrize("make", [make_f1, make_f2])
    def test_crossing_functionals_admissible(self, make):
        rep = check_condition_A_gamma(make(), 2.0)
        print(rep.message, rep.integral)
        assert rep.admissible and rep.domination_ok and rep.h1_vanishes
        assert rep.tail_ratio < 1e-4

    def test_f1_moment_integral(self):
        # int |y|^2 min(1, |y|^-5) dy = 2 (1/3 + 1/2)
        rep = check_condition_A_gamma(make_f1(), 2.0)
        assert rep.integral == pytest.approx(5.0 / 3.0, rel=1e-4)

    def test_slow_tail_inadmissible(self):
        f = BivariateF("slow", f1_eval, h1=lambda y: 1.0 / (1.0 + np.abs(y)), h2=lambda z: np.ones_like(z))
        rep = check_condition_A_gamma(f, 2.0)
        assert not rep.admissible
        assert "does not converge" in rep.message

    def test_gaussian_h1(self):
        phi = lambda y: np.exp(-0.5 * np.asarray(y, dtype=float) ** 2) / math.sqrt(2 * math.pi)
        f = BivariateF("gauss-cos", lambda y, z: phi(y) * np.cos(z), h1=phi, h2=lambda z: np.ones_like(z))
        rep = check_condition_A_gamma(f, 2.0)
        assert rep.admissible
        assert rep.integral == pytest.approx(1.0, rel=1e-6)

    def test_domination_violation_detected(self):
        f = BivariateF("bad", lambda y, z: 2.0 * np.ones(np.broadcast(y, z).shape),
                       h1=lambda y: 1.0 / np.maximum(1.0, np.abs(y) ** 5), h2=lambda z: np.ones_like(z))
        rep = check_condition_A_gamma(f, 2.0)
        assert not rep.domination_ok and rep.domination_violations > 0
        assert not rep.admissible

    def test_non_vanishing_h1(self):
        f = BivariateF("flat", lambda y, z: 0.0 * y, h1=lambda y: np.ones_like(np.asarray(y, dtype=float)),
                       h2=lambda z: np.ones_like(z))
        assert not check_condition_A_gamma(f, 0.0).admissible

    def test_negative_gamma(self):
        with pytest.raises(ConfigurationError):
            check_condition_A_gamma(make_f1(), -1.0)


class TestLimitConstant:
    def test_crossing_functional_constants(self):
        assert limit_constant(make_f1(), 1.0) == pytest.approx(SQRT_2_OVER_PI, abs=1e-12)
        assert limit_constant(make_f2(), 1.0) == pytest.approx(F2_CONSTANT, abs=1e-12)
        assert round(limit_constant(make_f1(), 1.0), 6) == 0.797885
        assert round(limit_constant(make_f2(), 1.0), 6) == 0.531923

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_quadrature_matches_closed_form(self, sigma):
        d1 = limit_constant(make_f1(), sigma, details=True)
        d2 = limit_constant(make_f2(), sigma, details=True)
        print(f"sigma={sigma}: f1 quad {d1.refined!r}, f2 quad {d2.refined!r}")
        assert abs(d1.refined - sigma * SQRT_2_OVER_PI) < 1e-6
        assert abs(d2.refined - sigma**3 * F2_CONSTANT) < 1e-6

    def test_zero(self):
        assert limit_constant(get_functional("zero"), 1.0) == 0.0

    def test_no_closed_form(self):
        # f(y, z) = phi(y) z^2 integrates to sigma^2
        phi = lambda y: np.exp(-0.5 * np.asarray(y, dtype=float) ** 2) / math.sqrt(2 * math.pi)
        f = BivariateF("gz2", lambda y, z: phi(y) * np.asarray(z) ** 2, h1=phi, h2=lambda z: 1 + np.asarray(z) ** 2)
        assert limit_constant(f, 1.5) == pytest.approx(2.25, rel=1e-8)

    def test_hermite_rule_is_too_crude_for_kinks(self):
        crude = limit_constant(make_f1(), 1.0, QuadratureConfig(z_rule="hermite", refine_rtol=1.0), details=True)
        assert abs(crude.refined - SQRT_2_OVER_PI) > 1e-4

    def test_non_convergence_raises(self):
        with pytest.raises(NumericalError) as info:
            limit_constant(make_f1(), 1.0, QuadratureConfig(degree=4, z_rule="hermite"))
        assert "quadrature" in info.value.diagnostics or "degree" in info.value.diagnostics

    def test_bad_sigma(self):
        with pytest.raises(ConfigurationError):
            limit_constant(make_f1(), 0.0)

    @pytest.mark.parametrize("p, sigma", [(1, 1.0), (3, 1.0), (3, 2.0), (2, 1.0)])
    def test_abs_moments(self, p, sigma):
        expected = {1: SQRT_2_OVER_PI, 2: 1.0, 3: 2 * SQRT_2_OVER_PI}[p] * sigma**p
        assert abs_normal_moment(p, sigma) == pytest.approx(expected, rel=1e-14)
