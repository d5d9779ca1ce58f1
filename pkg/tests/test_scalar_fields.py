import math

import numpy as np
import pytest

from errors import DimensionMismatch, NonFiniteResult, NonPositiveInput
from scalar_fields import (ComplexExponentialField, constant, euclidean_norm, exp_tilt, finite_difference_gradient,
                           gradient, is_constant, is_linear, is_max_coord, linear, lipschitz_witness_max, max_coord,
                           max_coord_gradient_identity, parse_expression, parse_field_spec, shift, truncate, whiten)

SMOOTH_EXPRESSIONS = [
    "sin(x1) * x2 + exp(x2 / 3)",
    "tanh(x1) + tanh(x2) * x3",
    "log(1 + x1^2) - cos(x2 * x3)",
    "sqrt(x1^2 + x2^2 + 1) / (2 + sin(x3))",
    "exp(-(x1^2 + x2^2) / 2) * x3^3",
]


class TestBuiltins:
    def test_linear(self):
        f = linear([1.0, -2.0])
        assert f.evaluate([3.0, 1.0]) == 1.0
        np.testing.assert_array_equal(gradient(f, [5.0, 7.0]), [1.0, -2.0])

    def test_max_coord(self):
        f = max_coord(3)
        assert f.evaluate([0.5, 2.0, 1.0]) == 2.0
        np.testing.assert_array_equal(f.gradient([0.5, 2.0, 1.0]), [0.0, 1.0, 0.0])

    def test_max_coord_tie_takes_lowest_index(self):
        np.testing.assert_array_equal(max_coord(2).gradient([3.0, 3.0]), [1.0, 0.0])

    def test_euclidean_norm(self):
        f = euclidean_norm(2)
        assert f.evaluate([3.0, 4.0]) == 5.0
        np.testing.assert_allclose(f.gradient([3.0, 4.0]), [0.6, 0.8])
        np.testing.assert_array_equal(f.gradient([0.0, 0.0]), [0.0, 0.0])

    def test_batch_shapes(self):
        x = np.random.default_rng(0).standard_normal((7, 3))
        v, g = max_coord(3).value_and_gradient(x)
        assert v.shape == (7,)
        assert g.shape == (7, 3)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            linear([1.0, 2.0]).evaluate([1.0, 2.0, 3.0])

    def test_constant(self):
        f = constant(3.0, 2)
        assert f.evaluate([0.0, 0.0]) == 3.0
        np.testing.assert_array_equal(f.evaluate(np.ones((4, 2))), np.full(4, 3.0))
        v, g = f.value_and_gradient([1.0, -2.0])
        assert v == 3.0
        np.testing.assert_array_equal(g, [0.0, 0.0])
        assert f.with_mode("finite_difference").evaluate([5.0, 5.0]) == 3.0

    def test_predicates(self):
        assert is_linear(linear([1.0]))
        assert is_max_coord(max_coord(2))
        assert is_constant(constant(1.0, 2))
        assert not is_max_coord(truncate(max_coord(2), 1.0))


class TestParsedFields:
    def test_linear_expression(self):
        f = parse_expression("x1 + x2", 2)
        assert f.gradient_mode == "forward_autodiff"
        np.testing.assert_array_equal(f.gradient([0.3, -4.0]), [1.0, 1.0])

    def test_autodiff_matches_finite_differences(self):
        gen = np.random.default_rng(1)
        for text in SMOOTH_EXPRESSIONS:
            f = parse_expression(text, 3)
            x = gen.uniform(-1.5, 1.5, (100, 3))
            exact = f.gradient(x)
            approx = finite_difference_gradient(f, x)
            scale = np.maximum(np.linalg.norm(exact, axis=1), 1.0)
            err = np.linalg.norm(exact - approx, axis=1) / scale
            assert np.max(err) < 1e-5, text

    def test_analytic_mode_means_autodiff_for_expressions(self):
        f = parse_expression("tanh(x1) * x2", 2)
        assert f.with_mode("analytic").gradient_mode == "forward_autodiff"
        assert truncate(f, 2.0).with_mode("analytic").gradient_mode == "forward_autodiff"
        assert f.with_mode("finite_difference").gradient_mode == "finite_difference"
        assert max_coord(2).with_mode("analytic").gradient_mode == "analytic"

    def test_non_finite_raises(self):
        f = parse_expression("log(x1)", 1)
        with pytest.raises(NonFiniteResult):
            f.evaluate([-1.0])
        with pytest.raises(NonFiniteResult):
            f.gradient([0.0])

    def test_field_specs(self):
        assert is_max_coord(parse_field_spec("max_coord", 3))
        assert parse_field_spec("euclidean_norm", 2).evaluate([3.0, 4.0]) == 5.0
        assert parse_field_spec("linear[1, 2]", 2).evaluate([1.0, 1.0]) == 3.0
        assert parse_field_spec("constant[3]", 2).evaluate([9.0, 9.0]) == 3.0
        assert parse_field_spec("x1 * x2", 2).evaluate([2.0, 5.0]) == 10.0
        with pytest.raises(DimensionMismatch):
            parse_field_spec("linear[1, 2, 3]", 2)


class TestTruncation:
    def test_inside_band(self):
        assert truncate(max_coord(2), 10.0).evaluate([1.0, 2.0]) == 2.0

    def test_constant_is_clamped(self):
        assert truncate(constant(5.0, 1), 3.0).evaluate([0.0]) == 3.0

    def test_gradient_vanishes_outside(self):
        f = truncate(linear([1.0, 0.0]), 1.0)
        np.testing.assert_array_equal(f.gradient([2.0, 0.0]), [0.0, 0.0])
        np.testing.assert_array_equal(f.gradient([0.5, 0.0]), [1.0, 0.0])
        assert f.evaluate([-4.0, 0.0]) == -1.0

    def test_level_must_be_positive(self):
        with pytest.raises(NonPositiveInput):
            truncate(max_coord(2), 0.0)

    def test_contraction(self):
        gen = np.random.default_rng(2)
        f = parse_expression("3 * sin(x1) * x2 + x2^2", 2)
        fn = truncate(f, 1.5)
        x = gen.normal(0.0, 2.0, (10_000, 2))
        y = gen.normal(0.0, 2.0, (10_000, 2))
        assert np.all(np.abs(fn.evaluate(x) - fn.evaluate(y)) <= np.abs(f.evaluate(x) - f.evaluate(y)))
        assert np.all(np.abs(fn.evaluate(x)) <= 1.5)

    def test_monotone_in_level(self):
        f = euclidean_norm(2)
        x = np.array([3.0, 4.0])
        values = [truncate(f, n).evaluate(x) for n in (1.0, 2.0, 4.0, 8.0)]
        assert values == sorted(values)


class TestMaxCoordIdentities:
    def test_examples(self):
        assert max_coord_gradient_identity(3, [1.0, 2.0, 3.0]) == (1.0, 1.0)
        assert max_coord_gradient_identity(2, [5.0, 5.0]) == (1.0, 1.0)

    def test_random_points(self):
        x = np.random.default_rng(3).standard_normal((10_000, 5))
        g = max_coord(5).gradient(x)
        np.testing.assert_array_equal(np.sum(g * g, axis=1), np.ones(10_000))
        np.testing.assert_array_equal(np.sum(g, axis=1), np.ones(10_000))

    def test_lipschitz_chain(self):
        gen = np.random.default_rng(4)
        for _ in range(1000):
            x, y = gen.standard_normal(6), gen.standard_normal(6)
            a, b, c = lipschitz_witness_max(x, y)
            assert a <= b <= c


class TestCombinators:
    def test_whiten_linear(self, corr_model):
        a = np.array([1.0, -1.0])
        ft = whiten(linear(a), corr_model.mean, corr_model.sqrt_cov)
        np.testing.assert_allclose(ft.gradient([0.2, 0.4]), corr_model.sqrt_cov @ a, atol=1e-14)

    def test_exp_tilt(self):
        f = linear([2.0])
        g = exp_tilt(f, 0.5, shift=1.0)
        assert g.evaluate([3.0]) == pytest.approx(math.exp(2.5))
        np.testing.assert_allclose(g.gradient([3.0]), [math.exp(2.5)], rtol=1e-14)

    def test_shift_keeps_gradient(self):
        f = shift(parse_expression("x1^2", 1), -4.0)
        assert f.evaluate([3.0]) == 5.0
        np.testing.assert_allclose(f.gradient([3.0]), [6.0])


class TestComplexExponential:
    def test_unit_modulus_and_gradient(self):
        t = np.array([0.7, -1.3])
        f = ComplexExponentialField(t)
        x = np.random.default_rng(5).standard_normal((50, 2))
        np.testing.assert_allclose(np.abs(f.evaluate(x)), 1.0, atol=1e-15)
        np.testing.assert_allclose(f.gradient(x), 1j * t[None, :] * f.evaluate(x)[:, None])

    def test_complex_step(self):
        gen = np.random.default_rng(6)
        for _ in range(20):
            t = gen.uniform(-4.0, 4.0, 3)
            x = gen.standard_normal(3)
            f = ComplexExponentialField(t)
            np.testing.assert_allclose(f.complex_step_gradient(x), f.gradient(x), atol=1e-8)
