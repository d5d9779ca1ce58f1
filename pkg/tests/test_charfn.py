import cmath
import math

import numpy as np
import pytest

from charfn import (FrequencyPair, converge_interpolation_identity, derivative_mc, gauss_legendre, phi_alpha,
                    phi_alpha_derivative, phi_alpha_mc, phi_X, sigma_inner, verify_interpolation_identity)
from errors import AlphaOutOfRange, DimensionMismatch
from gaussian_core import RngStream, build_model

E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


def random_vector(gen, dim, max_norm):
    v = gen.standard_normal(dim)
    return v / np.linalg.norm(v) * gen.uniform(0.0, max_norm)


class TestQuadratureRule:
    def test_weights(self):
        rule = gauss_legendre(32)
        assert np.all(rule.weights > 0)
        assert np.all((rule.nodes > 0) & (rule.nodes < 1))
        assert abs(rule.weights.sum() - 1.0) < 1e-14

    def test_polynomial_exactness(self):
        rule = gauss_legendre(8)
        for k in range(16):
            assert rule.integrate(lambda a: a ** k) == pytest.approx(1.0 / (k + 1), abs=1e-13)


class TestClosedForms:
    def test_phi_x(self, identity2):
        assert phi_X(identity2, np.zeros(2)) == 1.0
        assert phi_X(identity2, E1) == pytest.approx(math.exp(-0.5), abs=1e-15)
        shifted = build_model(E1, np.eye(2))
        assert phi_X(shifted, E1) == pytest.approx(cmath.exp(1j) * math.exp(-0.5), abs=1e-15)

    def test_boundaries_match_closed_forms_exactly(self, model_factory):
        model = model_factory(1, 3)
        gen = np.random.default_rng(0)
        pair = FrequencyPair(gen.standard_normal(3), gen.standard_normal(3))
        assert phi_alpha(model, 0.0, pair) == phi_X(model, pair.t) * phi_X(model, pair.s)
        assert phi_alpha(model, 1.0, pair) == phi_X(model, pair.t + pair.s)

    def test_interior_value(self, identity2):
        pair = FrequencyPair(E1, E1)
        assert phi_alpha(identity2, 0.5, pair) == pytest.approx(math.exp(-1.5), abs=1e-15)

    def test_derivative(self, identity2):
        assert phi_alpha_derivative(identity2, 0.3, FrequencyPair(E1, E2)) == 0
        assert phi_alpha_derivative(identity2, 0.5, FrequencyPair(E1, E1)) == pytest.approx(-math.exp(-1.5), abs=1e-15)

    def test_derivative_matches_finite_differences(self):
        gen = np.random.default_rng(2)
        h = 1e-6
        for i in range(20):
            dim = 1 + i % 3
            cov = np.atleast_2d(gen.standard_normal((dim, dim)))
            model = build_model(gen.uniform(-1, 1, dim), cov @ cov.T / dim)
            pair = FrequencyPair(random_vector(gen, dim, 1.0), random_vector(gen, dim, 1.0))
            alpha = gen.uniform(0.1, 0.9)
            fd = (phi_alpha(model, alpha + h, pair) - phi_alpha(model, alpha - h, pair)) / (2 * h)
            assert abs(fd - phi_alpha_derivative(model, alpha, pair)) < 1e-8

    def test_modulus_at_most_one(self, model_factory):
        gen = np.random.default_rng(3)
        model = model_factory(4, 2)
        for alpha in np.linspace(0.0, 1.0, 11):
            pair = FrequencyPair(gen.standard_normal(2) * 3, gen.standard_normal(2) * 3)
            assert abs(phi_alpha(model, alpha, pair)) <= 1.0

    def test_alpha_out_of_range(self, identity2):
        with pytest.raises(AlphaOutOfRange):
            phi_alpha(identity2, 1.01, FrequencyPair(E1, E1))

    def test_frequency_dimension(self, identity2):
        with pytest.raises(DimensionMismatch):
            FrequencyPair(np.zeros(2), np.zeros(3))
        with pytest.raises(DimensionMismatch):
            phi_X(identity2, np.zeros(3))


class TestInterpolationIdentity:
    def test_orthogonal_frequencies(self, identity2):
        assert abs(verify_interpolation_identity(identity2, FrequencyPair(E1, E2))) < 1e-15

    def test_parallel_frequencies(self, identity2):
        pair = FrequencyPair(E1, E1)
        assert phi_alpha(identity2, 1.0, pair) - phi_alpha(identity2, 0.0, pair) == pytest.approx(
            math.exp(-2) - math.exp(-1), abs=1e-15)
        assert abs(verify_interpolation_identity(identity2, pair, gauss_legendre(32))) < 1e-12

    def test_random_sweep(self):
        gen = np.random.default_rng(7)
        rule = gauss_legendre(32)
        worst = 0.0
        for _ in range(100):
            dim = int(gen.integers(1, 5))
            a = gen.standard_normal((dim, dim))
            cov = a @ a.T
            cov *= 4.0 * gen.uniform(0.1, 1.0) / np.linalg.eigvalsh(cov)[-1]
            model = build_model(gen.uniform(-2, 2, dim), 0.5 * (cov + cov.T))
            pair = FrequencyPair(random_vector(gen, dim, 4.0), random_vector(gen, dim, 4.0))
            worst = max(worst, abs(verify_interpolation_identity(model, pair, rule)))
        assert worst < 1e-10

    def test_convergence_by_doubling(self, corr_model):
        pair = FrequencyPair(np.array([1.0, 0.5]), np.array([0.5, 1.5]))
        steps = converge_interpolation_identity(corr_model, pair, start_nodes=4)
        assert len(steps) >= 2
        assert abs(steps[-1].residual) < 1e-12


class TestMonteCarloTies:
    def test_phi_alpha_mc(self, corr_model):
        pair = FrequencyPair(np.array([0.4, -0.3]), np.array([0.2, 0.5]))
        n = 100_000
        for k, alpha in enumerate((0.0, 0.3, 0.8, 1.0)):
            est = phi_alpha_mc(corr_model, alpha, pair, n, RngStream(21, k))
            exact = phi_alpha(corr_model, alpha, pair)
            assert abs(est.mean.real - exact.real) < 5 / math.sqrt(n)
            assert abs(est.mean.imag - exact.imag) < 5 / math.sqrt(n)

    def test_derivative_mc(self, identity2):
        pair = FrequencyPair(E1, np.array([0.5, 0.5]))
        est = derivative_mc(identity2, 0.4, pair, 100_000, RngStream(22, 0))
        exact = phi_alpha_derivative(identity2, 0.4, pair)
        assert abs(est.mean - exact) < 5 * est.std_error + 1e-12
        assert sigma_inner(identity2, pair) == 0.5
