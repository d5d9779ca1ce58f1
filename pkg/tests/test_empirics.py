import math

import numpy as np
import pytest
from scipy.stats import norm

from concentration import estimate_sup_seminorm
from empirics import Verdict, certify, clopper_pearson, empirical_tail, mean_positive_part, mgf_empirical_check
from errors import InvalidBoundForField
from gaussian_core import RngStream, build_model
from scalar_fields import constant, linear, max_coord, parse_expression, truncate


class TestClopperPearson:
    def test_contains_point_estimate(self):
        lo, hi = clopper_pearson(30, 1000, 0.99)
        assert lo < 0.03 < hi

    def test_zero_successes(self):
        lo, hi = clopper_pearson(0, 10_000, 0.99)
        assert lo == 0.0
        # (alpha / 2)^(1/n) rule for k = 0
        assert hi == pytest.approx(1.0 - 0.005 ** (1.0 / 10_000), rel=1e-9)

    def test_all_successes(self):
        lo, hi = clopper_pearson(50, 50, 0.95)
        assert hi == 1.0
        assert lo == pytest.approx(0.025 ** (1.0 / 50), rel=1e-9)

    def test_wider_at_higher_level(self):
        lo95, hi95 = clopper_pearson(40, 500, 0.95)
        lo99, hi99 = clopper_pearson(40, 500, 0.99)
        assert lo99 < lo95 and hi99 > hi95

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            clopper_pearson(5, 3)
        with pytest.raises(ValueError):
            clopper_pearson(0, 0)


class TestEmpiricalTail:
    def test_standard_coordinate(self, identity2):
        f = linear([1.0, 0.0])
        points = empirical_tail(identity2, f, [1.0, 2.0], 200_000, RngStream(1, 0), ci_level=0.999)
        assert [p.x for p in points] == [1.0, 2.0]
        for p in points:
            exact = norm.sf(p.x)
            assert p.cp_lower <= exact <= p.cp_upper
            assert p.empirical.mean == pytest.approx(p.count / p.empirical.n)

    def test_far_tail_has_zero_count(self, identity2):
        points = empirical_tail(identity2, linear([1.0, 0.0]), [20.0], 10_000, RngStream(2, 0))
        assert points[0].count == 0
        assert points[0].cp_lower == 0.0
        assert 0.0 < points[0].cp_upper < 2e-3

    def test_needs_enough_samples(self, identity2):
        with pytest.raises(ValueError):
            empirical_tail(identity2, max_coord(2), [1.0], 999, RngStream(3, 0))

    def test_monotone_in_x(self, corr_model):
        points = empirical_tail(corr_model, max_coord(2), [0.5, 1.0, 1.5, 2.0], 50_000, RngStream(4, 0))
        counts = [p.count for p in points]
        assert counts == sorted(counts, reverse=True)


class TestMeanPositivePart:
    def test_standard_normal(self, identity2):
        est = mean_positive_part(identity2, linear([1.0, 0.0]), 200_000, RngStream(5, 0))
        assert abs(est.mean - 1.0 / math.sqrt(2.0 * math.pi)) <= 5 * est.std_error + 5e-3


class TestCertify:
    def test_linear_field_holds(self, identity2):
        report = certify(identity2, linear([1.0, 0.0]), [1.0, 2.0, 3.0], ["basic", "improved_const"],
                         100_000, RngStream(6, 0))
        assert report.overall
        assert not report.possibly_optimistic
        assert report.seminorm.value == 1.0
        for p in report.points:
            assert p.verdicts["basic"] is Verdict.HOLDS
            assert p.bounds["basic"] == pytest.approx(math.exp(-p.x ** 2 / 2.0))

    def test_max_coord_uses_largest_variance(self):
        model = build_model(np.zeros(2), np.diag([1.0, 4.0]))
        report = certify(model, max_coord(2), [1.0, 2.0, 4.0], ["basic", "strong_moment"], 50_000, RngStream(7, 0))
        assert report.seminorm.value == 4.0
        assert report.overall
        for p in report.points:
            assert p.bounds["basic"] == p.bounds["strong_moment"]

    def test_max_coord_sixteen_dims(self):
        model = build_model(np.zeros(16), np.eye(16))
        report = certify(model, max_coord(16), [1.0, 2.0, 3.0], ["basic", "strong_moment"], 100_000, RngStream(18, 0))
        assert report.seminorm.value == 1.0
        assert report.seminorm.is_exact
        assert report.overall
        for p in report.points:
            assert p.bounds["strong_moment"] == p.bounds["basic"]
            assert Verdict.VIOLATED not in p.verdicts.values()

    def test_strong_moment_rejected_for_other_fields(self, identity2):
        with pytest.raises(InvalidBoundForField):
            certify(identity2, linear([1.0, 1.0]), [1.0], ["strong_moment"], 10_000, RngStream(8, 0))

    def test_generic_lambda_dominates(self, corr_model):
        report = certify(corr_model, max_coord(2), [1.0, 2.0], ["basic", "generic_lambda"], 20_000, RngStream(9, 0))
        assert report.grad_sup.value == 1.0
        for p in report.points:
            assert p.bounds["generic_lambda"] >= p.bounds["basic"]

    def test_improved_mean_carries_estimate(self, identity2):
        report = certify(identity2, linear([1.0, 0.0]), [2.0], ["improved_mean"], 50_000, RngStream(10, 0))
        assert report.mean_pos_part is not None
        assert report.mean_pos_part.mean == pytest.approx(0.3989, abs=0.02)
        assert report.overall

    def test_deep_tail_is_inconclusive(self, identity2):
        report = certify(identity2, linear([1.0, 0.0]), [5.0], ["basic"], 10_000, RngStream(11, 0))
        assert report.points[0].verdicts["basic"] is Verdict.INCONCLUSIVE
        assert report.overall

    def test_constant_field(self, identity2):
        report = certify(identity2, constant(2.0, 2), [0.5], ["basic"], 10_000, RngStream(12, 0))
        assert report.points[0].count == 0
        assert report.points[0].bounds["basic"] == 0.0
        assert report.overall

    def test_searched_seminorm_flags_optimism(self, identity2):
        f = parse_expression("tanh(x1) + x2 / 2", 2)
        seminorm = estimate_sup_seminorm(identity2, f, rng=RngStream(13, 2))
        report = certify(identity2, f, [1.0, 2.0], ["basic"], 20_000, RngStream(13, 0), seminorm=seminorm)
        assert report.possibly_optimistic
        assert report.seminorm.value == pytest.approx(1.25, abs=1e-6)


class TestMGF:
    def test_zero_tilt(self, identity2):
        points = mgf_empirical_check(identity2, max_coord(2), [0.0], 10_000, RngStream(14, 0))
        assert points[0].empirical.mean == 1.0
        assert points[0].bound == 1.0
        assert points[0].verdict is Verdict.HOLDS

    def test_bounded_field(self, identity2):
        f = parse_expression("tanh(x1)", 2)
        points = mgf_empirical_check(identity2, f, [0.5, 1.0, 2.0], 100_000, RngStream(15, 0), seminorm_sq=1.0)
        assert all(p.verdict is Verdict.HOLDS for p in points)

    def test_linear_field_saturates(self, identity2):
        points = mgf_empirical_check(identity2, linear([1.0, 0.0]), [0.5, 1.0], 400_000, RngStream(16, 0),
                                     ci_level=0.999)
        for p in points:
            assert p.verdict is not Verdict.VIOLATED
            assert p.empirical.mean == pytest.approx(p.bound, rel=0.05)

    def test_truncated_max_coord(self, identity2):
        f = truncate(max_coord(2), 10.0)
        points = mgf_empirical_check(identity2, f, [0.5, 1.0, 2.0], 100_000, RngStream(19, 0), seminorm_sq=1.0)
        assert [p.t for p in points] == [0.5, 1.0, 2.0]
        assert all(p.verdict is not Verdict.VIOLATED for p in points)


@pytest.mark.slow
class TestCalibration:
    def test_interval_coverage(self, identity2):
        # 99% Clopper-Pearson intervals for P(X1 >= 2) must cover the truth in most of 200 runs
        f = linear([1.0, 0.0])
        exact = norm.sf(2.0)
        covered = 0
        for run in range(200):
            p = empirical_tail(identity2, f, [2.0], 20_000, RngStream(1000 + run, 0))[0]
            covered += p.cp_lower <= exact <= p.cp_upper
        assert covered >= 190

    def test_max_coord_tail(self):
        model = build_model(np.zeros(2), np.diag([1.0, 4.0]))
        report = certify(model, max_coord(2), [1.0, 2.0, 3.0, 4.0], ["basic", "improved_const"],
                         1_000_000, RngStream(17, 0))
        assert report.overall
        assert all(v is not Verdict.VIOLATED for p in report.points for v in p.verdicts.values())

    @pytest.mark.parametrize("variances", [[1.0, 2.5], [0.5 + 0.1 * k for k in range(16)]])
    def test_strong_moment_for_diagonal_models(self, variances):
        model = build_model(np.zeros(len(variances)), np.diag(variances))
        sigma = math.sqrt(max(variances))
        report = certify(model, max_coord(len(variances)), [sigma, 2.0 * sigma, 3.0 * sigma],
                         ["basic", "strong_moment"], 1_000_000, RngStream(20, 0))
        assert report.seminorm.value == max(variances)
        assert report.overall
        assert all(v is not Verdict.VIOLATED for p in report.points for v in p.verdicts.values())

    def test_builtin_fields_across_random_models(self, sweep_models):
        for k, model in enumerate(sweep_models):
            a = np.random.default_rng(700 + k).standard_normal(model.dim)
            for f in (max_coord(model.dim), linear(a)):
                seminorm = estimate_sup_seminorm(model, f)
                assert seminorm.is_exact
                sigma = math.sqrt(seminorm.value)
                report = certify(model, f, [sigma, 2.0 * sigma, 3.0 * sigma], ["basic", "improved_const"],
                                 1_000_000, RngStream(700 + k, 0), seminorm=seminorm)
                assert report.overall, f"{f.describe()} on model {k}"
