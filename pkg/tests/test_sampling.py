"""Samplers: determinism, margins, joint laws, and file round trips."""

import math

import numpy as np
import pytest
import scipy.stats

from maxcrps import (
    CorrelationFn,
    DataError,
    DomainError,
    FrechetLaw,
    LogisticParams,
    MaxLinearSpec,
    ObservationSet,
    RngStream,
    SiteSet,
    correlation,
    frechet_cdf,
    read_observations,
    sample_frechet,
    sample_gaussian_field,
    sample_logistic,
    sample_max_linear,
    sample_positive_stable,
    sample_schlather,
)
from oracles import frechet_truncated_mean

B_MATRIX = np.array([[1, 1, 0, 0], [1, 0, 1, 0], [0, 1, 1, 0]], dtype=float)


def ks_pvalue(sample: np.ndarray, scale: float) -> float:
    law = FrechetLaw(scale)
    return scipy.stats.kstest(sample, lambda x: frechet_cdf(law, x)).pvalue


class TestFrechetSampler:
    def test_determinism(self):
        a = sample_frechet(RngStream(1, 5), 2.0, 1000)
        b = sample_frechet(RngStream(1, 5), 2.0, 1000)
        assert np.array_equal(a, b)
        c = sample_frechet(RngStream(1, 6), 2.0, 1000)
        assert not np.array_equal(a, c)

    def test_ks_against_cdf(self):
        draws = sample_frechet(RngStream(101), 3.0, 10_000)
        assert ks_pvalue(draws, 3.0) > 0.01

    def test_truncated_mean(self):
        # cutoff chosen so the truncated variable has usable variance; the
        # heavy Frechet tail makes the check powerless at huge cutoffs
        cutoff = 100.0
        draws = sample_frechet(RngStream(102), 1.0, 400_000)
        clipped = np.minimum(draws, cutoff)
        se = clipped.std(ddof=1) / math.sqrt(clipped.size)
        assert abs(clipped.mean() - frechet_truncated_mean(1.0, cutoff)) < 3.0 * se

    def test_domain(self):
        with pytest.raises(DomainError):
            sample_frechet(RngStream(1), 0.0, 10)


class TestPositiveStable:
    @pytest.mark.parametrize("alpha", [0.3, 0.7])
    def test_laplace_transform(self, alpha):
        draws = sample_positive_stable(RngStream(103), alpha, 400_000)
        for t in (1.0, 4.0):
            transformed = np.exp(-t * draws)
            se = transformed.std(ddof=1) / math.sqrt(draws.size)
            assert abs(transformed.mean() - math.exp(-(t ** alpha))) < 3.0 * se

    def test_domain(self):
        for alpha in (0.0, 1.0, 1.5):
            with pytest.raises(DomainError):
                sample_positive_stable(RngStream(1), alpha, 10)


class TestLogisticSampler:
    def test_margins(self):
        params = LogisticParams(5.0, 0.7)
        obs = sample_logistic(RngStream(104), params, 5, 10_000)
        for col in range(5):
            assert ks_pvalue(obs.data[:, col], 5.0) > 0.01

    def test_joint_cdf_on_diagonal(self):
        params = LogisticParams(5.0, 0.7)
        obs = sample_logistic(RngStream(105), params, 5, 100_000)
        for x in (2.0, 5.0, 10.0):
            target = math.exp(-5.0 * 5.0 ** 0.7 / x)
            hits = np.all(obs.data <= x, axis=1).mean()
            se = math.sqrt(target * (1.0 - target) / obs.n)
            assert abs(hits - target) < 3.0 * se, x

    def test_near_independence_extremal_coefficient(self):
        params = LogisticParams(1.0, 0.999)
        obs = sample_logistic(RngStream(106), params, 2, 200_000)
        pair_max = obs.data.max(axis=1)
        estimate = 1.0 / np.mean(1.0 / pair_max)
        assert estimate == pytest.approx(2.0 ** 0.999, abs=0.02)

    def test_determinism(self):
        params = LogisticParams(2.0, 0.5)
        a = sample_logistic(RngStream(9, 3), params, 3, 50)
        b = sample_logistic(RngStream(9, 3), params, 3, 50)
        assert np.array_equal(a.data, b.data)


class TestMaxLinearSampler:
    def test_margin_scales_are_row_sums(self):
        spec = MaxLinearSpec((B_MATRIX,), 0)
        obs = sample_max_linear(RngStream(107), spec, 10_000)
        for i in range(3):
            assert ks_pvalue(obs.data[:, i], B_MATRIX[i].sum()) > 0.01

    def test_joint_cdf_on_diagonal(self):
        spec = MaxLinearSpec((B_MATRIX,), 0)
        obs = sample_max_linear(RngStream(108), spec, 100_000)
        for x in (2.0, 5.0):
            target = math.exp(-3.0 / x)  # V(1,1,1) = 3 for this matrix
            hits = np.all(obs.data <= x, axis=1).mean()
            se = math.sqrt(target * (1.0 - target) / obs.n)
            assert abs(hits - target) < 3.0 * se

    def test_single_column_comonotone(self):
        spec = MaxLinearSpec((np.array([[2.0], [0.5]]),), 0)
        obs = sample_max_linear(RngStream(109), spec, 200)
        ratio = obs.data[:, 0] / obs.data[:, 1]
        assert np.allclose(ratio, 4.0, rtol=1e-12)

    def test_dominated_row_inequality(self):
        # row 3 of this matrix is dominated columnwise by rows 1-2
        spec = MaxLinearSpec((B_MATRIX,), 0)
        obs = sample_max_linear(RngStream(110), spec, 5000)
        assert np.all(obs.data[:, 2] <= np.maximum(obs.data[:, 0], obs.data[:, 1]) + 1e-12)


class TestGaussianField:
    def test_empirical_correlation(self):
        sites = SiteSet(np.array([[0.0, 0.0], [30.0, 0.0], [0.0, 80.0]]))
        fn = CorrelationFn("stable", 50.0, 1.0)
        draws = sample_gaussian_field(RngStream(111), fn, sites, 100_000)
        emp = np.corrcoef(draws.T)
        dist = np.array([[0.0, 30.0, 80.0], [30.0, 0.0, math.hypot(30, 80)], [80.0, math.hypot(30, 80), 0.0]])
        target = correlation(fn, dist)
        assert np.all(np.abs(emp - target) < 0.02)

    def test_single_site_standard_normal(self):
        draws = sample_gaussian_field(
            RngStream(112), CorrelationFn("stable", 10.0, 1.0), SiteSet(np.array([[0.0, 0.0]])), 10_000
        )
        assert scipy.stats.kstest(draws[:, 0], "norm").pvalue > 0.01

    def test_near_unit_correlation(self):
        sites = SiteSet(np.array([[0.0, 0.0], [1e-9, 0.0]]))
        draws = sample_gaussian_field(RngStream(113), CorrelationFn("stable", 1e6, 1.0), sites, 2000)
        assert np.corrcoef(draws.T)[0, 1] > 1.0 - 1e-6


class TestSchlatherSampler:
    def test_margins(self):
        sites = SiteSet(np.array([[0.0, 0.0], [50.0, 0.0]]))
        obs = sample_schlather(RngStream(114), CorrelationFn("stable", 100.0, 1.0), sites, 5000)
        for col in range(2):
            assert ks_pvalue(obs.data[:, col], 1.0) > 0.005

    def test_complete_dependence_extremal_coefficient(self):
        sites = SiteSet(np.array([[0.0, 0.0], [1e-6, 0.0]]))
        obs = sample_schlather(RngStream(115), CorrelationFn("stable", 1e9, 1.0), sites, 5000)
        estimate = 1.0 / np.mean(1.0 / obs.data.max(axis=1))
        assert abs(estimate - 1.0) < 0.05

    def test_bivariate_extremal_coefficient(self):
        distance = 50.0
        fn = CorrelationFn("stable", 100.0, 1.0)
        sites = SiteSet(np.array([[0.0, 0.0], [distance, 0.0]]))
        obs = sample_schlather(RngStream(116), fn, sites, 20_000)
        estimate = 1.0 / np.mean(1.0 / obs.data.max(axis=1))
        target = 1.0 + math.sqrt((1.0 - correlation(fn, distance)) / 2.0)
        assert abs(estimate - target) < 0.05

    def test_determinism(self):
        sites = SiteSet(np.array([[0.0, 0.0], [20.0, 0.0]]))
        fn = CorrelationFn("stable", 50.0, 1.0)
        a = sample_schlather(RngStream(117), fn, sites, 100)
        b = sample_schlather(RngStream(117), fn, sites, 100)
        assert np.array_equal(a.data, b.data)


class TestObservationSet:
    def test_rejects_nonpositive_with_cell_reference(self):
        data = np.array([[1.0, 2.0], [3.0, -1.0]])
        with pytest.raises(DataError, match="row=2, column=2"):
            ObservationSet(data)

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            ObservationSet(np.array([[1.0, float("nan")]]))

    def test_csv_round_trip(self, tmp_path):
        obs = sample_logistic(RngStream(118), LogisticParams(2.0, 0.4), 3, 25)
        path = tmp_path / "observations.csv"
        obs.write_csv(path)
        text = path.read_text()
        assert text.splitlines()[0] == "site_1,site_2,site_3"
        loaded = read_observations(path)
        assert np.array_equal(loaded.data, obs.data)
        assert loaded.provenance["family"] == "logistic"

    def test_csv_seventeen_significant_digits(self, tmp_path):
        obs = ObservationSet(np.array([[math.pi, math.e]]))
        path = tmp_path / "x.csv"
        obs.write_csv(path)
        row = path.read_text().splitlines()[1]
        assert row.split(",")[0] == f"{math.pi:.17g}"

    def test_read_malformed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("site_1,site_2\n1.0\n")
        with pytest.raises(DataError, match="line 2"):
            read_observations(path)
