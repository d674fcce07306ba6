"""Direction sets, projections, fitting, and the sandwich covariance."""

import math

import numpy as np
import pytest

from maxcrps import (
    ConfigError,
    ContractError,
    DirectionSet,
    FitOptions,
    LogisticModel,
    MaxLinearModel,
    MaxLinearSpec,
    NumericalError,
    ParamDomain,
    RngStream,
    bread_matrix,
    build_direction_set,
    crps_estimate,
    crps_objective,
    expected_crps,
    fit_continuous,
    fit_finite,
    meat_matrix,
    project,
    sandwich,
)
from maxcrps.estimator import fit_result_to_dict
from maxcrps.linalg import symmetric_eigen_min
from maxcrps.special import SQRT_HALF_PI, lower_incomplete_gamma_half
from oracles import fd_hessian

B_MATRIX = np.array([[1, 1, 0, 0], [1, 0, 1, 0], [0, 1, 1, 0]], dtype=float)
C_MATRIX = np.array([[1, 1, 0, 0], [1, 0, 1, 0], [1, 0, 0, 1]], dtype=float)


class SigmaOnlyLogistic:
    """One-parameter wrapper: logistic with the dependence exponent frozen."""

    family = "logistic_sigma_only"
    param_names = ("sigma",)

    def __init__(self, dimension: int, alpha: float):
        self._inner = LogisticModel(dimension)
        self._alpha = alpha
        self.dimension = dimension
        self.param_space = (ParamDomain("sigma", 0.0, math.inf, 0.5, 20.0),)

    def _full(self, theta):
        return np.array([float(np.atleast_1d(theta)[0]), self._alpha])

    def v_many(self, theta, points):
        return self._inner.v_many(self._full(theta), points)

    def v_grad_many(self, theta, points):
        return self._inner.v_grad_many(self._full(theta), points)[:, :1]

    def sample(self, theta, stream, n):
        return self._inner.sample(self._full(theta), stream, n)


class DegenerateGradientModel(SigmaOnlyLogistic):
    """Two parameters whose gradients are collinear: the bread is singular."""

    param_names = ("a", "b")

    def __init__(self, dimension: int, alpha: float):
        super().__init__(dimension, alpha)
        self.param_space = (
            ParamDomain("a", 0.0, math.inf, 0.5, 20.0),
            ParamDomain("b", 0.0, math.inf, 0.5, 20.0),
        )

    def v_many(self, theta, points):
        return super().v_many([float(theta[0]) * float(theta[1])], points)

    def v_grad_many(self, theta, points):
        grads = super().v_grad_many([float(theta[0]) * float(theta[1])], points)
        return np.hstack([grads * float(theta[1]), grads * float(theta[0])])


class TestDirectionSet:
    def test_one_dimensional_simplex_is_a_point(self):
        dirs = build_direction_set(RngStream(1), 1, 10)
        assert np.array_equal(dirs.directions, np.ones((10, 1)))

    def test_rows_sum_to_one(self):
        dirs = build_direction_set(RngStream(2), 6, 500)
        assert np.all(np.abs(dirs.directions.sum(axis=1) - 1.0) <= 1e-12)
        assert np.all(dirs.directions > 0)

    def test_coordinate_means(self):
        dirs = build_direction_set(RngStream(3), 4, 100_000)
        means = dirs.directions.mean(axis=0)
        # coordinates of a uniform simplex point have mean 1/d and sd ~ 1/d
        se = dirs.directions.std(axis=0, ddof=1) / math.sqrt(dirs.count)
        assert np.all(np.abs(means - 0.25) < 3.0 * se)

    def test_determinism(self):
        a = build_direction_set(RngStream(4), 3, 100)
        b = build_direction_set(RngStream(4), 3, 100)
        assert np.array_equal(a.directions, b.directions)

    def test_validation(self):
        with pytest.raises(ContractError):
            DirectionSet(np.array([[0.5, 0.6]]))  # does not sum to one
        with pytest.raises(ContractError):
            build_direction_set(RngStream(5), 0, 10)


class TestProject:
    def test_hand_examples(self):
        dirs = DirectionSet(np.array([[0.5, 0.5], [0.25, 0.75]]))
        proj = project(np.array([[1.0, 1.0], [2.0, 6.0]]), dirs)
        assert proj.values[0, 0] == pytest.approx(2.0, abs=1e-14)
        assert proj.values[1, 1] == pytest.approx(8.0, abs=1e-14)

    def test_dimension_mismatch(self):
        dirs = build_direction_set(RngStream(6), 3, 5)
        with pytest.raises(ContractError, match="2.*3|3.*2"):
            project(np.ones((4, 2)), dirs)

    def test_matches_direct_loop(self):
        gen = RngStream(7).generator()
        data = np.exp(gen.uniform(-1, 1, size=(50, 4)))
        dirs = build_direction_set(RngStream(8), 4, 33)
        proj = project(data, dirs)
        direct = np.array([[np.max(row / u) for u in dirs.directions] for row in data])
        assert np.array_equal(proj.values, direct)


class TestFitContinuous:
    def test_recovers_parameters(self):
        model = LogisticModel(5)
        theta0 = np.array([5.0, 0.7])
        data = model.sample(theta0, RngStream(10).child(0), 800)
        dirs = build_direction_set(RngStream(10).child(1), 5, 400)
        fit = fit_continuous(data, dirs, model, FitOptions(multistarts=3, stream=RngStream(10).child(2)))
        assert fit.converged
        assert abs(fit.theta_hat[0] - 5.0) < 1.0
        assert abs(fit.theta_hat[1] - 0.7) < 0.08

    def test_descent_from_truth(self):
        model = LogisticModel(3)
        theta0 = np.array([2.0, 0.5])
        data = model.sample(theta0, RngStream(11).child(0), 300)
        dirs = build_direction_set(RngStream(11).child(1), 3, 200)
        proj = project(data, dirs)
        order = dirs.canonical_order
        start_value = crps_objective(proj.values[:, order], model.v_many(theta0, dirs.directions[order]))
        fit = fit_continuous(data, dirs, model, FitOptions(starts=(theta0,)))
        assert fit.objective_value <= start_value + 1e-9

    def test_deterministic(self):
        model = LogisticModel(3)
        data = model.sample(np.array([2.0, 0.5]), RngStream(12).child(0), 200)
        dirs = build_direction_set(RngStream(12).child(1), 3, 150)
        options = FitOptions(multistarts=2, stream=RngStream(12).child(2))
        one = fit_continuous(data, dirs, model, options)
        two = fit_continuous(data, dirs, model, options)
        assert np.array_equal(one.theta_hat, two.theta_hat)
        assert one.objective_value == two.objective_value

    def test_site_relabeling_equivariance(self):
        model = LogisticModel(4)
        data = model.sample(np.array([3.0, 0.6]), RngStream(13).child(0), 250)
        dirs = build_direction_set(RngStream(13).child(1), 4, 100)
        options = FitOptions(multistarts=2, stream=RngStream(13).child(2))
        base = fit_continuous(data, dirs, model, options)
        perm = [2, 0, 3, 1]
        permuted_dirs = DirectionSet(dirs.directions[:, perm])
        shuffled = fit_continuous(data.data[:, perm], permuted_dirs, model, options)
        assert np.array_equal(base.theta_hat, shuffled.theta_hat)

    def test_direction_permutation_invariance(self):
        model = LogisticModel(3)
        data = model.sample(np.array([2.0, 0.5]), RngStream(14).child(0), 150)
        dirs = build_direction_set(RngStream(14).child(1), 3, 80)
        options = FitOptions(multistarts=2, stream=RngStream(14).child(2))
        base = fit_continuous(data, dirs, model, options)
        perm = RngStream(15).generator().permutation(80)
        shuffled_dirs = DirectionSet(dirs.directions[perm])
        shuffled = fit_continuous(data, shuffled_dirs, model, options)
        assert np.array_equal(base.theta_hat, shuffled.theta_hat)
        assert base.objective_value == shuffled.objective_value


class TestFitFinite:
    def test_selects_generating_matrix(self):
        spec = MaxLinearSpec((B_MATRIX, C_MATRIX), 0)
        model = MaxLinearModel(spec)
        data = model.sample(0, RngStream(16), 1000)
        dirs = build_direction_set(RngStream(17), 3, 500)
        fit = fit_finite(data, dirs, model)
        assert fit.theta_hat == 0
        assert fit.diagnostics["tie"] is False

    def test_single_candidate(self):
        model = MaxLinearModel(MaxLinearSpec((B_MATRIX,), 0))
        data = model.sample(0, RngStream(18), 50)
        dirs = build_direction_set(RngStream(19), 3, 50)
        fit = fit_finite(data, dirs, model)
        assert fit.theta_hat == 0
        assert fit.converged

    def test_tie_breaks_to_lowest_index(self):
        model = MaxLinearModel(MaxLinearSpec((B_MATRIX, B_MATRIX), 0))
        data = model.sample(0, RngStream(20), 100)
        dirs = build_direction_set(RngStream(21), 3, 60)
        fit = fit_finite(data, dirs, model)
        assert fit.theta_hat == 0
        assert fit.diagnostics["tie"] is True


class TestBreadMatrix:
    def test_single_parameter_matches_expected_crps_curvature(self):
        model = SigmaOnlyLogistic(4, alpha=0.6)
        dirs = build_direction_set(RngStream(22), 4, 50)
        theta0 = np.array([3.0])
        bread = bread_matrix(model, dirs, theta0)
        v0 = model.v_many(theta0, dirs.directions)

        def expected_total(theta):
            return float(np.sum(expected_crps(v0, model.v_many(theta, dirs.directions))))

        hess = fd_hessian(expected_total, theta0, step=1e-4)
        assert bread[0, 0] == pytest.approx(hess[0, 0], rel=1e-4)

    def test_full_hessian_match_logistic(self):
        model = LogisticModel(5)
        dirs = build_direction_set(RngStream(23), 5, 100)
        theta0 = np.array([5.0, 0.7])
        bread = bread_matrix(model, dirs, theta0)
        v0 = model.v_many(theta0, dirs.directions)

        def expected_total(theta):
            return float(np.sum(expected_crps(v0, model.v_many(theta, dirs.directions))))

        hess = fd_hessian(expected_total, theta0, step=1e-4)
        assert np.linalg.norm(bread - hess) <= 1e-3 * np.linalg.norm(hess)

    def test_duplicated_direction_doubles_contribution(self):
        # one parameter so that a single direction already gives a PD bread
        model = SigmaOnlyLogistic(3, alpha=0.5)
        theta0 = np.array([2.0])
        u = np.array([[0.2, 0.3, 0.5]])
        single = bread_matrix(model, DirectionSet(u), theta0)
        double = bread_matrix(model, DirectionSet(np.vstack([u, u])), theta0)
        assert np.array_equal(double, 2.0 * single)

    def test_positive_definite_at_scale(self):
        model = LogisticModel(5)
        dirs = build_direction_set(RngStream(24), 5, 100)
        bread = bread_matrix(model, dirs, np.array([5.0, 0.7]))
        assert np.array_equal(bread, bread.T)
        assert symmetric_eigen_min(bread) > 0

    def test_singular_gradients_raise(self):
        model = DegenerateGradientModel(3, alpha=0.5)
        dirs = build_direction_set(RngStream(25), 3, 40)
        with pytest.raises(NumericalError, match="singular bread"):
            bread_matrix(model, dirs, np.array([2.0, 1.5]))

    def test_direction_permutation_invariance(self):
        model = LogisticModel(4)
        dirs = build_direction_set(RngStream(26), 4, 64)
        theta0 = np.array([3.0, 0.4])
        base = bread_matrix(model, dirs, theta0)
        perm = RngStream(27).generator().permutation(64)
        shuffled = bread_matrix(model, DirectionSet(dirs.directions[perm]), theta0)
        assert np.array_equal(base, shuffled)


class TestMeatMatrix:
    def test_score_means_at_truth(self):
        # the per-direction score factor gamma_half(V/M) has mean sqrt(pi/2)
        model = LogisticModel(4)
        theta0 = np.array([2.0, 0.6])
        dirs = build_direction_set(RngStream(28), 4, 30)
        draws = model.sample(theta0, RngStream(29), 20_000)
        proj = project(draws, dirs)
        v0 = model.v_many(theta0, dirs.directions)
        gammas = lower_incomplete_gamma_half(v0[None, :] / proj.values)
        means = gammas.mean(axis=0)
        ses = gammas.std(axis=0, ddof=1) / math.sqrt(draws.n)
        assert np.all(np.abs(means - SQRT_HALF_PI) < 3.0 * ses)

    def test_single_direction_scalar_reduction(self):
        model = SigmaOnlyLogistic(3, alpha=0.5)
        theta0 = np.array([2.0])
        dirs = DirectionSet(np.array([[0.3, 0.3, 0.4]]))
        stream = RngStream(30)
        meat = meat_matrix(model, dirs, theta0, mc_size=4000, stream=stream)
        # identical draws: the meat must equal 4 * Var(gamma) * V'^2 / V exactly
        draws = model.sample(theta0, stream, 4000)
        proj = project(draws, dirs)
        v0 = model.v_many(theta0, dirs.directions)[0]
        grad = model.v_grad_many(theta0, dirs.directions)[0, 0]
        gammas = lower_incomplete_gamma_half(v0 / proj.values[:, 0])
        direct = 4.0 * gammas.var(ddof=1) * grad ** 2 / v0
        assert meat[0, 0] == pytest.approx(direct, rel=1e-12)

    def test_positive_semidefinite(self):
        model = LogisticModel(5)
        dirs = build_direction_set(RngStream(31), 5, 100)
        meat = meat_matrix(model, dirs, np.array([5.0, 0.7]), mc_size=2000, stream=RngStream(32))
        assert symmetric_eigen_min(meat) >= -1e-10 * np.trace(meat)

    def test_mc_size_floor(self):
        model = LogisticModel(3)
        dirs = build_direction_set(RngStream(33), 3, 10)
        with pytest.raises(ConfigError):
            meat_matrix(model, dirs, np.array([2.0, 0.5]), mc_size=500, stream=RngStream(34))

    def test_doubling_consistency(self):
        model = LogisticModel(3)
        dirs = build_direction_set(RngStream(35), 3, 50)
        theta0 = np.array([2.0, 0.5])
        small, small_se = meat_matrix(model, dirs, theta0, 2000, RngStream(36), with_se=True)
        large, large_se = meat_matrix(model, dirs, theta0, 8000, RngStream(37), with_se=True)
        combined = np.sqrt(small_se ** 2 + large_se ** 2)
        assert np.all(np.abs(small - large) <= 3.0 * combined)

    def test_direction_permutation_invariance(self):
        model = LogisticModel(4)
        dirs = build_direction_set(RngStream(38), 4, 32)
        theta0 = np.array([3.0, 0.4])
        base = meat_matrix(model, dirs, theta0, 1500, RngStream(39))
        perm = RngStream(40).generator().permutation(32)
        shuffled = meat_matrix(model, DirectionSet(dirs.directions[perm]), theta0, 1500, RngStream(39))
        assert np.array_equal(base, shuffled)


class TestSandwich:
    def test_meat_equals_bread_collapses_to_inverse(self):
        bread = np.array([[4.0, 1.0], [1.0, 3.0]])
        cov, intervals = sandwich(np.array([1.0, 2.0]), bread, bread, 10)
        assert np.allclose(cov.asym_cov, np.linalg.inv(bread) / 10.0, atol=1e-12)
        assert intervals.shape == (2, 2)

    def test_scalar_formula(self):
        bread = np.array([[5.0]])
        meat = np.array([[2.0]])
        cov, intervals = sandwich(np.array([3.0]), bread, meat, 25)
        assert cov.asym_cov[0, 0] == pytest.approx(2.0 / (25.0 * 25.0), rel=1e-12)
        half = 1.96 * math.sqrt(2.0 / 625.0)
        assert intervals[0, 0] == pytest.approx(3.0 - half, rel=1e-12)
        assert intervals[0, 1] == pytest.approx(3.0 + half, rel=1e-12)

    def test_singular_bread_propagates(self):
        with pytest.raises(NumericalError):
            sandwich(np.array([1.0]), np.array([[0.0]]), np.array([[1.0]]), 10)

    def test_negative_variance_detected(self):
        bread = np.eye(2)
        meat = np.array([[-1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(NumericalError):
            sandwich(np.array([0.0, 0.0]), bread, meat, 4)


class TestPipeline:
    def test_crps_estimate_deterministic(self):
        model = LogisticModel(3)
        data = model.sample(np.array([2.0, 0.5]), RngStream(41).child(0), 150)
        one = crps_estimate(data, model, RngStream(42), n_directions=80,
                            options=FitOptions(multistarts=2), meat_mc_size=1000)
        two = crps_estimate(data, model, RngStream(42), n_directions=80,
                            options=FitOptions(multistarts=2), meat_mc_size=1000)
        assert np.array_equal(one.theta_hat, two.theta_hat)
        assert np.array_equal(one.sandwich.asym_cov, two.sandwich.asym_cov)
        assert np.array_equal(one.intervals, two.intervals)

    def test_finite_model_gets_no_sandwich(self):
        model = MaxLinearModel(MaxLinearSpec((B_MATRIX, C_MATRIX), 0))
        data = model.sample(0, RngStream(43), 200)
        fit = crps_estimate(data, model, RngStream(44), n_directions=100)
        assert fit.sandwich is None
        assert fit.intervals is None

    def test_fit_result_document_fields(self):
        model = LogisticModel(3)
        data = model.sample(np.array([2.0, 0.5]), RngStream(45).child(0), 120)
        fit = crps_estimate(data, model, RngStream(46), n_directions=60,
                            options=FitOptions(multistarts=2), meat_mc_size=1000)
        doc = fit_result_to_dict(fit)
        for key in ("schema_version", "theta_hat", "objective", "converged",
                    "intervals", "H", "J", "asym_cov", "seeds", "n_directions", "meat_mc_size"):
            assert key in doc, key
        assert "wall_time" not in json_dump_keys(doc)


def json_dump_keys(doc) -> set:
    import json

    flat = set()

    def walk(node):
        if isinstance(node, dict):
            for key, value in node.items():
                flat.add(key)
                walk(value)
        elif isinstance(node, list):
            for value in node:
                walk(value)

    walk(json.loads(json.dumps(doc)))
    return flat
