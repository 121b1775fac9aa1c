"""Tests for the sampling drivers and statistics post-processing.

The field_rule bypass lets every statistical path run against closed-form
integrands, so collocation results can be compared with dense quadrature
references and Monte Carlo results with textbook estimator behavior.
"""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from numpy.testing import assert_allclose

from sfpde.pgsolver import manufactured_problem
from sfpde.randomspace import (
    Dimension,
    RandomParameterSpace,
    SampleSet,
    monte_carlo_set,
    smolyak_grid,
    tensor_grid,
)
from sfpde.uq import (
    ObservableGrid,
    StatisticsResult,
    StochasticProblem,
    error_report,
    exact_expectation_oracle,
    run_mcs,
    run_pcm,
    sample_field,
)


def _space_1d(lo=0.1, hi=0.9):
    return RandomParameterSpace((Dimension("alpha", lo, hi),))


def _space_2d():
    return RandomParameterSpace((Dimension("p_1", 0.0, 1.0),
                                 Dimension("p_2", -1.0, 2.0)))


def _scalar_grid():
    return ObservableGrid(np.array([1.0]))


def _dense_reference(space, func, order=20):
    """Tensor Gauss-Legendre expectation of func over the uniform measure."""
    nodes, weights = leggauss(order)
    axes = []
    wts = []
    for dim in space.dims:
        axes.append(dim.lo + (dim.hi - dim.lo) * (nodes + 1.0) / 2.0)
        wts.append(weights / 2.0)
    total = 0.0
    for i, a in enumerate(axes[0]):
        for j, b in enumerate(axes[1]):
            total += wts[0][i] * wts[1][j] * func(np.array([a, b]))
    return total


class TestObservableGrid:
    def test_trapezoid_weights_uniform(self):
        grid = ObservableGrid(np.linspace(0.0, 1.0, 5))
        h = 0.25
        assert_allclose(grid.weights, [h / 2, h, h, h, h / 2], rtol=1e-15)
        assert_allclose(grid.weights.sum(), 1.0, rtol=1e-15)

    def test_l2_of_constant_matches_measure(self):
        grid = ObservableGrid(np.linspace(0.0, 1.0, 9), (np.linspace(-1.0, 1.0, 7),))
        ones = np.ones(grid.shape)
        assert_allclose(grid.l2(ones), np.sqrt(2.0), rtol=1e-14)
        assert grid.linf(-3.0 * ones) == 3.0

    def test_single_point_axis(self):
        grid = ObservableGrid(np.array([0.5]))
        assert grid.shape == (1,)
        assert_allclose(grid.weights, [1.0])

    def test_validation(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            ObservableGrid(np.array([0.0, 0.5, 0.5]))
        with pytest.raises(ValueError, match="nonempty"):
            ObservableGrid(np.array([0.1]), (np.array([]),))
        grid = ObservableGrid(np.linspace(0.0, 1.0, 4))
        with pytest.raises(ValueError, match="does not match"):
            grid.l2(np.ones(5))


class TestSampleField:
    def test_rule_bypasses_solver(self):
        problem = StochasticProblem(
            space=_space_1d(), template=None, observables=_scalar_grid(),
            field_rule=lambda p: p[0] ** 2)
        assert_allclose(sample_field(problem, np.array([0.3])), [0.09])

    def test_template_solve_path(self):
        grid = ObservableGrid(np.linspace(0.0, 1.0, 9))
        problem = StochasticProblem(
            space=_space_1d(),
            template=lambda p: manufactured_problem("ivp_power", float(p[0]),
                                                    n_time=6)[0],
            observables=grid, quadrature_boost=20)
        field = sample_field(problem, np.array([0.5]))
        _, exact = manufactured_problem("ivp_power", 0.5)
        assert_allclose(field, exact(grid.times), atol=1e-11)

    def test_requires_some_field_source(self):
        with pytest.raises(ValueError, match="template or field_rule"):
            StochasticProblem(space=_space_1d(), template=None,
                              observables=_scalar_grid())


class TestRunPcm:
    def test_matches_direct_weighted_summation(self):
        space = _space_2d()
        nodes = tensor_grid(space, (4, 3))
        rule = lambda p: np.exp(0.3 * p[0] - 0.2 * p[1])
        problem = StochasticProblem(space=space, template=None,
                                    observables=_scalar_grid(), field_rule=rule)
        result = run_pcm(problem, nodes)

        vals = np.array([rule(p) for p in nodes.points])
        mean = float(np.sum(nodes.weights * vals))
        second = float(np.sum(nodes.weights * vals**2))
        assert_allclose(result.mean, [mean], rtol=1e-15)
        assert_allclose(result.std, [np.sqrt(second - mean**2)], rtol=1e-13)
        assert result.provenance == "pcm:tensor"
        assert result.sample_count == 12
        assert len(result.sample_norms) == 12

    def test_tensor_rule_exact_for_polynomials(self):
        space = _space_2d()
        poly = lambda p: (p[0] ** 3 - 2.0 * p[0] * p[1] + 0.5 * p[1] ** 2)
        problem = StochasticProblem(space=space, template=None,
                                    observables=_scalar_grid(), field_rule=poly)
        result = run_pcm(problem, tensor_grid(space, (4, 3)))
        want_mean = _dense_reference(space, poly)
        want_second = _dense_reference(space, lambda p: poly(p) ** 2)
        assert_allclose(result.mean, [want_mean], rtol=1e-13)
        assert_allclose(result.std, [np.sqrt(want_second - want_mean**2)], rtol=1e-12)

    def test_sparse_rule_exact_within_total_degree(self):
        space = _space_2d()
        poly = lambda p: 1.0 + p[0] * p[1] + p[0] ** 2 - p[1] ** 3
        problem = StochasticProblem(space=space, template=None,
                                    observables=_scalar_grid(), field_rule=poly)
        result = run_pcm(problem, smolyak_grid(space, 2))
        assert_allclose(result.mean, [_dense_reference(space, poly)], rtol=1e-12)

    def test_field_cache_skips_repeated_points(self):
        space = _space_2d()
        calls = []

        def rule(p):
            calls.append(tuple(p))
            return p[0] + p[1]

        problem = StochasticProblem(space=space, template=None,
                                    observables=_scalar_grid(), field_rule=rule)
        cache = {}
        nodes_low = smolyak_grid(space, 1)
        nodes_high = smolyak_grid(space, 2)
        run_pcm(problem, nodes_low, field_cache=cache)
        first = len(calls)
        assert first == len(nodes_low)
        run_pcm(problem, nodes_high, field_cache=cache)
        # nested level: points shared with the lower level are not re-solved
        assert len(calls) < first + len(nodes_high)
        run_pcm(problem, nodes_high, field_cache=cache)
        assert len(calls) == len(cache)

    def test_node_failure_aborts(self):
        space = _space_1d()
        nodes = tensor_grid(space, (4,))
        bad = float(nodes.points[2, 0])

        def rule(p):
            if abs(p[0] - bad) < 1e-15:
                raise ValueError("synthetic failure")
            return p[0]

        problem = StochasticProblem(space=space, template=None,
                                    observables=_scalar_grid(), field_rule=rule)
        with pytest.raises(RuntimeError, match="node 2"):
            run_pcm(problem, nodes)

    def test_space_mismatch_rejected(self):
        problem = StochasticProblem(space=_space_1d(), template=None,
                                    observables=_scalar_grid(),
                                    field_rule=lambda p: p[0])
        with pytest.raises(ValueError, match="different random space"):
            run_pcm(problem, tensor_grid(_space_1d(0.2, 0.8), (3,)))

    def test_signed_rule_negative_variance_clamped(self):
        space = _space_1d(0.0, 1.0)
        nodes = SampleSet(space=space, points=np.array([[0.2], [0.8]]),
                          weights=np.array([1.5, -0.5]), provenance="signed-probe")
        problem = StochasticProblem(
            space=space, template=None, observables=_scalar_grid(),
            field_rule=lambda p: 0.0 if p[0] < 0.5 else 1.0)
        result = run_pcm(problem, nodes)
        # mean -0.5, second moment -0.5: the population variance is -0.75
        assert_allclose(result.mean, [-0.5], rtol=1e-15)
        assert result.std[0] == 0.0
        assert result.meta["variance_clamp"] == pytest.approx(-0.75)

    def test_collocation_converges_on_power_family(self):
        space = _space_1d()
        grid = ObservableGrid(np.linspace(0.0, 1.0, 33))
        problem = StochasticProblem(
            space=space,
            template=lambda p: manufactured_problem("ivp_power", float(p[0]),
                                                    n_time=6)[0],
            observables=grid, quadrature_boost=20)
        result = run_pcm(problem, tensor_grid(space, (10,)))
        reference = exact_expectation_oracle("ivp_power", space, grid)
        report = error_report(result, reference)
        assert report["mean_l2"] < 1e-8


class TestRunMcs:
    def _linear_problem(self):
        space = RandomParameterSpace((Dimension("q_1", -np.sqrt(3.0), np.sqrt(3.0)),))
        return StochasticProblem(space=space, template=None,
                                 observables=_scalar_grid(),
                                 field_rule=lambda p: p[0])

    def test_deterministic_and_thread_independent(self):
        problem = self._linear_problem()
        a = run_mcs(problem, 500, seed=7)
        b = run_mcs(problem, 500, seed=7, threads=4)
        c = run_mcs(problem, 500, seed=8)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.std, b.std)
        assert a.sample_norms == b.sample_norms
        assert not np.array_equal(a.mean, c.mean)

    def test_estimator_statistics_on_unit_variance_source(self):
        # q_1 is uniform with mean 0 and variance 1, so the sample mean
        # should land within four standard errors and the sample standard
        # deviation close to 1
        result = run_mcs(self._linear_problem(), 4000, seed=3)
        assert abs(result.mean[0]) < 4.0 / np.sqrt(4000.0)
        assert abs(result.std[0] - 1.0) < 0.05
        assert result.provenance == "mcs"
        assert result.sample_count == 4000
        assert result.meta["failed_indices"] == ()

    def test_degenerate_space_has_zero_spread(self):
        space = RandomParameterSpace((Dimension("alpha", 0.5, 0.5),))
        problem = StochasticProblem(space=space, template=None,
                                    observables=_scalar_grid(),
                                    field_rule=lambda p: 2.0 * p[0])
        result = run_mcs(problem, 50, seed=1)
        assert_allclose(result.mean, [1.0], rtol=1e-15)
        assert np.all(result.std == 0.0)

    def test_rare_failures_excluded(self):
        space = _space_1d()
        count = 300
        draws = monte_carlo_set(space, count, seed=5).points[:, 0]
        cut = np.sort(draws)[1]  # exactly two draws at or below the cut

        def rule(p):
            if p[0] <= cut:
                raise ValueError("synthetic failure")
            return p[0]

        problem = StochasticProblem(space=space, template=None,
                                    observables=_scalar_grid(), field_rule=rule)
        result = run_mcs(problem, count, seed=5)
        assert result.sample_count == count - 2
        assert len(result.meta["failed_indices"]) == 2

    def test_failure_budget_enforced(self):
        space = _space_1d()
        count = 300
        draws = monte_carlo_set(space, count, seed=5).points[:, 0]
        cut = np.sort(draws)[9]

        def rule(p):
            if p[0] <= cut:
                raise ValueError("synthetic failure")
            return p[0]

        problem = StochasticProblem(space=space, template=None,
                                    observables=_scalar_grid(), field_rule=rule)
        with pytest.raises(RuntimeError, match="1% budget"):
            run_mcs(problem, count, seed=5)

    def test_argument_validation(self):
        problem = self._linear_problem()
        with pytest.raises(ValueError, match="at least two"):
            run_mcs(problem, 1, seed=0)
        with pytest.raises(ValueError, match="threads"):
            run_mcs(problem, 10, seed=0, threads=0)


class TestExactExpectationOracle:
    def test_uniform_alpha_value_at_final_time(self):
        # E[alpha/2] at t = 1 for alpha uniform on (0.1, 0.9) is exactly 1/4
        oracle = exact_expectation_oracle("ivp_power", _space_1d(), _scalar_grid())
        assert_allclose(oracle, [0.25], atol=1e-12)

    def test_degenerate_interval_collapses_to_point(self):
        space = RandomParameterSpace((Dimension("alpha", 0.6, 0.6),))
        grid = ObservableGrid(np.linspace(0.0, 1.0, 5))
        oracle = exact_expectation_oracle("ivp_power", space, grid)
        _, exact = manufactured_problem("ivp_power", 0.6)
        assert_allclose(oracle, exact(grid.times), rtol=1e-15)

    def test_unknown_case_rejected(self):
        with pytest.raises(ValueError, match="exact-solution family"):
            exact_expectation_oracle("noise_driven", _space_1d(), _scalar_grid())


class TestErrorReport:
    def _result(self):
        grid = ObservableGrid(np.linspace(0.0, 1.0, 3))
        return StatisticsResult(
            mean=np.array([0.0, 1.0, 2.0]), std=np.array([0.0, 0.5, 1.0]),
            grid=grid, sample_count=4, provenance="probe",
            sample_norms=(1.0, 1.0, 1.0, 1.0))

    def test_norms_of_differences(self):
        result = self._result()
        report = error_report(result, result.mean + 0.1,
                              std_reference=result.std)
        grid = result.grid
        assert_allclose(report["mean_l2"], grid.l2(np.full(3, 0.1)), rtol=1e-14)
        assert_allclose(report["mean_max"], 0.1, rtol=1e-14)
        assert report["std_l2"] == 0.0
        assert report["std_max"] == 0.0

    def test_shape_mismatch_rejected(self):
        result = self._result()
        with pytest.raises(ValueError, match="does not match"):
            error_report(result, np.zeros(5))
        with pytest.raises(ValueError, match="does not match"):
            error_report(result, result.mean, std_reference=np.zeros(2))
