"""Random-parameter spaces, nodal sets, and interpolation."""

import itertools

import numpy as np
import pytest

from sfpde.randomspace import (
    Dimension,
    RandomParameterSpace,
    lagrange_interpolate,
    monte_carlo_set,
    smolyak_grid,
    standard_space,
    tensor_grid,
)


def _space(*bounds):
    dims = tuple(Dimension(f"d{i}", lo, hi) for i, (lo, hi) in enumerate(bounds))
    return RandomParameterSpace(dims)


def _integrate(nodes, exponents):
    vals = np.prod(nodes.points ** np.asarray(exponents), axis=1)
    return float(np.sum(nodes.weights * vals))


def _exact_moment(space, exponents):
    out = 1.0
    for dim, p in zip(space.dims, exponents):
        if dim.hi == dim.lo:
            out *= dim.lo**p
        else:
            out *= (dim.hi ** (p + 1) - dim.lo ** (p + 1)) / ((p + 1) * (dim.hi - dim.lo))
    return out


class TestSpaces:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            RandomParameterSpace((Dimension("a", 0, 1), Dimension("a", 0, 1)))

    def test_degenerate_dimension_allowed(self):
        space = _space((0.5, 0.5))
        assert space.ndim == 1

    def test_standard_space_layout(self):
        space = standard_space(n_beta=1, n_modes=3)
        names = [d.name for d in space.dims]
        assert names == ["alpha", "beta_1", "q_1", "q_2", "q_3"]
        assert space.dims[2].lo == -space.dims[2].hi


class TestTensorGrid:
    def test_counts_and_bounds(self):
        space = _space((0.1, 0.9), (1.1, 1.9))
        nodes = tensor_grid(space, (4, 6))
        assert len(nodes) == 24
        assert np.all(nodes.points >= space.lower())
        assert np.all(nodes.points <= space.upper())
        np.testing.assert_allclose(nodes.weights.sum(), 1.0, atol=1e-13)

    @pytest.mark.parametrize("orders", [(3,), (2, 4), (3, 3, 2)])
    def test_moment_exactness(self, orders):
        bounds = [(0.2, 0.8), (1.0, 2.0), (-1.0, 3.0)][: len(orders)]
        space = _space(*bounds)
        nodes = tensor_grid(space, orders)
        for exps in itertools.product(*(range(2 * m) for m in orders)):
            np.testing.assert_allclose(_integrate(nodes, exps),
                                       _exact_moment(space, exps), rtol=1e-12,
                                       atol=1e-13)


class TestSmolyakGrid:
    @pytest.mark.parametrize("ndim", [1, 2, 3])
    @pytest.mark.parametrize("w", [1, 2, 3])
    def test_total_degree_exactness(self, ndim, w):
        """Total degree 2w+1 is integrated exactly."""
        bounds = [(0.1, 0.9), (1.2, 1.8), (-0.5, 2.5)][:ndim]
        space = _space(*bounds)
        nodes = smolyak_grid(space, w)
        degree = 2 * w + 1
        for exps in itertools.product(range(degree + 1), repeat=ndim):
            if sum(exps) > degree:
                continue
            np.testing.assert_allclose(_integrate(nodes, exps),
                                       _exact_moment(space, exps), rtol=1e-12,
                                       atol=1e-12)

    @pytest.mark.parametrize("w", [1, 2, 3])
    def test_one_dimension_collapses_to_gauss_rule(self, w):
        space = _space((0.3, 0.7))
        sparse = smolyak_grid(space, w)
        dense = tensor_grid(space, (2 * w + 1,))
        order = np.argsort(sparse.points[:, 0])
        np.testing.assert_allclose(sparse.points[order], dense.points, atol=1e-14)
        np.testing.assert_allclose(sparse.weights[order], dense.weights, atol=1e-14)

    def test_node_count_regressions(self):
        two = _space((0.0, 1.0), (0.0, 1.0))
        assert len(smolyak_grid(two, 2)) == 17
        three = _space((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
        assert len(smolyak_grid(three, 2)) == 31
        twelve = _space(*[(0.0, 1.0)] * 12)
        assert len(smolyak_grid(twelve, 1)) == 25
        assert len(smolyak_grid(twelve, 2)) == 337

    def test_weights_sum_to_one_with_negative_entries(self):
        space = _space((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
        nodes = smolyak_grid(space, 2)
        np.testing.assert_allclose(nodes.weights.sum(), 1.0, atol=1e-12)
        assert np.any(nodes.weights < 0.0)


class TestMonteCarlo:
    def test_deterministic_for_fixed_seed(self):
        space = _space((0.1, 0.9), (-1.0, 1.0))
        a = monte_carlo_set(space, 50, 11)
        b = monte_carlo_set(space, 50, 11)
        np.testing.assert_array_equal(a.points, b.points)

    def test_prefix_property(self):
        """Sample i depends only on (i, seed), so runs nest by count."""
        space = _space((0.1, 0.9))
        small = monte_carlo_set(space, 20, 5)
        large = monte_carlo_set(space, 200, 5)
        np.testing.assert_array_equal(small.points, large.points[:20])

    def test_seed_changes_samples(self):
        space = _space((0.1, 0.9))
        a = monte_carlo_set(space, 30, 1)
        b = monte_carlo_set(space, 30, 2)
        assert np.max(np.abs(a.points - b.points)) > 1e-6

    def test_bounds_and_uniform_weights(self):
        space = _space((0.2, 0.4), (1.5, 1.5))
        nodes = monte_carlo_set(space, 100, 7)
        assert np.all(nodes.points[:, 0] >= 0.2) and np.all(nodes.points[:, 0] <= 0.4)
        np.testing.assert_allclose(nodes.points[:, 1], 1.5)
        np.testing.assert_allclose(nodes.weights, 1.0 / 100)


class TestLagrangeInterpolation:
    def test_reproduces_polynomial_on_tensor_grid(self):
        space = _space((0.0, 1.0), (2.0, 3.0))
        nodes = tensor_grid(space, (4, 3))

        def f(p):
            return p[0] ** 3 - 2.0 * p[0] * p[1] + 0.5 * p[1] ** 2

        values = np.array([f(p) for p in nodes.points])
        for point in [(0.25, 2.3), (0.7, 2.9), (0.0, 2.0)]:
            np.testing.assert_allclose(
                lagrange_interpolate(nodes, values, np.array(point)), f(point),
                rtol=1e-11, atol=1e-12)
