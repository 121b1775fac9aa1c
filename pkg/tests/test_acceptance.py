"""Acceptance battery: one test per release criterion.

Each test prints a single PASS/FAIL line with its headline numbers
(through the capture-disabled writer, so the lines always reach the
terminal), then asserts.  Tolerances and budgets are stated inline.
"""

import math
import time

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from sfpde.config import ExperimentConfig
from sfpde.experiments import separation_config, separation_study
from sfpde.fractional import (
    frac_deriv_modal_legendre,
    modal_legendre,
    polyfrac_deriv,
    polyfrac_first,
    rl_deriv_power,
)
from sfpde.noise import SQRT3, NoiseSpec, kl_coefficients, realize
from sfpde.pgsolver import (
    BasisSpec,
    DeterministicProblem,
    assemble,
    evaluate_grid,
    manufactured_problem,
    solve_direct,
    solve_fast,
    spatial_mass_matrix,
    spatial_stiffness_matrix,
    temporal_matrices,
)
from sfpde.randomspace import (
    Dimension,
    RandomParameterSpace,
    monte_carlo_set,
    smolyak_grid,
    tensor_grid,
)
from sfpde.uq import (
    ObservableGrid,
    StochasticProblem,
    exact_expectation_oracle,
    run_mcs,
    run_pcm,
)

from singular_oracle import rl_left, rl_right


@pytest.fixture
def announce(capfd):
    def _announce(line):
        with capfd.disabled():
            print(line)
    return _announce


def _alpha_family_problem(grid):
    space = RandomParameterSpace((Dimension("alpha", 0.1, 0.9),))
    return space, StochasticProblem(
        space=space,
        template=lambda p: manufactured_problem("ivp_power", float(p[0]),
                                                n_time=6)[0],
        observables=grid, quadrature_boost=20)


def test_criterion_1_temporal_exactness(announce):
    """Power solutions in the trial span are reproduced to 1e-10 in L2."""
    nodes, weights = leggauss(64)
    t = 0.5 * (nodes + 1.0)
    worst_err = 0.0
    worst_time = 0.0
    for alpha in (0.3, 0.5, 0.7):
        t0 = time.perf_counter()
        problem, exact = manufactured_problem("ivp_power", alpha, n_time=4)
        solution = solve_fast(assemble(problem, quadrature_boost=50))
        vals = evaluate_grid(solution, t).ravel()
        err = math.sqrt(0.5 * float(np.sum(weights * (vals - exact(t)) ** 2)))
        worst_err = max(worst_err, err)
        worst_time = max(worst_time, time.perf_counter() - t0)
    ok = worst_err < 1e-10 and worst_time < 1.0
    announce(f"criterion 1 (temporal exactness): {'PASS' if ok else 'FAIL'} "
             f"(max L2 error {worst_err:.2e}, max solve time {worst_time:.2f}s)")
    assert worst_err < 1e-10
    assert worst_time < 1.0


def test_criterion_2_fast_solver_agreement(announce):
    """Eigen-based and dense solves agree to 1e-10 over a randomized matrix."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2026)
    spans = ((-1.0, 1.0), (0.0, 2.0))
    worst = 0.0
    cases = 0
    for ndim in (1, 2):
        for mode in ("two_sided", "left_only"):
            for gamma in (0.0, 1.0):
                for _ in range(3):
                    alpha = rng.uniform(0.15, 0.85)
                    betas = tuple(rng.uniform(1.1, 1.9, ndim))
                    diffs = tuple(rng.uniform(0.3, 1.5, ndim))
                    c = rng.uniform(-1.0, 1.0, 2)
                    if ndim == 1:
                        basis = BasisSpec(n_time=6, m_space=(8,), tau=0.5 * alpha,
                                          x_spans=spans[:1])
                        forcing = lambda t, x, c=c: (
                            t**2 * (1.0 - x**2) * (c[0] + c[1] * x))
                    else:
                        basis = BasisSpec(n_time=5, m_space=(6, 5), tau=0.5 * alpha,
                                          x_spans=spans)
                        forcing = lambda t, x, y, c=c: (
                            t**2 * (1.0 - x**2) * y * (2.0 - y) * (c[0] + c[1] * x * y))
                    problem = DeterministicProblem(
                        alpha=alpha, basis=basis, betas=betas,
                        diffusivities=diffs, gamma=gamma, operator_mode=mode,
                        forcing_h=forcing)
                    system = assemble(problem)
                    fast = solve_fast(system).coefficients
                    direct = solve_direct(system).coefficients
                    rel = float(np.abs(fast - direct).max()
                                / np.abs(direct).max())
                    worst = max(worst, rel)
                    cases += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and cases == 24 and elapsed < 30.0
    announce(f"criterion 2 (fast vs direct, {cases} cases): "
             f"{'PASS' if ok else 'FAIL'} (max rel diff {worst:.2e}, {elapsed:.1f}s)")
    assert cases == 24
    assert worst < 1e-10
    assert elapsed < 30.0


def test_criterion_3_monte_carlo_rate(announce):
    """Mean-field error vs sample count follows the K^(-1/2) trend.

    A three-point log-log fit is itself a noisy statistic, so the window
    is asserted for the shipped default seed only.
    """
    t0 = time.perf_counter()
    grid = ObservableGrid(np.linspace(0.0, 1.0, 25))
    space, problem = _alpha_family_problem(grid)
    reference = exact_expectation_oracle("ivp_power", space, grid)
    seed = ExperimentConfig().seed
    counts = (100, 1000, 10000)
    errors = [grid.l2(run_mcs(problem, count, seed, threads=4).mean - reference)
              for count in counts]
    slope = float(np.polyfit(np.log10(counts), np.log10(errors), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = -0.65 < slope < -0.35 and elapsed < 600.0
    announce(f"criterion 3 (Monte Carlo rate, seed {seed}): "
             f"{'PASS' if ok else 'FAIL'} (slope {slope:.3f}, errors "
             + "/".join(f"{e:.2e}" for e in errors) + f", {elapsed:.0f}s)")
    assert -0.65 < slope < -0.35
    assert elapsed < 600.0


def test_criterion_4_collocation_convergence(announce):
    """Tensor collocation on the order interval reaches 1e-8 by ten nodes."""
    t0 = time.perf_counter()
    grid = ObservableGrid(np.linspace(0.0, 1.0, 25))
    space, problem = _alpha_family_problem(grid)
    reference = exact_expectation_oracle("ivp_power", space, grid)
    errors = []
    for order in range(2, 11):
        result = run_pcm(problem, tensor_grid(space, (order,)))
        errors.append(grid.l2(result.mean - reference))
    elapsed = time.perf_counter() - t0
    # fast decay until the deterministic-solver floor, then flat
    ok = (errors[1] < 0.01 * errors[0] and errors[-1] < 1e-8
          and elapsed < 60.0)
    announce(f"criterion 4 (collocation convergence): {'PASS' if ok else 'FAIL'} "
             f"(errors {errors[0]:.2e} -> {errors[-1]:.2e} over 2..10 nodes, "
             f"{elapsed:.1f}s)")
    assert errors[1] < 0.01 * errors[0]
    assert errors[-1] < 1e-8
    assert elapsed < 60.0


def test_criterion_5_sparse_grid_exactness(announce):
    """Level-w sparse rules integrate total degree 2w+1 and collapse to the
    dense rule in one dimension."""
    bounds = ((0.0, 1.0), (-1.0, 2.0), (0.5, 2.5))

    def moment(lo, hi, k):
        return (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo))

    worst = 0.0
    for ndim in (1, 2, 3):
        space = RandomParameterSpace(tuple(
            Dimension(f"p_{j + 1}", *bounds[j]) for j in range(ndim)))
        for w in (1, 2, 3):
            rule = smolyak_grid(space, w)
            degree = 2 * w + 1
            exponents = [()]
            for _ in range(ndim):
                exponents = [e + (k,) for e in exponents for k in range(degree + 1)]
            for expo in exponents:
                if sum(expo) > degree:
                    continue
                vals = np.prod(rule.points ** np.asarray(expo), axis=1)
                got = float(np.sum(rule.weights * vals))
                want = float(np.prod([moment(*bounds[j], expo[j])
                                      for j in range(ndim)]))
                worst = max(worst, abs(got - want) / max(1.0, abs(want)))

    node_match = 0.0
    space_1d = RandomParameterSpace((Dimension("p_1", *bounds[0]),))
    for w in (1, 2, 3):
        sparse = smolyak_grid(space_1d, w)
        dense = tensor_grid(space_1d, (2 * w + 1,))
        order = np.argsort(sparse.points[:, 0])
        node_match = max(node_match,
                         float(np.abs(sparse.points[order] - dense.points).max()),
                         float(np.abs(sparse.weights[order] - dense.weights).max()))

    ok = worst < 1e-12 and node_match < 1e-12
    announce(f"criterion 5 (sparse-grid exactness): {'PASS' if ok else 'FAIL'} "
             f"(worst moment error {worst:.2e}, 1-d node gap {node_match:.2e})")
    assert worst < 1e-12
    assert node_match < 1e-12


def test_criterion_6_matrix_structure(announce):
    """Half-order tuning diagonalizes time; mass is banded; the two-sided
    stiffness is symmetric."""
    diag_gap = 0.0
    for alpha in (0.3, 0.5, 0.7):
        basis = BasisSpec(n_time=16, tau=0.5 * alpha)
        stiff, _ = temporal_matrices(basis, alpha)
        off = stiff - np.diag(np.diag(stiff))
        diag_gap = max(diag_gap,
                       float(np.abs(off).max() / np.abs(np.diag(stiff)).max()))

    basis_x = BasisSpec(n_time=2, m_space=(10,), tau=0.3, x_spans=((0.0, 2.0),))
    mass = spatial_mass_matrix(basis_x, 0)
    nodes, weights = leggauss(64)
    brute = np.zeros_like(mass)
    for r in range(1, 11):
        test = modal_legendre("test", r, nodes)
        for m in range(1, 11):
            brute[r - 1, m - 1] = np.sum(weights * test
                                         * modal_legendre("basis", m, nodes))
    mass_gap = float(np.abs(mass - brute).max() / np.abs(mass).max())
    banded = all(mass[r, m] == 0.0
                 for r in range(10) for m in range(10)
                 if abs(r - m) not in (0, 2))

    sym_gap = 0.0
    for beta in (1.3, 1.7):
        problem = DeterministicProblem(
            alpha=0.5, basis=basis_x, betas=(beta,), diffusivities=(1.0,),
            operator_mode="two_sided", forcing_h=lambda t, x: 0.0 * t * x)
        stiff_x = spatial_stiffness_matrix(problem, 0, 40)
        sym_gap = max(sym_gap, float(np.abs(stiff_x - stiff_x.T).max()
                                     / np.abs(stiff_x).max()))

    ok = diag_gap < 1e-12 and mass_gap < 1e-12 and banded and sym_gap < 1e-12
    announce(f"criterion 6 (matrix structure): {'PASS' if ok else 'FAIL'} "
             f"(off-diagonal {diag_gap:.2e}, mass gap {mass_gap:.2e}, "
             f"symmetry gap {sym_gap:.2e})")
    assert diag_gap < 1e-12
    assert mass_gap < 1e-12
    assert banded
    assert sym_gap < 1e-12


def test_criterion_7_noise_model(announce):
    """Leading spectral coefficient, endpoint pinning, and calibrated peak
    standard deviation of the colored-noise model."""
    spec = NoiseSpec(t_end=1.0, corr_window=0.5, n_modes=4, amplitude=0.7)
    a1 = float(kl_coefficients(spec)[0])
    a1_want = 0.5 / (1.0 + math.pi**2)
    a1_gap = abs(a1 - a1_want)

    rng = np.random.default_rng(11)
    q = rng.uniform(-SQRT3, SQRT3, 4)
    path = realize(spec, q)
    endpoint = max(abs(float(path(0.0))), abs(float(path(1.0))))

    count = 100_000
    t = np.linspace(0.0, 1.0, 201)
    draws = rng.uniform(-SQRT3, SQRT3, size=(count, 4))
    modes = np.stack([realize(spec, unit)(t) for unit in np.eye(4)])
    peak = float(np.max(np.std(draws @ modes, axis=0)))
    peak_gap = abs(peak - spec.amplitude) / spec.amplitude

    ok = a1_gap < 1e-14 and endpoint == 0.0 and peak_gap < 0.02
    announce(f"criterion 7 (noise model): {'PASS' if ok else 'FAIL'} "
             f"(a1 gap {a1_gap:.1e}, endpoint {endpoint:.1e}, "
             f"peak std within {100 * peak_gap:.2f}%)")
    assert a1_gap < 1e-14
    assert endpoint == 0.0
    assert peak_gap < 0.02


def test_criterion_8_sparse_level_separation(announce):
    """In the twelve-dimensional noise-driven study the sparse-level mean
    discrepancy sits at least a thousandfold below the spread discrepancy."""
    t0 = time.perf_counter()
    cfg = separation_config()
    study = separation_study(cfg, threads=4)
    mean_disc = study["mean_discrepancy"]
    std_disc = study["std_discrepancy"]
    elapsed = time.perf_counter() - t0
    ok = mean_disc * 1e3 <= std_disc and elapsed < 1800.0
    ratio = std_disc / mean_disc if mean_disc > 0.0 else math.inf
    announce(f"criterion 8 (sparse-level separation): {'PASS' if ok else 'FAIL'} "
             f"(mean {mean_disc:.3e}, std {std_disc:.3e}, ratio {ratio:.0f}, "
             f"nodes {study['node_counts']}, {elapsed:.0f}s)")
    assert mean_disc * 1e3 <= std_disc
    assert elapsed < 1800.0


def test_criterion_9_fractional_closed_forms(announce):
    """Closed-form fractional derivatives match the graded singular-
    quadrature oracle to 1e-6."""
    points = np.array([-0.7, -0.2, 0.3, 0.8])
    worst = 0.0

    def track(got, want):
        nonlocal worst
        got = np.atleast_1d(np.asarray(got, dtype=float))
        want = np.atleast_1d(np.asarray(want, dtype=float))
        scale = np.maximum(np.abs(want), 1e-3)
        worst = max(worst, float(np.max(np.abs(got - want) / scale)))

    for sigma in (0.4, 0.75):
        for p in (1.6, 3.0):
            for x in points:
                track(rl_deriv_power("left", sigma, p, x),
                      rl_left(lambda s: (1.0 + s) ** p, -1.0, sigma, x))
                track(rl_deriv_power("right", sigma, p, x),
                      rl_right(lambda s: (1.0 - s) ** p, 1.0, sigma, x))

    for n in (1, 3):
        for tau in (0.3, 0.6):
            got = polyfrac_deriv("basis", n, tau, points, tau)
            want = [rl_left(lambda s: polyfrac_first(n, tau, s), -1.0, tau, x)
                    for x in points]
            track(got, want)

    for mu in (0.55, 0.8):
        for m in (2, 4):
            got = frac_deriv_modal_legendre("basis", "left", mu, m, points)
            want = [rl_left(lambda s: modal_legendre("basis", m, s), -1.0, mu, x)
                    for x in points]
            track(got, want)
            got = frac_deriv_modal_legendre("basis", "right", mu, m, points)
            want = [rl_right(lambda s: modal_legendre("basis", m, s), 1.0, mu, x)
                    for x in points]
            track(got, want)

    ok = worst < 1e-6
    announce(f"criterion 9 (fractional closed forms): {'PASS' if ok else 'FAIL'} "
             f"(worst oracle gap {worst:.2e})")
    assert worst < 1e-6
