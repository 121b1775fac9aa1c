"""Stochastic drivers: Monte Carlo sampling and probabilistic collocation.

Both map a parametrized family of deterministic problems through the
spectral solver and accumulate mean and standard-deviation fields on a
fixed observation grid.  Monte Carlo uses a pairwise tree reduction in
sample-index order so results are bitwise reproducible at any worker
count; collocation contracts solver outputs against the quadrature
weights of the node set.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .orthopoly import gauss_legendre
from .pgsolver import assemble, evaluate_grid, manufactured_problem, solve_fast
from .randomspace import RandomParameterSpace, SampleSet, monte_carlo_set

__all__ = [
    "ObservableGrid",
    "StochasticProblem",
    "StatisticsResult",
    "sample_field",
    "run_mcs",
    "run_pcm",
    "exact_expectation_oracle",
    "error_report",
]

_SAMPLE_ERRORS = (RuntimeError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    if nodes.size == 1:
        return np.ones(1)
    w = np.empty_like(nodes)
    w[0] = (nodes[1] - nodes[0]) / 2.0
    w[-1] = (nodes[-1] - nodes[-2]) / 2.0
    w[1:-1] = (nodes[2:] - nodes[:-2]) / 2.0
    return w


@dataclass(frozen=True, eq=False)
class ObservableGrid:
    """Observation points (tensor of time and space axes) with trapezoid
    quadrature weights in the physical measure, for norms of fields."""

    times: np.ndarray
    axes: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        axes = tuple(np.atleast_1d(np.asarray(a, dtype=float)) for a in self.axes)
        for arr in (times,) + axes:
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError("grid axes must be nonempty 1-d arrays")
            if arr.size > 1 and np.any(np.diff(arr) <= 0.0):
                raise ValueError("grid axes must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "axes", axes)
        weights = _trapezoid_weights(times)
        for a in axes:
            weights = np.multiply.outer(weights, _trapezoid_weights(a))
        object.__setattr__(self, "_weights", weights)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.times.size,) + tuple(a.size for a in self.axes)

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def l2(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.shape}")
        return float(np.sqrt(np.sum(self._weights * values**2)))

    def linf(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.shape}")
        return float(np.abs(values).max())


@dataclass(frozen=True, eq=False)
class StochasticProblem:
    """A family of deterministic problems indexed by a random-space point.

    template(point) must be deterministic (same point, same problem).  The
    optional field_rule(point) -> field bypasses the PDE solver entirely;
    it exists so the statistical machinery can be exercised against
    closed-form integrands.
    """

    space: RandomParameterSpace
    template: object
    observables: ObservableGrid
    field_rule: object = None
    quadrature_boost: int = 0

    def __post_init__(self) -> None:
        if self.template is None and self.field_rule is None:
            raise ValueError("either template or field_rule is required")
        if self.quadrature_boost < 0:
            raise ValueError("quadrature_boost must be >= 0")


@dataclass(frozen=True, eq=False)
class StatisticsResult:
    """Mean and standard-deviation fields plus per-sample norm records."""

    mean: np.ndarray
    std: np.ndarray
    grid: ObservableGrid
    sample_count: int
    provenance: str
    sample_norms: tuple[float, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mean.shape != self.grid.shape or self.std.shape != self.grid.shape:
            raise ValueError("statistics fields must match the grid shape")
        if not np.all(self.std >= 0.0):
            raise ValueError("standard deviation must be nonnegative")


def sample_field(problem: StochasticProblem, point: np.ndarray) -> np.ndarray:
    """Observable field for one random-space point (solve or bypass rule)."""
    grid = problem.observables
    if problem.field_rule is not None:
        out = np.asarray(problem.field_rule(np.asarray(point, dtype=float)), dtype=float)
        out = np.broadcast_to(out, grid.shape).astype(float)
        return out
    det = problem.template(np.asarray(point, dtype=float))
    system = assemble(det, quadrature_boost=problem.quadrature_boost)
    solution = solve_fast(system)
    return evaluate_grid(solution, grid.times, *grid.axes)


def _point_key(point: np.ndarray) -> tuple[int, ...]:
    return tuple(int(round(c / 1e-12)) for c in point)


def _collect_fields(problem: StochasticProblem, points: np.ndarray, threads: int,
                    tolerate_failures: bool, cache: dict | None = None):
    def task(i: int):
        try:
            if cache is not None:
                key = _point_key(points[i])
                hit = cache.get(key)
                if hit is not None:
                    return hit
                out = sample_field(problem, points[i])
                cache[key] = out
                return out
            return sample_field(problem, points[i])
        except _SAMPLE_ERRORS as exc:
            if tolerate_failures:
                return exc
            raise RuntimeError(f"solve failed at node {i}: {exc}") from exc

    count = points.shape[0]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, range(count)))
    else:
        results = [task(i) for i in range(count)]
    fields = []
    failed = []
    for i, r in enumerate(results):
        if isinstance(r, Exception):
            failed.append(i)
        else:
            fields.append(r)
    return fields, failed


def _pairwise_tree(fields: list[np.ndarray]) -> tuple[int, np.ndarray, np.ndarray]:
    # Chan-style merge of (count, mean, M2) pairs; the tree shape depends
    # only on the number of fields, so the float result is reproducible
    # for a given sample order regardless of how solves were scheduled.
    stats = [(1, f, np.zeros_like(f)) for f in fields]
    while len(stats) > 1:
        merged = []
        for i in range(0, len(stats) - 1, 2):
            na, ma, m2a = stats[i]
            nb, mb, m2b = stats[i + 1]
            n = na + nb
            delta = mb - ma
            mean = ma + delta * (nb / n)
            m2 = m2a + m2b + delta**2 * (na * nb / n)
            merged.append((n, mean, m2))
        if len(stats) % 2 == 1:
            merged.append(stats[-1])
        stats = merged
    return stats[0]


def run_mcs(problem: StochasticProblem, count: int, seed: int,
            threads: int = 1) -> StatisticsResult:
    """Monte Carlo statistics over `count` pseudo-random realizations.

    Per-sample failures are excluded if they stay under 1% of the draw;
    more than that aborts the run.  Variance uses the unbiased 1/(K-1)
    normalization.
    """
    if count < 2:
        raise ValueError("Monte Carlo needs at least two samples")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    start = time.perf_counter()
    samples = monte_carlo_set(problem.space, count, seed)
    fields, failed = _collect_fields(problem, samples.points, threads,
                                     tolerate_failures=True)
    if len(failed) > 0.01 * count:
        raise RuntimeError(
            f"{len(failed)} of {count} sample solves failed (over the 1% budget)")
    if len(fields) < 2:
        raise RuntimeError("fewer than two successful samples")
    kept, mean, m2 = _pairwise_tree(fields)
    variance = m2 / (kept - 1)
    std = np.sqrt(np.maximum(variance, 0.0))
    norms = tuple(problem.observables.l2(f) for f in fields)
    return StatisticsResult(
        mean=mean, std=std, grid=problem.observables, sample_count=kept,
        provenance="mcs", sample_norms=norms,
        meta={
            "seed": int(seed), "requested": int(count), "threads": int(threads),
            "failed_indices": tuple(failed),
            "wall_time": time.perf_counter() - start,
        },
    )


def run_pcm(problem: StochasticProblem, nodes: SampleSet, threads: int = 1,
            field_cache: dict | None = None) -> StatisticsResult:
    """Collocation statistics: weighted first and second moments over a
    deterministic node set.

    Any node failure aborts (quadrature weights cannot be dropped).  The
    population variance m2 - mean^2 can dip below zero by roundoff; dips
    within a small floor are clamped, and deeper dips raise for
    positive-weight rules but are clamped (and recorded) for sparse rules
    with signed combination weights.  A field_cache dict (shared across
    calls) skips repeated solves at coinciding nodes, e.g. between nested
    sparse-grid levels; entries are keyed by the quantized point.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if nodes.space != problem.space:
        raise ValueError("node set was built for a different random space")
    start = time.perf_counter()
    fields, _ = _collect_fields(problem, nodes.points, threads,
                                tolerate_failures=False, cache=field_cache)
    shape = problem.observables.shape
    mean = np.zeros(shape)
    second = np.zeros(shape)
    for w, f in zip(nodes.weights, fields):
        mean += w * f
        second += w * f**2
    variance = second - mean**2
    floor = 1e-14 * max(1.0, float(np.abs(second).max()))
    worst = float(variance.min())
    meta = {
        "node_count": len(nodes), "threads": int(threads),
        "nodes_provenance": nodes.provenance,
    }
    signed = bool(np.any(nodes.weights < 0.0))
    if worst < -floor:
        if not signed:
            raise RuntimeError(
                f"negative variance {worst:g} from a positive-weight rule "
                "(quadrature inconsistency)")
        meta["variance_clamp"] = worst
    std = np.sqrt(np.maximum(variance, 0.0))
    norms = tuple(problem.observables.l2(f) for f in fields)
    meta["wall_time"] = time.perf_counter() - start
    return StatisticsResult(
        mean=mean, std=std, grid=problem.observables, sample_count=len(nodes),
        provenance=f"pcm:{nodes.provenance}", sample_norms=norms, meta=meta,
    )


def exact_expectation_oracle(case: str, space: RandomParameterSpace,
                             grid: ObservableGrid, tol: float = 1e-12,
                             x_span: tuple[float, float] | None = None) -> np.ndarray:
    """Reference expectation of the manufactured exact solution over the
    fractional-order dimensions, by Gauss-Legendre escalation until two
    successive orders agree below tol.

    Noise dimensions do not enter (the manufactured solutions are
    noise-free); degenerate order intervals collapse to point evaluation.
    For the PDE case, x_span fixes the physical domain; it defaults to the
    extent of the grid's spatial axis.
    """
    if case not in ("ivp_power", "pde_onesided"):
        raise ValueError(f"no exact-solution family for case {case!r}")
    names = ["alpha"] + (["beta_1"] if case == "pde_onesided" else [])
    dims = []
    for name in names:
        dim = space.dims[space.index_of(name)]
        dims.append((dim.lo, dim.hi))

    if case == "ivp_power":
        if len(grid.axes) == 0:
            def field_at(a, b=None):
                _, exact = manufactured_problem("ivp_power", a)
                return exact(grid.times)
        else:
            mesh = np.meshgrid(grid.times, *grid.axes, indexing="ij")

            def field_at(a, b=None):
                _, exact = manufactured_problem("ivp_power", a)
                return np.broadcast_to(exact(mesh[0]), grid.shape)
    else:
        if len(grid.axes) != 1:
            raise ValueError("pde_onesided expects exactly one spatial axis")
        mesh_t, mesh_x = np.meshgrid(grid.times, grid.axes[0], indexing="ij")
        span = x_span if x_span is not None else (float(grid.axes[0][0]),
                                                  float(grid.axes[0][-1]))

        def field_at(a, b):
            _, exact = manufactured_problem("pde_onesided", a, b, x_span=span)
            return exact(mesh_t, mesh_x)

    previous = None
    for order in (4, 8, 16, 32, 64, 96):
        rules = []
        for lo, hi in dims:
            if hi == lo:
                rules.append((np.array([lo]), np.array([1.0])))
            else:
                gl = gauss_legendre(order)
                rules.append((lo + (hi - lo) * (gl.nodes + 1.0) / 2.0, gl.weights / 2.0))
        total = np.zeros(grid.shape)
        if len(rules) == 1:
            for a, wa in zip(*rules[0]):
                total += wa * field_at(a)
        else:
            for a, wa in zip(*rules[0]):
                for b, wb in zip(*rules[1]):
                    total += wa * wb * field_at(a, b)
        if previous is not None and float(np.abs(total - previous).max()) < tol:
            return total
        previous = total
    raise RuntimeError(f"expectation quadrature did not converge below {tol:g}")


def error_report(result: StatisticsResult, mean_reference: np.ndarray,
                 std_reference: np.ndarray | None = None) -> dict:
    """L2 and max norms of the statistics errors over the observable grid."""
    grid = result.grid
    ref = np.asarray(mean_reference, dtype=float)
    if ref.shape != result.mean.shape:
        raise ValueError(f"reference shape {ref.shape} does not match {result.mean.shape}")
    report = {
        "mean_l2": grid.l2(result.mean - ref),
        "mean_max": grid.linf(result.mean - ref),
    }
    if std_reference is not None:
        sref = np.asarray(std_reference, dtype=float)
        if sref.shape != result.std.shape:
            raise ValueError(f"reference shape {sref.shape} does not match {result.std.shape}")
        report["std_l2"] = grid.l2(result.std - sref)
        report["std_max"] = grid.linf(result.std - sref)
    return report
