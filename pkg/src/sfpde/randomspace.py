"""Random parameter space and sampling: tensor grids, Smolyak sparse grids,
and counter-based Monte Carlo sets, plus tensor-grid Lagrange interpolation.

All dimensions are independent uniforms; quadrature weights are probability
normalized (they sum to 1).  Sparse-grid weights are signed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .noise import SQRT3
from .orthopoly import gauss_legendre

__all__ = [
    "Dimension",
    "RandomParameterSpace",
    "SampleSet",
    "standard_space",
    "tensor_grid",
    "smolyak_grid",
    "monte_carlo_set",
    "lagrange_interpolate",
]

_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Dimension:
    """One uniform random dimension on [lo, hi] (degenerate lo == hi allowed)."""

    name: str
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.hi >= self.lo:
            raise ValueError(f"dimension {self.name}: need hi >= lo, got ({self.lo}, {self.hi})")


@dataclass(frozen=True)
class RandomParameterSpace:
    """Ordered collection of independent uniform dimensions."""

    dims: tuple[Dimension, ...]

    def __post_init__(self) -> None:
        if len(self.dims) < 1:
            raise ValueError("parameter space needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError(f"dimension names must be unique, got {names}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def lower(self) -> np.ndarray:
        return np.array([d.lo for d in self.dims])

    def upper(self) -> np.ndarray:
        return np.array([d.hi for d in self.dims])

    def index_of(self, name: str) -> int:
        for i, d in enumerate(self.dims):
            if d.name == name:
                return i
        raise KeyError(f"no dimension named {name!r}")


def standard_space(n_beta: int = 0, n_modes: int = 0,
                   alpha_span: tuple[float, float] = (0.1, 0.9),
                   beta_span: tuple[float, float] = (1.1, 1.9)) -> RandomParameterSpace:
    """Default space: alpha, then beta_1..beta_d, then mode amplitudes Q_1..Q_M."""
    dims = [Dimension("alpha", *alpha_span)]
    dims += [Dimension(f"beta_{j+1}", *beta_span) for j in range(n_beta)]
    dims += [Dimension(f"q_{k+1}", -SQRT3, SQRT3) for k in range(n_modes)]
    return RandomParameterSpace(tuple(dims))


@dataclass(frozen=True)
class SampleSet:
    """Sample points with probability weights and construction provenance."""

    space: RandomParameterSpace
    points: np.ndarray
    weights: np.ndarray
    provenance: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.points.ndim != 2 or self.points.shape[1] != self.space.ndim:
            raise ValueError(f"points must have shape (n, {self.space.ndim})")
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("weights must be one per point")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("probability weights must sum to 1")
        lo, hi = self.space.lower(), self.space.upper()
        if np.any(self.points < lo - 1e-12) or np.any(self.points > hi + 1e-12):
            raise ValueError("sample points fall outside the parameter box")

    def __len__(self) -> int:
        return self.points.shape[0]


def _axis_rule(dim: Dimension, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Mapped nodes and probability weights of the m-point Gauss rule on [lo, hi]."""
    if dim.hi == dim.lo:
        return np.array([dim.lo]), np.array([1.0])
    rule = gauss_legendre(m)
    nodes = dim.lo + (dim.hi - dim.lo) * (rule.nodes + 1.0) / 2.0
    return nodes, rule.weights / 2.0


def tensor_grid(space: RandomParameterSpace, orders) -> SampleSet:
    """Full tensor Gauss grid with per-dimension point counts `orders`."""
    orders = [int(o) for o in (orders if np.ndim(orders) else [orders] * space.ndim)]
    if len(orders) != space.ndim:
        raise ValueError(f"expected {space.ndim} orders, got {len(orders)}")
    if any(o < 1 for o in orders):
        raise ValueError("tensor orders must be >= 1")
    axes = [_axis_rule(d, o) for d, o in zip(space.dims, orders)]
    mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    weights = np.ones(1)
    for _, w in axes:
        weights = np.multiply.outer(weights, w).reshape(-1)
    return SampleSet(space, points, weights, "tensor",
                     meta={"orders": tuple(orders),
                           "axes": tuple(a[0] for a in axes)})


def _smolyak_terms(space: RandomParameterSpace, w: int):
    """Yield (coefficient, points, weights) per tensor term of the combination."""
    ndim = space.ndim
    q = ndim + w
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def level_rule(dim_i: int, level: int):
        m = 2 * level - 1
        key = (dim_i, level)
        if key not in cache:
            cache[key] = _axis_rule(space.dims[dim_i], m)
        return cache[key]

    def compositions(total: int, parts: int):
        # multi-indices i_j >= 1 with sum == total
        if parts == 1:
            yield (total,)
            return
        for head in range(1, total - parts + 2):
            for rest in compositions(total - head, parts - 1):
                yield (head,) + rest

    for norm in range(max(ndim, w + 1), q + 1):
        coeff = (-1.0) ** (q - norm) * math.comb(ndim - 1, q - norm)
        if coeff == 0.0:
            continue
        for idx in compositions(norm, ndim):
            axes = [level_rule(i, lv) for i, lv in enumerate(idx)]
            mesh = np.meshgrid(*[a[0] for a in axes], indexing="ij")
            pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
            wts = np.ones(1)
            for _, ww in axes:
                wts = np.multiply.outer(wts, ww).reshape(-1)
            yield coeff, pts, wts


def smolyak_grid(space: RandomParameterSpace, w: int) -> SampleSet:
    """Isotropic Smolyak grid of sparseness level w (>= 0).

    Built from 1-d Gauss-Legendre rules with linear growth m_i = 2i - 1 by
    the combination technique; coincident nodes across terms are merged
    (tolerance 1e-12), signed weights are retained.  Exact for total degree
    <= 2w + 1.  A single dimension collapses to the (2w+1)-point Gauss rule.
    """
    if w < 0:
        raise ValueError(f"sparseness level must be >= 0, got {w}")
    merged: dict[tuple[int, ...], tuple[np.ndarray, float]] = {}
    for coeff, pts, wts in _smolyak_terms(space, w):
        for p, ww in zip(pts, wts):
            key = tuple(int(round(c / _MERGE_TOL)) for c in p)
            if key in merged:
                merged[key] = (merged[key][0], merged[key][1] + coeff * ww)
            else:
                merged[key] = (p, coeff * ww)
    items = sorted(merged.items(), key=lambda kv: kv[0])
    points = np.array([p for _, (p, _) in items]).reshape(len(items), space.ndim)
    weights = np.array([wt for _, (_, wt) in items])
    return SampleSet(space, points, weights, "smolyak",
                     meta={"level": int(w)})


def monte_carlo_set(space: RandomParameterSpace, count: int, seed: int) -> SampleSet:
    """count i.i.d. uniform samples with a splittable counter-based generator.

    Sample i draws from a Philox stream keyed by (seed, i); the j-th draw of
    the stream is dimension j.  Results are bitwise reproducible for a given
    (seed, count) prefix regardless of execution order or worker count.
    """
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    lo, hi = space.lower(), space.upper()
    span = hi - lo
    points = np.empty((count, space.ndim))
    for i in range(count):
        gen = np.random.Generator(np.random.Philox(key=np.array([i, seed], dtype=np.uint64)))
        points[i] = lo + span * gen.random(space.ndim)
    weights = np.full(count, 1.0 / count)
    return SampleSet(space, points, weights, "monte_carlo", meta={"seed": int(seed)})


def _barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.ones_like(nodes)
    for i in range(nodes.size):
        diff = nodes[i] - np.delete(nodes, i)
        w[i] = 1.0 / np.prod(diff)
    return w


def _cardinal(nodes: np.ndarray, x: float) -> np.ndarray:
    hit = np.nonzero(np.abs(nodes - x) < 1e-14)[0]
    if hit.size:
        out = np.zeros_like(nodes)
        out[hit[0]] = 1.0
        return out
    w = _barycentric_weights(nodes)
    terms = w / (x - nodes)
    return terms / terms.sum()


def lagrange_interpolate(samples: SampleSet, values: np.ndarray, point) -> float:
    """Barycentric tensor-product interpolation of nodal values at `point`.

    Requires tensor provenance; `values` follows the sample ordering
    (row-major over axes, first dimension slowest).
    """
    if samples.provenance != "tensor":
        raise ValueError(f"interpolation needs tensor provenance, got {samples.provenance!r}")
    axes = samples.meta["axes"]
    values = np.asarray(values, dtype=float)
    if values.size != len(samples):
        raise ValueError(f"expected {len(samples)} values, got {values.size}")
    point = np.asarray(point, dtype=float)
    if point.shape != (samples.space.ndim,):
        raise ValueError(f"point must have shape ({samples.space.ndim},)")
    lo, hi = samples.space.lower(), samples.space.upper()
    if np.any(point < lo - 1e-12) or np.any(point > hi + 1e-12):
        raise ValueError("interpolation point outside the parameter box")
    acc = values.reshape([a.size for a in axes])
    for d, ax_nodes in enumerate(axes):
        card = _cardinal(ax_nodes, float(point[d]))
        acc = np.tensordot(card, acc, axes=(0, 0))
    return float(acc)
