"""Legendre/Jacobi evaluation and Gauss quadrature on [-1, 1].

Rules are built from the three-term recurrence coefficients of the weight
(1-x)^a (1+x)^b: nodes come from the symmetric tridiagonal (Jacobi) matrix,
are polished by Newton iteration on the polynomial itself, and weights use
the closed-form expression in terms of the derivative at the node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "JacobiParams",
    "QuadratureRule",
    "legendre_eval",
    "legendre_table",
    "jacobi_eval",
    "jacobi_table",
    "gauss_legendre",
    "gauss_jacobi",
    "jacobi_weight_mass",
]

DEGREE_CAP = 512


@dataclass(frozen=True)
class JacobiParams:
    """Exponent pair (a, b) of the weight (1-x)^a (1+x)^b, each > -1."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.a > -1.0 and self.b > -1.0):
            raise ValueError(f"Jacobi exponents must each exceed -1, got ({self.a}, {self.b})")


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integration against a Jacobi weight on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray
    params: JacobiParams

    def __post_init__(self) -> None:
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(np.diff(self.nodes) <= 0.0):
            raise ValueError("quadrature nodes must be strictly increasing")
        if np.any(self.weights <= 0.0):
            raise ValueError("Gauss weights must be positive")
        mass = jacobi_weight_mass(self.params.a, self.params.b)
        if abs(float(self.weights.sum()) - mass) > 1e-12 * mass:
            raise ValueError("quadrature weights do not sum to the weight-function mass")

    def __len__(self) -> int:
        return self.nodes.size


def jacobi_weight_mass(a: float, b: float) -> float:
    """Total mass of (1-x)^a (1+x)^b over [-1, 1]: 2^(a+b+1) B(a+1, b+1)."""
    return math.exp(
        (a + b + 1.0) * math.log(2.0)
        + math.lgamma(a + 1.0)
        + math.lgamma(b + 1.0)
        - math.lgamma(a + b + 2.0)
    )


def _check_degree(n: int) -> None:
    if n < 0:
        raise ValueError(f"degree must be nonnegative, got {n}")
    if n > DEGREE_CAP:
        raise ValueError(f"degree {n} exceeds cap {DEGREE_CAP}")


def legendre_eval(n: int, x) -> np.ndarray:
    """Legendre polynomial P_n via the three-term recurrence."""
    _check_degree(n)
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev
    p = x.copy()
    for k in range(1, n):
        p, p_prev = ((2 * k + 1) * x * p - k * p_prev) / (k + 1), p
    return p


def legendre_table(nmax: int, x: np.ndarray) -> np.ndarray:
    """All P_0..P_nmax at x, shape (nmax+1,) + x.shape."""
    _check_degree(nmax)
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for k in range(1, nmax):
        out[k + 1] = ((2 * k + 1) * x * out[k] - k * out[k - 1]) / (k + 1)
    return out


def jacobi_eval(params: JacobiParams, n: int, x) -> np.ndarray:
    """Jacobi polynomial P_n^(a,b) via the standard recurrence."""
    return jacobi_table(params, n, np.asarray(x, dtype=float))[n]


def jacobi_table(params: JacobiParams, nmax: int, x: np.ndarray) -> np.ndarray:
    """All P_0^(a,b)..P_nmax^(a,b) at x, shape (nmax+1,) + x.shape."""
    _check_degree(nmax)
    a, b = params.a, params.b
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 0.5 * (a - b + (a + b + 2.0) * x)
    for n in range(1, nmax):
        n2ab = 2.0 * n + a + b
        c1 = 2.0 * (n + 1.0) * (n + a + b + 1.0) * n2ab
        c2 = (n2ab + 1.0) * (a * a - b * b)
        c3 = n2ab * (n2ab + 1.0) * (n2ab + 2.0)
        c4 = 2.0 * (n + a) * (n + b) * (n2ab + 2.0)
        out[n + 1] = ((c2 + c3 * x) * out[n] - c4 * out[n - 1]) / c1
    return out


def _jacobi_deriv(params: JacobiParams, n: int, x: np.ndarray) -> np.ndarray:
    # d/dx P_n^(a,b) = (n+a+b+1)/2 * P_(n-1)^(a+1,b+1)
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    shifted = JacobiParams(params.a + 1.0, params.b + 1.0)
    return 0.5 * (n + params.a + params.b + 1.0) * jacobi_eval(shifted, n - 1, x)


def _recurrence_tridiagonal(a: float, b: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and subdiagonal of the m x m Jacobi matrix for (1-x)^a (1+x)^b."""
    diag = np.empty(m)
    sub = np.empty(max(m - 1, 0))
    apb = a + b
    diag[0] = (b - a) / (apb + 2.0)
    if m > 1:
        sub[0] = math.sqrt(4.0 * (a + 1.0) * (b + 1.0) / ((apb + 2.0) ** 2 * (apb + 3.0)))
    for i in range(1, m):
        den = (2.0 * i + apb) * (2.0 * i + apb + 2.0)
        diag[i] = (b * b - a * a) / den
        if i < m - 1:
            num = 4.0 * (i + 1.0) * (i + 1.0 + a) * (i + 1.0 + b) * (i + 1.0 + apb)
            den2 = (2.0 * i + apb + 2.0) ** 2 * ((2.0 * i + apb + 1.0) * (2.0 * i + apb + 3.0))
            sub[i] = math.sqrt(num / den2)
    return diag, sub


def gauss_jacobi(params: JacobiParams, m: int) -> QuadratureRule:
    """m-point Gauss rule for the weight (1-x)^a (1+x)^b on [-1, 1].

    Exact for polynomials through degree 2m-1.
    """
    if m < 1:
        raise ValueError(f"point count must be >= 1, got {m}")
    _check_degree(m)
    a, b = params.a, params.b
    diag, sub = _recurrence_tridiagonal(a, b, m)
    if m == 1:
        nodes = diag.copy()
    else:
        nodes = eigh_tridiagonal(diag, sub, eigvals_only=True)

    # Newton polish on P_m^(a,b); the eigenvalue nodes are already close.
    converged = False
    for _ in range(10):
        step = jacobi_eval(params, m, nodes) / _jacobi_deriv(params, m, nodes)
        nodes = nodes - step
        if np.max(np.abs(step)) < 1e-14:
            converged = True
            break
    if not converged:
        raise RuntimeError(f"Gauss-Jacobi({a},{b}) root polish did not converge for m={m}")

    # w_i = C / ((1 - x_i^2) P_m'(x_i)^2)
    logc = (
        (a + b + 1.0) * math.log(2.0)
        + math.lgamma(m + a + 1.0)
        + math.lgamma(m + b + 1.0)
        - math.lgamma(m + 1.0)
        - math.lgamma(m + a + b + 1.0)
    )
    deriv = _jacobi_deriv(params, m, nodes)
    weights = math.exp(logc) / ((1.0 - nodes**2) * deriv**2)
    return QuadratureRule(nodes=nodes, weights=weights, params=params)


def gauss_legendre(m: int) -> QuadratureRule:
    """m-point Gauss-Legendre rule on [-1, 1] (unit weight)."""
    return gauss_jacobi(JacobiParams(0.0, 0.0), m)
