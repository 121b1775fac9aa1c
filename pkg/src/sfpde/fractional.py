"""Closed-form Riemann-Liouville derivatives of the trial/test families.

Temporal trial functions are Jacobi poly-fractonomials of the first kind,
(1+eta)^tau P_(n-1)^(-tau,tau), temporal test functions are the second kind,
(1-eta)^tau P_(k-1)^(tau,-tau); both vanish at their respective left/right
endpoint and their order-tau one-sided derivatives reduce to plain Legendre
polynomials.  Spatial trial/test functions are modal Legendre differences
that vanish at both endpoints; their order-mu one-sided derivatives pick up
a (1 -+ xi)^(-mu) factor times a Jacobi polynomial.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma as _gamma, rgamma as _rgamma

from .orthopoly import JacobiParams, jacobi_eval, legendre_eval

__all__ = [
    "gamma_ratio",
    "rl_deriv_power",
    "affine_scale",
    "polyfrac_first",
    "polyfrac_second",
    "polyfrac_deriv",
    "polyfrac_power_coeffs",
    "polyfrac_deriv_general",
    "modal_legendre",
    "frac_deriv_modal_legendre",
]

_SIDES = ("left", "right")
_KINDS = ("basis", "test")


def gamma_ratio(num: float, den: float) -> float:
    """Gamma(num)/Gamma(den), 0 at poles of the denominator."""
    if num > 0.0 and den > 0.0:
        return math.exp(math.lgamma(num) - math.lgamma(den))
    return float(_gamma(num) * _rgamma(den))


def _check_side(side: str) -> None:
    if side not in _SIDES:
        raise ValueError(f"side must be one of {_SIDES}, got {side!r}")


def _check_tau(tau: float) -> None:
    if not (0.0 < tau < 1.0):
        raise ValueError(f"temporal tuning must lie in (0, 1), got {tau}")


def rl_deriv_power(side: str, sigma: float, p: float, x) -> np.ndarray:
    """Riemann-Liouville derivative of order sigma of (1 +- x)^p on [-1, 1].

    left:  D^sigma (1+x)^p = Gamma(p+1)/Gamma(p+1-sigma) * (1+x)^(p-sigma)
    right: mirrored with (1-x).
    """
    _check_side(side)
    if sigma <= 0.0:
        raise ValueError(f"derivative order must be positive, got {sigma}")
    if p <= -1.0:
        raise ValueError(f"power exponent must exceed -1, got {p}")
    x = np.asarray(x, dtype=float)
    base = 1.0 + x if side == "left" else 1.0 - x
    coeff = gamma_ratio(p + 1.0, p + 1.0 - sigma)
    with np.errstate(divide="ignore"):
        return coeff * base ** (p - sigma)


def affine_scale(sigma: float, a: float, b: float) -> float:
    """Order-sigma derivative scale factor (2/(b-a))^sigma of the affine map."""
    if not b > a:
        raise ValueError(f"interval must satisfy b > a, got ({a}, {b})")
    return (2.0 / (b - a)) ** sigma


def polyfrac_first(n: int, tau: float, eta, scale: float = 1.0) -> np.ndarray:
    """First-kind poly-fractonomial (1+eta)^tau P_(n-1)^(-tau,tau), n >= 1.

    Vanishes at eta = -1; `scale` is an optional constant tuning factor.
    """
    _check_tau(tau)
    if n < 1:
        raise ValueError(f"index must be >= 1, got {n}")
    eta = np.asarray(eta, dtype=float)
    return scale * (1.0 + eta) ** tau * jacobi_eval(JacobiParams(-tau, tau), n - 1, eta)


def polyfrac_second(k: int, tau: float, eta, scale: float = 1.0) -> np.ndarray:
    """Second-kind poly-fractonomial (1-eta)^tau P_(k-1)^(tau,-tau), k >= 1.

    Vanishes at eta = +1.
    """
    _check_tau(tau)
    if k < 1:
        raise ValueError(f"index must be >= 1, got {k}")
    eta = np.asarray(eta, dtype=float)
    return scale * (1.0 - eta) ** tau * jacobi_eval(JacobiParams(tau, -tau), k - 1, eta)


def polyfrac_deriv(kind: str, n: int, tau: float, eta, order: float, scale: float = 1.0) -> np.ndarray:
    """One-sided RL derivative of order tau of a poly-fractonomial.

    kind "basis" (first kind): left derivative, Gamma(n+tau)/Gamma(n) P_(n-1).
    kind "test" (second kind): right derivative, same coefficient.
    Only the matching order tau has a closed form here; other orders raise
    (see polyfrac_deriv_general for arbitrary orders via power expansion).
    """
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    _check_tau(tau)
    if n < 1:
        raise ValueError(f"index must be >= 1, got {n}")
    if abs(order - tau) > 1e-14:
        raise ValueError(
            f"closed form only covers derivative order tau={tau}, requested {order}"
        )
    eta = np.asarray(eta, dtype=float)
    return scale * gamma_ratio(n + tau, float(n)) * legendre_eval(n - 1, eta)


def polyfrac_power_coeffs(n: int, tau: float) -> np.ndarray:
    """Coefficients c_j of P_(n-1)^(-tau,tau)(eta) = sum_j c_j (1+eta)^j.

    By reflection the second kind expands with the same coefficients:
    P_(k-1)^(tau,-tau)(eta) = (-1)^(k-1) sum_j c_j (1-eta)^j.
    Power-basis conditioning limits this to moderate n (it is used for the
    dense temporal matrices when the tuning differs from alpha/2).
    """
    _check_tau(tau)
    if n < 1:
        raise ValueError(f"index must be >= 1, got {n}")
    deg = n - 1
    c = np.empty(deg + 1)
    # (-1)^deg (tau+1)_deg / deg! * (-deg)_j (deg+1)_j / ((tau+1)_j j! 2^j)
    lead = (-1.0) ** deg
    for i in range(deg):
        lead *= (tau + 1.0 + i) / (i + 1.0)
    term = lead
    c[0] = term
    for j in range(deg):
        term *= (-(deg - j)) * (deg + 1.0 + j) / ((tau + 1.0 + j) * (j + 1.0) * 2.0)
        c[j + 1] = term
    return c


def polyfrac_deriv_general(kind: str, n: int, tau: float, eta, order: float,
                           scale: float = 1.0) -> np.ndarray:
    """One-sided RL derivative of arbitrary positive order via power expansion.

    Returns (1 -+ eta)^(tau-order) times a polynomial; valid for order < tau+1.
    """
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    if not 0.0 < order < tau + 1.0:
        raise ValueError(f"order must lie in (0, tau+1), got {order}")
    eta = np.asarray(eta, dtype=float)
    c = polyfrac_power_coeffs(n, tau)
    base = 1.0 + eta if kind == "basis" else 1.0 - eta
    sign = 1.0 if kind == "basis" else (-1.0) ** (n - 1)
    acc = np.zeros_like(eta)
    for j in range(c.size - 1, -1, -1):
        coeff = c[j] * gamma_ratio(tau + j + 1.0, tau + j + 1.0 - order)
        acc = acc * base + coeff
    with np.errstate(divide="ignore"):
        return scale * sign * base ** (tau - order) * acc


def modal_legendre(kind: str, m: int, xi, scale: float = 1.0) -> np.ndarray:
    """Modal Legendre spatial function sigma_m (P_(m+1) - P_(m-1)), m >= 1.

    kind "basis" uses sigma_m = 2 + (-1)^m, kind "test" uses 2(-1)^m + 1;
    both vanish at xi = +-1.
    """
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    if m < 1:
        raise ValueError(f"index must be >= 1, got {m}")
    xi = np.asarray(xi, dtype=float)
    sgn = 1.0 if m % 2 == 0 else -1.0
    sig = (2.0 + sgn) if kind == "basis" else (2.0 * sgn + 1.0)
    return scale * sig * (legendre_eval(m + 1, xi) - legendre_eval(m - 1, xi))


def frac_deriv_modal_legendre(kind: str, side: str, mu: float, m: int, xi,
                              scale: float = 1.0) -> np.ndarray:
    """One-sided RL derivative of order mu of a modal Legendre function.

    Term by term,
        leftD^mu  P_n = Gamma(n+1)/Gamma(n+1-mu) (1+xi)^(-mu) P_n^(mu,-mu),
        rightD^mu P_n = Gamma(n+1)/Gamma(n+1-mu) (1-xi)^(-mu) P_n^(-mu,mu).
    Evaluation exactly at the singular endpoint returns a signed infinity
    (or 0 where the polynomial factor vanishes).
    """
    _check_side(side)
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    if m < 1:
        raise ValueError(f"index must be >= 1, got {m}")
    if not 0.0 < mu <= 1.0:
        raise ValueError(f"order must lie in (0, 1], got {mu}")
    xi = np.asarray(xi, dtype=float)
    sgn = 1.0 if m % 2 == 0 else -1.0
    sig = (2.0 + sgn) if kind == "basis" else (2.0 * sgn + 1.0)
    if abs(mu - 1.0) < 1e-14:
        # classical limit: P'_(m+1) - P'_(m-1) = (2m+1) P_m, right side negated
        orient = 1.0 if side == "left" else -1.0
        return scale * sig * orient * (2.0 * m + 1.0) * legendre_eval(m, xi)
    params = JacobiParams(mu, -mu) if side == "left" else JacobiParams(-mu, mu)
    poly = gamma_ratio(m + 2.0, m + 2.0 - mu) * jacobi_eval(params, m + 1, xi) \
        - gamma_ratio(float(m), float(m) - mu) * jacobi_eval(params, m - 1, xi)
    base = 1.0 + xi if side == "left" else 1.0 - xi
    out = np.empty_like(xi)
    singular = base == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        np.copyto(out, base ** (-mu) * poly, where=~singular)
    if np.any(singular):
        np.copyto(out, np.where(poly == 0.0, 0.0, np.copysign(np.inf, poly)),
                  where=singular)
    return scale * sig * out
