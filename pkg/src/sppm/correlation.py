"""Closed-form marginal moments and correlations induced by partition priors.

Three model families are covered, matching how spatial structure can enter:

1. local regression only -- cluster-specific coefficients, no spatial term in
   the likelihood; all spatial dependence flows through the co-clustering
   probability ``Pr(c_i = c_j)``;
2. local regression plus one global Gaussian-process intercept;
3. global regression plus cluster-specific Gaussian processes, where the
   effective covariance is a probability-weighted average of the per-cluster
   covariances.

Each ``corr_*`` function is the ratio of the corresponding ``moments_*``
output, which tests can recompute term by term.
"""

from __future__ import annotations

from math import exp, sqrt
from typing import Dict, Mapping, Tuple

import numpy as np

__all__ = [
    "exp_cov",
    "effective_range",
    "phi_for_effective_range",
    "moments_local_regression",
    "moments_local_reg_global_gp",
    "moments_global_reg_local_gp",
    "corr_prop1",
    "corr_prop2",
    "corr_prop3",
]

_PROB_TOL = 1e-8


def exp_cov(d: float, tau2: float, phi: float) -> float:
    """Exponential covariance ``tau2 * exp(-phi * d)`` at distance d >= 0."""
    if d < 0:
        raise ValueError("distance must be nonnegative")
    if tau2 < 0 or phi <= 0:
        raise ValueError("tau2 must be >= 0 and phi > 0")
    return tau2 * exp(-phi * d)


def effective_range(phi: float) -> float:
    """Distance at which exponential correlation drops to exp(-3)."""
    if phi <= 0:
        raise ValueError("phi must be positive")
    return 3.0 / phi


def phi_for_effective_range(rng: float) -> float:
    if rng <= 0:
        raise ValueError("effective range must be positive")
    return 3.0 / rng


def _quad(x, T, y) -> float:
    return float(np.asarray(x, float) @ np.asarray(T, float) @ np.asarray(y, float))


def _check_T(T) -> np.ndarray:
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if not np.allclose(T, T.T):
        raise ValueError("coefficient covariance T must be symmetric")
    try:
        np.linalg.cholesky(T)
    except np.linalg.LinAlgError as err:
        raise ValueError("coefficient covariance T must be positive definite") from err
    return T


def _check_prob(p: float, name: str) -> float:
    if not -_PROB_TOL <= p <= 1 + _PROB_TOL:
        raise ValueError(f"{name} must lie in [0, 1]")
    return min(max(p, 0.0), 1.0)


def moments_local_regression(x_i, x_j, T, sigma2, p_same) -> Tuple[float, float, float]:
    """(cov, var_i, var_j) for cluster-wise coefficients beta*_h ~ N(mu, T).

    cov(y_i, y_j) = x_i' T x_j Pr(c_i = c_j); var(y_i) = x_i' T x_i + sigma2.
    """
    T = _check_T(T)
    p_same = _check_prob(p_same, "p_same")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    cov = _quad(x_i, T, x_j) * p_same
    return cov, _quad(x_i, T, x_i) + sigma2, _quad(x_j, T, x_j) + sigma2


def moments_local_reg_global_gp(
    x_i, x_j, T, sigma2, lambda2, H_ij, p_same
) -> Tuple[float, float, float]:
    """Moments when a global GP intercept with sill lambda2 joins the model.

    cov gains ``lambda2 * H_ij`` and each variance gains ``lambda2``.
    """
    if lambda2 < 0:
        raise ValueError("lambda2 must be nonnegative")
    if abs(H_ij) > 1 + _PROB_TOL:
        raise ValueError("H_ij must be a correlation in [-1, 1]")
    cov, vi, vj = moments_local_regression(x_i, x_j, T, sigma2, p_same)
    return cov + lambda2 * H_ij, vi + lambda2, vj + lambda2


def moments_global_reg_local_gp(
    x_i,
    x_j,
    T,
    sigma2,
    cluster_gps: Mapping[object, Tuple[float, float]],
    p_joint: Mapping[object, float],
    p_i: Mapping[object, float],
    p_j: Mapping[object, float],
) -> Tuple[float, float, float]:
    """Moments for a global coefficient and cluster-specific GP intercepts.

    Parameters
    ----------
    cluster_gps : map h -> (sill_h, H_h_ij)
        Per-cluster GP partial sill and the correlation its kernel assigns to
        the pair of sites.
    p_joint : map h -> Pr(c_i = c_j = h)
    p_i, p_j : maps h -> Pr(c_i = h), Pr(c_j = h); each must sum to 1.

    cov(theta_i, theta_j) = sum_h sill_h H_h_ij Pr(c_i=c_j=h) and
    var(theta_i) = sum_h sill_h Pr(c_i=h), on top of the x'Tx terms.
    """
    T = _check_T(T)
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    for name, pm in (("p_i", p_i), ("p_j", p_j)):
        tot = sum(pm.values())
        if abs(tot - 1.0) > _PROB_TOL:
            raise ValueError(f"{name} probabilities must sum to 1 (got {tot})")
    cov_theta = 0.0
    var_i = 0.0
    var_j = 0.0
    for h, (sill, h_ij) in cluster_gps.items():
        if sill < 0:
            raise ValueError("GP sills must be nonnegative")
        if abs(h_ij) > 1 + _PROB_TOL:
            raise ValueError("H_h_ij must be a correlation in [-1, 1]")
        pj_h = _check_prob(p_joint.get(h, 0.0), "p_joint")
        pi_h = _check_prob(p_i.get(h, 0.0), "p_i")
        pjj_h = _check_prob(p_j.get(h, 0.0), "p_j")
        if pj_h > min(pi_h, pjj_h) + _PROB_TOL:
            raise ValueError("p_joint(h) cannot exceed min(p_i(h), p_j(h))")
        cov_theta += sill * h_ij * pj_h
        var_i += sill * pi_h
        var_j += sill * pjj_h
    cov = _quad(x_i, T, x_j) + cov_theta
    vi = sigma2 + _quad(x_i, T, x_i) + var_i
    vj = sigma2 + _quad(x_j, T, x_j) + var_j
    return cov, vi, vj


def corr_prop1(x_i, x_j, T, sigma2, p_same) -> float:
    """Marginal correlation with spatial structure in the prior only.

    Intercept-only covariates reduce this to
    ``tau2 / (tau2 + sigma2) * p_same``.
    """
    cov, vi, vj = moments_local_regression(x_i, x_j, T, sigma2, p_same)
    return cov / sqrt(vi * vj)


def corr_prop2(x_i, x_j, T, sigma2, lambda2, H_ij, p_same) -> float:
    """Marginal correlation with local coefficients and one global GP."""
    cov, vi, vj = moments_local_reg_global_gp(x_i, x_j, T, sigma2, lambda2, H_ij, p_same)
    return cov / sqrt(vi * vj)


def corr_prop3(x_i, x_j, T, sigma2, cluster_gps, p_joint, p_i, p_j) -> float:
    """Marginal correlation with a global coefficient and per-cluster GPs."""
    cov, vi, vj = moments_global_reg_local_gp(
        x_i, x_j, T, sigma2, cluster_gps, p_joint, p_i, p_j
    )
    return cov / sqrt(vi * vj)
