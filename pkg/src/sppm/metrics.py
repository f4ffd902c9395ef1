"""Model-fit and clustering-accuracy metrics.

LPML and WAIC consume a draws-by-observations matrix of log densities;
everything runs in log space so very small conditional ordinates cannot
underflow. The Dahl point estimate scans the sampled partitions for the one
closest (in squared co-clustering distance) to the posterior pairwise
co-clustering matrix.
"""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .spatial import Partition

__all__ = [
    "lpml",
    "waic",
    "mse",
    "mspe",
    "adjusted_rand",
    "dahl_estimate",
    "coclustering_from_draws",
]


def _as_loglik(L) -> np.ndarray:
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if not np.all(np.isfinite(L)):
        raise ValueError("log-likelihood matrix must be finite")
    return L


def lpml(L) -> float:
    """Log pseudo marginal likelihood: sum of log conditional ordinates.

    CPO_i is the harmonic mean of the per-draw densities exp(L[t, i]),
    computed as ``log T - logsumexp(-L[:, i])``.
    """
    L = _as_loglik(L)
    T = L.shape[0]
    log_cpo = np.log(T) - logsumexp(-L, axis=0)
    return float(log_cpo.sum())


def waic(L) -> float:
    """Widely applicable information criterion, variance-form penalty.

    ``-2 * (lppd - p_waic)`` with ``lppd = sum_i log mean_t exp(L[t, i])``
    and ``p_waic = sum_i var_t(L[t, i])`` (sample variance, divisor T-1).
    """
    L = _as_loglik(L)
    T = L.shape[0]
    if T < 2:
        raise ValueError("waic needs at least 2 posterior draws")
    lppd = float((logsumexp(L, axis=0) - np.log(T)).sum())
    p_waic = float(L.var(axis=0, ddof=1).sum())
    return -2.0 * (lppd - p_waic)


def mse(y, yhat) -> float:
    """Mean squared difference between two equal-length vectors."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError("length mismatch between y and yhat")
    return float(np.mean((y - yhat) ** 2))


def mspe(y_test, yhat_test) -> float:
    """Mean squared prediction error on held-out responses."""
    return mse(y_test, yhat_test)


def adjusted_rand(p1: Partition, p2: Partition) -> float:
    """Hubert-Arabie adjusted Rand index between two partitions.

    Returns 0 (with a warning) in the degenerate case where the maximum index
    equals its expectation, e.g. one-cluster vs all-singletons.
    """
    if len(p1) != len(p2):
        raise ValueError("partitions must cover the same number of items")
    n = len(p1)
    a_lab = np.asarray(p1.labels)
    b_lab = np.asarray(p2.labels)
    cont = np.zeros((p1.k, p2.k), dtype=np.int64)
    np.add.at(cont, (a_lab - 1, b_lab - 1), 1)

    def comb2(x):
        return x * (x - 1) // 2

    sum_ij = comb2(cont).sum()
    sum_a = comb2(cont.sum(axis=1)).sum()
    sum_b = comb2(cont.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        warnings.warn("degenerate adjusted Rand denominator; returning 0")
        return 0.0
    return float((sum_ij - expected) / (max_index - expected))


def coclustering_from_draws(draws: Sequence[Partition]) -> np.ndarray:
    """Empirical pairwise co-clustering frequencies over sampled partitions."""
    if not draws:
        raise ValueError("need at least one partition draw")
    n = len(draws[0])
    co = np.zeros((n, n))
    for p in draws:
        lab = np.asarray(p.labels)
        co += lab[:, None] == lab[None, :]
    return co / len(draws)


def dahl_estimate(draws: Sequence[Partition]) -> Partition:
    """Least-squares partition point estimate from posterior draws.

    Picks the sampled partition minimizing
    ``sum_{i<j} (1[c_i = c_j] - pihat_ij)^2`` against the empirical
    co-clustering matrix; ties go to the earliest draw.
    """
    if not draws:
        raise ValueError("need at least one partition draw")
    pihat = coclustering_from_draws(draws)
    n = len(draws[0])
    iu = np.triu_indices(n, 1)
    pihat_u = pihat[iu]
    best = None
    best_score = np.inf
    for t, p in enumerate(draws):
        lab = np.asarray(p.labels)
        delta = (lab[:, None] == lab[None, :])[iu]
        score = float(((delta - pihat_u) ** 2).sum())
        if score < best_score:
            best_score = score
            best = p
    return best
