"""Sampling from and exact evaluation of the spatial partition prior.

The prior over partitions is ``Pr(rho) prop prod_h C(S_h, locations_h)``.
Exact probabilities come from exhaustive enumeration (small n). Large-n draws
come from a sequential predictive proposal corrected by self-normalized
importance weights: points are inserted in random order, each joining an
existing cluster with weight ``C(S + i)/C(S)`` or opening a new one with
weight ``C({i})``. The proposal is exact only for trivial cases, so every
draw carries ``log target - log proposal`` and all summaries are
weight-averaged.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, inf, log
from typing import Dict, Iterable, List

import numpy as np

from .cohesion import CohesionConfig, CohesionEvaluator
from .spatial import LocationSet, Partition, enumerate_partitions

__all__ = [
    "WeightedPartitionDraw",
    "PriorSummary",
    "sample_partition_sequential",
    "exact_prior",
    "prior_summaries",
    "coclustering_matrix",
    "effective_sample_size",
]

LOW_ESS = 50.0


@dataclass(frozen=True)
class WeightedPartitionDraw:
    """One importance-sampling draw: a partition and its log weight."""

    partition: Partition
    log_weight: float


@dataclass(frozen=True)
class PriorSummary:
    """Weight-averaged prior summaries of cluster structure."""

    mean_k: float
    mean_singletons: float
    mean_max_cluster: float
    n_draws: int
    mc_se_k: float
    ess: float
    low_ess: bool


def _sequential_draw(ev: CohesionEvaluator, rng) -> tuple:
    """One proposal draw; returns (labels list, log target - log proposal)."""
    n = ev.loc.n
    order = rng.permutation(n)
    clusters: List = []
    labels = [0] * n
    log_q = 0.0
    randv = rng.random(n)
    for step in range(n):
        i = int(order[step])
        logw = [ev.log_add_ratio(st, i) for st in clusters]
        logw.append(ev.log_singleton(i))
        mx = max(logw)
        ws = [exp(v - mx) for v in logw]
        total = sum(ws)
        u = randv[step] * total
        acc = 0.0
        choice = len(ws) - 1
        for idx, w in enumerate(ws):
            acc += w
            if u < acc:
                choice = idx
                break
        log_q += logw[choice] - (mx + log(total))
        if choice == len(clusters):
            clusters.append(ev.new_stats(i))
        else:
            ev.add(clusters[choice], i)
        labels[i] = choice + 1
    log_target = sum(ev.log_cluster(st) for st in clusters)
    return labels, log_target - log_q


def sample_partition_sequential(
    loc: LocationSet, cfg: CohesionConfig, rng
) -> WeightedPartitionDraw:
    """Draw one weighted partition from the sequential predictive proposal.

    Self-normalized averages of any statistic over repeated draws, weighted by
    ``exp(log_weight)``, are consistent for the corresponding prior
    expectation under ``cfg``. Insertion order is randomized per draw.
    """
    ev = CohesionEvaluator(loc, cfg)
    labels, lw = _sequential_draw(ev, rng)
    return WeightedPartitionDraw(Partition(labels), lw)


def exact_prior(loc: LocationSet, cfg: CohesionConfig) -> Dict[Partition, float]:
    """Exact prior probability of every partition of up to 12 points.

    Cluster cohesions are cached per index subset, so the cost is dominated by
    Bell(n) partition visits rather than cohesion evaluations.
    """
    n = loc.n
    ev = CohesionEvaluator(loc, cfg)
    cache: Dict[int, float] = {}

    def block_score(members: tuple) -> float:
        key = 0
        for i in members:
            key |= 1 << i
        val = cache.get(key)
        if val is None:
            val = ev.log_cluster(ev.stats_for(members))
            cache[key] = val
        return val

    parts: List[Partition] = []
    logmass: List[float] = []
    for p in enumerate_partitions(n):
        parts.append(p)
        logmass.append(sum(block_score(b) for b in p.clusters.values()))
    lm = np.asarray(logmass)
    mx = lm.max()
    w = np.exp(lm - mx)
    w /= w.sum()
    return dict(zip(parts, w.tolist()))


def effective_sample_size(log_weights) -> float:
    """(sum w)^2 / sum w^2 for unnormalized log weights."""
    lw = np.asarray(log_weights, dtype=float)
    lw = lw - lw.max()
    w = np.exp(lw)
    return float(w.sum() ** 2 / (w @ w))


def _normalized_weights(log_weights: np.ndarray) -> np.ndarray:
    lw = log_weights - log_weights.max()
    w = np.exp(lw)
    return w / w.sum()


def prior_summaries(
    loc: LocationSet, cfg: CohesionConfig, n_draws: int, rng
) -> PriorSummary:
    """Self-normalized IS estimates of E(k), E(#singletons), E(max |S|).

    The Monte Carlo standard error for the cluster count comes from batch
    means over 10 consecutive batches of draws (self-normalized per batch),
    which stays honest when the weights are degenerate; with fewer than 100
    draws it falls back to the delta-method estimator. An effective sample
    size below 50 flags the summary as unreliable.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    ev = CohesionEvaluator(loc, cfg)
    ks = np.empty(n_draws)
    singles = np.empty(n_draws)
    biggest = np.empty(n_draws)
    lws = np.empty(n_draws)
    for t in range(n_draws):
        labels, lw = _sequential_draw(ev, rng)
        counts = np.bincount(labels)[1:]
        ks[t] = counts.size
        singles[t] = int((counts == 1).sum())
        biggest[t] = int(counts.max())
        lws[t] = lw
    wbar = _normalized_weights(lws)
    mean_k = float(wbar @ ks)
    if n_draws >= 100:
        n_batches = 10
        edges = np.linspace(0, n_draws, n_batches + 1).astype(int)
        batch_means = np.empty(n_batches)
        for b in range(n_batches):
            sl = slice(edges[b], edges[b + 1])
            wb = _normalized_weights(lws[sl])
            batch_means[b] = wb @ ks[sl]
        se_k = float(batch_means.std(ddof=1) / np.sqrt(n_batches))
    else:
        se_k = float(np.sqrt(np.sum(wbar ** 2 * (ks - mean_k) ** 2)))
    ess = effective_sample_size(lws)
    return PriorSummary(
        mean_k=mean_k,
        mean_singletons=float(wbar @ singles),
        mean_max_cluster=float(wbar @ biggest),
        n_draws=n_draws,
        mc_se_k=se_k,
        ess=ess,
        low_ess=ess < LOW_ESS,
    )


def coclustering_matrix(
    loc: LocationSet, cfg: CohesionConfig, n_draws: int, rng
) -> np.ndarray:
    """Weighted pairwise probability that two locations share a cluster."""
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    n = loc.n
    ev = CohesionEvaluator(loc, cfg)
    all_labels = np.empty((n_draws, n), dtype=np.int32)
    lws = np.empty(n_draws)
    for t in range(n_draws):
        labels, lw = _sequential_draw(ev, rng)
        all_labels[t] = labels
        lws[t] = lw
    wbar = _normalized_weights(lws)
    co = np.zeros((n, n))
    for t in range(n_draws):
        lab = all_labels[t]
        co += wbar[t] * (lab[:, None] == lab[None, :])
    np.fill_diagonal(co, 1.0)
    return co


def coclustering_from_exact(prior: Dict[Partition, float], n: int) -> np.ndarray:
    """Exact co-clustering matrix implied by an exact_prior map."""
    co = np.zeros((n, n))
    for p, prob in prior.items():
        lab = np.asarray(p.labels)
        co += prob * (lab[:, None] == lab[None, :])
    np.fill_diagonal(co, 1.0)
    return co
