"""Shared machinery for the MCMC model fits.

The partition update is a Neal-style auxiliary-component Gibbs step driven by
cohesion ratios: an observation joins an existing cluster with prior weight
``C(S+i)/C(S)`` or one of ``neal_m`` fresh auxiliary components with prior
weight ``C({i})/m``, each multiplied by its likelihood ordinate. Bounded
scalar parameters move by reflected random walks whose scales adapt during
burn-in only, so the post-burn-in kernel is a fixed Metropolis kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, log
from typing import Callable, Dict, List, Optional

import numpy as np

from ..cohesion import ClusterStats, CohesionConfig, CohesionEvaluator
from ..spatial import LocationSet, Partition

__all__ = [
    "Dataset",
    "CpsSpec",
    "JointSpec",
    "McmcConfig",
    "PosteriorSamples",
    "ReflectedWalk",
    "PartitionState",
    "categorical_from_log_weights",
]


@dataclass(frozen=True)
class Dataset:
    """Responses (scalar or bivariate) with optional covariates at locations.

    ``standardize_response`` rescales y (and x) to mean 0 / sd 1 as done for
    observational applications; synthetic-study data stay on their raw scale.
    """

    loc: LocationSet
    y: np.ndarray
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim not in (1, 2) or (y.ndim == 2 and y.shape[1] != 2):
            raise ValueError("y must be (n,) or (n, 2)")
        if y.shape[0] != self.loc.n:
            raise ValueError("y length does not match locations")
        if not np.all(np.isfinite(y)):
            raise ValueError("y must be finite")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if self.x is not None:
            x = np.atleast_2d(np.asarray(self.x, dtype=float))
            if x.shape[0] == 1 and self.loc.n > 1:
                x = x.T
            if x.shape[0] != self.loc.n:
                raise ValueError("x rows do not match locations")
            if not np.all(np.isfinite(x)):
                raise ValueError("x must be finite")
            x.setflags(write=False)
            object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.loc.n

    @property
    def bivariate(self) -> bool:
        return self.y.ndim == 2

    def standardize_response(self, y: bool = True, x: bool = True) -> "Dataset":
        new_y = self.y
        if y:
            new_y = (self.y - self.y.mean(axis=0)) / self.y.std(axis=0, ddof=1)
        new_x = self.x
        if x and self.x is not None:
            new_x = (self.x - self.x.mean(axis=0)) / self.x.std(axis=0, ddof=1)
        return Dataset(self.loc, new_y, new_x)


@dataclass(frozen=True)
class CpsSpec:
    """Scalar-response conditional model with spatial structure in the prior.

    y_i | c_i ~ N(mu*_{c_i} + x_i' beta, sigma^2), mu*_h ~ N(mu0, sigma0^2),
    sigma ~ UN(0, sigma_max), beta ~ N(0, beta_sd^2 I),
    mu0 ~ N(0, mu0_sd^2), sigma0 ~ UN(0, sigma0_max).
    """

    cohesion: CohesionConfig
    sigma_max: float = 10.0
    beta_sd: float = 10.0
    mu0_sd: float = 10.0
    sigma0_max: float = 10.0

    def __post_init__(self):
        if min(self.sigma_max, self.beta_sd, self.mu0_sd, self.sigma0_max) <= 0:
            raise ValueError("hyperparameter bounds must be positive")


@dataclass(frozen=True)
class JointSpec:
    """Bivariate-response joint model, optionally with likelihood GPs (JLS).

    Shared structure: y_i ~ N2(mu*_{c_i} + theta_i, Sigma), mu*_h ~ N2(mu0, T),
    Sigma ~ IW(iw_df, I), T ~ IW(iw_df, I), mu0 ~ N2(0, mu0_sd^2 I). JPS fixes
    theta = 0; JLS builds theta by mixing two independent exponential-kernel
    GP fields through A = [[1, gamma], [gamma, 1]].

    ``gamma_fixed``/``tau2_fixed``/``phi_fixed`` clamp JLS parameters (handy
    for degeneracy checks); None leaves them free.
    """

    cohesion: CohesionConfig
    mode: str = "jps"
    iw_df: float = 2.0
    mu0_sd: float = 10.0
    tau2_shape: float = 1.0
    tau2_rate: float = 1.0
    phi_lo: float = 0.5
    phi_hi: float = 30.0
    gamma_fixed: Optional[float] = None
    tau2_fixed: Optional[tuple] = None
    phi_fixed: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("jps", "jls"):
            raise ValueError("mode must be 'jps' or 'jls'")
        if self.iw_df <= 1:
            raise ValueError("inverse-Wishart df must exceed dim - 1 = 1")
        if not 0 < self.phi_lo < self.phi_hi:
            raise ValueError("need 0 < phi_lo < phi_hi")


@dataclass(frozen=True)
class McmcConfig:
    """Sweep counts, thinning, auxiliary components, and the master seed."""

    n_iter: int = 2000
    burnin: int = 1000
    thin: int = 1
    neal_m: int = 1
    seed: int = 0
    rw_scales: Optional[Dict[str, float]] = None
    init: str = "single"

    def __post_init__(self):
        if not 0 <= self.burnin < self.n_iter:
            raise ValueError("need 0 <= burnin < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.neal_m < 1:
            raise ValueError("neal_m must be >= 1")
        if self.init not in ("single", "kmeans"):
            raise ValueError("init must be 'single' or 'kmeans'")

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.burnin) // self.thin


@dataclass
class PosteriorSamples:
    """Thinned posterior draws plus everything needed to recompute densities."""

    model: str
    partitions: List[Partition]
    params: Dict[str, object]
    loglik: np.ndarray
    diagnostics: Dict[str, float]
    data: Dataset
    spec: object

    @property
    def n_draws(self) -> int:
        return len(self.partitions)


class ReflectedWalk:
    """Random-walk proposal folded back into (lo, hi), with burn-in scaling.

    Reflection makes the proposal symmetric on the interval, so the
    Metropolis ratio needs no correction. Adaptation nudges the log scale
    toward a 0.35 acceptance rate and is frozen once ``freeze`` is called.
    """

    def __init__(self, lo: float, hi: float, scale: float = None):
        self.lo = lo
        self.hi = hi
        self.scale = scale if scale is not None else 0.1 * (hi - lo)
        self.frozen = False
        self._tries = 0
        self._accepts = 0
        self._post_tries = 0
        self._post_accepts = 0

    def propose(self, x: float, rng) -> float:
        span = self.hi - self.lo
        y = x + self.scale * rng.standard_normal()
        t = (y - self.lo) % (2.0 * span)
        if t < 0:
            t += 2.0 * span
        return self.lo + (t if t <= span else 2.0 * span - t)

    def register(self, accepted: bool) -> None:
        self._tries += 1
        if accepted:
            self._accepts += 1
        if self.frozen:
            self._post_tries += 1
            if accepted:
                self._post_accepts += 1
        else:
            rate = 1.0 if accepted else 0.0
            self.scale *= exp(min(0.5, 3.0 / self._tries ** 0.6) * (rate - 0.35))
            span = self.hi - self.lo
            self.scale = min(max(self.scale, 1e-4 * span), 2.0 * span)

    def freeze(self) -> None:
        self.frozen = True

    @property
    def post_burnin_rate(self) -> float:
        if self._post_tries == 0:
            return float("nan")
        return self._post_accepts / self._post_tries


def categorical_from_log_weights(logw: List[float], u: float) -> int:
    """Index drawn from softmax(logw) using a uniform variate u in [0, 1)."""
    mx = max(logw)
    if mx == float("-inf"):
        raise ValueError("all allocation weights are zero")
    ws = [exp(v - mx) for v in logw]
    total = sum(ws)
    target = u * total
    acc = 0.0
    for idx, w in enumerate(ws):
        acc += w
        if target < acc:
            return idx
    return len(ws) - 1


class PartitionState:
    """Cluster labels, location statistics, and per-cluster parameters.

    Cluster ids are dense 0..k-1; deleting an emptied cluster swaps the last
    id into its slot. ``params`` is a parallel list owned by the caller.
    """

    def __init__(self, ev: CohesionEvaluator, labels: List[int], params: List):
        self.ev = ev
        self.n = ev.loc.n
        self.labels = list(labels)
        k = max(self.labels) + 1
        self.clusters: List[ClusterStats] = []
        for h in range(k):
            members = [i for i, c in enumerate(self.labels) if c == h]
            if not members:
                raise ValueError("initial labels must use dense cluster ids")
            self.clusters.append(ev.stats_for(members))
        if len(params) != k:
            raise ValueError("params must align with clusters")
        self.params = list(params)

    @property
    def k(self) -> int:
        return len(self.clusters)

    def partition(self) -> Partition:
        return Partition([c + 1 for c in self.labels])

    def canonical_param_order(self) -> List[int]:
        """Cluster ids in first-appearance order (matches partition())."""
        seen: List[int] = []
        for c in self.labels:
            if c not in seen:
                seen.append(c)
        return seen

    def gibbs_sweep(
        self,
        rng,
        loglik_fn: Optional[Callable],
        draw_param: Callable,
        neal_m: int,
    ) -> None:
        """One full pass of single-site allocation updates.

        loglik_fn(i, param) -> float, or None to run against the prior only.
        draw_param(rng) draws a fresh auxiliary cluster parameter.
        """
        ev = self.ev
        labels = self.labels
        clusters = self.clusters
        params = self.params
        unif = rng.random(self.n)
        for i in range(self.n):
            h = labels[i]
            st = clusters[h]
            ev.remove(st, i)
            old_param = None
            if st.n == 0:
                old_param = params[h]
                last = len(clusters) - 1
                if h != last:
                    clusters[h] = clusters[last]
                    params[h] = params[last]
                    for j in range(self.n):
                        if labels[j] == last:
                            labels[j] = h
                clusters.pop()
                params.pop()
            k = len(clusters)
            logw = []
            for idx in range(k):
                lw = ev.log_add_ratio(clusters[idx], i)
                if loglik_fn is not None and lw != float("-inf"):
                    lw += loglik_fn(i, params[idx])
                logw.append(lw)
            log_new = ev.log_singleton(i) - log(neal_m)
            aux = []
            for j in range(neal_m):
                if j == 0 and old_param is not None:
                    theta = old_param
                else:
                    theta = draw_param(rng)
                aux.append(theta)
                lw = log_new
                if loglik_fn is not None:
                    lw += loglik_fn(i, theta)
                logw.append(lw)
            choice = categorical_from_log_weights(logw, unif[i])
            if choice < k:
                ev.add(clusters[choice], i)
                labels[i] = choice
            else:
                st_new = ev.new_stats(i)
                clusters.append(st_new)
                params.append(aux[choice - k])
                labels[i] = k


def initial_labels(loc: LocationSet, method: str, rng) -> List[int]:
    """Starting allocation: everything together, or a k-means carve-up."""
    if method == "single":
        return [0] * loc.n
    from scipy.cluster.vq import kmeans2

    k = max(2, min(8, loc.n // 10))
    seed = int(rng.integers(2 ** 31 - 1))
    _, lab = kmeans2(loc.coords, k, minit="++", seed=seed)
    # compact ids in case a centroid ended up empty
    uniq = {c: j for j, c in enumerate(dict.fromkeys(lab.tolist()))}
    return [uniq[c] for c in lab.tolist()]
