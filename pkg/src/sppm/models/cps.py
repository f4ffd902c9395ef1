"""Conditional model with prior spatial structure: Gaussian response with
cluster-specific intercepts riding on a spatial partition prior.

One sweep updates, in order: every cluster label (auxiliary-component Gibbs),
the cluster intercepts mu*_h, the regression coefficients beta, the intercept
mean mu0 (all conjugate normal), then sigma and sigma0 by reflected random
walks on their uniform supports. ``prior_only=True`` drops every likelihood
term, which turns the chain into a sampler of the joint prior -- the basis of
the prior-reproduction validity check.
"""

from __future__ import annotations

from math import log, pi, sqrt
from typing import Optional

import numpy as np

from ..cohesion import CohesionEvaluator
from ..spatial import LocationSet
from .base import (
    CpsSpec,
    Dataset,
    McmcConfig,
    PartitionState,
    PosteriorSamples,
    ReflectedWalk,
    categorical_from_log_weights,
    initial_labels,
)

__all__ = ["fit_cps", "predict_cps"]

_LOG_2PI = log(2.0 * pi)


def fit_cps(
    data: Dataset, spec: CpsSpec, mcmc: McmcConfig, prior_only: bool = False
) -> PosteriorSamples:
    """Posterior (or prior, with ``prior_only``) draws for the CPS model."""
    if data.bivariate:
        raise ValueError("CPS needs a scalar response")
    rng = np.random.default_rng(mcmc.seed)
    n = data.n
    y = data.y
    X = data.x  # (n, p) or None
    p = 0 if X is None else X.shape[1]

    ev = CohesionEvaluator(data.loc, spec.cohesion)
    labels0 = initial_labels(data.loc, mcmc.init, rng)
    state = PartitionState(ev, labels0, [0.0] * (max(labels0) + 1))

    beta = np.zeros(p)
    xb = X @ beta if p else np.zeros(n)
    sigma = 0.5 * spec.sigma_max
    mu0 = 0.0
    sigma0 = 0.5 * spec.sigma0_max

    scales = mcmc.rw_scales or {}
    rw_sigma = ReflectedWalk(0.0, spec.sigma_max, scales.get("sigma"))
    rw_sigma0 = ReflectedWalk(0.0, spec.sigma0_max, scales.get("sigma0"))

    T = mcmc.n_draws
    partitions = []
    mu_star_draws = []
    beta_draws = np.empty((T, p))
    sigma_draws = np.empty(T)
    mu0_draws = np.empty(T)
    sigma0_draws = np.empty(T)
    loglik = np.empty((T, n))
    t_out = 0

    for sweep in range(mcmc.n_iter):
        if sweep == mcmc.burnin:
            rw_sigma.freeze()
            rw_sigma0.freeze()

        # cluster labels
        if prior_only:
            loglik_fn = None
        else:
            inv2s2 = 0.5 / (sigma * sigma)
            resid = y - xb

            def loglik_fn(i, mu, _r=resid, _c=inv2s2):
                d = _r[i] - mu
                return -_c * d * d

        def draw_param(rg, _m=mu0, _s=sigma0):
            return _m + _s * rg.standard_normal()

        state.gibbs_sweep(rng, loglik_fn, draw_param, mcmc.neal_m)

        labels_arr = np.asarray(state.labels)
        k = state.k

        # cluster intercepts mu*_h (conjugate normal)
        if prior_only:
            state.params = (mu0 + sigma0 * rng.standard_normal(k)).tolist()
        else:
            resid = y - xb
            sums = np.bincount(labels_arr, weights=resid, minlength=k)
            counts = np.bincount(labels_arr, minlength=k)
            prec = 1.0 / (sigma0 * sigma0) + counts / (sigma * sigma)
            mean = (mu0 / (sigma0 * sigma0) + sums / (sigma * sigma)) / prec
            state.params = (mean + rng.standard_normal(k) / np.sqrt(prec)).tolist()
        mu_arr = np.asarray(state.params)

        # regression coefficients (conjugate normal)
        if p:
            if prior_only:
                beta = spec.beta_sd * rng.standard_normal(p)
            else:
                r = y - mu_arr[labels_arr]
                A = X.T @ X / (sigma * sigma) + np.eye(p) / (spec.beta_sd ** 2)
                b = X.T @ r / (sigma * sigma)
                L = np.linalg.cholesky(A)
                mean = np.linalg.solve(A, b)
                beta = mean + np.linalg.solve(L.T, rng.standard_normal(p))
            xb = X @ beta

        # mu0 (conjugate normal against the mu* values)
        prec0 = 1.0 / (spec.mu0_sd ** 2) + k / (sigma0 * sigma0)
        mean0 = (mu_arr.sum() / (sigma0 * sigma0)) / prec0
        mu0 = mean0 + rng.standard_normal() / sqrt(prec0)

        # sigma (reflected random walk on (0, sigma_max))
        if prior_only:
            sigma = rng.uniform(0.0, spec.sigma_max)
        else:
            resid = y - mu_arr[labels_arr] - xb
            ss = float(resid @ resid)
            prop = rw_sigma.propose(sigma, rng)
            cur_ll = -n * log(sigma) - ss / (2.0 * sigma * sigma)
            prop_ll = -n * log(prop) - ss / (2.0 * prop * prop)
            accept = log(rng.random()) < prop_ll - cur_ll
            if accept:
                sigma = prop
            rw_sigma.register(accept)

        # sigma0 (reflected random walk against the mu* layer)
        dev = float(((mu_arr - mu0) ** 2).sum())
        prop = rw_sigma0.propose(sigma0, rng)
        cur_ll = -k * log(sigma0) - dev / (2.0 * sigma0 * sigma0)
        prop_ll = -k * log(prop) - dev / (2.0 * prop * prop)
        accept = log(rng.random()) < prop_ll - cur_ll
        if accept:
            sigma0 = prop
        rw_sigma0.register(accept)

        if sweep >= mcmc.burnin and (sweep - mcmc.burnin) % mcmc.thin == 0:
            order = state.canonical_param_order()
            partitions.append(state.partition())
            mu_star_draws.append(mu_arr[order].copy())
            beta_draws[t_out] = beta
            sigma_draws[t_out] = sigma
            mu0_draws[t_out] = mu0
            sigma0_draws[t_out] = sigma0
            mean_i = mu_arr[labels_arr] + xb
            loglik[t_out] = (
                -0.5 * _LOG_2PI
                - log(sigma)
                - 0.5 * ((y - mean_i) / sigma) ** 2
            )
            t_out += 1

    params = {
        "mu_star": mu_star_draws,
        "beta": beta_draws,
        "sigma": sigma_draws,
        "mu0": mu0_draws,
        "sigma0": sigma0_draws,
    }
    diagnostics = {
        "accept_sigma": rw_sigma.post_burnin_rate,
        "accept_sigma0": rw_sigma0.post_burnin_rate,
    }
    return PosteriorSamples(
        model="cps",
        partitions=partitions,
        params=params,
        loglik=loglik,
        diagnostics=diagnostics,
        data=data,
        spec=spec,
    )


def predict_cps(
    samples: PosteriorSamples,
    new_loc,
    new_x: Optional[np.ndarray] = None,
    rng=None,
):
    """Posterior predictive mean and central 90% interval at new sites.

    Per draw, each site is allocated to an existing cluster with weight
    ``C(S_h + {s0}) / C(S_h)`` or to a fresh cluster with weight ``C({s0})``
    (new-cluster intercepts drawn from their prior), then a response is drawn
    from the likelihood. Site means average the conditional means; interval
    endpoints are the 5% and 95% empirical quantiles of the response draws.

    Returns
    -------
    dict with keys ``mean``, ``lo90``, ``hi90`` (each (m,) arrays) and
    ``draws`` ((T, m) response draws).
    """
    if samples.model != "cps":
        raise ValueError("samples are not from a CPS fit")
    rng = np.random.default_rng(0) if rng is None else rng
    coords = np.atleast_2d(np.asarray(new_loc.coords if isinstance(new_loc, LocationSet) else new_loc, dtype=float))
    m = coords.shape[0]
    spec = samples.spec
    data = samples.data
    if data.x is not None:
        if new_x is None:
            raise ValueError("training data had covariates; new_x is required")
        new_x = np.atleast_2d(np.asarray(new_x, dtype=float))
        if new_x.shape[0] == 1 and m > 1:
            new_x = new_x.T
        if new_x.shape[0] != m:
            raise ValueError("new_x rows must match new sites")
    ev = CohesionEvaluator(data.loc, spec.cohesion)

    T = samples.n_draws
    mean_acc = np.zeros(m)
    draws = np.empty((T, m))
    for t in range(T):
        part = samples.partitions[t]
        mu_star = samples.params["mu_star"][t]
        beta = samples.params["beta"][t]
        sigma = samples.params["sigma"][t]
        mu0 = samples.params["mu0"][t]
        sigma0 = samples.params["sigma0"][t]
        stats = [ev.stats_for(members) for members in part.clusters.values()]
        unif = rng.random(m)
        z_mu = rng.standard_normal(m)
        z_y = rng.standard_normal(m)
        for s in range(m):
            x0, y0 = coords[s]
            logw = [ev.log_add_ratio_xy(st, x0, y0) for st in stats]
            logw.append(ev.log_singleton_xy(x0, y0))
            choice = categorical_from_log_weights(logw, unif[s])
            if choice < len(stats):
                mu = mu_star[choice]
            else:
                mu = mu0 + sigma0 * z_mu[s]
            mean = mu + (float(new_x[s] @ beta) if data.x is not None else 0.0)
            mean_acc[s] += mean
            draws[t, s] = mean + sigma * z_y[s]
    lo, hi = np.quantile(draws, [0.05, 0.95], axis=0)
    return {
        "mean": mean_acc / T,
        "lo90": lo,
        "hi90": hi,
        "draws": draws,
    }
