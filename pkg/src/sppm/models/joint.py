"""Joint bivariate models: spatial structure in the prior (JPS) or also in
the likelihood via coregionalized Gaussian-process intercepts (JLS).

JLS latent structure: two independent unit-mean-zero GP fields with
exponential kernels are mixed through A = [[1, gamma], [gamma, 1]], giving
each response coordinate its own spatial intercept while sharing dependence.
Conditional prediction of y1 given y2 at a new site uses the bivariate normal
regression ``y1 | y2 ~ N(b0 + b1 y2, s1^2 (1 - eta^2))`` with
``b1 = eta s1 / s2``.
"""

from __future__ import annotations

from math import log, pi, sqrt
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.stats import invwishart

from ..cohesion import CohesionEvaluator
from ..spatial import LocationSet
from .base import (
    Dataset,
    JointSpec,
    McmcConfig,
    PartitionState,
    PosteriorSamples,
    ReflectedWalk,
    categorical_from_log_weights,
    initial_labels,
)

__all__ = ["fit_joint", "predict_joint"]

_LOG_2PI = log(2.0 * pi)
_JITTER = 1e-8


def _inv2(S):
    det = S[0, 0] * S[1, 1] - S[0, 1] ** 2
    if det <= 0:
        raise RuntimeError("2x2 covariance is not positive definite")
    return np.array([[S[1, 1], -S[0, 1]], [-S[0, 1], S[0, 0]]]) / det, det


def _draw_mvn2(mean, cov, rng):
    a = sqrt(cov[0, 0])
    b = cov[0, 1] / a
    c2 = cov[1, 1] - b * b
    if c2 <= 0:
        raise RuntimeError("2x2 covariance is not positive definite")
    z1, z2 = rng.standard_normal(2)
    return np.array([mean[0] + a * z1, mean[1] + b * z1 + sqrt(c2) * z2])


def _corr_chol(dist, phi):
    K = np.exp(-phi * dist)
    K[np.diag_indices_from(K)] += _JITTER
    try:
        return K, np.linalg.cholesky(K)
    except np.linalg.LinAlgError as err:
        raise RuntimeError("GP correlation factorization failed") from err


def _quad_solve(chol, v):
    w = solve_triangular(chol, v, lower=True)
    return float(w @ w)


def fit_joint(
    data: Dataset, spec: JointSpec, mcmc: McmcConfig, prior_only: bool = False
) -> PosteriorSamples:
    """Posterior (or prior, with ``prior_only``) draws for JPS/JLS."""
    if not data.bivariate:
        raise ValueError("joint models need a bivariate response")
    rng = np.random.default_rng(mcmc.seed)
    n = data.n
    Y = data.y
    jls = spec.mode == "jls"

    ev = CohesionEvaluator(data.loc, spec.cohesion)
    labels0 = initial_labels(data.loc, mcmc.init, rng)
    k0 = max(labels0) + 1
    state = PartitionState(ev, labels0, [np.zeros(2) for _ in range(k0)])

    Sigma = np.eye(2)
    Tmat = np.eye(2)
    mu0 = np.zeros(2)
    eye2 = np.eye(2)

    # JLS latent fields
    theta_tilde = np.zeros((2, n))
    tau2 = np.array([1.0, 1.0])
    phi = np.array(
        [0.5 * (spec.phi_lo + spec.phi_hi), 0.5 * (spec.phi_lo + spec.phi_hi)]
    )
    gamma = 0.5 if spec.gamma_fixed is None else float(spec.gamma_fixed)
    if spec.tau2_fixed is not None:
        tau2 = np.asarray(spec.tau2_fixed, dtype=float).copy()
    if spec.phi_fixed is not None:
        phi = np.asarray(spec.phi_fixed, dtype=float).copy()
    if jls:
        Ks = [None, None]
        chols = [None, None]
        for j in (0, 1):
            Ks[j], chols[j] = _corr_chol(data.loc.dist, phi[j])

    scales = mcmc.rw_scales or {}
    rw_tau = [
        ReflectedWalk(-30.0, 30.0, scales.get("log_tau2", 0.6)) for _ in (0, 1)
    ]
    rw_phi = [
        ReflectedWalk(spec.phi_lo, spec.phi_hi, scales.get("phi")) for _ in (0, 1)
    ]
    rw_gamma = ReflectedWalk(0.0, 1.0, scales.get("gamma"))

    def mixing():
        return np.array([[1.0, gamma], [gamma, 1.0]])

    T_draws = mcmc.n_draws
    partitions = []
    mu_star_draws = []
    Sigma_draws = np.empty((T_draws, 2, 2))
    T_mat_draws = np.empty((T_draws, 2, 2))
    mu0_draws = np.empty((T_draws, 2))
    theta_draws = np.empty((T_draws, 2, n)) if jls else None
    tau2_draws = np.empty((T_draws, 2)) if jls else None
    phi_draws = np.empty((T_draws, 2)) if jls else None
    gamma_draws = np.empty(T_draws) if jls else None
    loglik = np.empty((T_draws, n))
    t_out = 0

    for sweep in range(mcmc.n_iter):
        if sweep == mcmc.burnin:
            for rw in (*rw_tau, *rw_phi, rw_gamma):
                rw.freeze()

        A = mixing()
        theta_mix = (A @ theta_tilde).T if jls else np.zeros((n, 2))
        R = Y - theta_mix  # residuals handed to the clustered-mean layer
        Sinv, _ = _inv2(Sigma)
        ia, ib, ic = Sinv[0, 0], Sinv[0, 1], Sinv[1, 1]

        # cluster labels
        if prior_only:
            loglik_fn = None
        else:

            def loglik_fn(i, mu, _R=R, _ia=ia, _ib=ib, _ic=ic):
                dx = _R[i, 0] - mu[0]
                dy = _R[i, 1] - mu[1]
                return -0.5 * (_ia * dx * dx + 2.0 * _ib * dx * dy + _ic * dy * dy)

        chol_T = np.linalg.cholesky(Tmat)

        def draw_param(rg, _m=mu0, _L=chol_T):
            return _m + _L @ rg.standard_normal(2)

        state.gibbs_sweep(rng, loglik_fn, draw_param, mcmc.neal_m)
        labels_arr = np.asarray(state.labels)
        k = state.k

        # cluster means mu*_h (conjugate bivariate normal)
        Tinv, _ = _inv2(Tmat)
        new_params = []
        if prior_only:
            for _ in range(k):
                new_params.append(_draw_mvn2(mu0, Tmat, rng))
        else:
            rhs0 = Tinv @ mu0
            for h in range(k):
                members = labels_arr == h
                nh = int(members.sum())
                prec = Tinv + nh * Sinv
                rhs = rhs0 + Sinv @ R[members].sum(axis=0)
                cov = np.linalg.inv(prec)
                new_params.append(_draw_mvn2(cov @ rhs, cov, rng))
        state.params = new_params
        mu_arr = np.asarray(new_params)

        # mu0 (conjugate)
        prec0 = eye2 / spec.mu0_sd ** 2 + k * Tinv
        cov0 = np.linalg.inv(prec0)
        mu0 = _draw_mvn2(cov0 @ (Tinv @ mu_arr.sum(axis=0)), cov0, rng)

        # T (inverse-Wishart, conjugate against the mu* layer)
        dev = mu_arr - mu0
        Tmat = invwishart.rvs(
            df=spec.iw_df + k, scale=eye2 + dev.T @ dev, random_state=rng
        )

        # Sigma (inverse-Wishart against the observation residuals)
        if prior_only:
            Sigma = invwishart.rvs(df=spec.iw_df, scale=eye2, random_state=rng)
        else:
            E = R - mu_arr[labels_arr]
            Sigma = invwishart.rvs(
                df=spec.iw_df + n, scale=eye2 + E.T @ E, random_state=rng
            )

        if jls:
            Sinv, _ = _inv2(Sigma)
            A = mixing()
            resid_mu = Y - mu_arr[labels_arr]  # what the GP layer must explain
            if prior_only:
                if spec.tau2_fixed is None:
                    tau2 = rng.gamma(spec.tau2_shape, 1.0 / spec.tau2_rate, 2)
                if spec.phi_fixed is None:
                    phi = rng.uniform(spec.phi_lo, spec.phi_hi, 2)
                    for j in (0, 1):
                        Ks[j], chols[j] = _corr_chol(data.loc.dist, phi[j])
                if spec.gamma_fixed is None:
                    gamma = rng.uniform(0.0, 1.0)
                for j in (0, 1):
                    theta_tilde[j] = sqrt(tau2[j]) * (
                        chols[j] @ rng.standard_normal(n)
                    )
            else:
                # latent fields, one at a time given the other
                for j in (0, 1):
                    other = 1 - j
                    aj = A[:, j]
                    pj = float(aj @ Sinv @ aj)
                    Ej = resid_mu - np.outer(theta_tilde[other], A[:, other])
                    b = Ej @ (Sinv @ aj)
                    Kinv_j = cho_solve((chols[j], True), np.eye(n))
                    Q = Kinv_j / tau2[j] + pj * np.eye(n)
                    Lq = np.linalg.cholesky(Q)
                    half = solve_triangular(Lq, b, lower=True)
                    mean = solve_triangular(Lq.T, half, lower=False)
                    theta_tilde[j] = mean + solve_triangular(
                        Lq.T, rng.standard_normal(n), lower=False
                    )

                # GP sills (log-scale walk, Gamma prior) and decays (reflected)
                for j in (0, 1):
                    qform = _quad_solve(chols[j], theta_tilde[j])
                    if spec.tau2_fixed is None:
                        cur = tau2[j]
                        lp = rw_tau[j].propose(log(cur), rng)
                        prop = np.exp(lp)
                        cur_post = (
                            -0.5 * n * log(cur)
                            - qform / (2.0 * cur)
                            + spec.tau2_shape * log(cur)
                            - spec.tau2_rate * cur
                        )
                        prop_post = (
                            -0.5 * n * log(prop)
                            - qform / (2.0 * prop)
                            + spec.tau2_shape * log(prop)
                            - spec.tau2_rate * prop
                        )
                        accept = log(rng.random()) < prop_post - cur_post
                        if accept:
                            tau2[j] = prop
                        rw_tau[j].register(accept)
                    if spec.phi_fixed is None:
                        prop = rw_phi[j].propose(phi[j], rng)
                        K_prop, chol_prop = _corr_chol(data.loc.dist, prop)
                        q_prop = _quad_solve(chol_prop, theta_tilde[j])
                        cur_ll = -np.log(np.diag(chols[j])).sum() - qform / (
                            2.0 * tau2[j]
                        )
                        prop_ll = -np.log(np.diag(chol_prop)).sum() - q_prop / (
                            2.0 * tau2[j]
                        )
                        accept = log(rng.random()) < prop_ll - cur_ll
                        if accept:
                            phi[j] = prop
                            Ks[j], chols[j] = K_prop, chol_prop
                        rw_phi[j].register(accept)

                if spec.gamma_fixed is None:
                    prop = rw_gamma.propose(gamma, rng)
                    A_prop = np.array([[1.0, prop], [prop, 1.0]])
                    E_cur = resid_mu - theta_tilde.T @ A.T
                    E_prop = resid_mu - theta_tilde.T @ A_prop.T
                    cur_ll = -0.5 * float(((E_cur @ Sinv) * E_cur).sum())
                    prop_ll = -0.5 * float(((E_prop @ Sinv) * E_prop).sum())
                    accept = log(rng.random()) < prop_ll - cur_ll
                    if accept:
                        gamma = prop
                    rw_gamma.register(accept)

        if sweep >= mcmc.burnin and (sweep - mcmc.burnin) % mcmc.thin == 0:
            order = state.canonical_param_order()
            partitions.append(state.partition())
            mu_star_draws.append(mu_arr[order].copy())
            Sigma_draws[t_out] = Sigma
            T_mat_draws[t_out] = Tmat
            mu0_draws[t_out] = mu0
            if jls:
                theta_draws[t_out] = theta_tilde
                tau2_draws[t_out] = tau2
                phi_draws[t_out] = phi
                gamma_draws[t_out] = gamma
                theta_mix = (mixing() @ theta_tilde).T
            else:
                theta_mix = np.zeros((n, 2))
            E = Y - mu_arr[labels_arr] - theta_mix
            Sinv, det = _inv2(Sigma)
            quad = ((E @ Sinv) * E).sum(axis=1)
            loglik[t_out] = -_LOG_2PI - 0.5 * log(det) - 0.5 * quad
            t_out += 1

    params = {
        "mu_star": mu_star_draws,
        "Sigma": Sigma_draws,
        "Tmat": T_mat_draws,
        "mu0": mu0_draws,
    }
    diagnostics = {}
    if jls:
        params.update(
            theta_tilde=theta_draws, tau2=tau2_draws, phi=phi_draws, gamma=gamma_draws
        )
        diagnostics = {
            "accept_log_tau2_1": rw_tau[0].post_burnin_rate,
            "accept_log_tau2_2": rw_tau[1].post_burnin_rate,
            "accept_phi_1": rw_phi[0].post_burnin_rate,
            "accept_phi_2": rw_phi[1].post_burnin_rate,
            "accept_gamma": rw_gamma.post_burnin_rate,
        }
    return PosteriorSamples(
        model=spec.mode,
        partitions=partitions,
        params=params,
        loglik=loglik,
        diagnostics=diagnostics,
        data=data,
        spec=spec,
    )


def predict_joint(
    samples: PosteriorSamples,
    new_loc,
    observed_y2: Optional[np.ndarray] = None,
    rng=None,
):
    """Predict the first response coordinate at new sites.

    When ``observed_y2`` is given, prediction conditions on it through the
    bivariate-normal regression; otherwise y2 is drawn from its own
    predictive first. JLS draws the latent fields at the new sites from their
    GP conditionals and mixes them; JPS has no likelihood spatial term.

    Returns a dict with ``mean``, ``lo90``, ``hi90``, ``draws`` as in
    :func:`sppm.models.cps.predict_cps`.
    """
    if samples.model not in ("jps", "jls"):
        raise ValueError("samples are not from a joint fit")
    rng = np.random.default_rng(0) if rng is None else rng
    coords = np.atleast_2d(np.asarray(new_loc.coords if isinstance(new_loc, LocationSet) else new_loc, dtype=float))
    m = coords.shape[0]
    jls = samples.model == "jls"
    data = samples.data
    spec = samples.spec
    if observed_y2 is not None:
        observed_y2 = np.asarray(observed_y2, dtype=float)
        if observed_y2.shape != (m,):
            raise ValueError("observed_y2 must have one value per new site")
    ev = CohesionEvaluator(data.loc, spec.cohesion)
    if jls:
        cross = np.sqrt(
            ((data.loc.coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
        )  # (n, m)

    T = samples.n_draws
    mean_acc = np.zeros(m)
    draws = np.empty((T, m))
    for t in range(T):
        part = samples.partitions[t]
        mu_star = samples.params["mu_star"][t]
        Sigma = samples.params["Sigma"][t]
        Tmat = samples.params["Tmat"][t]
        mu0 = samples.params["mu0"][t]
        s1 = sqrt(Sigma[0, 0])
        s2 = sqrt(Sigma[1, 1])
        eta = Sigma[0, 1] / (s1 * s2)
        beta1 = eta * s1 / s2
        cond_sd = s1 * sqrt(max(1.0 - eta * eta, 1e-12))

        if jls:
            gamma = float(samples.params["gamma"][t])
            A = np.array([[1.0, gamma], [gamma, 1.0]])
            theta_new = np.empty((2, m))
            for j in (0, 1):
                phi_j = float(samples.params["phi"][t, j])
                tau2_j = float(samples.params["tau2"][t, j])
                field = samples.params["theta_tilde"][t, j]
                _, chol = _corr_chol(data.loc.dist, phi_j)
                alpha = cho_solve((chol, True), field)
                K0 = np.exp(-phi_j * cross)  # (n, m)
                cond_mean = K0.T @ alpha
                V = solve_triangular(chol, K0, lower=True)
                cond_var = np.maximum(1.0 + _JITTER - (V * V).sum(axis=0), 0.0)
                theta_new[j] = cond_mean + np.sqrt(tau2_j * cond_var) * (
                    rng.standard_normal(m)
                )
            theta_mix = A @ theta_new  # (2, m)
        else:
            theta_mix = np.zeros((2, m))

        stats = [ev.stats_for(members) for members in part.clusters.values()]
        unif = rng.random(m)
        z_y2 = rng.standard_normal(m)
        z_y1 = rng.standard_normal(m)
        for s in range(m):
            x0, y0 = coords[s]
            logw = [ev.log_add_ratio_xy(st, x0, y0) for st in stats]
            logw.append(ev.log_singleton_xy(x0, y0))
            choice = categorical_from_log_weights(logw, unif[s])
            if choice < len(stats):
                mu = mu_star[choice]
            else:
                mu = _draw_mvn2(mu0, Tmat, rng)
            m1 = mu[0] + theta_mix[0, s]
            m2 = mu[1] + theta_mix[1, s]
            if observed_y2 is not None:
                y2_val = observed_y2[s]
            else:
                y2_val = m2 + s2 * z_y2[s]
            cond_mean = m1 + beta1 * (y2_val - m2)
            mean_acc[s] += cond_mean
            draws[t, s] = cond_mean + cond_sd * z_y1[s]
    lo, hi = np.quantile(draws, [0.05, 0.95], axis=0)
    return {
        "mean": mean_acc / T,
        "lo90": lo,
        "hi90": hi,
        "draws": draws,
    }
