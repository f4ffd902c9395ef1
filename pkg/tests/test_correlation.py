from math import exp

import numpy as np
import pytest

from oracles import mc_corr_global_gp, mc_corr_local_gp, mc_corr_local_regression
from sppm.cohesion import CohesionConfig
from sppm.correlation import (
    corr_prop1,
    corr_prop2,
    corr_prop3,
    effective_range,
    exp_cov,
    moments_global_reg_local_gp,
    moments_local_reg_global_gp,
    moments_local_regression,
    phi_for_effective_range,
)
from sppm.prior import exact_prior
from sppm.spatial import LocationSet, Partition

ONE = np.ones(1)


def T1(tau2):
    return np.array([[tau2]])


def test_exp_cov_values():
    assert exp_cov(0.0, 1.7, 2.0) == pytest.approx(1.7)
    # effective-range convention: corr drops to e^-3 at 3/phi
    assert exp_cov(0.1, 1.0, 30.0) == pytest.approx(exp(-3.0))
    assert exp_cov(6.0, 2.0, 0.5) == pytest.approx(2.0 * exp(-3.0))
    assert effective_range(0.5) == pytest.approx(6.0)
    assert phi_for_effective_range(6.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        exp_cov(-0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        exp_cov(1.0, 1.0, 0.0)


def test_prop1_intercept_only_values():
    # the ceiling with tau2=1, sigma2=0.1 is 1/1.1
    assert corr_prop1(ONE, ONE, T1(1.0), 0.1, 1.0) == pytest.approx(1.0 / 1.1, abs=1e-15)
    assert corr_prop1(ONE, ONE, T1(1.0), 0.1, 0.0) == 0.0
    assert corr_prop1(ONE, ONE, T1(2.0), 0.4, 0.5) == pytest.approx(
        2.0 / (2.0 + 0.4) * 0.5, abs=1e-15
    )


def test_prop1_validation():
    with pytest.raises(ValueError):
        corr_prop1(ONE, ONE, np.array([[-1.0]]), 0.1, 0.5)
    with pytest.raises(ValueError):
        corr_prop1(ONE, ONE, T1(1.0), 0.1, 1.5)
    bad_T = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        corr_prop1(np.ones(2), np.ones(2), bad_T, 0.1, 0.5)


def test_prop1_matches_simulation():
    rng = np.random.default_rng(11)
    T = np.array([[1.0, 0.3], [0.3, 0.8]])
    x_i = np.array([1.0, 0.7])
    x_j = np.array([1.0, -0.4])
    mu = np.array([0.5, -1.0])
    got = corr_prop1(x_i, x_j, T, 0.5, 0.4)
    sim = mc_corr_local_regression(x_i, x_j, T, mu, 0.5, 0.4, 300_000, rng)
    assert got == pytest.approx(sim, abs=0.012)


def test_prop2_reductions_and_limits():
    # lambda2 = 0 collapses to the prior-only formula
    assert corr_prop2(ONE, ONE, T1(1.0), 0.1, 0.0, 0.9, 0.7) == pytest.approx(
        corr_prop1(ONE, ONE, T1(1.0), 0.1, 0.7), abs=1e-15
    )
    # intercept-only split into GP and clustering shares
    tau2, lam2, s2, h, p = 1.0, 0.6, 0.1, 0.35, 0.4
    expect = lam2 * h / (tau2 + lam2 + s2) + tau2 * p / (tau2 + lam2 + s2)
    assert corr_prop2(ONE, ONE, T1(tau2), s2, lam2, h, p) == pytest.approx(expect, abs=1e-15)
    # p_same = 0, intercept-only
    assert corr_prop2(ONE, ONE, T1(tau2), s2, lam2, h, 0.0) == pytest.approx(
        lam2 * h / (tau2 + lam2 + s2), abs=1e-15
    )
    # coincident limit: H -> 1
    expect = (lam2 + tau2 * p) / (lam2 + tau2 + s2)
    assert corr_prop2(ONE, ONE, T1(tau2), s2, lam2, 1.0, p) == pytest.approx(expect, abs=1e-15)
    with pytest.raises(ValueError):
        corr_prop2(ONE, ONE, T1(1.0), 0.1, 0.5, 1.2, 0.5)


def test_prop2_matches_simulation():
    rng = np.random.default_rng(12)
    T = np.array([[0.9]])
    got = corr_prop2(ONE, ONE, T, 0.3, 0.7, 0.5, 0.6)
    sim = mc_corr_global_gp(ONE, ONE, T, np.array([0.2]), 0.3, 0.7, 0.5, 0.6, 300_000, rng)
    assert got == pytest.approx(sim, abs=0.012)


def test_prop3_degeneracies():
    # single cluster, certainly together: equals the global-GP formula at p_same=1
    gps = {1: (0.8, 0.45)}
    got = corr_prop3(ONE, ONE, T1(1.0), 0.1, gps, {1: 1.0}, {1: 1.0}, {1: 1.0})
    expect = corr_prop2(ONE, ONE, T1(1.0), 0.1, 0.8, 0.45, 1.0)
    assert got == pytest.approx(expect, abs=1e-15)
    # all sills zero: clustering alone, with p_same = total joint probability
    gps = {1: (0.0, 0.2), 2: (0.0, 0.9)}
    got = corr_prop3(
        ONE, ONE, T1(1.0), 0.1, gps, {1: 0.3, 2: 0.2}, {1: 0.6, 2: 0.4}, {1: 0.5, 2: 0.5}
    )
    # with a global coefficient the x'Tx term is certain, not partition-weighted
    assert got == pytest.approx(1.0 / 1.1, abs=1e-15)


def test_prop3_validation():
    gps = {1: (0.5, 0.5)}
    with pytest.raises(ValueError, match="sum to 1"):
        corr_prop3(ONE, ONE, T1(1.0), 0.1, gps, {1: 0.5}, {1: 0.7}, {1: 1.0})
    with pytest.raises(ValueError, match="p_joint"):
        corr_prop3(ONE, ONE, T1(1.0), 0.1, gps, {1: 0.9}, {1: 0.5, 2: 0.5}, {1: 1.0})


def test_prop3_matches_simulation_with_exact_prior_probs():
    # two sites, cluster probabilities straight from the partition prior
    loc = LocationSet([[0.0, 0.0], [0.6, 0.0]])
    prior = exact_prior(loc, CohesionConfig("C4", M=1.0))
    p_together = prior[Partition([1, 1])]
    sills = (0.9, 0.4)
    h_pair = 0.55
    gps = {1: (sills[0], h_pair), 2: (sills[1], 0.0)}
    p_joint = {1: p_together, 2: 0.0}
    p_i = {1: 1.0, 2: 0.0}
    p_j = {1: p_together, 2: 1.0 - p_together}
    got = corr_prop3(ONE, ONE, T1(0.7), 0.2, gps, p_joint, p_i, p_j)
    sim = mc_corr_local_gp(
        ONE, ONE, T1(0.7), np.array([0.4]), 0.2, sills, h_pair, p_together,
        400_000, np.random.default_rng(21),
    )
    assert got == pytest.approx(sim, abs=0.012)


def test_corr_is_moment_ratio():
    # the public correlations must equal the exposed moment decompositions
    x_i = np.array([1.0, 0.5])
    x_j = np.array([1.0, -1.0])
    T = np.array([[1.0, 0.2], [0.2, 0.5]])
    cov, vi, vj = moments_local_regression(x_i, x_j, T, 0.3, 0.6)
    assert corr_prop1(x_i, x_j, T, 0.3, 0.6) == pytest.approx(cov / np.sqrt(vi * vj))
    cov, vi, vj = moments_local_reg_global_gp(x_i, x_j, T, 0.3, 0.5, 0.4, 0.6)
    assert corr_prop2(x_i, x_j, T, 0.3, 0.5, 0.4, 0.6) == pytest.approx(
        cov / np.sqrt(vi * vj)
    )
    gps = {1: (0.5, 0.3), 2: (0.2, 0.1)}
    pj = {1: 0.2, 2: 0.1}
    pi = {1: 0.5, 2: 0.5}
    pjj = {1: 0.4, 2: 0.6}
    cov, vi, vj = moments_global_reg_local_gp(x_i, x_j, T, 0.3, gps, pj, pi, pjj)
    assert corr_prop3(x_i, x_j, T, 0.3, gps, pj, pi, pjj) == pytest.approx(
        cov / np.sqrt(vi * vj)
    )


def test_correlations_bounded():
    rng = np.random.default_rng(4)
    for _ in range(50):
        tau2 = rng.uniform(0.1, 3)
        s2 = rng.uniform(0.05, 2)
        p = rng.uniform(0, 1)
        assert abs(corr_prop1(ONE, ONE, T1(tau2), s2, p)) <= 1.0
        lam2 = rng.uniform(0, 2)
        h = rng.uniform(-1, 1)
        assert abs(corr_prop2(ONE, ONE, T1(tau2), s2, lam2, h, p)) <= 1.0
    # self-correlation at coincident settings
    assert corr_prop1(ONE, ONE, T1(1.0), 1e-12, 1.0) == pytest.approx(1.0, abs=1e-9)
