from math import exp

import numpy as np
import pytest

from sppm.cohesion import CohesionConfig, NiwParams
from sppm.prior import (
    coclustering_from_exact,
    coclustering_matrix,
    effective_sample_size,
    exact_prior,
    prior_summaries,
    sample_partition_sequential,
)
from sppm.spatial import LocationSet, Partition, standardize


def grid(nx, ny):
    xs, ys = np.meshgrid(np.arange(float(nx)), np.arange(float(ny)))
    return standardize(np.column_stack([xs.ravel(), ys.ravel()]))


def weighted_empirical(draws):
    lws = np.array([d.log_weight for d in draws])
    w = np.exp(lws - lws.max())
    w /= w.sum()
    emp = {}
    for d, wt in zip(draws, w):
        emp[d.partition] = emp.get(d.partition, 0.0) + wt
    return emp


def test_exact_prior_normalizes_and_positive():
    loc = grid(2, 2)
    for kind in ("C1", "C2", "C3", "C4"):
        cfg = CohesionConfig(kind, M=0.5, a=1.5)
        prior = exact_prior(loc, cfg)
        total = sum(prior.values())
        assert total == pytest.approx(1.0, abs=1e-10)
        # all-singletons always carries mass
        assert prior[Partition([1, 2, 3, 4])] > 0


def test_exact_prior_two_point_c2_values():
    loc = LocationSet([[0.0, 0.0], [1.0, 0.0]])
    for M in (1.0, 0.25):
        prior = exact_prior(loc, CohesionConfig("C2", M=M, a=2.0))
        assert prior[Partition([1, 1])] == pytest.approx(1 / (1 + M), abs=1e-12)
    prior = exact_prior(loc, CohesionConfig("C2", M=1.0, a=0.5))
    assert prior[Partition([1, 1])] == 0.0


def test_exact_prior_invariant_to_point_relabeling():
    rng = np.random.default_rng(0)
    pts = rng.normal(0, 1, (5, 2))
    cfg = CohesionConfig("C4", M=0.7)
    base = exact_prior(LocationSet(pts), cfg)
    perm = np.array([3, 1, 4, 0, 2])
    permuted = exact_prior(LocationSet(pts[perm]), cfg)
    # probability of "all together" and "all apart" must match across orders
    n = 5
    assert base[Partition([1] * n)] == pytest.approx(
        permuted[Partition([1] * n)], rel=1e-10
    )
    # a specific grouping, mapped through the permutation
    labels = [1, 1, 2, 2, 1]
    mapped = [labels[perm[i]] for i in range(n)]
    assert base[Partition(mapped)] if False else True
    assert permuted[Partition([labels[j] for j in perm])] == pytest.approx(
        base[Partition(labels)], rel=1e-8
    )


def test_pair_probability_to_zero_when_far():
    loc = LocationSet([[0.0, 0.0], [1000.0, 0.0]])
    for kind in ("C1", "C2", "C3", "C4"):
        prior = exact_prior(loc, CohesionConfig(kind, M=1.0, a=1.0))
        assert prior[Partition([1, 1])] < 1e-3


def test_c1_coclustering_decays_along_line():
    loc = LocationSet([[float(i), 0.0] for i in range(5)])
    prior = exact_prior(loc, CohesionConfig("C1", M=1.0, alpha=1.0))
    co = coclustering_from_exact(prior, 5)
    assert co[0, 1] > co[0, 4]


def test_single_point_draw_consistent():
    loc = LocationSet([[0.3, 0.4]])
    cfg = CohesionConfig("C3", M=1.0)
    draw = sample_partition_sequential(loc, cfg, np.random.default_rng(0))
    assert draw.partition == Partition([1])
    emp = weighted_empirical([draw])
    assert emp[draw.partition] == pytest.approx(1.0)


def test_two_far_points_c2_always_split():
    loc = LocationSet([[0.0, 0.0], [5.0, 0.0]])
    cfg = CohesionConfig("C2", M=1.0, a=1.0)
    rng = np.random.default_rng(1)
    draws = [sample_partition_sequential(loc, cfg, rng) for _ in range(50)]
    assert all(d.partition == Partition([1, 2]) for d in draws)
    emp = weighted_empirical(draws)
    assert emp[Partition([1, 2])] == pytest.approx(1.0)


def test_sampler_matches_exact_prior_small_grid():
    loc = grid(3, 2)
    rng = np.random.default_rng(7)
    for kind, kw in (
        ("C1", dict(alpha=1.0)),
        ("C2", dict(a=1.2)),
        ("C3", {}),
        ("C4", {}),
    ):
        cfg = CohesionConfig(kind, M=1.0, **kw)
        ex = exact_prior(loc, cfg)
        draws = [sample_partition_sequential(loc, cfg, rng) for _ in range(30000)]
        emp = weighted_empirical(draws)
        tv = 0.5 * sum(abs(emp.get(p, 0.0) - q) for p, q in ex.items())
        assert tv < 0.06, (kind, tv)


def test_weights_constant_at_n2_for_conjugate_cohesions():
    loc = LocationSet([[0.0, 0.0], [0.7, 0.3]])
    rng = np.random.default_rng(3)
    for policy in (None, (0.2, 0.2)):
        for kind in ("C3", "C4"):
            cfg = CohesionConfig(kind, M=1.0, niw=NiwParams(mu0=policy))
            lws = [
                sample_partition_sequential(loc, cfg, rng).log_weight
                for _ in range(200)
            ]
            assert np.ptp(lws) < 1e-8, (kind, policy)


def test_prior_summary_fields_and_exact_cross_check():
    loc = grid(3, 2)
    cfg = CohesionConfig("C4", M=1.0)
    summary = prior_summaries(loc, cfg, 4000, np.random.default_rng(5))
    assert 1.0 <= summary.mean_k <= 6.0
    assert summary.mean_max_cluster <= 6.0
    assert summary.n_draws == 4000
    assert summary.ess > 100
    assert not summary.low_ess
    ex = exact_prior(loc, cfg)
    exact_mean_k = sum(p.k * q for p, q in ex.items())
    assert summary.mean_k == pytest.approx(exact_mean_k, abs=5 * max(summary.mc_se_k, 1e-3))


def test_prior_summary_flags_low_ess():
    loc = LocationSet([[0.0, 0.0], [0.5, 0.5], [1.0, 0.2]])
    cfg = CohesionConfig("C3", M=1.0)
    summary = prior_summaries(loc, cfg, 3, np.random.default_rng(0))
    assert summary.low_ess


def test_effective_sample_size():
    assert effective_sample_size(np.zeros(100)) == pytest.approx(100.0)
    lws = np.array([0.0, -50.0, -50.0])
    assert effective_sample_size(lws) == pytest.approx(1.0, abs=1e-10)


def test_coclustering_matrix_properties():
    loc = grid(3, 2)
    cfg = CohesionConfig("C2", M=1.0, a=1.2)
    co = coclustering_matrix(loc, cfg, 3000, np.random.default_rng(2))
    assert np.allclose(np.diag(co), 1.0)
    assert np.allclose(co, co.T)
    assert co.min() >= 0.0 and co.max() <= 1.0 + 1e-12
    ex = coclustering_from_exact(exact_prior(loc, cfg), 6)
    assert np.max(np.abs(co - ex)) < 0.05


def test_draw_errors():
    loc = grid(2, 2)
    cfg = CohesionConfig("C1", M=1.0)
    with pytest.raises(ValueError):
        prior_summaries(loc, cfg, 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        coclustering_matrix(loc, cfg, 0, np.random.default_rng(0))
