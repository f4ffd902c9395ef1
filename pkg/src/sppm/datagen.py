"""Synthetic data generation for the simulation studies and demo fields.

The generative mechanism is ``y(s) = mu*_{c(s)} + x(s) beta + theta(s) +
eps(s)`` with a shared exponential-kernel Gaussian process theta (partial
sill 2, effective range 6) and either Gaussian or two-component mixture
noise. Locations come from a uniform square with quadrant clusters, or from
a four-component Gaussian mixture with component labels as the truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .correlation import phi_for_effective_range
from .models.base import Dataset
from .spatial import LocationSet, Partition

__all__ = [
    "SimScenario",
    "SimTruth",
    "gen_locations",
    "gen_gp_field",
    "gen_dataset",
    "gen_fig1_fields",
]

MIXTURE_MEANS = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])
MIXTURE_SD = 0.22


@dataclass(frozen=True)
class SimScenario:
    """One cell of the simulation design."""

    n_train: int = 100
    n_test: int = 100
    n_clusters: int = 4
    layout: str = "square"
    error: str = "gaussian"
    gp_tau2: float = 2.0
    gp_effective_range: float = 6.0
    mu_star: tuple = (0.0, 1.0, -1.0, -2.0)
    beta: float = 1.0
    sigma2: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_train <= 0 or self.n_test < 0:
            raise ValueError("sizes must be positive")
        if self.n_clusters not in (1, 4):
            raise ValueError("n_clusters must be 1 or 4")
        if self.layout not in ("square", "mixture"):
            raise ValueError("layout must be 'square' or 'mixture'")
        if self.error not in ("gaussian", "mixture"):
            raise ValueError("error must be 'gaussian' or 'mixture'")


@dataclass(frozen=True)
class SimTruth:
    """Everything the generator knows that a fit must recover."""

    partition_train: Partition
    partition_test: Partition
    mu_star: tuple
    beta: float
    sigma2: float
    theta_train: np.ndarray
    theta_test: np.ndarray
    x_train: Optional[np.ndarray]
    x_test: Optional[np.ndarray]


def gen_locations(layout: str, n: int, rng) -> Tuple[LocationSet, Partition]:
    """Locations plus their true cluster labels.

    ``square``: uniform on the unit square, cluster = quadrant. ``mixture``:
    equal-weight 4-component isotropic Gaussian mixture (means at
    (+-0.5, +-0.5), per-axis sd 0.22), cluster = generating component.
    """
    if n < 8:
        raise ValueError("need at least 8 locations")
    if layout == "square":
        coords = rng.uniform(0.0, 1.0, (n, 2))
        labels = 1 + (coords[:, 0] >= 0.5) + 2 * (coords[:, 1] >= 0.5)
    elif layout == "mixture":
        comp = rng.integers(0, 4, n)
        coords = MIXTURE_MEANS[comp] + MIXTURE_SD * rng.standard_normal((n, 2))
        labels = comp + 1
    else:
        raise ValueError("layout must be 'square' or 'mixture'")
    return LocationSet(coords), Partition(labels)


def gen_gp_field(
    loc: LocationSet, tau2: float, phi: float, rng, nugget: float = 0.0
) -> np.ndarray:
    """One mean-zero draw with covariance tau2 * exp(-phi d) (+ nugget)."""
    n = loc.n
    if tau2 < 0:
        raise ValueError("tau2 must be nonnegative")
    if tau2 == 0.0:
        base = np.zeros(n)
    else:
        cov = tau2 * np.exp(-phi * loc.dist)
        cov[np.diag_indices_from(cov)] += 1e-8
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as err:
            raise RuntimeError("GP covariance factorization failed") from err
        base = chol @ rng.standard_normal(n)
    if nugget > 0:
        base = base + np.sqrt(nugget) * rng.standard_normal(n)
    return base


def _noise(scenario: SimScenario, n: int, rng) -> np.ndarray:
    sd = np.sqrt(scenario.sigma2)
    eps = sd * rng.standard_normal(n)
    if scenario.error == "mixture":
        eps = eps + (rng.random(n) < 0.5)  # second component shifts the mean to 1
    return eps


def gen_dataset(scenario: SimScenario) -> Tuple[Dataset, Dataset, SimTruth]:
    """Train and test datasets drawn jointly from the scenario's mechanism."""
    rng = np.random.default_rng(scenario.seed)
    n_total = scenario.n_train + scenario.n_test
    loc_all, part_all = gen_locations(scenario.layout, n_total, rng)
    labels = np.asarray(part_all.labels)
    if scenario.n_clusters == 1:
        mu_star = (0.0,)
        mu = np.zeros(n_total)
        labels = np.ones(n_total, dtype=int)
    else:
        mu_star = scenario.mu_star
        mu = np.asarray(mu_star)[labels - 1]
    x = rng.uniform(0.0, 10.0, n_total)
    phi = phi_for_effective_range(scenario.gp_effective_range)
    theta = gen_gp_field(loc_all, scenario.gp_tau2, phi, rng)
    eps = _noise(scenario, n_total, rng)
    y = mu + x * scenario.beta + theta + eps

    tr = slice(0, scenario.n_train)
    te = slice(scenario.n_train, n_total)
    train = Dataset(LocationSet(loc_all.coords[tr]), y[tr], x[tr, None])
    test = Dataset(LocationSet(loc_all.coords[te]), y[te], x[te, None])
    truth = SimTruth(
        partition_train=Partition(labels[tr]),
        partition_test=Partition(labels[te]),
        mu_star=mu_star,
        beta=scenario.beta,
        sigma2=scenario.sigma2,
        theta_train=theta[tr],
        theta_test=theta[te],
        x_train=x[tr, None],
        x_test=x[te, None],
    )
    return train, test, truth


FIG1_MEANS = (1.0, -0.5, 0.25, -1.0)
FIG1_SILLS = (1.0, 2.0, 3.0, 4.0)
FIG1_RANGES = (0.5, 10.0, 5.0, 20.0)


def _quadrants(loc: LocationSet) -> np.ndarray:
    mx = np.median(loc.coords[:, 0])
    my = np.median(loc.coords[:, 1])
    return 1 + (loc.coords[:, 0] >= mx) + 2 * (loc.coords[:, 1] >= my)


def gen_fig1_fields(regime: str, grid: LocationSet, rng):
    """Demo fields at three locality levels over a rectangular grid.

    ``global``: one GP (sill 2, effective range 6, nugget 0.1).
    ``local_means``: same GP plus rectangle-specific means (1, -0.5, 0.25, -1).
    ``local_gps``: four independent rectangle GPs, sills (1, 2, 3, 4) and
    effective ranges (0.5, 10, 5, 20), no nugget.

    Returns (values, Partition of the rectangles used).
    """
    labels = _quadrants(grid)
    if regime == "global":
        field = gen_gp_field(grid, 2.0, phi_for_effective_range(6.0), rng, nugget=0.1)
        return field, Partition(np.ones(grid.n, dtype=int))
    if regime == "local_means":
        field = gen_gp_field(grid, 2.0, phi_for_effective_range(6.0), rng, nugget=0.1)
        field = field + np.asarray(FIG1_MEANS)[labels - 1]
        return field, Partition(labels)
    if regime == "local_gps":
        field = np.zeros(grid.n)
        for q in range(4):
            idx = np.flatnonzero(labels == q + 1)
            sub = LocationSet(grid.coords[idx])
            field[idx] = gen_gp_field(
                sub, FIG1_SILLS[q], phi_for_effective_range(FIG1_RANGES[q]), rng
            )
        return field, Partition(labels)
    raise ValueError("regime must be 'global', 'local_means', or 'local_gps'")
