"""Spatial coordinates, partitions of point sets, and small-n partition enumeration.

Locations live in R^2. A :class:`LocationSet` stores standardized (or raw)
coordinates together with the full Euclidean distance matrix, which every
cohesion evaluation downstream reads from. Partitions are kept in a canonical
labelling (order of first appearance) so that equality and hashing behave
deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "LocationSet",
    "Partition",
    "standardize",
    "cluster_centroid_spread",
    "is_spatially_connected",
    "enumerate_partitions",
    "bell_number",
]

_MAX_ENUM_N = 12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LocationSet:
    """n two-dimensional points with cached pairwise Euclidean distances.

    Attributes
    ----------
    coords : (n, 2) float array, read-only
    dist : (n, n) float array, read-only
        Symmetric, zero diagonal.
    """

    coords: np.ndarray
    dist: np.ndarray = field(compare=False)

    def __init__(self, coords):
        coords = np.ascontiguousarray(np.asarray(coords, dtype=float))
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must be an (n, 2) array of point pairs")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords must be finite")
        n = coords.shape[0]
        if n < 1:
            raise ValueError("need at least one point")
        diff = coords[:, None, :] - coords[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        if n > 1:
            iu = np.triu_indices(n, 1)
            if np.any(dist[iu] == 0.0):
                raise ValueError("duplicate coordinates are not allowed")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "dist", _frozen(dist))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def __len__(self) -> int:
        return self.n


def standardize(raw_coords) -> LocationSet:
    """Scale each coordinate axis to sample mean 0 and sample sd 1 (divisor n-1).

    Raises
    ------
    ValueError
        If fewer than 2 points, an axis has zero variance, or two points
        coincide after standardization.
    """
    coords = np.asarray(raw_coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("raw_coords must be an (n, 2) array")
    if coords.shape[0] < 2:
        raise ValueError("standardize needs at least 2 points")
    sd = coords.std(axis=0, ddof=1)
    if np.any(sd == 0.0):
        raise ValueError("coordinate axis with zero variance cannot be standardized")
    return LocationSet((coords - coords.mean(axis=0)) / sd)


def cluster_centroid_spread(members: Iterable[int], loc: LocationSet):
    """Centroid of a cluster and the summed distance D of its members to it.

    Returns
    -------
    (centroid, D) : ((2,) array, float)
        D = sum_{i in S} ||s_i - centroid||; zero iff the cluster is a
        singleton (points are distinct).
    """
    idx = np.fromiter(members, dtype=int)
    if idx.size == 0:
        raise ValueError("cluster must be nonempty")
    pts = loc.coords[idx]
    centroid = pts.mean(axis=0)
    spread = float(np.linalg.norm(pts - centroid, axis=1).sum())
    return centroid, spread


@dataclass(frozen=True)
class Partition:
    """A set partition of {0..n-1} stored as canonical cluster labels.

    Labels are positive integers 1..k in order of first appearance, e.g.
    ``(1, 1, 2, 1, 3)``. Two Partition objects compare equal iff they induce
    the same grouping.
    """

    labels: tuple

    def __init__(self, labels: Sequence[int]):
        labels = tuple(int(c) for c in labels)
        if not labels:
            raise ValueError("labels must be nonempty")
        object.__setattr__(self, "labels", _canonical(labels))

    @classmethod
    def from_clusters(cls, clusters: Iterable[Iterable[int]], n: int) -> "Partition":
        labels = [0] * n
        seen = 0
        for j, block in enumerate(clusters, start=1):
            for i in block:
                if not 0 <= i < n or labels[i]:
                    raise ValueError("clusters must partition range(n)")
                labels[i] = j
                seen += 1
        if seen != n:
            raise ValueError("clusters must cover all of range(n)")
        return cls(labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def k(self) -> int:
        return max(self.labels)

    @property
    def clusters(self) -> dict:
        """Map label -> tuple of member indices (ascending)."""
        out: dict = {}
        for i, c in enumerate(self.labels):
            out.setdefault(c, []).append(i)
        return {c: tuple(v) for c, v in out.items()}

    def sizes(self) -> tuple:
        counts = np.bincount(self.labels)[1:]
        return tuple(int(c) for c in counts)

    def __len__(self) -> int:
        return len(self.labels)


def _canonical(labels: tuple) -> tuple:
    remap: dict = {}
    out = []
    for c in labels:
        if c not in remap:
            remap[c] = len(remap) + 1
        out.append(remap[c])
    return tuple(out)


def is_spatially_connected(partition: Partition, loc: LocationSet):
    """Flag each cluster (and the whole partition) as spatially connected.

    A cluster is disconnected when some outside point sits strictly closer to
    every member than any two distinct members sit to each other, i.e. there
    is an intruder i' with d(s_i', s_i) < d(s_j, s_i) for all ordered member
    pairs i != j. The quantifier is read literally over ordered pairs;
    singletons are connected by convention (an island cluster is a legitimate
    spatial cluster even though the bare inequality would be vacuous).

    Returns
    -------
    (per_cluster, overall) : (dict label -> bool, bool)
    """
    if len(partition) != loc.n:
        raise ValueError("partition size does not match location count")
    labels = np.asarray(partition.labels)
    out: dict = {}
    for c, members in partition.clusters.items():
        idx = np.asarray(members)
        if idx.size == 1:
            out[c] = True
            continue
        outside = np.flatnonzero(labels != c)
        if outside.size == 0:
            out[c] = True
            continue
        inner = loc.dist[np.ix_(idx, idx)].copy()
        np.fill_diagonal(inner, np.inf)
        # nearest within-cluster neighbour of each member
        nn = inner.min(axis=1)
        closer = loc.dist[np.ix_(outside, idx)] < nn[None, :]
        out[c] = not bool(closer.all(axis=1).any())
    return out, all(out.values())


def bell_number(n: int) -> int:
    """Bell number via the Bell-triangle recurrence."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def enumerate_partitions(n: int) -> Iterator[Partition]:
    """Yield every set partition of {0..n-1} exactly once, in canonical form.

    Iterates restricted-growth strings, so the stream is lexicographic in the
    label sequence and contains Bell(n) partitions. Bounded at n <= 12 to keep
    exhaustive enumeration tractable.
    """
    if not 1 <= n <= _MAX_ENUM_N:
        raise ValueError(f"enumerate_partitions supports 1 <= n <= {_MAX_ENUM_N}")
    labels = [1] * n
    maxes = [1] * n
    while True:
        yield Partition(labels)
        i = n - 1
        while i > 0 and labels[i] == maxes[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        labels[i] += 1
        maxes[i] = max(maxes[i - 1], labels[i])
        for j in range(i + 1, n):
            labels[j] = 1
            maxes[j] = maxes[i]
