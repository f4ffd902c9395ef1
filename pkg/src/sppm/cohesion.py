"""Cohesion functions scoring sets of locations as prospective clusters.

Four families are provided, all evaluated on the log scale (``-inf`` is a
legitimate value, not an error):

* ``C1`` -- rich-get-richer mass penalized by the summed distance of cluster
  members to their centroid, ``M * G(|S|) / (G(alpha*D) if D >= 1 else D)``.
* ``C2`` -- rich-get-richer mass with a hard boundary: zero unless every
  pairwise distance within the cluster is at most ``a``.
* ``C3`` -- rich-get-richer mass times the Normal-Inverse-Wishart prior
  predictive (marginal likelihood) of the member coordinates.
* ``C4`` -- like C3 but integrating against the NIW *posterior* given the same
  coordinates (a "double dipper": the cluster scores its own fit twice).

C3/C4 use the standard bivariate conjugate closed form. The hot-path
evaluator works from additive sufficient statistics so samplers can score
candidate moves in O(1) for C3/C4 and O(|S|) for C1/C2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, hypot, lgamma, log, pi
from typing import Iterable, Optional, Sequence

import numpy as np

from .spatial import LocationSet

__all__ = [
    "NiwParams",
    "CohesionConfig",
    "niw_log_marginal",
    "niw_log_double_dip",
    "log_cohesion",
    "log_cohesion_ratio",
    "ClusterStats",
    "CohesionEvaluator",
]

_LOG_PI = log(pi)
_NEG_INF = float("-inf")

COHESION_KINDS = ("C1", "C2", "C3", "C4")


def _lmvgamma2(a: float) -> float:
    """Log of the bivariate multivariate gamma function."""
    return 0.5 * _LOG_PI + lgamma(a) + lgamma(a - 0.5)


@dataclass(frozen=True)
class NiwParams:
    """Normal-Inverse-Wishart hyperparameters for the C3/C4 similarity model.

    ``mu0 = None`` means the prior mean tracks the cluster centroid (the
    paper-default policy); otherwise it is a fixed point. ``lambda0`` must be
    2x2 symmetric positive definite and ``nu0 > 1`` (dimension 2).
    """

    kappa0: float = 1.0
    nu0: float = 2.0
    lambda0: tuple = (1.0, 0.0, 1.0)  # (l11, l12, l22)
    mu0: Optional[tuple] = None

    def __post_init__(self):
        l11, l12, l22 = self.lambda0
        if self.kappa0 <= 0:
            raise ValueError("kappa0 must be positive")
        if self.nu0 <= 1.0:
            raise ValueError("nu0 must exceed dim - 1 = 1")
        if not (l11 > 0 and l11 * l22 - l12 * l12 > 0):
            raise ValueError("lambda0 must be symmetric positive definite")
        if self.mu0 is not None:
            object.__setattr__(self, "mu0", (float(self.mu0[0]), float(self.mu0[1])))
        object.__setattr__(self, "lambda0", (float(l11), float(l12), float(l22)))

    @property
    def lambda0_matrix(self) -> np.ndarray:
        l11, l12, l22 = self.lambda0
        return np.array([[l11, l12], [l12, l22]])

    @property
    def centroid_mu0(self) -> bool:
        return self.mu0 is None


@dataclass(frozen=True)
class CohesionConfig:
    """Cohesion kind plus every tuning parameter any kind may need."""

    kind: str
    M: float = 1.0
    alpha: float = 1.0
    a: float = 1.0
    niw: NiwParams = field(default_factory=NiwParams)

    def __post_init__(self):
        if self.kind not in COHESION_KINDS:
            raise ValueError(f"kind must be one of {COHESION_KINDS}")
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.kind == "C1" and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kind == "C2" and self.a <= 0:
            raise ValueError("a must be positive")


def _suffstats(points) -> tuple:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1 or pts.shape[1] != 2:
        raise ValueError("need a nonempty sequence of coordinate pairs")
    n = pts.shape[0]
    sx, sy = pts.sum(axis=0)
    sxx = float(pts[:, 0] @ pts[:, 0])
    sxy = float(pts[:, 0] @ pts[:, 1])
    syy = float(pts[:, 1] @ pts[:, 1])
    return n, float(sx), float(sy), sxx, sxy, syy


def _niw_terms(n, sx, sy, sxx, sxy, syy, niw: NiwParams):
    """(logdet Lambda_n, posterior mean, kappa_n, nu_n) for n observations."""
    xbar = sx / n
    ybar = sy / n
    s11 = sxx - n * xbar * xbar
    s12 = sxy - n * xbar * ybar
    s22 = syy - n * ybar * ybar
    l11, l12, l22 = niw.lambda0
    kn = niw.kappa0 + n
    if niw.mu0 is None:
        m11 = l11 + s11
        m12 = l12 + s12
        m22 = l22 + s22
        mun = (xbar, ybar)
    else:
        dx = xbar - niw.mu0[0]
        dy = ybar - niw.mu0[1]
        w = niw.kappa0 * n / kn
        m11 = l11 + s11 + w * dx * dx
        m12 = l12 + s12 + w * dx * dy
        m22 = l22 + s22 + w * dy * dy
        mun = (
            (niw.kappa0 * niw.mu0[0] + sx) / kn,
            (niw.kappa0 * niw.mu0[1] + sy) / kn,
        )
    return (m11, m12, m22), mun, kn, niw.nu0 + n


def _log_marginal_from_stats(n, sx, sy, sxx, sxy, syy, niw: NiwParams) -> float:
    l11, l12, l22 = niw.lambda0
    ld0 = log(l11 * l22 - l12 * l12)
    (m11, m12, m22), _, kn, nun = _niw_terms(n, sx, sy, sxx, sxy, syy, niw)
    ldn = log(m11 * m22 - m12 * m12)
    return (
        -n * _LOG_PI
        + log(niw.kappa0 / kn)
        + 0.5 * niw.nu0 * ld0
        - 0.5 * nun * ldn
        + _lmvgamma2(0.5 * nun)
        - _lmvgamma2(0.5 * niw.nu0)
    )


def niw_log_marginal(points, niw: NiwParams = NiwParams()) -> float:
    """Log NIW prior-predictive density of a point set (C3 similarity kernel).

    Computes ``log int prod_i N2(s_i | m, V) NIW(m, V | mu0, k0, nu0, L0)``
    with ``mu0`` resolved first: the cluster centroid under the default
    policy, or the fixed point carried by ``niw``.
    """
    return _log_marginal_from_stats(*_suffstats(points), niw)


def niw_log_double_dip(points, niw: NiwParams = NiwParams()) -> float:
    """Log NIW posterior-predictive density of a point set (C4 kernel).

    Same integrand as :func:`niw_log_marginal` but against the NIW posterior
    updated with the very same points.
    """
    stats = _suffstats(points)
    (m11, m12, m22), mun, kn, nun = _niw_terms(*stats, niw)
    posterior = NiwParams(kappa0=kn, nu0=nun, lambda0=(m11, m12, m22), mu0=mun)
    return _log_marginal_from_stats(*stats, posterior)


class ClusterStats:
    """Additive sufficient statistics of one cluster's member locations."""

    __slots__ = ("members", "n", "sx", "sy", "sxx", "sxy", "syy")

    def __init__(self):
        self.members: list = []
        self.n = 0
        self.sx = 0.0
        self.sy = 0.0
        self.sxx = 0.0
        self.sxy = 0.0
        self.syy = 0.0

    def add(self, i: int, x: float, y: float) -> None:
        self.members.append(i)
        self.n += 1
        self.sx += x
        self.sy += y
        self.sxx += x * x
        self.sxy += x * y
        self.syy += y * y

    def remove(self, i: int, x: float, y: float) -> None:
        self.members.remove(i)
        self.n -= 1
        self.sx -= x
        self.sy -= y
        self.sxx -= x * x
        self.sxy -= x * y
        self.syy -= y * y

    def copy(self) -> "ClusterStats":
        new = ClusterStats.__new__(ClusterStats)
        new.members = list(self.members)
        new.n = self.n
        new.sx = self.sx
        new.sy = self.sy
        new.sxx = self.sxx
        new.sxy = self.sxy
        new.syy = self.syy
        return new


class CohesionEvaluator:
    """Scores clusters and candidate moves for one (LocationSet, config) pair.

    All methods are pure given immutable inputs; instances hold only
    precomputed constants and read-only views of the coordinates, so they can
    be shared across threads or worker processes.
    """

    def __init__(self, loc: LocationSet, cfg: CohesionConfig):
        self.loc = loc
        self.cfg = cfg
        self.kind = cfg.kind
        self.log_M = log(cfg.M)
        self._xs = loc.coords[:, 0].tolist()
        self._ys = loc.coords[:, 1].tolist()
        self._dist_rows = loc.dist.tolist()
        n_max = loc.n + 2
        self._lgam = [0.0] * (n_max + 1)
        for m in range(2, n_max + 1):
            self._lgam[m] = lgamma(m)
        if self.kind in ("C3", "C4"):
            self._init_niw_consts(n_max)

    def _init_niw_consts(self, n_max: int) -> None:
        niw = self.cfg.niw
        k0, nu0 = niw.kappa0, niw.nu0
        l11, l12, l22 = niw.lambda0
        self._ld0 = log(l11 * l22 - l12 * l12)
        # C3: log g(S) = c3[n] - ((nu0+n)/2) logdet(L0 + S + shift)
        self._c3 = [0.0] * (n_max + 1)
        # C4: log g(S) = c4[n] + ((nu0+n)/2) logdet(Ln) - ((nu0+2n)/2) logdet(Lnn)
        self._c4 = [0.0] * (n_max + 1)
        base = _lmvgamma2(0.5 * nu0)
        for m in range(1, n_max + 1):
            self._c3[m] = (
                -m * _LOG_PI
                + log(k0 / (k0 + m))
                + 0.5 * nu0 * self._ld0
                + _lmvgamma2(0.5 * (nu0 + m))
                - base
            )
            self._c4[m] = (
                -m * _LOG_PI
                + log((k0 + m) / (k0 + 2 * m))
                + _lmvgamma2(0.5 * (nu0 + 2 * m))
                - _lmvgamma2(0.5 * (nu0 + m))
            )

    # -- scatter helpers -------------------------------------------------

    def _scatter_dets(self, n, sx, sy, sxx, sxy, syy):
        """det(L0 + S [+ mean shift]) and, for C4, det of the doubled update."""
        niw = self.cfg.niw
        xbar = sx / n
        ybar = sy / n
        s11 = sxx - sx * xbar
        s12 = sxy - sx * ybar
        s22 = syy - sy * ybar
        l11, l12, l22 = niw.lambda0
        if niw.mu0 is None:
            a11 = l11 + s11
            a12 = l12 + s12
            a22 = l22 + s22
            b11 = a11 + s11
            b12 = a12 + s12
            b22 = a22 + s22
        else:
            k0 = niw.kappa0
            kn = k0 + n
            dx = xbar - niw.mu0[0]
            dy = ybar - niw.mu0[1]
            w = k0 * n / kn
            a11 = l11 + s11 + w * dx * dx
            a12 = l12 + s12 + w * dx * dy
            a22 = l22 + s22 + w * dy * dy
            # posterior mean shift relative to the data mean, doubled update
            w2 = (kn * n / (kn + n)) * (k0 / kn) ** 2
            b11 = a11 + s11 + w2 * dx * dx
            b12 = a12 + s12 + w2 * dx * dy
            b22 = a22 + s22 + w2 * dy * dy
        return a11 * a22 - a12 * a12, b11 * b22 - b12 * b12

    def _spread(self, members, cx, cy) -> float:
        xs, ys = self._xs, self._ys
        total = 0.0
        for j in members:
            total += hypot(xs[j] - cx, ys[j] - cy)
        return total

    def _c1_logden(self, d: float) -> float:
        if d >= 1.0:
            return lgamma(self.cfg.alpha * d)
        return log(d)

    # -- public scoring --------------------------------------------------

    def log_singleton(self, i: int) -> float:
        """log C({i}) -- the mass a brand-new cluster at point i carries."""
        if self.kind in ("C1", "C2"):
            return self.log_M
        return self.log_singleton_xy(self._xs[i], self._ys[i])

    def log_cluster(self, st: ClusterStats) -> float:
        """log C(S) from a cluster's sufficient statistics."""
        n = st.n
        if n == 0:
            raise ValueError("empty cluster")
        kind = self.kind
        if kind == "C1":
            if n == 1:
                return self.log_M
            d = self._spread(st.members, st.sx / n, st.sy / n)
            return self.log_M + self._lgam[n] - self._c1_logden(d)
        if kind == "C2":
            a = self.cfg.a
            members = st.members
            rows = self._dist_rows
            for u in range(1, n):
                row = rows[members[u]]
                for v in range(u):
                    if row[members[v]] > a:
                        return _NEG_INF
            return self.log_M + self._lgam[n]
        if kind == "C3":
            det_a, _ = self._scatter_dets(n, st.sx, st.sy, st.sxx, st.sxy, st.syy)
            nun = self.cfg.niw.nu0 + n
            return self.log_M + self._lgam[n] + self._c3[n] - 0.5 * nun * log(det_a)
        det_a, det_b = self._scatter_dets(n, st.sx, st.sy, st.sxx, st.sxy, st.syy)
        nu0 = self.cfg.niw.nu0
        return (
            self.log_M
            + self._lgam[n]
            + self._c4[n]
            + 0.5 * (nu0 + n) * log(det_a)
            - 0.5 * (nu0 + 2 * n) * log(det_b)
        )

    def log_add_ratio(self, st: ClusterStats, i: int) -> float:
        """log C(S + {i}) - log C(S) without mutating the cluster."""
        n = st.n
        if n == 0:
            raise ValueError("empty cluster")
        x, y = self._xs[i], self._ys[i]
        kind = self.kind
        if kind == "C2":
            a = self.cfg.a
            row = self._dist_rows[i]
            for j in st.members:
                if row[j] > a:
                    return _NEG_INF
            return log(n)  # lgamma(n+1) - lgamma(n)
        if kind == "C1":
            n1 = n + 1
            sx1 = st.sx + x
            sy1 = st.sy + y
            cx, cy = sx1 / n1, sy1 / n1
            d_new = self._spread(st.members, cx, cy) + hypot(x - cx, y - cy)
            if n == 1:
                return -self._c1_logden(d_new)
            d_old = self._spread(st.members, st.sx / n, st.sy / n)
            return log(n) - self._c1_logden(d_new) + self._c1_logden(d_old)
        n1 = n + 1
        sx1 = st.sx + x
        sy1 = st.sy + y
        sxx1 = st.sxx + x * x
        sxy1 = st.sxy + x * y
        syy1 = st.syy + y * y
        nu0 = self.cfg.niw.nu0
        if kind == "C3":
            det_new, _ = self._scatter_dets(n1, sx1, sy1, sxx1, sxy1, syy1)
            det_old, _ = self._scatter_dets(n, st.sx, st.sy, st.sxx, st.sxy, st.syy)
            return (
                log(n)
                + self._c3[n1]
                - self._c3[n]
                - 0.5 * (nu0 + n1) * log(det_new)
                + 0.5 * (nu0 + n) * log(det_old)
            )
        da_new, db_new = self._scatter_dets(n1, sx1, sy1, sxx1, sxy1, syy1)
        da_old, db_old = self._scatter_dets(n, st.sx, st.sy, st.sxx, st.sxy, st.syy)
        return (
            log(n)
            + self._c4[n1]
            - self._c4[n]
            + 0.5 * (nu0 + n1) * log(da_new)
            - 0.5 * (nu0 + 2 * n1) * log(db_new)
            - 0.5 * (nu0 + n) * log(da_old)
            + 0.5 * (nu0 + 2 * n) * log(db_old)
        )

    def log_singleton_xy(self, x: float, y: float) -> float:
        """log C({s}) for an arbitrary point, e.g. a prediction site."""
        kind = self.kind
        if kind in ("C1", "C2"):
            return self.log_M
        if kind == "C3":
            det_a, _ = self._scatter_dets(1, x, y, x * x, x * y, y * y)
            return self.log_M + self._c3[1] - 0.5 * (self.cfg.niw.nu0 + 1) * log(det_a)
        det_a, det_b = self._scatter_dets(1, x, y, x * x, x * y, y * y)
        nu0 = self.cfg.niw.nu0
        return (
            self.log_M
            + self._c4[1]
            + 0.5 * (nu0 + 1) * log(det_a)
            - 0.5 * (nu0 + 2) * log(det_b)
        )

    def log_add_ratio_xy(self, st: ClusterStats, x: float, y: float) -> float:
        """log C(S + {s}) - log C(S) for an arbitrary point s = (x, y)."""
        n = st.n
        if n == 0:
            raise ValueError("empty cluster")
        kind = self.kind
        xs, ys = self._xs, self._ys
        if kind == "C2":
            a = self.cfg.a
            for j in st.members:
                if hypot(xs[j] - x, ys[j] - y) > a:
                    return _NEG_INF
            return log(n)
        if kind == "C1":
            n1 = n + 1
            cx = (st.sx + x) / n1
            cy = (st.sy + y) / n1
            d_new = self._spread(st.members, cx, cy) + hypot(x - cx, y - cy)
            if n == 1:
                return -self._c1_logden(d_new)
            d_old = self._spread(st.members, st.sx / n, st.sy / n)
            return log(n) - self._c1_logden(d_new) + self._c1_logden(d_old)
        n1 = n + 1
        sx1 = st.sx + x
        sy1 = st.sy + y
        sxx1 = st.sxx + x * x
        sxy1 = st.sxy + x * y
        syy1 = st.syy + y * y
        nu0 = self.cfg.niw.nu0
        if kind == "C3":
            det_new, _ = self._scatter_dets(n1, sx1, sy1, sxx1, sxy1, syy1)
            det_old, _ = self._scatter_dets(n, st.sx, st.sy, st.sxx, st.sxy, st.syy)
            return (
                log(n)
                + self._c3[n1]
                - self._c3[n]
                - 0.5 * (nu0 + n1) * log(det_new)
                + 0.5 * (nu0 + n) * log(det_old)
            )
        da_new, db_new = self._scatter_dets(n1, sx1, sy1, sxx1, sxy1, syy1)
        da_old, db_old = self._scatter_dets(n, st.sx, st.sy, st.sxx, st.sxy, st.syy)
        return (
            log(n)
            + self._c4[n1]
            - self._c4[n]
            + 0.5 * (nu0 + n1) * log(da_new)
            - 0.5 * (nu0 + 2 * n1) * log(db_new)
            - 0.5 * (nu0 + n) * log(da_old)
            + 0.5 * (nu0 + 2 * n) * log(db_old)
        )

    def new_stats(self, i: int) -> ClusterStats:
        st = ClusterStats()
        st.add(i, self._xs[i], self._ys[i])
        return st

    def add(self, st: ClusterStats, i: int) -> None:
        st.add(i, self._xs[i], self._ys[i])

    def remove(self, st: ClusterStats, i: int) -> None:
        st.remove(i, self._xs[i], self._ys[i])

    def stats_for(self, members: Iterable[int]) -> ClusterStats:
        st = ClusterStats()
        for i in members:
            st.add(i, self._xs[i], self._ys[i])
        return st


def log_cohesion(members: Sequence[int], loc: LocationSet, cfg: CohesionConfig) -> float:
    """Log cohesion of the cluster given by ``members`` (indices into loc)."""
    ev = CohesionEvaluator(loc, cfg)
    return ev.log_cluster(ev.stats_for(members))


def log_cohesion_ratio(
    members: Sequence[int], new_index: int, loc: LocationSet, cfg: CohesionConfig
) -> float:
    """log C(S + {new_index}) - log C(S); ``new_index`` must not be in S."""
    if new_index in set(members):
        raise ValueError("new_index already belongs to the cluster")
    ev = CohesionEvaluator(loc, cfg)
    st = ev.stats_for(members)
    if ev.kind == "C2" and ev.log_cluster(st) == _NEG_INF:
        # joining an already-infeasible cluster can never be proposed
        return _NEG_INF
    return ev.log_add_ratio(st, new_index)
