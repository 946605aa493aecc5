"""Streaming query clustering and per-cluster local models.

Clusters grow online: a query farther than ``growth_threshold`` from every
representative starts a new cluster, otherwise the nearest representative
moves toward it by a streaming-mean step.  Prediction uses only the nearest
cluster's model.
"""

from __future__ import annotations

import copy
import logging
import math

import numpy as np

from .errors import EmptyClusterSet
from .gbdt import GbdtConfig, GbdtModel, fit

log = logging.getLogger(__name__)

WARMUP = 100
GROWTH_SCALE = 4.0
GROWTH_QUANTILE = 25
PRESENCE_RATIO = 0.5


def _sq_dist(q: np.ndarray, R: np.ndarray, slot_mean: np.ndarray) -> np.ndarray:
    """Squared distances from ``q`` to each row of ``R``.

    Missing against missing adds nothing; missing against present adds the
    present value's squared deviation from the running slot mean.
    """
    qm = np.isnan(q)
    rm = np.isnan(R)
    qf = np.where(qm, slot_mean, q)
    rf = np.where(rm, slot_mean, R)
    d = qf - rf
    d = np.where(qm & rm, 0.0, d)
    d = np.nan_to_num(d, nan=0.0)
    return np.einsum("ij,ij->i", d, d)


class ClusterSet:
    def __init__(self, width: int, growth_threshold: float | None = None,
                 growth_scale: float = GROWTH_SCALE, warmup: int = WARMUP):
        self.width = int(width)
        self.growth_threshold = growth_threshold
        self.growth_scale = growth_scale
        self.warmup = warmup
        self.counts: list[int] = []
        self._present: list[np.ndarray] = []
        self._mean: list[np.ndarray] = []
        self._R = np.empty((0, self.width))
        self.slot_count = np.zeros(self.width, dtype=np.int64)
        self.slot_mean = np.full(self.width, np.nan)
        self._buffer: list[np.ndarray] = []

    @property
    def K(self) -> int:
        return len(self.counts)

    @property
    def representatives(self) -> np.ndarray:
        return self._R.copy()

    def _vec(self, q) -> np.ndarray:
        v = np.asarray(getattr(q, "values", q), dtype=np.float64)
        if v.shape != (self.width,):
            raise ValueError(f"expected width {self.width}, got {v.shape}")
        return v

    def _rep_row(self, k: int) -> np.ndarray:
        c = self.counts[k]
        keep = self._present[k] >= PRESENCE_RATIO * c
        return np.where(keep & (self._present[k] > 0), self._mean[k], np.nan)

    def _new_cluster(self, v: np.ndarray) -> None:
        pres = ~np.isnan(v)
        self.counts.append(1)
        self._present.append(pres.astype(np.int64))
        self._mean.append(np.where(pres, v, 0.0))
        self._R = np.vstack([self._R, self._rep_row(self.K - 1)])

    def _update(self, k: int, v: np.ndarray) -> None:
        pres = ~np.isnan(v)
        self.counts[k] += 1
        pc = self._present[k]
        pc[pres] += 1
        mu = self._mean[k]
        mu[pres] += (v[pres] - mu[pres]) / pc[pres]
        self._R[k] = self._rep_row(k)

    def _track_slots(self, v: np.ndarray) -> None:
        pres = ~np.isnan(v)
        self.slot_count[pres] += 1
        old = np.where(np.isnan(self.slot_mean), 0.0, self.slot_mean)
        self.slot_mean[pres] = old[pres] + (v[pres] - old[pres]) / self.slot_count[pres]

    def distances(self, q) -> np.ndarray:
        v = self._vec(q)
        if self.K == 0:
            raise EmptyClusterSet("no representatives yet")
        return np.sqrt(_sq_dist(v, self._R, self.slot_mean))

    def assign(self, q) -> int:
        # argmin returns the first minimum, i.e. the lowest index on ties
        return int(np.argmin(self.distances(q)))

    def assign_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.assign(row) for row in X], dtype=np.int64)

    def observe(self, q) -> "ClusterSet":
        v = self._vec(q)
        self._track_slots(v)
        if self.K == 0:
            self._new_cluster(v)
            return self
        if self.growth_threshold is None:
            self._buffer.append(v)
            if len(self._buffer) + 1 >= self.warmup:
                self.flush()
            return self
        self._place(v)
        return self

    def _place(self, v: np.ndarray) -> None:
        d = self.distances(v)
        k = int(np.argmin(d))
        if d[k] > self.growth_threshold:
            self._new_cluster(v)
        else:
            self._update(k, v)

    def flush(self) -> "ClusterSet":
        """Fix the growth threshold from the warm-up sample and replay it."""
        if self.growth_threshold is not None:
            return self
        sample = [self._R[0]] + self._buffer if self.K else list(self._buffer)
        self.growth_threshold = self._auto_threshold(np.asarray(sample))
        buf, self._buffer = self._buffer, []
        for v in buf:
            self._place(v)
        return self

    def _auto_threshold(self, S: np.ndarray) -> float:
        if len(S) < 2:
            return math.inf
        d = [np.sqrt(_sq_dist(S[i], S[i + 1:], self.slot_mean)) for i in range(len(S) - 1)]
        # lower quartile: with a few balanced clusters it sits inside the
        # within-cluster distances, where the median may not
        q = float(np.percentile(np.concatenate(d), GROWTH_QUANTILE))
        if q <= 0:
            return math.inf
        return self.growth_scale * q

    def drop(self, k: int) -> None:
        del self.counts[k], self._present[k], self._mean[k]
        self._R = np.delete(self._R, k, axis=0)

    def quantization_error(self, X) -> float:
        X = np.asarray(X, dtype=np.float64)
        return float(np.mean([_sq_dist(x, self._R, self.slot_mean).min() for x in X]))

    def snapshot(self) -> "ClusterSet":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        def f(a):
            return [None if math.isnan(x) else x for x in np.asarray(a, dtype=float).tolist()]
        return {
            "width": self.width,
            "growth_threshold": None if self.growth_threshold in (None, math.inf) else self.growth_threshold,
            "growth_unbounded": self.growth_threshold == math.inf,
            "growth_scale": self.growth_scale,
            "warmup": self.warmup,
            "counts": list(self.counts),
            "present": [p.tolist() for p in self._present],
            "mean": [m.tolist() for m in self._mean],
            "slot_count": self.slot_count.tolist(),
            "slot_mean": f(self.slot_mean),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ClusterSet":
        thr = math.inf if doc.get("growth_unbounded") else doc["growth_threshold"]
        cs = cls(doc["width"], thr, doc.get("growth_scale", GROWTH_SCALE), doc.get("warmup", WARMUP))
        cs.counts = list(doc["counts"])
        cs._present = [np.asarray(p, dtype=np.int64) for p in doc["present"]]
        cs._mean = [np.asarray(m, dtype=np.float64) for m in doc["mean"]]
        cs._R = np.vstack([cs._rep_row(k) for k in range(cs.K)]) if cs.K else np.empty((0, cs.width))
        cs.slot_count = np.asarray(doc["slot_count"], dtype=np.int64)
        cs.slot_mean = np.array([np.nan if x is None else x for x in doc["slot_mean"]], dtype=np.float64)
        return cs


def cluster_stream(X, growth_threshold: float | None = None, **kw) -> ClusterSet:
    X = np.asarray(X, dtype=np.float64)
    cs = ClusterSet(X.shape[1], growth_threshold, **kw)
    for row in X:
        cs.observe(row)
    return cs.flush()


def cv_mse(X, y, cfg: GbdtConfig | None = None, folds: int = 5, seed: int = 0) -> float:
    """K-fold cross-validated mean squared error of a point model."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    folds = min(folds, n)
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    sq = np.empty(n)
    for i in range(folds):
        test = parts[i]
        train = np.concatenate([parts[j] for j in range(folds) if j != i])
        model = fit(X[train], y[train], cfg)
        r = y[test] - model.predict_batch(X[test])
        sq[test] = r * r
    return float(np.mean(sq))


class ClusterEnsemble:
    def __init__(self, clusters: ClusterSet, models: list[GbdtModel], cv_errors: list[float]):
        if clusters.K == 0:
            raise EmptyClusterSet("ensemble needs at least one cluster")
        if len(models) != clusters.K or len(cv_errors) != clusters.K:
            raise ValueError("one model and one error estimate per cluster")
        self.clusters = clusters
        self.models = models
        self.cv_errors = cv_errors

    @property
    def feature_width(self) -> int:
        return self.clusters.width

    def predict(self, q) -> float:
        return self.models[self.clusters.assign(q)].predict(q)

    def predict_batch(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        which = self.clusters.assign_batch(X)
        out = np.empty(X.shape[0])
        for k in np.unique(which):
            rows = which == k
            out[rows] = self.models[k].predict_batch(X[rows])
        return out

    def to_dict(self) -> dict:
        return {"clusters": self.clusters.to_dict(), "models": [m.to_dict() for m in self.models],
                "cv_errors": list(self.cv_errors)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ClusterEnsemble":
        return cls(ClusterSet.from_dict(doc["clusters"]),
                   [GbdtModel.from_dict(m) for m in doc["models"]], list(doc["cv_errors"]))


def partition(cs: ClusterSet, X) -> list[np.ndarray]:
    which = cs.assign_batch(X)
    return [np.flatnonzero(which == k) for k in range(cs.K)]


def fit_local_models(cs: ClusterSet, X, y, cfg: GbdtConfig | None = None,
                     min_cluster_size: int = 20, folds: int = 5, seed: int = 0) -> ClusterEnsemble:
    """Train one point model per cluster on the rows assigned to it.

    Clusters with fewer than ``min_cluster_size`` rows (never less than the
    config's ``min_samples_leaf``) are dissolved smallest first and their rows
    reassigned, until every remaining cluster is large enough or one is left.
    """
    cfg = cfg or GbdtConfig.point()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cs = cs.snapshot().flush()
    if cs.K == 0:
        raise EmptyClusterSet("no representatives; observe queries first")
    floor = max(min_cluster_size, cfg.min_samples_leaf)
    while True:
        parts = partition(cs, X)
        sizes = [p.size for p in parts]
        small = [k for k in range(cs.K) if sizes[k] < floor]
        if not small or cs.K == 1:
            break
        k = min(small, key=lambda j: (sizes[j], j))
        log.info("merging cluster %d (%d rows) into its neighbours", k, sizes[k])
        cs.drop(k)
    models, errors = [], []
    for rows in parts:
        models.append(fit(X[rows], y[rows], cfg))
        errors.append(cv_mse(X[rows], y[rows], cfg, folds, seed))
    return ClusterEnsemble(cs, models, errors)


def ensemble_predict(e: ClusterEnsemble, q) -> float:
    return e.predict(q)
