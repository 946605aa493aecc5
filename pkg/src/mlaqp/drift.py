"""Data-shift and workload-shift detection.

Data shift compares the empirical CDF of answers seen at training time with
a sliding window of recent answers (two-sample Kolmogorov-Smirnov).  Workload
shift flags query vectors whose Mahalanobis distance from the training
vectors exceeds the multivariate Chebyshev bound more often than allowed.
"""

from __future__ import annotations

import json
import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySample, InvalidAlpha, SingularCovariance, VacuousBound

DEFAULT_WINDOW = 500
DEFAULT_BOUND = 0.05


class AnswerEcdf:
    __slots__ = ("sample",)

    def __init__(self, values):
        s = np.sort(np.asarray(values, dtype=np.float64).ravel())
        if s.size == 0:
            raise EmptySample("an ECDF needs at least one value")
        if np.isnan(s).any():
            raise ValueError("ECDF sample contains NaN")
        s.setflags(write=False)
        self.sample = s

    @property
    def n(self) -> int:
        return int(self.sample.size)

    def __call__(self, y):
        return np.searchsorted(self.sample, y, side="right") / self.n

    def to_dict(self) -> dict:
        return {"sample": self.sample.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "AnswerEcdf":
        return cls(doc["sample"])


def _as_ecdf(x) -> AnswerEcdf:
    return x if isinstance(x, AnswerEcdf) else AnswerEcdf(x)


def ks_statistic(f1, f2) -> float:
    """sup |F1 - F2|, evaluated at every point of the merged sample."""
    a, b = _as_ecdf(f1), _as_ecdf(f2)
    pts = np.concatenate([a.sample, b.sample])
    return float(np.max(np.abs(a(pts) - b(pts))))


def ks_coefficient(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha!r}")
    return math.sqrt(-math.log(alpha / 2.0) / 2.0)


def ks_threshold(alpha: float, n: int, m: int) -> float:
    if n < 1 or m < 1:
        raise EmptySample("sample sizes must be >= 1")
    return ks_coefficient(alpha) * math.sqrt((n + m) / (n * m))


@dataclass(frozen=True)
class ShiftCheck:
    shifted: bool
    statistic: float
    threshold: float


def check_data_shift(train, monitored, alpha: float = 0.05) -> ShiftCheck:
    a, b = _as_ecdf(train), _as_ecdf(monitored)
    d = ks_statistic(a, b)
    thr = ks_threshold(alpha, a.n, b.n)
    return ShiftCheck(d > thr, d, thr)


class WorkloadStats:
    """Mean and ridge-regularized covariance of training meta-vectors.

    Missing slots are imputed with the slot's mean over present values
    (0 when a slot was never present).
    """

    def __init__(self, mean: np.ndarray, cov: np.ndarray, fill: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = np.asarray(cov, dtype=np.float64)
        self.fill = np.asarray(fill, dtype=np.float64)
        self._prec = np.linalg.inv(self.cov)

    @property
    def d(self) -> int:
        return int(self.mean.size)

    @property
    def N(self) -> float:
        # trace of cov^-1 cov, which is d up to rounding
        return float(np.trace(self._prec @ self.cov))

    @classmethod
    def fit(cls, X, ridge: float = 1e-6) -> "WorkloadStats":
        X = np.atleast_2d(np.asarray(getattr(X, "values", X), dtype=np.float64))
        if X.shape[0] == 0:
            raise EmptySample("no vectors")
        present = ~np.isnan(X)
        cnt = present.sum(axis=0)
        fill = np.where(cnt > 0, np.nansum(X, axis=0) / np.maximum(cnt, 1), 0.0)
        Z = np.where(present, X, fill)
        mu = Z.mean(axis=0)
        C = Z - mu
        cov = C.T @ C / X.shape[0]
        diag = np.diag(cov)
        if not np.any(diag > 0):
            raise SingularCovariance("every slot has zero variance")
        eps = ridge * float(np.mean(diag))
        return cls(mu, cov + eps * np.eye(cov.shape[0]), fill)

    def impute(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.where(np.isnan(X), self.fill, X)

    def mahalanobis(self, X) -> np.ndarray:
        Z = self.impute(X) - self.mean
        q = np.einsum("ij,jk,ik->i", Z, self._prec, Z)
        return np.sqrt(np.maximum(q, 0.0))

    def default_k(self, bound: float = DEFAULT_BOUND) -> float:
        return math.sqrt(self.d / bound)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(), "fill": self.fill.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "WorkloadStats":
        return cls(np.asarray(doc["mean"]), np.asarray(doc["cov"]), np.asarray(doc["fill"]))


def check_workload_shift(stats: WorkloadStats, monitored, k: float | None = None) -> ShiftCheck:
    """Shifted when the share of vectors at distance >= k reaches N/k^2."""
    X = np.asarray([getattr(m, "values", m) for m in monitored], dtype=np.float64)
    if X.size == 0:
        raise EmptySample("no monitored vectors")
    N = stats.d
    k = stats.default_k() if k is None else float(k)
    if k <= math.sqrt(N):
        raise VacuousBound(f"k={k} gives a bound N/k^2 >= 1")
    exceed = float(np.mean(stats.mahalanobis(X) >= k))
    bound = N / (k * k)
    return ShiftCheck(exceed >= bound, exceed, bound)


@dataclass
class DriftEvent:
    kind: str
    statistic: float
    threshold: float
    ts: float = field(default_factory=time.time)
    af: str | None = None
    position: int | None = None
    retrain_recommended: bool = True

    def to_dict(self) -> dict:
        out = {"ts": self.ts, "kind": self.kind, "statistic": self.statistic,
               "threshold": self.threshold, "retrain_recommended": self.retrain_recommended}
        if self.af is not None:
            out["af"] = self.af
        if self.position is not None:
            out["position"] = self.position
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class DataShiftMonitor:
    """KS check of a sliding answer window against the training ECDF."""

    def __init__(self, train: AnswerEcdf, alpha: float = 0.05, window: int = DEFAULT_WINDOW,
                 check_every: int = 1, min_samples: int | None = None, af: str | None = None):
        ks_coefficient(alpha)
        self.train = _as_ecdf(train)
        self.alpha = alpha
        self.window = deque(maxlen=window)
        self.check_every = max(1, int(check_every))
        self.min_samples = window if min_samples is None else min_samples
        self.af = af
        self.seen = 0
        self.last: ShiftCheck | None = None
        self.retrain_recommended = False

    def observe(self, y: float) -> DriftEvent | None:
        self.window.append(float(y))
        self.seen += 1
        if len(self.window) < self.min_samples or self.seen % self.check_every:
            return None
        self.last = check_data_shift(self.train, np.fromiter(self.window, float), self.alpha)
        if self.last.shifted:
            self.retrain_recommended = True
            return DriftEvent("data", self.last.statistic, self.last.threshold, af=self.af,
                              position=self.seen)
        return None

    def status(self) -> dict:
        out = {"kind": "data", "af": self.af, "seen": self.seen, "window": len(self.window),
               "alpha": self.alpha, "retrain_recommended": self.retrain_recommended}
        if self.last is not None:
            out.update(statistic=self.last.statistic, threshold=self.last.threshold)
        return out


class WorkloadShiftMonitor:
    """Chebyshev exceedance check over a sliding window of query vectors."""

    def __init__(self, stats: WorkloadStats, k: float | None = None, window: int = DEFAULT_WINDOW,
                 check_every: int = 1, min_samples: int | None = None):
        self.stats = stats
        self.k = stats.default_k() if k is None else float(k)
        if self.k <= math.sqrt(stats.d):
            raise VacuousBound(f"k={self.k} gives a bound N/k^2 >= 1")
        self.window = deque(maxlen=window)
        self.check_every = max(1, int(check_every))
        self.min_samples = window if min_samples is None else min_samples
        self.seen = 0
        self.last: ShiftCheck | None = None
        self.retrain_recommended = False

    def observe(self, m) -> DriftEvent | None:
        # store distances, not vectors: the check only needs the exceedance
        self.window.append(float(self.stats.mahalanobis(getattr(m, "values", m))[0]))
        self.seen += 1
        if len(self.window) < self.min_samples or self.seen % self.check_every:
            return None
        N = self.stats.d
        exceed = float(np.mean(np.fromiter(self.window, float) >= self.k))
        bound = N / (self.k * self.k)
        self.last = ShiftCheck(exceed >= bound, exceed, bound)
        if self.last.shifted:
            self.retrain_recommended = True
            return DriftEvent("workload", exceed, bound, position=self.seen)
        return None

    def status(self) -> dict:
        out = {"kind": "workload", "seen": self.seen, "window": len(self.window), "k": self.k,
               "retrain_recommended": self.retrain_recommended}
        if self.last is not None:
            out.update(statistic=self.last.statistic, threshold=self.last.threshold)
        return out
