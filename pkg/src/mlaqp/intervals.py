"""Prediction intervals from a pair of quantile GBDTs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyHoldout, WidthMismatch
from .gbdt import GbdtConfig, GbdtModel, Loss, fit


@dataclass(frozen=True)
class PredictionInterval:
    low: float
    high: float
    nominal_coverage: float
    crossed: bool = False

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError("interval low exceeds high")

    @property
    def width(self) -> float:
        return self.high - self.low

    def contains(self, y: float) -> bool:
        return self.low <= y <= self.high

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "nominal_coverage": self.nominal_coverage,
                "crossed": self.crossed}


@dataclass
class IntervalModel:
    """``lo``/``hi`` are pinball models at levels t/2 and 1 - t/2."""

    lo: GbdtModel
    hi: GbdtModel
    t: float

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"t must lie in (0, 1), got {self.t!r}")
        for model, level in ((self.lo, self.t / 2), (self.hi, 1 - self.t / 2)):
            if model.loss.kind != "pinball" or abs(model.loss.t - level) > 1e-12:
                raise ValueError(f"interval member must be a pinball model at level {level}")

    @property
    def nominal_coverage(self) -> float:
        return 1.0 - self.t

    @property
    def feature_width(self) -> int:
        return self.lo.feature_width

    def interval(self, m) -> PredictionInterval:
        a, b = self.lo.predict(m), self.hi.predict(m)
        return PredictionInterval(min(a, b), max(a, b), self.nominal_coverage, a > b)

    def bounds_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.lo.predict_batch(X), self.hi.predict_batch(X)
        return np.minimum(a, b), np.maximum(a, b)

    def to_dict(self) -> dict:
        return {"t": self.t, "lo": self.lo.to_dict(), "hi": self.hi.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "IntervalModel":
        return cls(GbdtModel.from_dict(doc["lo"]), GbdtModel.from_dict(doc["hi"]), float(doc["t"]))


def fit_interval(X, y, t: float = 0.1, cfg: GbdtConfig | None = None) -> IntervalModel:
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in (0, 1), got {t!r}")
    cfg = cfg or GbdtConfig.quantile()
    lo = fit(X, y, cfg, Loss.pinball(t / 2))
    hi = fit(X, y, cfg, Loss.pinball(1 - t / 2))
    return IntervalModel(lo, hi, t)


def interval(model: IntervalModel, m) -> PredictionInterval:
    return model.interval(m)


def coverage_ratio(model: IntervalModel, X, y) -> float:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise EmptyHoldout("held-out set is empty")
    if X.ndim != 2 or X.shape[1] != model.feature_width:
        raise WidthMismatch(f"expected width {model.feature_width}")
    low, high = model.bounds_batch(X)
    return float(np.count_nonzero((low <= y) & (y <= high)) / y.size)
