import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlaqp.errors import EmptyHoldout
from mlaqp.gbdt import GbdtConfig, GbdtModel, Loss
from mlaqp.intervals import IntervalModel, PredictionInterval, coverage_ratio, fit_interval, interval

QCFG = GbdtConfig.quantile(rounds=200, learning_rate=0.05, min_samples_leaf=5)


def const_model(v, t):
    return GbdtModel(float(v), [], [], Loss.pinball(t), 2)


def test_levels_and_nominal():
    im = IntervalModel(const_model(5, 0.05), const_model(9, 0.95), 0.1)
    assert im.nominal_coverage == pytest.approx(0.9)
    assert im.lo.loss.t == 0.05 and im.hi.loss.t == 0.95
    with pytest.raises(ValueError):
        fit_interval(np.zeros((10, 1)), np.arange(10.0), t=1.0)
    with pytest.raises(ValueError):
        fit_interval(np.zeros((10, 1)), np.arange(10.0), t=0.0)


def test_interval_no_crossing_and_crossing():
    ok = interval(IntervalModel(const_model(5, 0.05), const_model(9, 0.95), 0.1), [1.0, 2.0])
    assert (ok.low, ok.high, ok.crossed) == (5.0, 9.0, False)
    bad = interval(IntervalModel(const_model(9, 0.05), const_model(5, 0.95), 0.1), [1.0, 2.0])
    assert (bad.low, bad.high, bad.crossed) == (5.0, 9.0, True)


def test_constant_target_zero_width():
    im = fit_interval(np.random.default_rng(0).normal(size=(50, 2)), np.full(50, 3.0), cfg=QCFG)
    iv = im.interval([0.0, 0.0])
    assert iv.low == iv.high == 3.0 and iv.width == 0.0


def test_coverage_extremes():
    im = IntervalModel(const_model(5, 0.05), const_model(9, 0.95), 0.1)
    X = np.zeros((4, 2))
    assert coverage_ratio(im, X, [5, 6, 7, 9]) == 1.0
    assert coverage_ratio(im, X, [1, 2, 10, 11]) == 0.0
    with pytest.raises(EmptyHoldout):
        coverage_ratio(im, np.zeros((0, 2)), [])


def _hetero(seed, n=400):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, size=(n, 2))
    y = X[:, 0] * 3 + rng.normal(size=n) * (1 + X[:, 1])
    return X, y


def test_coverage_matches_loop_oracle():
    X, y = _hetero(1)
    im = fit_interval(X[:300], y[:300], 0.1, QCFG)
    hits = 0
    for x, v in zip(X[300:], y[300:]):
        iv = im.interval(x)
        hits += iv.low <= v <= iv.high
    assert coverage_ratio(im, X[300:], y[300:]) == hits / 100


def test_roundtrip():
    X, y = _hetero(2, 120)
    im = fit_interval(X, y, 0.2, GbdtConfig.quantile(rounds=30, min_samples_leaf=5))
    back = IntervalModel.from_dict(im.to_dict())
    assert all(np.array_equal(a, b) for a, b in zip(back.bounds_batch(X), im.bounds_batch(X)))


def test_wider_nominal_coverage_is_wider():
    X, y = _hetero(3)
    narrow = fit_interval(X, y, 0.4, QCFG)
    wide = fit_interval(X, y, 0.1, QCFG)
    w_n = np.mean(np.subtract(*narrow.bounds_batch(X)[::-1]))
    w_w = np.mean(np.subtract(*wide.bounds_batch(X)[::-1]))
    assert w_w >= w_n * 0.95


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 5000))
def test_low_never_exceeds_high(seed):
    X, y = _hetero(seed, 80)
    im = fit_interval(X, y, 0.1, GbdtConfig.quantile(rounds=20, learning_rate=0.2, min_samples_leaf=3))
    lo, hi = im.bounds_batch(np.random.default_rng(seed).uniform(-5, 15, size=(50, 2)))
    assert np.all(lo <= hi)
    with pytest.raises(ValueError):
        PredictionInterval(2.0, 1.0, 0.9)
