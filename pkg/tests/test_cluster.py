import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.cluster import KMeans

from mlaqp.cluster import (
    ClusterEnsemble,
    ClusterSet,
    cluster_stream,
    cv_mse,
    ensemble_predict,
    fit_local_models,
    partition,
)
from mlaqp.errors import EmptyClusterSet
from mlaqp.gbdt import GbdtConfig, fit

CFG = GbdtConfig.point(rounds=100)


def blobs(seed, n=400, sep=20.0, sigma=1.0, d=4):
    rng = np.random.default_rng(seed)
    centers = np.stack([np.zeros(d), np.full(d, sep)])
    lab = rng.integers(0, 2, n)
    return centers[lab] + rng.normal(scale=sigma, size=(n, d)), lab, centers


def test_first_query_seeds_cluster():
    cs = ClusterSet(3)
    cs.observe([1.0, 2.0, 3.0])
    assert cs.K == 1 and np.array_equal(cs.representatives[0], [1.0, 2.0, 3.0])
    with pytest.raises(EmptyClusterSet):
        ClusterSet(2).assign([0.0, 0.0])


def test_assign_rules():
    cs = ClusterSet(2, growth_threshold=1.0)
    for v in ([0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0]):
        cs.observe(v)
    assert cs.K == 4
    assert cs.assign([20.0, 0.0]) == 2
    assert cs.assign([5.0, 0.0]) == 0  # equidistant: lowest index
    one = ClusterSet(2, growth_threshold=math.inf)
    for v in np.random.default_rng(0).normal(size=(20, 2)):
        one.observe(v)
    assert one.K == 1 and set(one.assign_batch(np.random.default_rng(1).normal(size=(30, 2)))) == {0}


def test_repeated_query_converges_exactly():
    cs = ClusterSet(2, growth_threshold=5.0)
    cs.observe([0.0, 0.0])
    for _ in range(50):
        cs.observe([3.0, 4.0])
    assert cs.K == 1
    cs2 = ClusterSet(2, growth_threshold=1.0)
    for _ in range(10):
        cs2.observe([3.0, 4.0])
    assert np.array_equal(cs2.representatives[0], [3.0, 4.0])


@pytest.mark.parametrize("seed", range(5))
def test_matches_batch_kmeans(seed):
    X, _, _ = blobs(seed)
    cs = cluster_stream(X)
    assert cs.K == 2
    km = KMeans(2, n_init=10, random_state=0).fit(X)
    R = cs.representatives
    for c in km.cluster_centers_:
        assert np.min(np.linalg.norm(R - c, axis=1)) <= 0.1 * 1.0 * math.sqrt(X.shape[1])


def test_quantization_error_below_single_cluster():
    X, _, _ = blobs(7)
    cs = cluster_stream(X)
    single = cluster_stream(X, growth_threshold=math.inf)
    assert cs.quantization_error(X) <= single.quantization_error(X)


def test_missing_slots_in_distance():
    cs = ClusterSet(4, growth_threshold=100.0)
    cs.observe([1.0, 2.0, np.nan, np.nan])
    cs.observe([np.nan, np.nan, 5.0, 6.0])
    assert cs.K == 1
    assert cs.assign([np.nan, np.nan, np.nan, np.nan]) == 0


def test_roundtrip():
    X, _, _ = blobs(3, n=150)
    X[::3, 0] = np.nan
    cs = cluster_stream(X)
    back = ClusterSet.from_dict(cs.to_dict())
    assert np.array_equal(back.assign_batch(X), cs.assign_batch(X))


def _targets(X, lab):
    return np.where(lab == 0, 3 * X[:, 0], -2 * X[:, 1] + 50)


def test_local_models_partition_and_indicator():
    X, lab, _ = blobs(11, n=300)
    y = _targets(X, lab)
    cs = cluster_stream(X)
    ens = fit_local_models(cs, X, y, CFG)
    parts = partition(ens.clusters, X)
    allrows = np.concatenate(parts)
    assert allrows.size == X.shape[0] and np.unique(allrows).size == X.shape[0]
    Q = np.random.default_rng(0).uniform(-5, 25, size=(500, X.shape[1]))
    for q in Q[:100]:
        k = ens.clusters.assign(q)
        assert ensemble_predict(ens, q) == ens.models[k].predict(q)
    batch = ens.predict_batch(Q)
    assert all(batch[i] == ens.models[ens.clusters.assign(q)].predict(q) for i, q in enumerate(Q))


def test_single_cluster_equals_global_fit():
    X, lab, _ = blobs(12, n=120)
    y = _targets(X, lab)
    cs = cluster_stream(X, growth_threshold=math.inf)
    ens = fit_local_models(cs, X, y, CFG)
    glob = fit(X, y, CFG)
    assert np.array_equal(ens.predict_batch(X), glob.predict_batch(X))


@pytest.mark.parametrize("seed", range(5))
def test_local_cv_beats_global_when_targets_interact(seed):
    # blobs overlap on x0 but respond to it with opposite slopes; a depth-1
    # (additive) global model cannot express that, per-cluster models can
    rng = np.random.default_rng(seed)
    lab = rng.integers(0, 2, 400)
    X = rng.normal(size=(400, 4))
    X[:, 2:] += 20.0 * lab[:, None]
    y = np.where(lab == 0, 5.0, -5.0) * X[:, 0] + rng.normal(size=400)
    cfg = GbdtConfig.point(rounds=200, max_depth=1)
    ens = fit_local_models(cluster_stream(X), X, y, cfg)
    assert ens.clusters.K == 2
    sizes = [p.size for p in partition(ens.clusters, X)]
    assert np.average(ens.cv_errors, weights=sizes) <= cv_mse(X, y, cfg)


def test_merge_floor():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(size=(100, 2)), rng.normal(size=(5, 2)) + 50])
    y = X[:, 0]
    cs = cluster_stream(X)
    assert cs.K >= 2
    ens = fit_local_models(cs, X, y, CFG, min_cluster_size=20)
    assert ens.clusters.K < cs.K
    assert all(p.size >= 20 for p in partition(ens.clusters, X))


def test_ensemble_roundtrip():
    X, lab, _ = blobs(14, n=200)
    ens = fit_local_models(cluster_stream(X), X, _targets(X, lab), CFG)
    back = ClusterEnsemble.from_dict(ens.to_dict())
    assert np.array_equal(back.predict_batch(X), ens.predict_batch(X))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 20.0))
def test_partition_property(seed, thr):
    rng = np.random.default_rng(seed)
    X = rng.normal(scale=5, size=(60, 3))
    X[rng.random(X.shape) < 0.2] = np.nan
    cs = cluster_stream(X, growth_threshold=thr)
    parts = partition(cs, X)
    assert sum(p.size for p in parts) == 60
    assert np.unique(np.concatenate(parts)).size == 60
    which = cs.assign_batch(X)
    onehot = np.zeros((60, cs.K))
    onehot[np.arange(60), which] = 1
    assert np.all(onehot.sum(axis=1) == 1)
