import numpy as np
import pytest
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score

from mlaqp.errors import DegenerateRange
from mlaqp.executor import ColumnarDataset
from mlaqp.schema import DatasetSchema
from mlaqp.sql import parse
from mlaqp.vectorize import CategoricalEncoder, vectorize
from mlaqp.workload import (
    HIGH,
    LOW,
    WorkloadSpec,
    choose_bin_count,
    derive_range_size,
    gen_analyst_workload,
    gen_dataset,
    gen_queries,
)


def _meta(records, schema):
    enc = CategoricalEncoder.fit(schema)
    return np.vstack([vectorize(parse(r.sql, schema), schema, enc)[0][0].values for r in records])


def test_dataset_deterministic_and_bounded():
    a, b = gen_dataset(10, 1000, seed=7), gen_dataset(10, 1000, seed=7)
    for name in a.schema.names:
        assert np.array_equal(a.columns[name], b.columns[name])
        col = a.columns[name]
        assert col.min() >= LOW and col.max() <= HIGH
    assert not np.array_equal(gen_dataset(10, 1000, seed=8).columns["a1"], a.columns["a1"])


def test_dataset_means():
    ds = gen_dataset(10, 20000, seed=1)
    se = (HIGH - LOW) / np.sqrt(12) / np.sqrt(ds.n_rows)
    for col in ds.columns.values():
        assert abs(col.mean() - (LOW + HIGH) / 2) < 3 * se


def _ds(cols):
    schema = DatasetSchema.numeric("t", list(cols))
    return ColumnarDataset(schema, {k: np.asarray(v, dtype=float) for k, v in cols.items()})


def test_derive_range_size_examples():
    assert derive_range_size(_ds({"a": np.linspace(0, 100, 1001)}), 100) == pytest.approx(1.0)
    assert derive_range_size(_ds({"a": [0, 10], "b": [5, 25]}), 10) == pytest.approx(1.5)
    assert derive_range_size(_ds({"a": [3.0, 3.0]}), 10) == 0.0
    with pytest.raises(DegenerateRange):
        gen_queries(WorkloadSpec(2, 1, 1), _ds({"a1": [3.0, 3.0]}))
    with pytest.raises(DegenerateRange):
        WorkloadSpec(2, 1, 1, range_size=0.0)
    with pytest.raises(ValueError):
        WorkloadSpec(2, 2, 3)


def test_structure_and_determinism():
    ds = gen_dataset(10, 5000, seed=2)
    recs = gen_queries(WorkloadSpec(2, 10, 2, seed=3), ds)
    assert len(recs) == 2
    M = _meta(recs, ds.schema)
    assert (~np.isnan(M)).sum(axis=1).tolist() == [4, 4]
    assert np.all(M[:, 0::2][~np.isnan(M[:, 0::2])] < M[:, 1::2][~np.isnan(M[:, 1::2])])
    again = gen_queries(WorkloadSpec(2, 10, 2, seed=3), ds)
    assert [r.to_json() for r in recs] == [r.to_json() for r in again]


def test_every_query_restricts_p_columns():
    ds = gen_dataset(20, 5000, seed=4)
    for p in (2, 10):
        recs = gen_queries(WorkloadSpec(30, 20, p, seed=p), ds)
        for r in recs:
            q = parse(r.sql, ds.schema)
            assert len({pr.attribute for pr in q.predicates}) == p
            assert all(pr.lb < pr.ub for pr in q.predicates)


def test_count_matches_row_loop():
    ds = gen_dataset(4, 1500, seed=5)
    recs = gen_queries(WorkloadSpec(40, 4, 2, seed=6), ds)
    rows = list(zip(*(ds.columns[n].tolist() for n in ds.schema.names)))
    idx = {n: i for i, n in enumerate(ds.schema.names)}
    for r in recs:
        q = parse(r.sql, ds.schema)
        n = 0
        for row in rows:
            if all(p.lb <= row[idx[p.attribute]] <= p.ub for p in q.predicates):
                n += 1
        assert r.answers["COUNT(*)"] == n


def test_selectivity_iqr_within_one_order():
    ds = gen_dataset(10, 20000, seed=8)
    counts = np.array([r.answers["COUNT(*)"] for r in gen_queries(WorkloadSpec(300, 10, 2, seed=9), ds)])
    q1, q3 = np.percentile(counts, [25, 75])
    assert q1 > 0 and q3 / q1 <= 10


def test_bin_count_targets_rows():
    ds = gen_dataset(3, 10000, seed=10)
    nb = choose_bin_count(ds, 2, target_rows=100)
    # each of the p=2 ranges keeps about 1/nb of the rows
    assert 10000 / nb**2 == pytest.approx(100, rel=0.25)


def test_analyst_workload_blobs():
    ds = gen_dataset(6, 5000, seed=11)
    recs = gen_analyst_workload(ds, n_analysts=2, sigma=0.02, n_queries=300, seed=12)
    M = _meta(recs, ds.schema)
    present = ~np.isnan(M)
    # every analyst restricts the same columns
    assert (present == present[0]).all()
    X = M[:, present[0]]
    labels = KMeans(2, n_init=10, random_state=0).fit_predict(X)
    assert silhouette_score(X, labels) > 0.5
    again = gen_analyst_workload(ds, n_analysts=2, sigma=0.02, n_queries=300, seed=12)
    assert [r.sql for r in recs] == [r.sql for r in again]


def test_single_analyst_is_unimodal():
    ds = gen_dataset(4, 5000, seed=13)
    recs = gen_analyst_workload(ds, n_analysts=1, sigma=0.02, n_queries=300, seed=14)
    M = _meta(recs, ds.schema)
    X = M[:, ~np.isnan(M[0])]
    centers = (X[:, 0::2] + X[:, 1::2]) / 2
    z = (centers - centers.mean(axis=0)) / (0.02 * (HIGH - LOW))
    # one Gaussian: spread matches sigma and nothing sits far out
    assert np.allclose(z.std(axis=0), 1.0, atol=0.2)
    assert np.abs(z).max() < 5
