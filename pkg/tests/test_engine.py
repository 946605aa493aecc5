import math

import numpy as np
import pytest

from mlaqp.engine import Predictor, TrainConfig, prepare, train
from mlaqp.errors import InsufficientWorkload, UnknownAggregate, WidthMismatch
from mlaqp.gbdt import GbdtConfig
from mlaqp.querylog import LoggedQuery
from mlaqp.schema import Attribute, DatasetSchema

from conftest import FAST


def _two_af_log(n=80, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        lo = float(rng.uniform(0, 50))
        out.append(LoggedQuery(f"SELECT COUNT(*), AVG(a2) FROM T WHERE a1 BETWEEN {lo!r} AND {lo + 10!r}",
                               {"COUNT(*)": int(3 * lo) + 1, "AVG(a2)": lo / 2}))
    return out


T = DatasetSchema.numeric("T", ["a1", "a2"])


def test_two_afs_two_entries():
    cat, issues = train(_two_af_log(), T, FAST)
    assert sorted(cat.entries) == ["AVG(a2)", "COUNT(*)"]
    assert not issues
    assert all(e.interval is not None for e in cat.entries.values())
    assert cat.workload_stats is not None and set(cat.answer_samples) == set(cat.entries)


def test_groupby_populates_catalogue():
    schema = DatasetSchema("S", (Attribute("x"), Attribute("region", "categorical", 3)))
    rng = np.random.default_rng(1)
    log = []
    for _ in range(60):
        lo = float(rng.uniform(0, 10))
        groups = [{"group": [r], "value": float(lo * (i + 1))} for i, r in enumerate(("east", "west"))]
        log.append(LoggedQuery(f"SELECT SUM(x) FROM S WHERE x BETWEEN {lo!r} AND 20.0 GROUP BY region",
                               {"SUM(x)": groups}))
    cat, _ = train(log, schema, FAST)
    assert cat.groupby.entries[("region",)] == [("east",), ("west",)]
    res = Predictor(cat).predict_sql("SELECT SUM(x) FROM S WHERE x BETWEEN 1.0 AND 20.0 GROUP BY region")
    assert [g["group"] for g in res["groups"]] == [["east"], ["west"]]
    east, west = (g["estimate"] for g in res["groups"])
    assert west > east


def test_empty_log():
    with pytest.raises(InsufficientWorkload):
        train([], T)


def test_bad_line_budget():
    good = _two_af_log(40)
    bad = [LoggedQuery("SELECT COUNT(*) FROM T WHERE a1 > 1 OR a2 < 2", {"COUNT(*)": 1})] * 5
    prep = prepare(good + bad[:4], T)
    assert [i.line for i in prep.issues] == [41, 42, 43, 44]
    with pytest.raises(InsufficientWorkload):
        prepare(good + bad, T)


def test_answer_not_selected_is_reported():
    log = _two_af_log(40) + [LoggedQuery("SELECT COUNT(*) FROM T", {"MAX(a1)": 1.0})]
    prep = prepare(log, T)
    assert len(prep.issues) == 1 and "not selected" in prep.issues[0].message


def test_small_sample_skips_intervals():
    cfg = TrainConfig(point=GbdtConfig.point(rounds=20), quantile=GbdtConfig.quantile(rounds=20))
    cat, issues = train(_two_af_log(30), T, cfg)
    assert all(e.interval is None for e in cat.entries.values())
    assert any("no interval" in i.message for i in issues)


def test_sql_and_extracted_agree():
    cat, _ = train(_two_af_log(), T, FAST)
    pred = Predictor(cat)
    sql = "SELECT AVG(a2) FROM T WHERE a1 BETWEEN 12.5 AND 22.5"
    a = pred.predict_sql(sql)
    m = pred.vectors(pred.parse(sql))[0][0]
    sparse = {str(i): v for i, v in enumerate(m.values) if not math.isnan(v)}
    b = pred.predict_extracted("AVG(a2)", sparse)
    c = pred.predict_extracted("avg(a2)", [None if math.isnan(v) else v for v in m.values])
    assert a["estimate"] == b["estimate"] == c["estimate"]
    assert a["interval"] == b["interval"] and a["model_id"] == "AVG(a2)"
    assert isinstance(a["latency_micros"], int)
    lo, hi = a["interval"]["low"], a["interval"]["high"]
    assert lo <= hi and a["interval"]["nominal_coverage"] == pytest.approx(0.9)


def test_prediction_errors():
    pred = Predictor(train(_two_af_log(), T, FAST)[0])
    with pytest.raises(UnknownAggregate) as info:
        pred.predict_sql("SELECT MIN(a1) FROM T")
    assert "COUNT(*)" in str(info.value)
    with pytest.raises(WidthMismatch):
        pred.predict_extracted("COUNT(*)", [1.0, 2.0])
    multi = pred.predict_sql("SELECT COUNT(*), AVG(a2) FROM T WHERE a1 BETWEEN 1.0 AND 2.0")
    assert [r["model_id"] for r in multi["results"]] == ["COUNT(*)", "AVG(a2)"]
