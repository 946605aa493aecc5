import io
import json
import os
import threading
import time

import numpy as np
import pytest

from mlaqp.catalogue import ModelCatalogue
from mlaqp.drift import AnswerEcdf, WorkloadStats
from mlaqp.monitoring import LogMonitor, follow, run_monitor
from mlaqp.querylog import LoggedQuery
from mlaqp.schema import Predicate
from mlaqp.sql import parse
from mlaqp.vectorize import CategoricalEncoder, vectorize
from mlaqp.workload import WorkloadSpec, format_sql, gen_dataset, gen_queries


@pytest.fixture(scope="module")
def pool():
    ds = gen_dataset(4, 5000, seed=21)
    recs = gen_queries(WorkloadSpec(4000, 4, 2, seed=22), ds)
    enc = CategoricalEncoder.fit(ds.schema)
    X = np.vstack([vectorize(parse(r.sql, ds.schema), ds.schema, enc)[0][0].values for r in recs])
    return ds.schema, enc, recs, X


def _monitor(pool, idx, **kw):
    schema, enc, recs, X = pool
    answers = {k: AnswerEcdf([recs[i].answers[k] for i in idx]) for k in recs[0].answers}
    stats = WorkloadStats.fit(np.unique(X[idx], axis=0))
    cat = ModelCatalogue(schema, enc, answer_samples=answers, workload_stats=stats)
    return LogMonitor(cat, **kw)


def _lines(recs):
    return [r.to_json() for r in recs]


def test_quiet_on_matching_stream(pool):
    # defaults: alpha 0.01, window 500, a check every 100 queries
    _, _, recs, _ = pool
    rng = np.random.default_rng(0)
    trials, quiet = 60, 0
    for _ in range(trials):
        perm = rng.permutation(len(recs))
        mon = _monitor(pool, perm[:1000])
        out = io.StringIO()
        quiet += run_monitor(mon, _lines([recs[i] for i in perm[1000:2000]]), out) == 0
    assert quiet / trials >= 0.95


def test_answer_switch_fires_within_200(pool):
    _, _, recs, _ = pool
    perm = np.random.default_rng(1).permutation(len(recs))
    mon = _monitor(pool, perm[:1000])
    live = [recs[i] for i in perm[1000:1600]]
    switched = [LoggedQuery(r.sql, {**r.answers, "COUNT(*)": 3 * r.answers["COUNT(*)"]}) for r in live[300:]]
    out = io.StringIO()
    run_monitor(mon, _lines(live[:300] + switched), out)
    events = [json.loads(line) for line in out.getvalue().splitlines()]
    data = [e for e in events if e["kind"] == "data"]
    assert data and data[0]["af"] == "COUNT(*)"
    assert data[0]["position"] - 300 <= 200
    assert all(e["position"] > 300 for e in events)
    assert data[0]["retrain_recommended"]


def test_center_shift_fires_workload_event(pool):
    schema, _, recs, _ = pool
    perm = np.random.default_rng(2).permutation(len(recs))
    mon = _monitor(pool, perm[:1000])
    shifted = []
    for i in perm[1000:1600]:
        q = parse(recs[i].sql, schema)
        # move every range three column spans past the training centers
        preds = [Predicate(p.attribute, p.lb + 3e8, p.ub + 3e8) for p in q.predicates]
        shifted.append(LoggedQuery(format_sql("synthetic", q.aggregates, preds), recs[i].answers))
    out = io.StringIO()
    run_monitor(mon, _lines(shifted), out)
    kinds = {json.loads(line)["kind"] for line in out.getvalue().splitlines()}
    assert "workload" in kinds


def test_bad_lines_are_skipped(pool):
    _, _, recs, _ = pool
    mon = _monitor(pool, np.arange(1000))
    lines = ["not json", json.dumps({"sql": "SELECT COUNT(*) FROM synthetic WHERE", "answers": {}}), "",
             recs[0].to_json()]
    assert run_monitor(mon, lines, io.StringIO()) == 0
    assert mon.errors == 2
    assert {s["kind"] for s in mon.status()} == {"data", "workload"}


def test_follow_survives_rotation(tmp_path):
    path = tmp_path / "live.jsonl"
    path.write_text("a\nb\n")

    def writer():
        time.sleep(0.3)
        os.rename(path, tmp_path / "live.jsonl.1")
        with open(tmp_path / "live.jsonl.1", "a") as fh:
            fh.write("c\n")
        path.write_text("d\n")
        time.sleep(0.3)
        with open(path, "a") as fh:
            fh.write("e\nf")

    t = threading.Thread(target=writer)
    t.start()
    got = list(follow(path, poll=0.05, idle_timeout=1.0))
    t.join()
    assert got == ["a", "b", "c", "d", "e", "f"]


def test_follow_truncation(tmp_path):
    path = tmp_path / "live.jsonl"
    path.write_text("one\ntwo\n")

    def writer():
        time.sleep(0.3)
        path.write_text("x\n")

    t = threading.Thread(target=writer)
    t.start()
    got = list(follow(path, poll=0.05, idle_timeout=1.0))
    t.join()
    assert got == ["one", "two", "x"]
