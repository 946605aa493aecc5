"""Error metrics and experiment drivers."""

from __future__ import annotations

import json
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .catalogue import disk_size, save
from .engine import Predictor, TrainConfig, train
from .errors import InsufficientWorkload, MlaqpError, ZeroMean, ZeroTruth
from .querylog import LoggedQuery
from .schema import DatasetSchema
from .sql import parse
from .vectorize import vectorize, vectorize_group


def relative_error(y: float, yhat: float) -> float:
    if y == 0:
        raise ZeroTruth("relative error undefined for a zero answer")
    return abs(y - yhat) / abs(y)


def normalized_error(y: float, yhat: float, ybar: float) -> float:
    if ybar == 0:
        raise ZeroMean("normalized error undefined for a zero mean response")
    return abs(y - yhat) / abs(ybar)


def median_absolute_error(y, yhat) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    return float(np.median(np.abs(y - yhat)))


def split_workload(records: list, frac: float = 0.7, seed: int = 0) -> tuple[list, list]:
    """Seeded shuffle (numpy PCG64 permutation), first ``round(frac*n)`` train."""
    n = len(records)
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(frac * n))
    return [records[i] for i in perm[:k]], [records[i] for i in perm[k:]]


@dataclass
class AfMetrics:
    n_test: int
    median_relative_error: float
    median_normalized_error: float
    median_absolute_error: float
    coverage_ratio: float | None


@dataclass
class EvalReport:
    per_af: dict[str, AfMetrics] = field(default_factory=dict)
    latency: dict[str, float] = field(default_factory=dict)
    catalogue_bytes: int | None = None
    curve: dict[str, dict[str, float]] = field(default_factory=dict)
    n_train: int = 0
    n_test: int = 0

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "n_test": self.n_test,
            "per_af": {k: asdict(v) for k, v in sorted(self.per_af.items())},
            "latency": self.latency,
            "catalogue_bytes": self.catalogue_bytes,
            "curve": self.curve,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [f"train queries {self.n_train}, test queries {self.n_test}", "",
                 f"{'aggregate':<14}{'n':>6}{'med.rel':>10}{'med.norm':>10}{'MAE':>14}{'coverage':>10}"]
        for k, m in sorted(self.per_af.items()):
            cov = "-" if m.coverage_ratio is None else f"{m.coverage_ratio:.3f}"
            lines.append(f"{k:<14}{m.n_test:>6}{m.median_relative_error:>10.4f}"
                         f"{m.median_normalized_error:>10.4f}{m.median_absolute_error:>14.6g}{cov:>10}")
        if self.latency:
            lines.append("")
            for k, v in self.latency.items():
                lines.append(f"{k:<32}{v:>12.1f}")
        if self.catalogue_bytes is not None:
            lines.append(f"{'catalogue bytes':<32}{self.catalogue_bytes:>12d}")
        for n, errs in sorted(self.curve.items(), key=lambda kv: int(kv[0])):
            lines.append(f"n_train={n}: " + ", ".join(f"{k} {v:.4f}" for k, v in sorted(errs.items())))
        return "\n".join(lines)


def _test_rows(predictor: Predictor, records: list[LoggedQuery], schema: DatasetSchema):
    """Per-AF held-out (X, y), one row per answer (per group for GROUP BY)."""
    # encoded with the trained encoder so widths match the models
    out: dict[str, tuple[list, list]] = {}
    enc, groupby = predictor.catalogue.encoder, predictor.catalogue.groupby
    for rec in records:
        try:
            q = parse(rec.sql, schema)
        except MlaqpError:
            continue
        for key, ans in rec.answers.items():
            if key not in predictor.catalogue.entries:
                continue
            xs, ys = out.setdefault(key, ([], []))
            if isinstance(ans, list):
                for g in ans:
                    xs.append(vectorize_group(q, g["group"], schema, enc).values)
                    ys.append(float(g["value"]))
            else:
                xs.append(vectorize(q, schema, enc, groupby)[0][0].values)
                ys.append(float(ans))
    return {k: (np.vstack(x), np.asarray(y)) for k, (x, y) in out.items() if x}


def af_metrics(y: np.ndarray, yhat: np.ndarray, low=None, high=None) -> AfMetrics:
    ybar = float(np.mean(y))
    rel = []
    for a, b in zip(y.tolist(), yhat.tolist()):
        try:
            rel.append(relative_error(a, b))
        except ZeroTruth:
            rel.append(normalized_error(a, b, ybar) if ybar != 0 else abs(a - b))
    norm = np.abs(y - yhat) / abs(ybar) if ybar != 0 else np.abs(y - yhat)
    cov = None
    if low is not None:
        cov = float(np.mean((low <= y) & (y <= high)))
    return AfMetrics(int(y.size), float(np.median(rel)), float(np.median(norm)),
                     median_absolute_error(y, yhat), cov)


def evaluate(predictor: Predictor, test: list[LoggedQuery], schema: DatasetSchema) -> dict[str, AfMetrics]:
    out = {}
    for key, (X, y) in _test_rows(predictor, test, schema).items():
        entry = predictor.catalogue.entries[key]
        yhat = entry.estimate_batch(X)
        low = high = None
        if entry.interval is not None:
            low, high = entry.interval.bounds_batch(X)
        out[key] = af_metrics(y, yhat, low, high)
    return out


def measure_latency(predictor: Predictor, sqls: list[str], n: int = 10_000) -> dict[str, float]:
    """Per-prediction wall-clock latency in microseconds.

    ``inference`` times only the model call on a prepared meta-vector;
    ``end_to_end`` adds parsing and vectorization.
    """
    if not sqls:
        return {}
    prepared = []
    for s in sqls:
        q = predictor.parse(s)
        key = q.aggregates[0].key
        prepared.append((s, key, predictor.vectors(q)[0][0]))
    inf, e2e = np.empty(n), np.empty(n)
    clock = time.perf_counter
    for i in range(n):
        s, key, m = prepared[i % len(prepared)]
        entry = predictor.catalogue.entries[key]
        t0 = clock()
        entry.estimate(m)
        t1 = clock()
        q = predictor.parse(s)
        mv = predictor.vectors(q)[0][0]
        predictor.catalogue.entries[q.aggregates[0].key].estimate(mv)
        t2 = clock()
        inf[i] = t1 - t0
        e2e[i] = t2 - t1
    inf *= 1e6
    e2e *= 1e6
    return {
        "inference_mean_us": float(inf.mean()),
        "inference_p95_us": float(np.percentile(inf, 95)),
        "end_to_end_mean_us": float(e2e.mean()),
        "end_to_end_p95_us": float(np.percentile(e2e, 95)),
    }


def _check_size(records, schema):
    counts: dict[str, int] = {}
    for rec in records:
        for k in rec.answers:
            counts[k] = counts.get(k, 0) + 1
    if not counts or min(counts.values()) < 10:
        raise InsufficientWorkload("need at least 10 pairs per aggregate")


def run_protocol(records: list[LoggedQuery], schema: DatasetSchema, split: float = 0.7,
                 cfg: TrainConfig | None = None, seed: int = 0, latency_n: int = 0,
                 measure_storage: bool = True) -> tuple[EvalReport, Predictor]:
    _check_size(records, schema)
    train_recs, test_recs = split_workload(records, split, seed)
    cat, _ = train(train_recs, schema, cfg)
    pred = Predictor(cat)
    report = EvalReport(evaluate(pred, test_recs, schema), n_train=len(train_recs), n_test=len(test_recs))
    if latency_n:
        report.latency = measure_latency(pred, [r.sql for r in test_recs], latency_n)
    if measure_storage:
        with tempfile.TemporaryDirectory() as tmp:
            save(cat, f"{tmp}/cat")
            report.catalogue_bytes = disk_size(f"{tmp}/cat")
    return report, pred


def curve(records: list[LoggedQuery], schema: DatasetSchema, n_trains=(100, 300, 1000),
          split: float = 0.7, cfg: TrainConfig | None = None, seed: int = 0) -> dict[int, dict[str, float]]:
    """Median relative error per AF when training on the first n of the train split.

    The test split is the same for every n.
    """
    train_recs, test_recs = split_workload(records, split, seed)
    cfg = cfg or TrainConfig(intervals=False)
    out = {}
    for n in n_trains:
        if n > len(train_recs):
            raise InsufficientWorkload(f"curve point {n} exceeds {len(train_recs)} training queries")
        cat, _ = train(train_recs[:n], schema, cfg)
        metrics = evaluate(Predictor(cat), test_recs, schema)
        out[n] = {k: m.median_relative_error for k, m in metrics.items()}
    return out


def pooled_median_relative_error(predictor: Predictor, test: list[LoggedQuery], schema: DatasetSchema) -> float:
    """Median relative error over every held-out answer of every AF."""
    errs = []
    for key, (X, y) in _test_rows(predictor, test, schema).items():
        yhat = predictor.catalogue.entries[key].estimate_batch(X)
        ybar = float(np.mean(y))
        for a, b in zip(y.tolist(), yhat.tolist()):
            errs.append(relative_error(a, b) if a != 0 else normalized_error(a, b, ybar))
    return float(np.median(errs))


def sensitivity(cells=((10, 2), (10, 10), (20, 2), (20, 10)), n_queries: int = 1429,
                n_rows: int = 100_000, seed: int = 0, cfg: TrainConfig | None = None) -> dict:
    """Pooled median relative error per (d, p) cell of the synthetic grid."""
    from .workload import WorkloadSpec, gen_dataset, gen_queries

    cfg = cfg or TrainConfig(intervals=False)
    out = {}
    for d, p in cells:
        ds = gen_dataset(d, n_rows, seed=seed)
        recs = gen_queries(WorkloadSpec(n_queries, d, p, seed=seed + 1), ds)
        train_recs, test_recs = split_workload(recs, 0.7, seed)
        cat, _ = train(train_recs, ds.schema, cfg)
        pred = Predictor(cat)
        per_af = {k: m.median_relative_error for k, m in evaluate(pred, test_recs, ds.schema).items()}
        out[(d, p)] = {"pooled": pooled_median_relative_error(pred, test_recs, ds.schema), "per_af": per_af}
    return out
