"""Training pipeline (query log to catalogue) and the prediction front end."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .catalogue import CatalogueEntry, ModelCatalogue
from .cluster import ClusterSet, fit_local_models
from .drift import AnswerEcdf, WorkloadStats
from .errors import (
    InsufficientData,
    InsufficientWorkload,
    MlaqpError,
    SingularCovariance,
    UnknownAggregate,
    WidthMismatch,
)
from .gbdt import GbdtConfig, fit
from .intervals import fit_interval
from .querylog import LoggedQuery
from .schema import AggregateSpec, DatasetSchema, MetaVector, QueryAnswerPair, validate_pair
from .sql import ParsedQuery, parse
from .vectorize import CategoricalEncoder, GroupByCatalogue, vectorize, vectorize_group

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    point: GbdtConfig = field(default_factory=GbdtConfig.point)
    quantile: GbdtConfig = field(default_factory=GbdtConfig.quantile)
    t: float = 0.1
    intervals: bool = True
    clustering: bool = False
    min_cluster_size: int = 20
    growth_threshold: float | None = None
    max_bad_fraction: float = 0.1


@dataclass
class LineIssue:
    line: int
    message: str


@dataclass
class PreparedWorkload:
    """Vectorized training data grouped by aggregate key."""

    encoder: CategoricalEncoder
    groupby: GroupByCatalogue
    X: dict[str, np.ndarray]
    y: dict[str, np.ndarray]
    issues: list[LineIssue]


def _parse_all(records, schema, line_numbers=None):
    parsed, issues = [], []
    numbers = line_numbers if line_numbers is not None else range(1, len(records) + 1)
    for no, rec in zip(numbers, records):
        try:
            parsed.append((no, rec, parse(rec.sql, schema)))
        except MlaqpError as exc:
            issues.append(LineIssue(no, str(exc)))
    return parsed, issues


def prepare(records: list[LoggedQuery], schema: DatasetSchema, max_bad_fraction: float = 0.1,
            issues: list[LineIssue] | None = None, line_numbers: list[int] | None = None) -> PreparedWorkload:
    """Parse, encode and vectorize a query log.

    ``issues`` carries problems found before parsing (e.g. malformed JSON),
    counted against ``max_bad_fraction`` together with unparseable SQL.
    ``line_numbers`` gives each record's line in the source file.
    """
    issues = list(issues or [])
    total = len(records) + len(issues)
    if not records:
        raise InsufficientWorkload("empty query log")
    parsed, parse_issues = _parse_all(records, schema, line_numbers)
    issues += parse_issues
    if len(issues) > max_bad_fraction * total:
        raise InsufficientWorkload(f"{len(issues)} of {total} log lines unusable")

    cat_values: dict[str, set] = {}
    groupby = GroupByCatalogue()
    for _, rec, q in parsed:
        for name, value in q.categorical_equalities:
            cat_values.setdefault(name, set()).add(value)
        if q.group_by:
            groups = set()
            for ans in rec.answers.values():
                if isinstance(ans, list):
                    groups.update(tuple(g["group"]) for g in ans)
            for g in groups:
                for name, value in zip(q.group_by, g):
                    if schema.attribute(name).is_categorical:
                        cat_values.setdefault(name, set()).add(str(value))
            groupby.add(q.group_by, groups)
    enc = CategoricalEncoder.fit(schema, cat_values)

    rows: dict[str, list] = {}
    targets: dict[str, list] = {}
    for no, rec, q in parsed:
        keys = {a.key for a in q.aggregates}
        for key, ans in rec.answers.items():
            if key not in keys:
                issues.append(LineIssue(no, f"answer for {key} not selected by the query"))
                continue
            af = AggregateSpec.from_key(key)
            if isinstance(ans, list):
                items = [(vectorize_group(q, g["group"], schema, enc), g["value"]) for g in ans]
            elif q.group_by:
                issues.append(LineIssue(no, f"grouped query needs per-group answers for {key}"))
                continue
            else:
                items = [(vectorize(q, schema, enc)[0][0], ans)]
            for m, v in items:
                try:
                    validate_pair(QueryAnswerPair(m, af, float(v)), schema, enc.width)
                except MlaqpError as exc:
                    issues.append(LineIssue(no, str(exc)))
                    continue
                rows.setdefault(key, []).append(m.values)
                targets.setdefault(key, []).append(float(v))
    X = {k: np.vstack(v) for k, v in rows.items()}
    y = {k: np.asarray(v) for k, v in targets.items()}
    return PreparedWorkload(enc, groupby, X, y, issues)


def train(records: list[LoggedQuery], schema: DatasetSchema, cfg: TrainConfig | None = None,
          issues: list[LineIssue] | None = None,
          line_numbers: list[int] | None = None) -> tuple[ModelCatalogue, list[LineIssue]]:
    cfg = cfg or TrainConfig()
    prep = prepare(records, schema, cfg.max_bad_fraction, issues, line_numbers)
    if not prep.X:
        raise InsufficientWorkload("no usable query/answer pairs")
    cat = ModelCatalogue(schema, prep.encoder, groupby=prep.groupby)
    all_vectors = []
    for key in sorted(prep.X):
        X, y = prep.X[key], prep.y[key]
        try:
            point = fit(X, y, cfg.point)
        except InsufficientData as exc:
            prep.issues.append(LineIssue(0, f"{key}: {exc}; no model trained"))
            continue
        interval = None
        if cfg.intervals:
            try:
                interval = fit_interval(X, y, cfg.t, cfg.quantile)
            except InsufficientData as exc:
                prep.issues.append(LineIssue(0, f"{key}: {exc}; no interval model"))
        ensemble = None
        if cfg.clustering:
            cs = ClusterSet(X.shape[1], cfg.growth_threshold)
            for row in X:
                cs.observe(row)
            ensemble = fit_local_models(cs, X, y, cfg.point, cfg.min_cluster_size)
        cat.add(key, CatalogueEntry(point, interval, ensemble))
        cat.answer_samples[key] = AnswerEcdf(y)
        all_vectors.append(X)
        log.info("trained %s on %d pairs (%d trees)", key, y.size, point.n_trees)
    if all_vectors:
        try:
            cat.workload_stats = WorkloadStats.fit(np.unique(np.vstack(all_vectors), axis=0))
        except SingularCovariance:
            log.warning("workload covariance is singular; workload monitoring disabled")
    cat.info = {"t": cfg.t, "clustering": cfg.clustering, "pairs": {k: int(v.size) for k, v in prep.y.items()}}
    return cat, prep.issues


def _result(key, entry, m, group=None):
    iv = entry.interval_for(m)
    out = {"model_id": key, "estimate": entry.estimate(m),
           "interval": None if iv is None else iv.to_dict()}
    if group is not None:
        out["group"] = list(group)
    return out


class Predictor:
    """Answers SQL or pre-extracted queries from a loaded catalogue only."""

    def __init__(self, catalogue: ModelCatalogue):
        self.catalogue = catalogue

    @property
    def schema(self) -> DatasetSchema:
        return self.catalogue.schema

    def _entry(self, key: str) -> CatalogueEntry:
        try:
            return self.catalogue.entries[key]
        except KeyError:
            raise UnknownAggregate(key, self.catalogue.entries) from None

    def parse(self, sql: str) -> ParsedQuery:
        return parse(sql, self.schema)

    def vectors(self, q: ParsedQuery):
        return vectorize(q, self.schema, self.catalogue.encoder, self.catalogue.groupby)

    def predict_parsed(self, q: ParsedQuery) -> list[dict]:
        entries = [(a.key, self._entry(a.key)) for a in q.aggregates]
        rows = self.vectors(q)
        results = []
        for key, entry in entries:
            if q.group_by:
                groups = [_result(key, entry, m, g) for m, g in rows]
                results.append({"model_id": key, "estimate": None, "interval": None, "groups": groups})
            else:
                results.append(_result(key, entry, rows[0][0]))
        return results

    def predict_sql(self, sql: str) -> dict:
        t0 = time.perf_counter()
        results = self.predict_parsed(self.parse(sql))
        return _envelope(results, t0)

    def predict_extracted(self, af: str, meta) -> dict:
        """``meta`` is a sparse ``{slot: value}`` map or a full list of slots."""
        t0 = time.perf_counter()
        key = AggregateSpec.from_key(af).key
        entry = self._entry(key)
        width = self.catalogue.width
        if isinstance(meta, dict):
            m = MetaVector.from_slots(width, meta)
        else:
            vals = [math.nan if v is None else float(v) for v in meta]
            if len(vals) != width:
                raise WidthMismatch(f"expected {width} slots, got {len(vals)}")
            m = MetaVector(vals)
        return _envelope([_result(key, entry, m)], t0)

    def estimate(self, key: str, m) -> float:
        return self._entry(key).estimate(m)


def _envelope(results: list[dict], t0: float) -> dict:
    micros = int(round((time.perf_counter() - t0) * 1e6))
    if len(results) == 1:
        out = dict(results[0])
    else:
        out = {"results": results}
    out["latency_micros"] = micros
    return out
