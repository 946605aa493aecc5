"""Synthetic datasets and query workloads."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRange, EmptySelection
from .executor import ColumnarDataset, execute_aggregate
from .querylog import LoggedQuery
from .schema import AggregateSpec, DatasetSchema, Predicate
from .sql import ParsedQuery

LOW, HIGH = 1e-8, 1e8
DEFAULT_ROWS = 100_000
DEFAULT_BINS = 100
TARGET_ROWS = 100
MAX_RESAMPLE = 20

DEFAULT_AFS = (
    AggregateSpec("COUNT"),
    AggregateSpec("SUM", "a1"),
    AggregateSpec("AVG", "a1"),
    AggregateSpec("MAX", "a1"),
)

# (d, p) cells of the synthetic grid
SYNTHETIC_GRID = tuple((d, p) for d in (10, 20, 50, 100) for p in (2, 10, 20, 50) if p <= d)


def gen_dataset(d: int, n_rows: int = DEFAULT_ROWS, seed: int = 0, name: str = "synthetic") -> ColumnarDataset:
    if d < 1 or n_rows < 1:
        raise ValueError("d and n_rows must be >= 1")
    rng = np.random.default_rng(seed)
    names = [f"a{i + 1}" for i in range(d)]
    data = rng.uniform(LOW, HIGH, size=(d, n_rows))
    return ColumnarDataset(DatasetSchema.numeric(name, names), {n: data[i] for i, n in enumerate(names)})


def _numeric_columns(ds: ColumnarDataset, attrs=None) -> list[str]:
    attrs = ds.schema.names if attrs is None else list(attrs)
    return [a for a in attrs if not ds.schema.attribute(a).is_categorical]


def derive_range_size(ds: ColumnarDataset, n_bins: int = DEFAULT_BINS, attrs=None) -> float:
    """Mean histogram bin width over the numeric columns."""
    cols = _numeric_columns(ds, attrs)
    widths = [(float(ds.columns[a].max()) - float(ds.columns[a].min())) / n_bins for a in cols]
    return float(np.mean(widths))


def choose_bin_count(ds: ColumnarDataset, p: int, target_rows: int = TARGET_ROWS,
                     max_bins: int = 1000, attrs=None) -> int:
    """Bin count whose typical bin frequency puts ``target_rows`` in a p-way box.

    A query restricting p columns to one bin each selects about
    ``n * f**p`` rows, where ``f`` is the median bin frequency share.
    """
    cols = _numeric_columns(ds, attrs)
    n = ds.n_rows
    best, best_err = 1, math.inf
    for nb in range(1, max_bins + 1):
        shares = [np.median(np.histogram(ds.columns[a], bins=nb)[0]) / n for a in cols]
        expected = n * float(np.mean(shares)) ** p
        if expected <= 0:
            break
        err = abs(math.log(expected / target_rows))
        if err < best_err:
            best, best_err = nb, err
        elif expected < target_rows:
            break
    return best


@dataclass(frozen=True)
class WorkloadSpec:
    n_queries: int
    d: int
    p: int
    range_size: float | None = None
    seed: int = 0
    afs: tuple[AggregateSpec, ...] = DEFAULT_AFS
    table: str = "synthetic"

    def __post_init__(self):
        if self.p > self.d:
            raise ValueError("p must not exceed d")
        if self.n_queries < 1 or self.p < 1:
            raise ValueError("n_queries and p must be >= 1")
        if self.range_size is not None and not self.range_size > 0:
            raise DegenerateRange("range size must be > 0")


def format_sql(table: str, afs, predicates) -> str:
    sel = ", ".join(a.key for a in afs)
    where = " AND ".join(f"{p.attribute} BETWEEN {float(p.lb)!r} AND {float(p.ub)!r}" for p in predicates)
    return f"SELECT {sel} FROM {table}" + (f" WHERE {where}" if where else "")


def _bounds(ds, names):
    return {a: (float(ds.columns[a].min()), float(ds.columns[a].max())) for a in names}


def _box(center: float, r: float, lo: float, hi: float) -> tuple[float, float]:
    # clamp so the whole range lies inside the column's domain
    if hi - lo <= r:
        return lo, hi
    c = min(max(center, lo + r / 2), hi - r / 2)
    return float(c - r / 2), float(c + r / 2)


def _labelled(ds, afs, table, preds):
    q = ParsedQuery(table, tuple(afs), tuple(preds))
    try:
        ans = execute_aggregate(ds, q)
    except EmptySelection:
        return None
    return LoggedQuery(format_sql(table, afs, preds), ans)


def gen_queries(spec: WorkloadSpec, ds: ColumnarDataset) -> list[LoggedQuery]:
    """Random range queries restricting exactly ``spec.p`` columns each."""
    names = ds.schema.names
    if spec.d != len(names):
        raise ValueError(f"spec has d={spec.d} but dataset has {len(names)} columns")
    r = spec.range_size
    if r is None:
        r = derive_range_size(ds, choose_bin_count(ds, spec.p))
    if not r > 0:
        raise DegenerateRange("range size is zero")
    bounds = _bounds(ds, names)
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.n_queries):
        for _attempt in range(MAX_RESAMPLE):
            cols = np.sort(rng.choice(len(names), size=spec.p, replace=False))
            z = rng.uniform(LOW, HIGH, size=spec.p)
            preds = [Predicate(names[c], *_box(z[j], r, *bounds[names[c]])) for j, c in enumerate(cols)]
            rec = _labelled(ds, spec.afs, spec.table, preds)
            if rec is not None:
                out.append(rec)
                break
        else:
            raise DegenerateRange(f"{MAX_RESAMPLE} consecutive empty selections; range too small")
    return out


def gen_analyst_workload(ds: ColumnarDataset, n_analysts: int = 2, sigma: float = 0.02,
                         n_queries: int = 1000, afs=DEFAULT_AFS, seed: int = 0, p: int = 2,
                         range_size: float | None = None, table: str = "synthetic") -> list[LoggedQuery]:
    """Queries from analysts who each favour one region of the data.

    All analysts restrict the same ``p`` columns (drawn once).  Analyst ``j``
    draws range centers from a Gaussian around its own random point of the
    bounding box; ``sigma`` is the standard deviation as a fraction of each
    column's span.
    """
    names = _numeric_columns(ds)
    if p > len(names):
        raise ValueError("p exceeds the number of numeric columns")
    rng = np.random.default_rng(seed)
    r = range_size if range_size is not None else derive_range_size(ds, choose_bin_count(ds, p), names)
    bounds = _bounds(ds, names)
    cols = [names[c] for c in np.sort(rng.choice(len(names), size=p, replace=False))]
    analysts = [[rng.uniform(bounds[c][0] + r, bounds[c][1] - r) for c in cols] for _ in range(n_analysts)]
    out = []
    for _ in range(n_queries):
        means = analysts[int(rng.integers(n_analysts))]
        for _attempt in range(MAX_RESAMPLE):
            preds = []
            for c, mu in zip(cols, means):
                lo, hi = bounds[c]
                preds.append(Predicate(c, *_box(rng.normal(mu, sigma * (hi - lo)), r, lo, hi)))
            rec = _labelled(ds, afs, table, preds)
            if rec is not None:
                out.append(rec)
                break
        else:
            raise DegenerateRange(f"{MAX_RESAMPLE} consecutive empty selections; range too small")
    return out
