"""In-memory exact aggregate executor over columnar data.

Produces ground-truth labels and DISTINCT results; it stands in for the data
warehouse and is never consulted at prediction time.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import EmptySelection
from .schema import AggregateSpec, DatasetSchema, load_schema
from .sql import ParsedQuery


@dataclass(frozen=True)
class ColumnarDataset:
    schema: DatasetSchema
    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        lengths = set()
        for attr in self.schema.attributes:
            if attr.name not in self.columns:
                raise ValueError(f"missing column {attr.name!r}")
            col = self.columns[attr.name]
            lengths.add(len(col))
            if not attr.is_categorical and not np.all(np.isfinite(col)):
                raise ValueError(f"numeric column {attr.name!r} has non-finite values")
        if len(lengths) > 1:
            raise ValueError("columns differ in length")

    @property
    def n_rows(self) -> int:
        return len(self.columns[self.schema.attributes[0].name])

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]


def load_csv(csv_path: str | Path, schema: DatasetSchema | str | Path) -> ColumnarDataset:
    """Read a headered CSV whose columns are declared by a JSON schema file."""
    if not isinstance(schema, DatasetSchema):
        schema = load_schema(schema)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = list(reader)
    idx = {h.strip(): j for j, h in enumerate(header)}
    cols = {}
    for attr in schema.attributes:
        if attr.name not in idx:
            raise ValueError(f"CSV lacks column {attr.name!r}")
        j = idx[attr.name]
        vals = [row[j] for row in raw]
        if attr.is_categorical:
            cols[attr.name] = np.array(vals, dtype=object)
        else:
            cols[attr.name] = np.array([float(v) for v in vals], dtype=np.float64)
    return ColumnarDataset(schema, cols)


def save_csv(ds: ColumnarDataset, path: str | Path) -> None:
    names = ds.schema.names
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        cols = [ds.columns[n] for n in names]
        for i in range(ds.n_rows):
            w.writerow([repr(float(c[i])) if c.dtype != object else c[i] for c in cols])


@lru_cache(maxsize=256)
def like_to_regex(pattern: str) -> re.Pattern:
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("".join(out), re.DOTALL)


def selection_mask(ds: ColumnarDataset, q: ParsedQuery) -> np.ndarray:
    mask = np.ones(ds.n_rows, dtype=bool)
    for p in q.predicates:
        col = ds.columns[p.attribute]
        if p.lb is not None:
            mask &= col >= p.lb
        if p.ub is not None:
            mask &= col <= p.ub
    for name, value in q.categorical_equalities:
        mask &= ds.columns[name] == value
    for name, pattern in q.like_patterns:
        rx = like_to_regex(pattern)
        col = ds.columns[name]
        uniq, inv = np.unique(col.astype(str), return_inverse=True)
        hit = np.array([rx.fullmatch(u) is not None for u in uniq], dtype=bool)
        mask &= hit[inv]
    return mask


def aggregate(af: AggregateSpec, values: np.ndarray | None, count: int) -> float:
    """Apply one AF to the selected target values.

    SUM is the correctly rounded sum (``math.fsum``); AVG is that sum divided
    by the row count.
    """
    fn = af.function
    if fn == "COUNT":
        return float(count)
    if fn == "SUM":
        return math.fsum(values.tolist()) if count else 0.0
    if count == 0:
        raise EmptySelection(f"{af.key} over an empty selection")
    if fn == "AVG":
        return math.fsum(values.tolist()) / count
    if fn == "MIN":
        return float(values.min())
    return float(values.max())


def execute_aggregate(ds: ColumnarDataset, q: ParsedQuery, on_empty: str = "raise"):
    """Exact answers keyed by AF key, or ``{group tuple: {AF key: value}}``.

    ``on_empty="omit"`` drops AVG/MIN/MAX answers over empty selections
    instead of raising :class:`EmptySelection`.
    """
    mask = selection_mask(ds, q)
    if not q.group_by:
        return _fold(ds, q, mask, on_empty)
    keys = [ds.columns[g][mask] for g in q.group_by]
    sel = np.flatnonzero(mask)
    groups: dict[tuple, list[int]] = {}
    for row, key in zip(sel.tolist(), zip(*[k.tolist() for k in keys])):
        groups.setdefault(key, []).append(row)
    out = {}
    for key in sorted(groups, key=lambda t: tuple(str(x) if isinstance(x, str) else x for x in t)):
        gmask = np.zeros(ds.n_rows, dtype=bool)
        gmask[groups[key]] = True
        out[key] = _fold(ds, q, gmask, on_empty)
    return out


def _fold(ds, q, mask, on_empty):
    count = int(mask.sum())
    res = {}
    for af in q.aggregates:
        vals = None if af.target_attribute is None else ds.columns[af.target_attribute][mask]
        try:
            res[af.key] = aggregate(af, vals, count)
        except EmptySelection:
            if on_empty != "omit":
                raise
    return res


def select_distinct(ds: ColumnarDataset, attrs) -> list[tuple]:
    attrs = tuple(attrs)
    if not attrs:
        raise ValueError("select_distinct needs at least one attribute")
    if ds.n_rows == 0:
        return []
    cols = []
    for a in attrs:
        c = ds.columns[a]
        cols.append(c.tolist() if c.dtype == object else c.astype(float).tolist())
    return sorted(set(zip(*cols)))
