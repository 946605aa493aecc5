"""Turn parsed queries into meta-vectors.

Layout: the ``2d`` base slots come first, in schema order, followed by one
(lb, ub) pair per dummy column of every dummy-encoded categorical attribute.
Numeric slot indices therefore do not move when categorical vocabularies
change.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import MissingCatalogueEntry
from .schema import MISSING, Attribute, DatasetSchema, MetaVector
from .sql import ParsedQuery

log = logging.getLogger(__name__)

CARDINALITY_THRESHOLD = 1000

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def stable_hash_real(value: str) -> float:
    """FNV-1a 64-bit hash of the UTF-8 bytes, top 53 bits, as an exact float."""
    return float(fnv1a_64(str(value).encode("utf-8")) >> 11)


DUMMY = "dummy"
HASHED = "hashed"


@dataclass
class CategoricalEncoder:
    """Per-attribute categorical encoding state.

    ``modes`` maps attribute name to ``("dummy", [values...])`` or
    ``("hashed", None)``.  Dummy vocabularies are sorted so the encoding is
    identical across runs.
    """

    schema: DatasetSchema
    cardinality_threshold: int = CARDINALITY_THRESHOLD
    modes: dict[str, tuple[str, list | None]] = field(default_factory=dict)

    def __post_init__(self):
        self._rebuild()

    @classmethod
    def fit(cls, schema: DatasetSchema, values: dict[str, Iterable[str]] | None = None,
            cardinality_threshold: int = CARDINALITY_THRESHOLD) -> "CategoricalEncoder":
        values = values or {}
        modes: dict[str, tuple[str, list | None]] = {}
        for attr in schema.attributes:
            if not attr.is_categorical:
                continue
            if attr.cardinality < cardinality_threshold:
                vocab = sorted({str(v) for v in values.get(attr.name, ())})
                modes[attr.name] = (DUMMY, vocab)
            else:
                modes[attr.name] = (HASHED, None)
        return cls(schema, cardinality_threshold, modes)

    def _rebuild(self):
        self._offsets: dict[str, dict[str, int]] = {}
        col = self.schema.d
        for attr in self.schema.attributes:
            mode = self.modes.get(attr.name)
            if mode is None or mode[0] != DUMMY:
                continue
            if attr.cardinality >= self.cardinality_threshold:
                raise ValueError(f"dummy mode needs cardinality < {self.cardinality_threshold}")
            self._offsets[attr.name] = {v: col + j for j, v in enumerate(mode[1])}
            col += len(mode[1])
        self._n_columns = col

    @property
    def n_columns(self) -> int:
        """Schema columns plus dummy columns (the d' of a 2d'-wide vector)."""
        return self._n_columns

    @property
    def width(self) -> int:
        return 2 * self._n_columns

    def mode_of(self, name: str) -> str:
        return self.modes.get(name, (HASHED, None))[0]

    def dummy_column(self, name: str, value: str) -> int | None:
        return self._offsets.get(name, {}).get(str(value))

    def to_dict(self) -> dict:
        return {
            "cardinality_threshold": self.cardinality_threshold,
            "modes": {k: {"mode": m, "values": v} for k, (m, v) in self.modes.items()},
        }

    @classmethod
    def from_dict(cls, schema: DatasetSchema, doc: dict) -> "CategoricalEncoder":
        modes = {k: (v["mode"], v.get("values")) for k, v in doc["modes"].items()}
        return cls(schema, doc["cardinality_threshold"], modes)


def encode_categorical(attr: Attribute, value: str, enc: CategoricalEncoder) -> dict[int, float]:
    """Slot assignments encoding ``attr = value``.

    Dummy mode sets the value's column pair to (1, 1); an unseen value yields
    no assignment (all-missing block) and a warning.  Hashed mode writes the
    stable hash into the attribute's own pair.
    """
    if not attr.is_categorical:
        raise ValueError(f"{attr.name!r} is not categorical")
    if enc.mode_of(attr.name) == DUMMY:
        col = enc.dummy_column(attr.name, value)
        if col is None:
            log.warning("unseen value %r for dummy-encoded attribute %r; encoded as missing",
                        value, attr.name)
            return {}
        return {2 * col: 1.0, 2 * col + 1: 1.0}
    h = stable_hash_real(value)
    i = enc.schema.index_of(attr.name)
    return {2 * i: h, 2 * i + 1: h}


def _base_array(q: ParsedQuery, schema: DatasetSchema, enc: CategoricalEncoder) -> np.ndarray:
    m = np.full(enc.width, MISSING)
    for p in q.predicates:
        i = schema.index_of(p.attribute)
        if p.lb is not None:
            m[2 * i] = p.lb
        if p.ub is not None:
            m[2 * i + 1] = p.ub
    for name, value in q.categorical_equalities:
        for slot, v in encode_categorical(schema.attribute(name), value, enc).items():
            m[slot] = v
    for name, pattern in q.like_patterns:
        # the pattern is treated as an opaque string and hashed
        h = stable_hash_real(pattern)
        i = schema.index_of(name)
        m[2 * i] = m[2 * i + 1] = h
    return m


def vectorize_spa(q: ParsedQuery, schema: DatasetSchema, enc: CategoricalEncoder) -> MetaVector:
    if q.group_by:
        raise ValueError("grouped query: use expand_group_by")
    return MetaVector(_base_array(q, schema, enc))


@dataclass
class GroupByCatalogue:
    """Cached DISTINCT results keyed by group-by attribute tuples."""

    entries: dict[tuple[str, ...], list[tuple]] = field(default_factory=dict)
    executor: Callable[[tuple[str, ...]], list[tuple]] | None = None

    def __post_init__(self):
        self._lock = threading.Lock()

    def add(self, attrs: Sequence[str], values: Iterable[Sequence]) -> None:
        key = tuple(attrs)
        vals = sorted({tuple(v) for v in values}, key=_sort_key)
        if not vals:
            return
        with self._lock:
            merged = set(self.entries.get(key, ())) | set(vals)
            self.entries[key] = sorted(merged, key=_sort_key)

    def lookup(self, attrs: Sequence[str]) -> list[tuple]:
        key = tuple(attrs)
        if key in self.entries:
            return self.entries[key]
        if self.executor is not None:
            vals = self.executor(key)
            self.add(key, vals)
            return self.entries.get(key, [])
        if len(key) > 1 and all((a,) in self.entries for a in key):
            parts = [[v[0] for v in self.entries[(a,)]] for a in key]
            return list(itertools.product(*parts))
        raise MissingCatalogueEntry(f"no cached DISTINCT values for {key}")

    def to_dict(self) -> dict:
        return {"entries": [{"attributes": list(k), "values": [list(v) for v in vals]}
                            for k, vals in sorted(self.entries.items())]}

    @classmethod
    def from_dict(cls, doc: dict) -> "GroupByCatalogue":
        return cls({tuple(e["attributes"]): [tuple(v) for v in e["values"]] for e in doc["entries"]})

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def _sort_key(t: tuple):
    return tuple((0, x, "") if isinstance(x, (int, float)) else (1, 0, str(x)) for x in t)


def expand_group_by(q: ParsedQuery, cat: GroupByCatalogue, schema: DatasetSchema,
                    enc: CategoricalEncoder) -> list[tuple[MetaVector, tuple]]:
    """One meta-vector per group value tuple, group slots set as equalities."""
    if not q.group_by:
        raise ValueError("query has no GROUP BY")
    groups = cat.lookup(q.group_by)
    base = _base_array(q, schema, enc)
    return [(_with_group(base, q, g, schema, enc), tuple(g)) for g in groups]


def _with_group(base, q, g, schema, enc) -> MetaVector:
    m = base.copy()
    for name, value in zip(q.group_by, g):
        attr = schema.attribute(name)
        if attr.is_categorical:
            for slot, v in encode_categorical(attr, value, enc).items():
                m[slot] = v
        else:
            i = schema.index_of(name)
            m[2 * i] = m[2 * i + 1] = float(value)
    return MetaVector(m)


def vectorize_group(q: ParsedQuery, group: Sequence, schema: DatasetSchema,
                    enc: CategoricalEncoder) -> MetaVector:
    """The meta-vector of one group of a grouped query."""
    if len(group) != len(q.group_by):
        raise ValueError(f"group {tuple(group)} does not match GROUP BY {q.group_by}")
    return _with_group(_base_array(q, schema, enc), q, group, schema, enc)


def vectorize(q: ParsedQuery, schema: DatasetSchema, enc: CategoricalEncoder,
              cat: GroupByCatalogue | None = None) -> list[tuple[MetaVector, tuple | None]]:
    """Uniform entry point: SPA queries give one row with group ``None``."""
    if q.group_by:
        if cat is None:
            raise MissingCatalogueEntry("grouped query but no GROUP-BY catalogue")
        return expand_group_by(q, cat, schema, enc)
    return [(vectorize_spa(q, schema, enc), None)]
