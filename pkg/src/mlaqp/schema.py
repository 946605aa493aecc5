"""Shared domain vocabulary: schemas, predicates, aggregates and meta-vectors.

A query over a table with ``d`` attributes is encoded as a meta-vector of
``2d`` slots; slots ``2i`` and ``2i+1`` hold the lower and upper bound placed
on attribute ``i``.  Unconstrained slots hold NaN, which is the missing
marker.  Zero is an ordinary bound value and never means "missing".
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidAnswer, InvertedBounds, LengthMismatch, NonFiniteAnswer

MISSING = math.nan

AGGREGATE_FUNCTIONS = ("COUNT", "SUM", "AVG", "MIN", "MAX")
NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str = NUMERIC
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown attribute kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.cardinality is None or self.cardinality < 1:
                raise ValueError(f"categorical attribute {self.name!r} needs cardinality >= 1")
        elif self.cardinality is not None:
            raise ValueError(f"numeric attribute {self.name!r} cannot carry a cardinality")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.cardinality is not None:
            out["cardinality"] = self.cardinality
        return out


@dataclass(frozen=True)
class DatasetSchema:
    """Ordered attribute list; the order fixes the meta-vector layout."""

    name: str
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise ValueError("a schema needs at least one attribute")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def d(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def index_of(self, name: str) -> int:
        return self._index[name]

    def has(self, name: str) -> bool:
        return name in self._index

    def attribute(self, name: str) -> Attribute:
        return self.attributes[self._index[name]]

    def to_dict(self) -> dict:
        return {"name": self.name, "attributes": [a.to_dict() for a in self.attributes]}

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        attrs = tuple(
            Attribute(a["name"], a.get("kind", NUMERIC), a.get("cardinality"))
            for a in doc["attributes"]
        )
        return cls(doc["name"], attrs)

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def numeric(cls, name: str, attribute_names: Iterable[str]) -> "DatasetSchema":
        return cls(name, tuple(Attribute(n) for n in attribute_names))


def load_schema(path: str | Path) -> DatasetSchema:
    with open(path) as fh:
        return DatasetSchema.from_dict(json.load(fh))


def save_schema(schema: DatasetSchema, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(schema.to_dict(), fh, indent=2)


@dataclass(frozen=True)
class AggregateSpec:
    function: str
    target_attribute: str | None = None

    def __post_init__(self):
        fn = self.function.upper()
        object.__setattr__(self, "function", fn)
        if fn not in AGGREGATE_FUNCTIONS:
            raise ValueError(f"unsupported aggregate {self.function!r}")
        if fn != "COUNT" and self.target_attribute is None:
            raise ValueError(f"{fn} requires a target attribute")

    @property
    def key(self) -> str:
        return f"{self.function}({self.target_attribute or '*'})"

    def __str__(self) -> str:
        return self.key

    @classmethod
    def from_key(cls, key: str) -> "AggregateSpec":
        key = key.strip()
        if not key.endswith(")") or "(" not in key:
            raise ValueError(f"malformed aggregate key {key!r}")
        fn, _, rest = key.partition("(")
        target = rest[:-1].strip()
        return cls(fn.strip().upper(), None if target in ("*", "") else target)

    def check(self, schema: DatasetSchema) -> None:
        if self.target_attribute is not None and not schema.has(self.target_attribute):
            raise ValueError(f"aggregate target {self.target_attribute!r} not in schema")


@dataclass(frozen=True)
class Predicate:
    """Inclusive range restriction; equality is ``lb == ub``."""

    attribute: str
    lb: float | None = None
    ub: float | None = None

    def __post_init__(self):
        if self.lb is None and self.ub is None:
            raise ValueError("a predicate needs at least one bound")
        if self.lb is not None and self.ub is not None and self.lb > self.ub:
            raise InvertedBounds(f"{self.attribute}: lb {self.lb} > ub {self.ub}")


class MetaVector:
    """Immutable bounds vector with NaN marking missing slots."""

    __slots__ = ("_values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("a meta-vector is one-dimensional")
        arr.setflags(write=False)
        self._values = arr

    @classmethod
    def empty(cls, width: int) -> "MetaVector":
        return cls(np.full(width, MISSING))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MetaVector):
            return NotImplemented
        return len(self) == len(other) and bool(
            np.all((self._values == other._values) | (self.missing & other.missing))
        )

    def __hash__(self):
        return hash(tuple(np.where(self.missing, np.inf, self._values).tolist()))

    def __repr__(self) -> str:
        body = ", ".join("NULL" if math.isnan(v) else repr(v) for v in self._values.tolist())
        return f"MetaVector({body})"

    def to_dict(self) -> dict:
        miss = self.missing.tolist()
        vals = [None if m else v for m, v in zip(miss, self._values.tolist())]
        return {"values": vals, "missing": miss}

    @classmethod
    def from_dict(cls, doc: dict) -> "MetaVector":
        vals = [MISSING if (m or v is None) else float(v) for v, m in zip(doc["values"], doc["missing"])]
        return cls(vals)

    @classmethod
    def from_slots(cls, width: int, slots: dict) -> "MetaVector":
        """Build from a sparse ``{slot_index: value}`` map (HTTP request form)."""
        arr = np.full(width, MISSING)
        for k, v in slots.items():
            i = int(k)
            if not 0 <= i < width:
                raise LengthMismatch(f"slot {i} outside width {width}")
            if v is not None:
                arr[i] = float(v)
        return cls(arr)


@dataclass(frozen=True)
class QueryAnswerPair:
    meta: MetaVector
    af: AggregateSpec
    answer: float

    def to_dict(self) -> dict:
        return {"meta": self.meta.to_dict(), "af": self.af.key, "answer": self.answer}

    @classmethod
    def from_dict(cls, doc: dict) -> "QueryAnswerPair":
        return cls(MetaVector.from_dict(doc["meta"]), AggregateSpec.from_key(doc["af"]), float(doc["answer"]))


def validate_pair(pair: QueryAnswerPair, schema: DatasetSchema, width: int | None = None) -> None:
    """Raise if ``pair`` violates the pair invariants; return None when fine.

    ``width`` defaults to ``2 * schema.d`` and should be passed explicitly when
    categorical dummy columns widen the vector.
    """
    expected = 2 * schema.d if width is None else width
    vals = pair.meta.values
    if len(vals) != expected:
        raise LengthMismatch(f"meta-vector has {len(vals)} slots, expected {expected}")
    lo, hi = vals[0::2], vals[1::2]
    both = ~np.isnan(lo) & ~np.isnan(hi)
    bad = np.flatnonzero(both & (lo > hi))
    if bad.size:
        i = int(bad[0])
        raise InvertedBounds(f"slot pair {i}: ({lo[i]}, {hi[i]})")
    if not math.isfinite(pair.answer):
        raise NonFiniteAnswer(f"answer {pair.answer!r} is not finite")
    if pair.af.function == "COUNT" and (pair.answer < 0 or pair.answer != int(pair.answer)):
        raise InvalidAnswer(f"COUNT answer {pair.answer!r} must be a non-negative integer")


@dataclass
class TrainingSet:
    af: AggregateSpec
    pairs: list[QueryAnswerPair] = field(default_factory=list)

    def __post_init__(self):
        for p in self.pairs:
            if p.af != self.af:
                raise ValueError(f"pair for {p.af.key} in training set for {self.af.key}")

    def __len__(self) -> int:
        return len(self.pairs)

    def add(self, pair: QueryAnswerPair) -> None:
        if pair.af != self.af:
            raise ValueError(f"pair for {pair.af.key} in training set for {self.af.key}")
        self.pairs.append(pair)

    def to_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.pairs:
            return np.empty((0, 0)), np.empty(0)
        X = np.vstack([p.meta.values for p in self.pairs])
        y = np.array([p.answer for p in self.pairs], dtype=np.float64)
        return X, y

    @classmethod
    def from_matrix(cls, af: AggregateSpec, X: np.ndarray, y: np.ndarray) -> "TrainingSet":
        return cls(af, [QueryAnswerPair(MetaVector(row), af, float(v)) for row, v in zip(X, y)])
