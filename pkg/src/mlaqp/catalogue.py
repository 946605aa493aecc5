"""On-disk model catalogue.

Layout of a catalogue directory::

    manifest.json            format version, schema fingerprint, entry index,
                             CRC-32 and size of every other file
    schema.json              dataset schema
    encoder.json             categorical encoder state
    groupby_catalogue.json   cached DISTINCT values
    drift.json               training answer samples and workload statistics
    models/NNN_<name>.json   one file per aggregate entry

Saving writes a sibling temporary directory and renames it into place.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cluster import ClusterEnsemble
from .drift import AnswerEcdf, WorkloadStats
from .errors import CatalogueIOError, CorruptEntry, MissingManifest, VersionMismatch
from .gbdt import GbdtModel
from .intervals import IntervalModel, PredictionInterval
from .schema import AggregateSpec, DatasetSchema
from .vectorize import CategoricalEncoder, GroupByCatalogue

FORMAT = "mlaqp.catalogue"
FORMAT_VERSION = 1


def _dumps(doc) -> str:
    return json.dumps(doc, separators=(",", ":"), allow_nan=False)


@dataclass
class CatalogueEntry:
    point: GbdtModel
    interval: IntervalModel | None = None
    ensemble: ClusterEnsemble | None = None

    @property
    def feature_width(self) -> int:
        return self.point.feature_width

    def estimate(self, m) -> float:
        if self.ensemble is not None:
            return self.ensemble.predict(m)
        return self.point.predict(m)

    def estimate_batch(self, X) -> np.ndarray:
        if self.ensemble is not None:
            return self.ensemble.predict_batch(X)
        return self.point.predict_batch(X)

    def interval_for(self, m) -> PredictionInterval | None:
        return None if self.interval is None else self.interval.interval(m)

    def to_dict(self) -> dict:
        return {
            "point": self.point.to_dict(),
            "interval": None if self.interval is None else self.interval.to_dict(),
            "ensemble": None if self.ensemble is None else self.ensemble.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CatalogueEntry":
        return cls(
            GbdtModel.from_dict(doc["point"]),
            None if doc.get("interval") is None else IntervalModel.from_dict(doc["interval"]),
            None if doc.get("ensemble") is None else ClusterEnsemble.from_dict(doc["ensemble"]),
        )


@dataclass
class ModelCatalogue:
    schema: DatasetSchema
    encoder: CategoricalEncoder
    entries: dict[str, CatalogueEntry] = field(default_factory=dict)
    groupby: GroupByCatalogue = field(default_factory=GroupByCatalogue)
    answer_samples: dict[str, AnswerEcdf] = field(default_factory=dict)
    workload_stats: WorkloadStats | None = None
    info: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.encoder.width

    def add(self, af, entry: CatalogueEntry) -> None:
        key = af.key if isinstance(af, AggregateSpec) else AggregateSpec.from_key(af).key
        if entry.feature_width != self.width:
            raise ValueError(f"entry width {entry.feature_width} != catalogue width {self.width}")
        self.entries[key] = entry

    def entry(self, key: str) -> CatalogueEntry:
        return self.entries[key]

    def index(self) -> dict:
        return {
            k: {"feature_width": e.feature_width, "trees": e.point.n_trees,
                "interval": e.interval is not None,
                "nominal_coverage": None if e.interval is None else e.interval.nominal_coverage,
                "ensemble": e.ensemble is not None}
            for k, e in sorted(self.entries.items())
        }


def _file_name(i: int, key: str) -> str:
    return f"models/{i:03d}_{re.sub(r'[^A-Za-z0-9]+', '_', key.replace('*', 'star')).strip('_')}.json"


def save(cat: ModelCatalogue, directory: str | Path) -> int:
    """Write ``cat`` to ``directory`` and return the total bytes written."""
    directory = Path(directory)
    files: dict[str, str] = {
        "schema.json": _dumps(cat.schema.to_dict()),
        "encoder.json": _dumps(cat.encoder.to_dict()),
        "groupby_catalogue.json": cat.groupby.dumps(),
        "drift.json": _dumps({
            "answers": {k: v.to_dict() for k, v in sorted(cat.answer_samples.items())},
            "workload": None if cat.workload_stats is None else cat.workload_stats.to_dict(),
        }),
    }
    index = {}
    for i, key in enumerate(sorted(cat.entries)):
        name = _file_name(i, key)
        files[name] = _dumps(cat.entries[key].to_dict())
        index[key] = name
    manifest = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "fingerprint": cat.schema.fingerprint(),
        "entries": index,
        "info": cat.info,
        "files": {},
    }
    for name, text in files.items():
        data = text.encode()
        manifest["files"][name] = {"crc32": zlib.crc32(data), "bytes": len(data)}

    try:
        directory.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
        try:
            (tmp / "models").mkdir()
            for name, text in files.items():
                (tmp / name).write_text(text)
            (tmp / "manifest.json").write_text(json.dumps(manifest, indent=1))
            old = None
            if directory.exists():
                old = directory.with_name(f".{directory.name}.old-{os.getpid()}")
                os.replace(directory, old)
            os.replace(tmp, directory)
            if old is not None:
                shutil.rmtree(old, ignore_errors=True)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
    except OSError as exc:
        raise CatalogueIOError(f"cannot write catalogue to {directory}: {exc}") from exc
    return sum(v["bytes"] for v in manifest["files"].values()) + len(json.dumps(manifest, indent=1))


def disk_size(directory: str | Path) -> int:
    return sum(p.stat().st_size for p in Path(directory).rglob("*") if p.is_file())


def load(directory: str | Path) -> ModelCatalogue:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise MissingManifest(f"no manifest.json in {directory}")
    try:
        manifest = json.loads(mpath.read_text())
    except (OSError, ValueError) as exc:
        raise CorruptEntry("manifest.json", str(exc)) from exc
    if manifest.get("format") != FORMAT:
        raise CorruptEntry("manifest.json", "not a model catalogue")
    if manifest.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"catalogue version {manifest.get('version')!r}, expected {FORMAT_VERSION}")

    texts = {}
    for name, meta in manifest["files"].items():
        label = _label(manifest, name)
        try:
            data = (directory / name).read_bytes()
        except OSError as exc:
            raise CorruptEntry(label, f"unreadable: {exc}") from exc
        if len(data) != meta["bytes"] or zlib.crc32(data) != meta["crc32"]:
            raise CorruptEntry(label, "checksum mismatch")
        texts[name] = data.decode()

    def parse(name, build):
        try:
            return build(json.loads(texts[name]))
        except (KeyError, ValueError, TypeError) as exc:
            raise CorruptEntry(_label(manifest, name), str(exc)) from exc

    schema = parse("schema.json", DatasetSchema.from_dict)
    if schema.fingerprint() != manifest["fingerprint"]:
        raise CorruptEntry("schema.json", "fingerprint does not match manifest")
    encoder = parse("encoder.json", lambda d: CategoricalEncoder.from_dict(schema, d))
    groupby = parse("groupby_catalogue.json", GroupByCatalogue.from_dict)
    drift = parse("drift.json", lambda d: d)
    cat = ModelCatalogue(
        schema, encoder, {}, groupby,
        {k: AnswerEcdf.from_dict(v) for k, v in drift["answers"].items()},
        None if drift.get("workload") is None else WorkloadStats.from_dict(drift["workload"]),
        manifest.get("info", {}),
    )
    for key, name in manifest["entries"].items():
        entry = parse(name, CatalogueEntry.from_dict)
        if entry.feature_width != encoder.width:
            raise CorruptEntry(key, f"width {entry.feature_width} != encoder width {encoder.width}")
        cat.entries[key] = entry
    return cat


def _label(manifest: dict, name: str) -> str:
    for key, fname in manifest.get("entries", {}).items():
        if fname == name:
            return key
    return name
