"""Drift monitoring over a live query log."""

from __future__ import annotations

import json
import logging
import os
import time
from pathlib import Path
from typing import Iterator

from .catalogue import ModelCatalogue
from .drift import DataShiftMonitor, DriftEvent, WorkloadShiftMonitor
from .errors import MlaqpError
from .querylog import LoggedQuery
from .sql import parse
from .vectorize import vectorize, vectorize_group

log = logging.getLogger(__name__)

# defaults chosen so that 1000 in-distribution queries raise no event in at
# least 95% of runs (see tests/test_monitoring.py)
MONITOR_ALPHA = 0.01
MONITOR_CHECK_EVERY = 100
MONITOR_WINDOW = 500


class LogMonitor:
    """Data-shift monitors for every aggregate plus one workload-shift monitor.

    ``alpha`` is family-wise over the aggregates: each per-aggregate KS
    check runs at ``alpha / n_aggregates`` (Bonferroni).
    """

    def __init__(self, catalogue: ModelCatalogue, alpha: float = MONITOR_ALPHA,
                 window: int = MONITOR_WINDOW, check_every: int = MONITOR_CHECK_EVERY,
                 k: float | None = None):
        self.catalogue = catalogue
        per_af = alpha / max(1, len(catalogue.answer_samples))
        self.data = {key: DataShiftMonitor(ecdf, per_af, window, check_every, af=key)
                     for key, ecdf in catalogue.answer_samples.items()}
        self.workload = None
        if catalogue.workload_stats is not None:
            self.workload = WorkloadShiftMonitor(catalogue.workload_stats, k, window, check_every)
        self.errors = 0

    def process(self, rec: LoggedQuery) -> list[DriftEvent]:
        schema, enc = self.catalogue.schema, self.catalogue.encoder
        try:
            q = parse(rec.sql, schema)
        except MlaqpError as exc:
            self.errors += 1
            log.warning("skipping unparseable query: %s", exc)
            return []
        events = []
        vectors = []
        for key, ans in rec.answers.items():
            mon = self.data.get(key)
            values = [g["value"] for g in ans] if isinstance(ans, list) else [ans]
            if isinstance(ans, list) and not vectors:
                vectors = [vectorize_group(q, g["group"], schema, enc) for g in ans]
            if mon is None:
                continue
            for v in values:
                ev = mon.observe(float(v))
                if ev is not None:
                    events.append(ev)
        if not q.group_by:
            vectors = [vectorize(q, schema, enc)[0][0]]
        if self.workload is not None:
            for m in vectors:
                ev = self.workload.observe(m)
                if ev is not None:
                    events.append(ev)
        return events

    def status(self) -> list[dict]:
        out = [m.status() for m in self.data.values()]
        if self.workload is not None:
            out.append(self.workload.status())
        return out


def follow(path: str | Path, poll: float = 0.5, idle_timeout: float | None = None,
           from_start: bool = True) -> Iterator[str]:
    """Yield lines appended to ``path``, reopening it after rotation.

    Rotation is detected by a changed inode or a file shorter than the read
    offset.  Stops after ``idle_timeout`` seconds without new data.
    """
    path = Path(path)
    fh = None
    ino = None
    idle_since = time.monotonic()
    buf = ""
    while True:
        if fh is None:
            try:
                fh = open(path)
                ino = os.fstat(fh.fileno()).st_ino
                if not from_start:
                    fh.seek(0, os.SEEK_END)
                from_start = True
            except OSError:
                fh = None
        chunk = fh.read() if fh is not None else ""
        if chunk:
            idle_since = time.monotonic()
            buf += chunk
            *lines, buf = buf.split("\n")
            yield from lines
            continue
        try:
            st = os.stat(path)
            rotated = fh is None or st.st_ino != ino or st.st_size < fh.tell()
        except OSError:
            rotated = True
        if rotated and fh is not None:
            rest = fh.read()
            if rest:
                buf += rest
                *lines, buf = buf.split("\n")
                yield from lines
            fh.close()
            fh = None
            log.info("log rotated; reopening %s", path)
            continue
        if idle_timeout is not None and time.monotonic() - idle_since > idle_timeout:
            if buf:
                yield buf
            if fh is not None:
                fh.close()
            return
        time.sleep(poll)


def run_monitor(monitor: LogMonitor, lines, out) -> int:
    """Feed raw log lines to ``monitor``; write each event as a JSON line."""
    n = 0
    for line in lines:
        if not line.strip():
            continue
        try:
            rec = LoggedQuery.from_dict(json.loads(line))
        except ValueError as exc:
            monitor.errors += 1
            log.warning("skipping malformed log line: %s", exc)
            continue
        for ev in monitor.process(rec):
            out.write(ev.to_json() + "\n")
            out.flush()
            n += 1
    return n
