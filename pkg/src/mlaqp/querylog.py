"""JSON-lines query log.

Each line is ``{"sql": "...", "answers": {"AVG(a1)": 12.5, ...}}``.  For a
GROUP-BY query each answer is a list ``[{"group": [...], "value": v}, ...]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator


@dataclass(frozen=True)
class LoggedQuery:
    sql: str
    answers: dict

    def to_json(self) -> str:
        return json.dumps({"sql": self.sql, "answers": self.answers}, allow_nan=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "LoggedQuery":
        if not isinstance(doc, dict) or not isinstance(doc.get("sql"), str):
            raise ValueError("log line needs a string 'sql' field")
        answers = doc.get("answers", {})
        if not isinstance(answers, dict):
            raise ValueError("'answers' must be an object")
        for key, val in answers.items():
            if isinstance(val, list):
                for g in val:
                    if not isinstance(g, dict) or "group" not in g or "value" not in g:
                        raise ValueError(f"malformed group answer for {key}")
                    _check_number(key, g["value"])
            else:
                _check_number(key, val)
        return cls(doc["sql"], answers)


def _check_number(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValueError(f"answer for {key} is not a finite number")


@dataclass(frozen=True)
class LogError:
    line: int
    message: str


def iter_log(path: str | Path) -> Iterator[tuple[int, LoggedQuery | LogError]]:
    """Yield ``(line_number, record_or_error)`` for each non-blank line."""
    with open(path) as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield no, LoggedQuery.from_dict(json.loads(line))
            except ValueError as exc:
                yield no, LogError(no, str(exc))


def read_log(path: str | Path) -> tuple[list[LoggedQuery], list[LogError]]:
    good, bad = [], []
    for _, rec in iter_log(path):
        (bad if isinstance(rec, LogError) else good).append(rec)
    return good, bad


def write_log(records: Iterable[LoggedQuery], path: str | Path) -> int:
    n = 0
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
            n += 1
    return n
