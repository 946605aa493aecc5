"""Settings resolution: command-line flag, then ``MLAQP_*`` env var, then config file."""

from __future__ import annotations

import json
import os
from pathlib import Path

ENV_PREFIX = "MLAQP_"


def _coerce(raw: str, like):
    if isinstance(like, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def load_config_file(path: str | Path | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def resolve(cli: dict, defaults: dict, config_path: str | Path | None = None,
            environ: dict | None = None) -> dict:
    """Merge settings; ``None`` in ``cli`` means the flag was not given."""
    environ = os.environ if environ is None else environ
    filed = load_config_file(config_path)
    out = {}
    for key, default in defaults.items():
        if cli.get(key) is not None:
            out[key] = cli[key]
            continue
        env_val = environ.get(ENV_PREFIX + key.upper())
        if env_val is not None:
            out[key] = _coerce(env_val, default) if default is not None else env_val
        elif key in filed:
            out[key] = filed[key]
        else:
            out[key] = default
    return out
