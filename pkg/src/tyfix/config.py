"""Runtime settings with a fixed precedence: flags > environment > file > defaults.

Environment variables use the ``TYFIX_`` prefix (``TYFIX_MIN_FREQ=3``).
The optional config file is TOML with a flat ``[tyfix]`` table or top-level
keys.  Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

import tomli

from .errors import SchemaError

ENV_PREFIX = "TYFIX_"


@dataclass
class Settings:
    min_freq: int = 5
    beam: int = 50
    max_templates: int = 20
    test_timeout: float = 300.0
    ctx_window: int = 3
    max_lines: int = 50
    mask_cap: int = 100


_FIELD_TYPES = {f.name: f.type for f in fields(Settings)}


def _coerce(name: str, raw: object) -> object:
    kind = _FIELD_TYPES[name]
    try:
        if kind in ("int", int):
            if isinstance(raw, bool):
                raise ValueError("booleans are not integers here")
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"setting {name!r} wants {kind}, got {raw!r}") from exc
    return raw


def _from_file(path: Path) -> dict:
    try:
        data = tomli.loads(path.read_text())
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    table = data.get("tyfix", data)
    if not isinstance(table, dict):
        raise SchemaError("config must be a table of settings")
    return table


def _from_env(environ: dict) -> dict:
    found = {}
    for name in _FIELD_TYPES:
        raw = environ.get(ENV_PREFIX + name.upper())
        if raw is not None:
            found[name] = raw
    return found


def load_settings(
    config_file: str | Path | None = None,
    overrides: dict | None = None,
    environ: dict | None = None,
) -> Settings:
    """Merge defaults, config file, environment, and explicit overrides."""
    merged: dict = {}
    if config_file is not None:
        merged.update(_from_file(Path(config_file)))
    env = environ if environ is not None else dict(os.environ)
    merged.update(_from_env(env))
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(merged) - set(_FIELD_TYPES)
    if unknown:
        raise SchemaError(f"unknown settings: {sorted(unknown)}")
    return Settings(**{k: _coerce(k, v) for k, v in merged.items()})
