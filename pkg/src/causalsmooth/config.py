"""Config-file reading (TOML or JSON) and ``--set key=value`` overrides."""

from __future__ import annotations

import json
import sys
from pathlib import Path

from .exceptions import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def read_config_file(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            values = json.loads(raw)
        else:
            values = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigurationError(f"config {path} must be a table/object at top level")
    return values


def parse_value(text):
    """Interpret an override value as JSON when possible, else as a bare string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        lowered = text.strip().lower()
        if lowered in ("true", "false"):
            return lowered == "true"
        return text


def apply_overrides(values, overrides):
    """Apply dotted ``key=value`` overrides in place and return ``values``.

    >>> apply_overrides({"a": {"b": 1}}, ["a.b=2", "c=[1, 2]"])
    {'a': {'b': 2}, 'c': [1, 2]}
    """
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigurationError(f"override '{item}' has an empty key")
        node = values
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(f"override '{item}': '{part}' is not a table")
            node = child
        node[parts[-1]] = parse_value(raw)
    return values
