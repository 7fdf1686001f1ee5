"""Flat ``key = value`` configuration with dotted sections.

Values are parsed as JSON where possible (lists, tagged records for chain
maps, numbers, booleans); a relaxed form with unquoted keys inside ``{}``
records is accepted. The canonical serialization of a config (sorted keys,
canonical JSON values) feeds the short hash every emitted row carries.
"""

from __future__ import annotations

import hashlib
import json
import re

_BARE_KEY = re.compile(r'([{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:')


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    text = text.strip()
    if text == "":
        return ""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    quoted = _BARE_KEY.sub(r'\1"\2":', text)
    try:
        return json.loads(quoted)
    except json.JSONDecodeError:
        return text


def serialize_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return repr(value)
    return json.dumps(value, separators=(", ", ": "), sort_keys=True)


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = parse_value(val)
    return out


def load_config(path: str) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def canonical_text(cfg: dict) -> str:
    lines = [f"{k} = {serialize_value(cfg[k])}" for k in sorted(cfg)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()[:12]


def get_typed(cfg: dict, key: str, kind, default=None, required: bool = False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    val = cfg[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int:
        if isinstance(val, bool) or (isinstance(val, float) and val != int(val)):
            raise ConfigError(f"config key {key!r} must be an integer, got {val!r}")
        if isinstance(val, (int, float)):
            return int(val)
    if kind is bool and isinstance(val, bool):
        return val
    if kind is str and isinstance(val, str):
        return val
    if kind is list and isinstance(val, list):
        return val
    if kind is dict and isinstance(val, dict):
        return val
    raise ConfigError(f"config key {key!r} has wrong type: expected {kind.__name__}, "
                      f"got {type(val).__name__}")
