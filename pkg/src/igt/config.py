"""Flat ``key = value`` config files with ``#`` comments."""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


def read_kv(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def _coerce(value: str, default: Any, key: str):
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low not in {"true", "false", "1", "0", "yes", "no"}:
                raise ValueError(value)
            return low in {"true", "1", "yes"}
        if isinstance(default, int):
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def apply_kv(obj, values: dict[str, Any]):
    """Return a copy of dataclass ``obj`` with string/typed overrides applied."""
    fields = {f.name: f for f in dataclasses.fields(obj)}
    updates = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        default = getattr(obj, key)
        updates[key] = _coerce(value, default, key) if isinstance(value, str) else value
    return dataclasses.replace(obj, **updates)


def write_kv(obj, path: str | Path) -> None:
    lines = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = ",".join(repr(float(x)) for x in v)
        lines.append(f"{f.name} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")
