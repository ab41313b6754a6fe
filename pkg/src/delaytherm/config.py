"""Flat ``key = value`` configuration files.

Grammar: one ``key = value`` pair per line; blank lines and lines whose first
non-blank character is ``#`` are ignored; repeating a key collects its values
into a list in file order.  Keys are case-sensitive and ``-`` is read as ``_``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

from .errors import ConfigError

Value = Union[str, list]


def parse_config(text: str) -> dict[str, Value]:
    out: dict[str, Value] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}", field=key or None)
        value = value.strip()
        if key in out:
            prev = out[key]
            out[key] = (prev if isinstance(prev, list) else [prev]) + [value]
        else:
            out[key] = value
    return out


def load_config(path) -> dict[str, Value]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", field="config") from exc
    return parse_config(text)
