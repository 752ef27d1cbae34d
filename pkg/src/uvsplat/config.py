"""Flat key-value run configuration.

The config file is plain text, one ``key = value`` per line, ``#`` starts
a comment.  Values parse as bool / int / float / comma-separated float
vectors / strings, in that order.  Every tunable named by the library's
dataclass configs can be set here; command-line flags override file
values.
"""

from __future__ import annotations

from dataclasses import fields, replace
from pathlib import Path


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if "," in text:
        try:
            return tuple(float(p) for p in text.split(","))
        except ValueError:
            pass
    return text


def parse_config_file(path) -> dict:
    """Read a flat key = value file into a dict."""
    out = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {line_no}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def apply_to_dataclass(instance, values: dict):
    """Overlay matching keys onto a dataclass; returns (new, used_keys)."""
    names = {f.name for f in fields(instance)}
    updates = {k: v for k, v in values.items() if k in names}
    return replace(instance, **updates), set(updates)
