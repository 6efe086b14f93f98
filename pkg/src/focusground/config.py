"""Flat ``key = value`` config files.

Blank lines and ``#`` comments are ignored. Values are parsed as int, then
float, then left as strings.
"""

from __future__ import annotations

from pathlib import Path


def parse_kv(text: str, source: str = "<string>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _coerce(value)
    return out


def _coerce(value: str) -> object:
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def load_kv(path: str | Path) -> dict[str, object]:
    path = Path(path)
    return parse_kv(path.read_text(), source=str(path))


def dump_kv(values: dict[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())
