"""Flat key=value config files (a TOML-style subset).

One ``key = value`` pair per line; ``#`` starts a full-line comment and
section headers are ignored so simple TOML files load unchanged. Values
are coerced to bool/int/float when they look like one; quotes make a value
a string unconditionally.
"""

from __future__ import annotations

import re
from pathlib import Path


class ConfigError(ValueError):
    pass


_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


def _coerce(value: str) -> object:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


def parse_kv(text: str, source: str = "<config>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _coerce(value)
    return out


def read_kv_file(path: str | Path) -> dict[str, object]:
    path = Path(path)
    return parse_kv(path.read_text(encoding="utf-8"), source=str(path))


def write_kv_file(path: str | Path, values: dict[str, object]) -> None:
    lines = []
    for key, value in values.items():
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, str):
            rendered = f'"{value}"'
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
