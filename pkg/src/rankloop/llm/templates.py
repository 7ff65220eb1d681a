"""Prompt templates shipped as text assets, with strict placeholder handling.

A placeholder is ``{name}`` where name is a Python identifier; JSON braces
in template bodies (``{"action": ...}``) are left untouched. Rendering is a
single pass, so substituted values are never re-scanned.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

_ASSET_DIR = Path(__file__).parent / "templates"

PLACEHOLDERS = frozenset(
    {
        "query",
        "eval_summary",
        "original_query",
        "Video_path",
        "memory_bank",
        "action_decision_reasoning",
    }
)

TEMPLATE_NAMES = ("eval", "eval_reasoning", "action", "refine", "refine_memory")

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class MissingPlaceholder(KeyError):
    """Rendering was attempted without a binding for a used placeholder."""


class UnknownTemplate(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def __post_init__(self) -> None:
        unknown = set(self.placeholders()) - PLACEHOLDERS
        if unknown:
            raise ValueError(
                f"template {self.name!r} uses undeclared placeholders: {sorted(unknown)}"
            )

    def placeholders(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_PLACEHOLDER_RE.findall(self.body)))


def load_template(name: str, asset_dir: str | Path | None = None) -> PromptTemplate:
    if name not in TEMPLATE_NAMES:
        raise UnknownTemplate(f"no template named {name!r}; have {TEMPLATE_NAMES}")
    directory = Path(asset_dir) if asset_dir is not None else _ASSET_DIR
    body = (directory / f"{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate(name, body)


def load_all_templates(asset_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    return {name: load_template(name, asset_dir) for name in TEMPLATE_NAMES}


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder; a missing binding raises, never leaks."""

    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in bindings:
            raise MissingPlaceholder(key)
        return str(bindings[key])

    return _PLACEHOLDER_RE.sub(sub, template.body)
