"""Parsers for the three constrained output grammars the agents rely on.

All parsers take arbitrary text and either return a parsed value or raise
ParseFailure; they must never crash on garbage input. JSON extraction scans
for the first balanced, loadable object so chatter around the payload is
tolerated.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..core import ActionKind, MemoryBank


class ParseFailure(ValueError):
    """The backend reply does not follow the expected output grammar."""


@dataclass(frozen=True)
class ParsedAction:
    kind: ActionKind
    reasoning: str
    raw: str


@dataclass(frozen=True)
class ParsedVerdict:
    matched: bool
    reasoning: str | None
    raw: str


@dataclass(frozen=True)
class ParsedReformulation:
    text: str
    reasoning: str | None
    raw: str


def _first_json_object(raw: str) -> dict | None:
    """First balanced {...} region that json.loads accepts as an object."""

    start = raw.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escape = False
        for i in range(start, len(raw)):
            ch = raw[i]
            if in_string:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(raw[start : i + 1])
                    except json.JSONDecodeError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = raw.find("{", start + 1)
    return None


def parse_action(raw: str) -> ParsedAction:
    """Extract {"action": ..., "reasoning": ...} from a backend reply."""

    obj = _first_json_object(raw)
    if obj is None:
        raise ParseFailure("no JSON object found in action reply")
    action = obj.get("action")
    if not isinstance(action, str):
        raise ParseFailure("action field missing or not a string")
    action = action.strip().lower()
    if action not in (ActionKind.EXPLOIT.value, ActionKind.EXPLORE.value):
        raise ParseFailure(f"action must be exploit or explore, got {action!r}")
    reasoning = obj.get("reasoning", "")
    if not isinstance(reasoning, str):
        reasoning = json.dumps(reasoning)
    return ParsedAction(ActionKind(action), reasoning, raw)


_VERDICT_RE = re.compile(r"\b(unmatched|matched)\b", re.IGNORECASE)


def parse_verdict(raw: str, with_reasoning: bool = False) -> ParsedVerdict:
    """Read a matched/unmatched verdict.

    Plain mode takes the first whole-word occurrence, so embedded words
    like "unmatchedly" never count. Reasoning mode expects a JSON object
    with an "Evaluation" field.
    """

    if with_reasoning:
        obj = _first_json_object(raw)
        if obj is None:
            raise ParseFailure("no JSON object found in verdict reply")
        value = None
        reasoning = None
        for key, item in obj.items():
            lowered = key.lower()
            if lowered == "evaluation":
                value = item
            elif lowered == "reasoning":
                reasoning = item if isinstance(item, str) else json.dumps(item)
        if not isinstance(value, str):
            raise ParseFailure("Evaluation field missing or not a string")
        value = value.strip().lower()
        if value not in ("matched", "unmatched"):
            raise ParseFailure(f"Evaluation must be matched or unmatched, got {value!r}")
        return ParsedVerdict(value == "matched", reasoning, raw)
    m = _VERDICT_RE.search(raw)
    if m is None:
        raise ParseFailure("no matched/unmatched verdict word found")
    return ParsedVerdict(m.group(1).lower() == "matched", None, raw)


_REFORMULATE_RE = re.compile(r"<reformulate>(.*?)</reformulate>", re.DOTALL | re.IGNORECASE)
_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL | re.IGNORECASE)


def parse_reformulation(raw: str, word_cap: int | None = None) -> ParsedReformulation:
    """Extract the <reformulate> block; optional <think> becomes reasoning."""

    m = _REFORMULATE_RE.search(raw)
    if m is None:
        raise ParseFailure("no <reformulate>...</reformulate> block found")
    text = m.group(1).strip()
    if not text:
        raise ParseFailure("reformulate block is empty")
    if word_cap is not None and len(text.split()) > word_cap:
        raise ParseFailure(
            f"reformulation has {len(text.split())} words, cap is {word_cap}"
        )
    t = _THINK_RE.search(raw)
    reasoning = t.group(1).strip() if t and t.group(1).strip() else None
    return ParsedReformulation(text, reasoning, raw)


def serialize_memory(bank: MemoryBank) -> str:
    """Render memory for prompt injection, one line per step.

    Distinct banks yield distinct strings: every discriminating field is on
    the line and the query text is JSON-quoted so newlines cannot merge or
    split lines.
    """

    if len(bank) == 0:
        return "(no history)"
    lines = []
    for entry in bank:
        lines.append(
            f"step {entry.iteration}: precision={entry.precision:.3f} "
            f"window=[{entry.window.start},{entry.window.end}) "
            f"query={json.dumps(entry.query.text, ensure_ascii=False)}"
        )
    return "\n".join(lines)
