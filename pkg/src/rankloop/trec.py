"""TREC-style interchange: qrels and run files.

Grammars (whitespace-separated):
    qrels: topic 0 candidate judgment        judgment int, >0 means relevant
    run:   topic Q0 candidate rank score tag ranks 1..n consecutive per topic

Run writing is canonical -- topics sorted, ranks renumbered from the given
order, scores formatted with six decimals -- so write(read(f)) == f for any
canonical file and read(write(x)) preserves x's ordering exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class TrecFormatError(ValueError):
    """A qrels/run line violates the grammar; message carries the line number."""


class Qrels:
    """Relevance judgments keyed by (topic, candidate)."""

    def __init__(self) -> None:
        self._by_topic: dict[str, dict[str, int]] = {}

    def add(self, topic: str, candidate: str, judgment: int) -> None:
        bucket = self._by_topic.setdefault(topic, {})
        if candidate in bucket:
            raise TrecFormatError(
                f"duplicate judgment for topic {topic}, candidate {candidate}"
            )
        bucket[candidate] = judgment

    def topics(self) -> tuple[str, ...]:
        return tuple(self._by_topic.keys())

    def judgment(self, topic: str, candidate: str) -> int | None:
        return self._by_topic.get(topic, {}).get(candidate)

    def judged(self, topic: str) -> frozenset[str]:
        return frozenset(self._by_topic.get(topic, {}))

    def relevant(self, topic: str) -> frozenset[str]:
        return frozenset(
            c for c, j in self._by_topic.get(topic, {}).items() if j > 0
        )

    def relevant_by_topic(self) -> dict[str, frozenset[str]]:
        return {t: self.relevant(t) for t in self._by_topic}

    def __contains__(self, topic: str) -> bool:
        return topic in self._by_topic

    def __len__(self) -> int:
        return len(self._by_topic)


def read_qrels(path: str | Path) -> Qrels:
    qrels = Qrels()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split()
            if len(fields) != 4:
                raise TrecFormatError(
                    f"{path}:{lineno}: expected 4 fields, got {len(fields)}"
                )
            topic, _iter, candidate, judgment = fields
            try:
                value = int(judgment)
            except ValueError:
                raise TrecFormatError(
                    f"{path}:{lineno}: judgment {judgment!r} is not an integer"
                ) from None
            try:
                qrels.add(topic, candidate, value)
            except TrecFormatError as exc:
                raise TrecFormatError(f"{path}:{lineno}: {exc}") from None
    return qrels


def write_qrels(path: str | Path, qrels: Qrels) -> None:
    lines = []
    for topic in sorted(qrels.topics()):
        for candidate in sorted(qrels.judged(topic)):
            lines.append(f"{topic} 0 {candidate} {qrels.judgment(topic, candidate)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class RunEntry:
    candidate: str
    score: float
    tag: str


@dataclass
class RunFile:
    """Per-topic rankings plus the run tag, in rank order."""

    topics: dict[str, list[RunEntry]] = field(default_factory=dict)

    def add(self, topic: str, candidate: str, score: float, tag: str) -> None:
        self.topics.setdefault(topic, []).append(RunEntry(candidate, score, tag))

    def ranking(self, topic: str) -> list[str]:
        return [e.candidate for e in self.topics.get(topic, [])]

    def rankings(self) -> dict[str, list[str]]:
        return {t: self.ranking(t) for t in self.topics}


def write_run(
    path: str | Path,
    run: RunFile | Mapping[str, Sequence[tuple[str, float]]],
    tag: str = "rankloop",
    max_per_topic: int | None = None,
) -> None:
    if isinstance(run, RunFile):
        per_topic: dict[str, list[tuple[str, float, str]]] = {
            t: [(e.candidate, e.score, e.tag) for e in entries]
            for t, entries in run.topics.items()
        }
    else:
        per_topic = {
            t: [(cid, float(score), tag) for cid, score in entries]
            for t, entries in run.items()
        }
    lines: list[str] = []
    for topic in sorted(per_topic):
        entries = per_topic[topic]
        if max_per_topic is not None and len(entries) > max_per_topic:
            raise TrecFormatError(
                f"topic {topic} has {len(entries)} entries, cap is {max_per_topic}"
            )
        seen: set[str] = set()
        prev_score: float | None = None
        for rank, (cid, score, line_tag) in enumerate(entries, start=1):
            if cid in seen:
                raise TrecFormatError(f"topic {topic}: duplicate candidate {cid}")
            seen.add(cid)
            if prev_score is not None and score > prev_score:
                raise TrecFormatError(
                    f"topic {topic}: score increases at rank {rank}"
                )
            prev_score = score
            lines.append(f"{topic} Q0 {cid} {rank} {score:.6f} {line_tag}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_run(path: str | Path) -> RunFile:
    run = RunFile()
    expected_rank: dict[str, int] = {}
    prev_score: dict[str, float] = {}
    seen: dict[str, set[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 6:
                raise TrecFormatError(
                    f"{path}:{lineno}: expected 6 fields, got {len(fields)}"
                )
            topic, q0, candidate, rank_s, score_s, tag = fields
            if q0 != "Q0":
                raise TrecFormatError(f"{path}:{lineno}: second field must be Q0")
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise TrecFormatError(
                    f"{path}:{lineno}: bad rank/score {rank_s!r} {score_s!r}"
                ) from None
            want = expected_rank.get(topic, 1)
            if rank != want:
                raise TrecFormatError(
                    f"{path}:{lineno}: topic {topic} rank {rank}, expected {want}"
                )
            expected_rank[topic] = want + 1
            if topic in prev_score and score > prev_score[topic]:
                raise TrecFormatError(
                    f"{path}:{lineno}: topic {topic} score increases with rank"
                )
            prev_score[topic] = score
            bucket = seen.setdefault(topic, set())
            if candidate in bucket:
                raise TrecFormatError(
                    f"{path}:{lineno}: topic {topic} repeats candidate {candidate}"
                )
            bucket.add(candidate)
            run.add(topic, candidate, score, tag)
    return run
