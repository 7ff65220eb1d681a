"""Domain types and pure state transitions for the iterative retrieval loop.

Everything here is plain data plus side-effect-free functions. The loop
driver lives in :mod:`rankloop.orchestrator`; agents live in
:mod:`rankloop.agents`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

PRECISION_TOL = 1e-12


class InvariantViolation(ValueError):
    """A value or transition would break a structural invariant."""


class QueryOrigin(str, Enum):
    ORIGINAL = "original"
    REFORMULATED = "reformulated"


@dataclass(frozen=True)
class Query:
    """A retrieval query.

    ``vector`` is the embedding used by vector-space retrieval backends.
    It is stored as a plain tuple so queries stay hashable/comparable and
    serialize cleanly; retrieval casts it to an array per call.
    """

    text: str
    origin: QueryOrigin = QueryOrigin.ORIGINAL
    reasoning: str = ""
    vector: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise InvariantViolation("query text must be non-empty")
        if self.origin is QueryOrigin.ORIGINAL and self.reasoning:
            raise InvariantViolation("original queries carry no reasoning")

    def to_json_obj(self) -> dict:
        obj: dict = {"text": self.text, "origin": self.origin.value}
        if self.reasoning:
            obj["reasoning"] = self.reasoning
        if self.vector is not None:
            obj["vector"] = list(self.vector)
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Query":
        vec = obj.get("vector")
        return cls(
            text=obj["text"],
            origin=QueryOrigin(obj.get("origin", "original")),
            reasoning=obj.get("reasoning", ""),
            vector=None if vec is None else tuple(float(x) for x in vec),
        )


@dataclass(frozen=True)
class RankedList:
    """Scored candidates, best first.

    Scores must be non-increasing; equal scores are ordered by ascending
    candidate id so every producer yields one canonical ordering.
    """

    entries: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        prev: tuple[str, float] | None = None
        for cid, score in self.entries:
            if cid in seen:
                raise InvariantViolation(f"duplicate candidate in ranking: {cid}")
            seen.add(cid)
            if prev is not None:
                if score > prev[1]:
                    raise InvariantViolation("ranking scores must be non-increasing")
                if score == prev[1] and cid < prev[0]:
                    raise InvariantViolation("score ties must be ordered by ascending id")
            prev = (cid, score)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(self.entries)

    def head(self, n: int) -> tuple[tuple[str, float], ...]:
        return self.entries[: max(n, 0)]

    def ids(self) -> tuple[str, ...]:
        return tuple(cid for cid, _ in self.entries)


@dataclass(frozen=True)
class EvalSummary:
    """Counts from judging one window of a ranked list (h_eval)."""

    examined: int
    matched: int
    unmatched: int

    def __post_init__(self) -> None:
        if self.examined < 1:
            raise InvariantViolation("examined must be >= 1")
        if self.matched < 0 or self.unmatched < 0:
            raise InvariantViolation("counts must be non-negative")
        if self.matched + self.unmatched != self.examined:
            raise InvariantViolation("matched + unmatched must equal examined")

    def to_json_obj(self) -> dict:
        return {
            "examined": self.examined,
            "matched": self.matched,
            "unmatched": self.unmatched,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EvalSummary":
        return cls(int(obj["examined"]), int(obj["matched"]), int(obj["unmatched"]))


def precision_of(summary: EvalSummary) -> float:
    """Fraction of examined candidates judged matched.

    The denominator is the examined count, not the configured window size:
    a short final window still yields a well-defined precision.
    """

    return summary.matched / summary.examined


@dataclass(frozen=True)
class ExaminationWindow:
    """Half-open slice [start, end) into the current query's ranking, 0-based."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise InvariantViolation("window must satisfy 0 <= start < end")

    def to_json_obj(self) -> dict:
        return {"start": self.start, "end": self.end}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ExaminationWindow":
        return cls(int(obj["start"]), int(obj["end"]))


def reset_window(k: int) -> ExaminationWindow:
    """Window for a fresh query: the first k ranks."""

    if k < 1:
        raise InvariantViolation("k must be >= 1")
    return ExaminationWindow(0, k)


def advance_window(window: ExaminationWindow, k: int) -> ExaminationWindow:
    """Shift the window one chunk deeper into the same ranking."""

    if k < 1:
        raise InvariantViolation("k must be >= 1")
    return ExaminationWindow(window.start + k, window.end + k)


@dataclass(frozen=True)
class MemoryEntry:
    """One step of retrieval-performance memory."""

    iteration: int
    query: Query
    precision: float
    summary: EvalSummary
    window: ExaminationWindow

    def __post_init__(self) -> None:
        if self.iteration < 0:
            raise InvariantViolation("iteration must be >= 0")
        if abs(self.precision - precision_of(self.summary)) > PRECISION_TOL:
            raise InvariantViolation("stored precision disagrees with summary counts")

    def to_json_obj(self) -> dict:
        return {
            "iteration": self.iteration,
            "query": self.query.to_json_obj(),
            "precision": self.precision,
            "summary": self.summary.to_json_obj(),
            "window": self.window.to_json_obj(),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MemoryEntry":
        return cls(
            iteration=int(obj["iteration"]),
            query=Query.from_json_obj(obj["query"]),
            precision=float(obj["precision"]),
            summary=EvalSummary.from_json_obj(obj["summary"]),
            window=ExaminationWindow.from_json_obj(obj["window"]),
        )


@dataclass(frozen=True)
class MemoryBank:
    """Append-only history of (query, precision, window) per iteration."""

    entries: tuple[MemoryEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[MemoryEntry]:
        return iter(self.entries)

    def last_iteration(self) -> int:
        return self.entries[-1].iteration if self.entries else -1

    def to_json_obj(self) -> list:
        return [e.to_json_obj() for e in self.entries]

    @classmethod
    def from_json_obj(cls, obj: Iterable[dict]) -> "MemoryBank":
        return cls(tuple(MemoryEntry.from_json_obj(e) for e in obj))


def update_memory(bank: MemoryBank, entry: MemoryEntry) -> MemoryBank:
    """Append one entry; iterations must be strictly increasing."""

    if entry.iteration <= bank.last_iteration():
        raise InvariantViolation(
            f"memory iteration {entry.iteration} not after {bank.last_iteration()}"
        )
    return MemoryBank(bank.entries + (entry,))


class ActionKind(str, Enum):
    EXPLOIT = "exploit"
    EXPLORE = "explore"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    reasoning: str = ""

    def to_json_obj(self) -> dict:
        return {"kind": self.kind.value, "reasoning": self.reasoning}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Action":
        return cls(ActionKind(obj["kind"]), obj.get("reasoning", ""))


class Provenance(str, Enum):
    MATCHED = "matched"
    PADDING = "padding"


@dataclass(frozen=True)
class SubmissionEntry:
    candidate: str
    provenance: Provenance

    def to_json_obj(self) -> dict:
        return {"candidate": self.candidate, "provenance": self.provenance.value}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SubmissionEntry":
        return cls(obj["candidate"], Provenance(obj["provenance"]))


@dataclass(frozen=True)
class SubmissionList:
    """Accumulated answer list; matched entries always precede padding."""

    entries: tuple[SubmissionEntry, ...] = ()
    ids: frozenset[str] = frozenset()

    @classmethod
    def empty(cls) -> "SubmissionList":
        return cls()

    def __len__(self) -> int:
        return len(self.entries)

    def matched_count(self) -> int:
        return sum(1 for e in self.entries if e.provenance is Provenance.MATCHED)

    def candidates(self) -> tuple[str, ...]:
        return tuple(e.candidate for e in self.entries)

    def to_json_obj(self) -> list:
        return [e.to_json_obj() for e in self.entries]

    @classmethod
    def from_json_obj(cls, obj: Iterable[dict]) -> "SubmissionList":
        entries = tuple(SubmissionEntry.from_json_obj(e) for e in obj)
        return cls(entries, frozenset(e.candidate for e in entries))


def _extend_submission(
    sub: SubmissionList, candidates: Iterable[str], provenance: Provenance
) -> SubmissionList:
    new_entries = list(sub.entries)
    new_ids = set(sub.ids)
    for cid in candidates:
        if cid in new_ids:
            raise InvariantViolation(f"candidate already submitted: {cid}")
        new_entries.append(SubmissionEntry(cid, provenance))
        new_ids.add(cid)
    return SubmissionList(tuple(new_entries), frozenset(new_ids))


def append_submission(sub: SubmissionList, matched: Iterable[str]) -> SubmissionList:
    """Append matched candidates in ranked order; re-submission is an error."""

    if any(e.provenance is Provenance.PADDING for e in sub.entries):
        raise InvariantViolation("cannot append matched entries after padding")
    return _extend_submission(sub, matched, Provenance.MATCHED)


@dataclass(frozen=True)
class EngineConfig:
    """Loop budget: T iterations, window size k, submission length L."""

    iterations: int = 60
    window: int = 50
    target_length: int = 1000

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.window < 1 or self.target_length < 1:
            raise InvariantViolation("iterations, window and target_length must be >= 1")

    def to_json_obj(self) -> dict:
        return {
            "iterations": self.iterations,
            "window": self.window,
            "target_length": self.target_length,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EngineConfig":
        return cls(
            int(obj.get("iterations", 60)),
            int(obj.get("window", 50)),
            int(obj.get("target_length", 1000)),
        )
