"""Loop driver: evaluate a window, shrink the space, pick exploit/explore.

One topic runs as: retrieve with the current query, judge the top-k window
against the original query, record memory, append matched candidates to
the submission, then either keep the query and advance one window deeper
(exploit) or reformulate and restart from the top of a fresh ranking
(explore). The loop stops when the submission reaches its target length,
the iteration budget runs out, or the corpus is exhausted.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from .agents import (
    AgentError,
    DuplicateReformulation,
    ExclusionSet,
    OrchestrationAgent,
    ReasoningAgent,
    ReformulationAgent,
    ReformulationContext,
    RetrievalAgent,
)
from .core import (
    Action,
    ActionKind,
    EngineConfig,
    EvalSummary,
    InvariantViolation,
    MemoryBank,
    MemoryEntry,
    Provenance,
    Query,
    RankedList,
    SubmissionList,
    _extend_submission,
    advance_window,
    append_submission,
    precision_of,
    reset_window,
    update_memory,
)


class Termination(str, Enum):
    REACHED_L = "reached_L"
    EXHAUSTED_T = "exhausted_T"
    CORPUS_EXHAUSTED = "corpus_exhausted"


@dataclass(frozen=True)
class IterationRecord:
    """Everything observed and decided in one loop iteration."""

    iteration: int
    query: Query
    window: "object"
    examined: tuple[str, ...]
    matched: tuple[str, ...]
    unmatched: tuple[str, ...]
    summary: EvalSummary
    precision: float
    action: Action | None
    reformulation: Query | None = None
    verdict_reasons: tuple[tuple[str, str], ...] = ()

    def to_json_obj(self) -> dict:
        obj = {
            "iteration": self.iteration,
            "query": self.query.to_json_obj(),
            "window": self.window.to_json_obj(),
            "examined": list(self.examined),
            "matched": list(self.matched),
            "unmatched": list(self.unmatched),
            "summary": self.summary.to_json_obj(),
            "precision": self.precision,
            "action": None if self.action is None else self.action.to_json_obj(),
        }
        if self.reformulation is not None:
            obj["reformulation"] = self.reformulation.to_json_obj()
        if self.verdict_reasons:
            obj["verdict_reasons"] = [list(pair) for pair in self.verdict_reasons]
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "IterationRecord":
        from .core import ExaminationWindow

        reform = obj.get("reformulation")
        return cls(
            iteration=int(obj["iteration"]),
            query=Query.from_json_obj(obj["query"]),
            window=ExaminationWindow.from_json_obj(obj["window"]),
            examined=tuple(obj["examined"]),
            matched=tuple(obj["matched"]),
            unmatched=tuple(obj["unmatched"]),
            summary=EvalSummary.from_json_obj(obj["summary"]),
            precision=float(obj["precision"]),
            action=None if obj["action"] is None else Action.from_json_obj(obj["action"]),
            reformulation=None if reform is None else Query.from_json_obj(reform),
            verdict_reasons=tuple(
                (str(a), str(b)) for a, b in obj.get("verdict_reasons", [])
            ),
        )


@dataclass(frozen=True)
class RunTrace:
    """Full audit record of one topic run."""

    topic: str
    config: EngineConfig
    records: tuple[IterationRecord, ...]
    memory: MemoryBank
    submission: SubmissionList
    termination: Termination | None
    error: str | None = None

    def to_json_obj(self) -> dict:
        return {
            "topic": self.topic,
            "config": self.config.to_json_obj(),
            "iterations": [r.to_json_obj() for r in self.records],
            "memory": self.memory.to_json_obj(),
            "submission": self.submission.to_json_obj(),
            "termination": None if self.termination is None else self.termination.value,
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RunTrace":
        term = obj.get("termination")
        return cls(
            topic=obj["topic"],
            config=EngineConfig.from_json_obj(obj["config"]),
            records=tuple(IterationRecord.from_json_obj(r) for r in obj["iterations"]),
            memory=MemoryBank.from_json_obj(obj.get("memory", [])),
            submission=SubmissionList.from_json_obj(obj.get("submission", [])),
            termination=None if term is None else Termination(term),
            error=obj.get("error"),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunTrace":
        return cls.from_json_obj(json.loads(text))


class TopicRunError(RuntimeError):
    """An agent failed hard; carries the partial trace for inspection."""

    def __init__(self, topic: str, cause: BaseException, partial: RunTrace):
        super().__init__(f"topic {topic}: {cause}")
        self.topic = topic
        self.cause = cause
        self.partial = partial


def update_search_space(space: ExclusionSet, examined: Iterable[str]) -> ExclusionSet:
    """Remove examined candidates from future retrieval; re-exclusion is a bug."""

    examined = tuple(examined)
    overlap = space.ids.intersection(examined)
    if overlap:
        raise InvariantViolation(f"candidates excluded twice: {sorted(overlap)[:3]}")
    if len(set(examined)) != len(examined):
        raise InvariantViolation("examined ids must be unique")
    return ExclusionSet(space.ids.union(examined))


def finalize_submission(
    submission: SubmissionList,
    last_list: RankedList,
    excluded: ExclusionSet,
    target_length: int,
) -> SubmissionList:
    """Pad a short submission from the tail ranking, then cap at target length.

    Padding entries keep their ranked order, carry ``padding`` provenance and
    are never candidates already submitted or excluded.
    """

    if len(submission) < target_length:
        extra = [
            cid
            for cid, _ in last_list
            if cid not in excluded and cid not in submission.ids
        ]
        extra = extra[: target_length - len(submission)]
        submission = _extend_submission(submission, extra, Provenance.PADDING)
    if len(submission) > target_length:
        entries = submission.entries[:target_length]
        submission = SubmissionList(entries, frozenset(e.candidate for e in entries))
    return submission


@dataclass
class TopicRun:
    """Bindings for one topic: the query plus one agent per role."""

    topic: str
    query: Query
    retriever: RetrievalAgent
    judge: ReasoningAgent
    reformulator: ReformulationAgent | None
    decider: OrchestrationAgent
    config: EngineConfig = field(default_factory=EngineConfig)
    on_record: Callable[[str, IterationRecord], None] | None = None


def _retry_once(fn, *args, **kwargs):
    # One retry on transient failures, then give up. Deliberate non-transient
    # signals (DuplicateReformulation) pass straight through.
    try:
        return fn(*args, **kwargs)
    except AgentError:
        return fn(*args, **kwargs)


def run_topic(run: TopicRun) -> RunTrace:
    """Drive the explore/exploit loop for one topic to termination."""

    cfg = run.config
    k, budget, target = cfg.window, cfg.iterations, cfg.target_length
    excluded = ExclusionSet()
    submission = SubmissionList.empty()
    memory = MemoryBank()
    window = reset_window(k)
    query = run.query
    records: list[IterationRecord] = []
    matched_so_far: list[str] = []
    unmatched_so_far: list[str] = []
    termination: Termination | None = None

    def partial(err: BaseException) -> RunTrace:
        return RunTrace(
            topic=run.topic,
            config=cfg,
            records=tuple(records),
            memory=memory,
            submission=submission,
            termination=None,
            error=str(err),
        )

    try:
        current = _retry_once(run.retriever.retrieve, query, excluded, k)
        for step in range(budget):
            entries = current.head(k)
            if not entries:
                termination = Termination.CORPUS_EXHAUSTED
                break
            eval_query, eval_window = query, window
            result = _retry_once(run.judge.judge, run.topic, run.query, entries)
            _check_partition(entries, result)
            summary = EvalSummary(
                examined=len(entries),
                matched=len(result.matched),
                unmatched=len(result.unmatched),
            )
            p = precision_of(summary)
            excluded = update_search_space(excluded, (cid for cid, _ in entries))
            memory = update_memory(
                memory, MemoryEntry(step, eval_query, p, summary, eval_window)
            )
            submission = append_submission(submission, result.matched)
            matched_so_far.extend(result.matched)
            unmatched_so_far.extend(result.unmatched)
            reasons = tuple(
                (v.candidate, v.reasoning) for v in result.verdicts if v.reasoning
            )

            if len(submission) >= target:
                # Target hit: no further action is taken this run.
                _record(run, records, IterationRecord(
                    iteration=step, query=eval_query, window=eval_window,
                    examined=tuple(cid for cid, _ in entries),
                    matched=result.matched, unmatched=result.unmatched,
                    summary=summary, precision=p, action=None,
                    verdict_reasons=reasons,
                ))
                termination = Termination.REACHED_L
                break

            action = _retry_once(run.decider.decide, summary, eval_query)
            new_query: Query | None = None
            if action.kind is ActionKind.EXPLORE:
                if run.reformulator is None:
                    action = Action(
                        ActionKind.EXPLOIT,
                        "no reformulation agent bound; downgraded to exploit. "
                        + action.reasoning,
                    )
                else:
                    ctx = ReformulationContext(
                        topic=run.topic,
                        original=run.query,
                        previous=eval_query,
                        memory=memory,
                        decision_reasoning=action.reasoning,
                        matched_ids=tuple(matched_so_far),
                        unmatched_ids=tuple(unmatched_so_far),
                    )
                    try:
                        new_query = _retry_once(run.reformulator.reformulate, ctx)
                    except DuplicateReformulation as dup:
                        action = Action(
                            ActionKind.EXPLOIT,
                            f"duplicate reformulation ({dup}); downgraded to exploit. "
                            + action.reasoning,
                        )
            if action.kind is ActionKind.EXPLORE:
                query = new_query  # type: ignore[assignment]
                window = reset_window(k)
            else:
                new_query = None
                window = advance_window(window, k)

            _record(run, records, IterationRecord(
                iteration=step, query=eval_query, window=eval_window,
                examined=tuple(cid for cid, _ in entries),
                matched=result.matched, unmatched=result.unmatched,
                summary=summary, precision=p, action=action,
                reformulation=new_query, verdict_reasons=reasons,
            ))
            current = _retry_once(run.retriever.retrieve, query, excluded, k)
        else:
            termination = Termination.EXHAUSTED_T

        tail = RankedList()
        if len(submission) < target:
            tail = _retry_once(
                run.retriever.retrieve, query, excluded, target - len(submission)
            )
        submission = finalize_submission(submission, tail, excluded, target)
    except (AgentError, InvariantViolation) as exc:
        raise TopicRunError(run.topic, exc, partial(exc)) from exc

    return RunTrace(
        topic=run.topic,
        config=cfg,
        records=tuple(records),
        memory=memory,
        submission=submission,
        termination=termination,
    )


def _record(run: TopicRun, records: list[IterationRecord], rec: IterationRecord) -> None:
    records.append(rec)
    if run.on_record is not None:
        run.on_record(run.topic, rec)


def _check_partition(entries: Sequence[tuple[str, float]], result) -> None:
    ids = [cid for cid, _ in entries]
    got = list(result.matched) + list(result.unmatched)
    if sorted(got) != sorted(ids) or len(set(got)) != len(got):
        raise InvariantViolation("judge result does not partition the window")


@dataclass(frozen=True)
class BatchItem:
    """Outcome of one topic inside a batch: a trace or an error, never both."""

    topic: str
    trace: RunTrace | None
    error: str | None = None
    partial: RunTrace | None = None


def run_batch(runs: Sequence[TopicRun], parallelism: int = 1) -> list[BatchItem]:
    """Run topics independently; order of results follows input order.

    Worker count only changes wall-clock time: every topic's agents and
    seeds are bound per topic, so traces are identical at any parallelism.
    A failing topic is reported in its slot and never disturbs the rest.
    """

    if parallelism < 1:
        raise InvariantViolation("parallelism must be >= 1")
    if not runs:
        raise InvariantViolation("run_batch requires at least one topic")

    def one(run: TopicRun) -> BatchItem:
        try:
            return BatchItem(run.topic, run_topic(run))
        except TopicRunError as exc:
            return BatchItem(run.topic, None, error=str(exc), partial=exc.partial)

    if parallelism == 1:
        return [one(r) for r in runs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, runs))
