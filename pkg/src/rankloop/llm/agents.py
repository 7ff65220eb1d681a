"""LLM-backed implementations of the reasoning/orchestration/reformulation roles.

Each agent renders its prompt, calls a completer (anything exposing
``complete(ChatRequest) -> Completion``, normally a ChatClient) and parses
the constrained reply. Grammar slips get one fresh retry; the fallback
behavior after that is role-specific and deliberately conservative.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..agents import AgentError, DuplicateReformulation, JudgeResult, Verdict
from ..core import Action, ActionKind, EvalSummary, Query, QueryOrigin
from .client import ChatRequest, TransportError, frame_attachments
from .parse import ParseFailure, parse_action, parse_reformulation, parse_verdict, serialize_memory
from .templates import PromptTemplate, load_template, render

DEFAULT_NEGATION_WORDS = (
    "not", "no", "without", "never", "none", "nor", "neither",
    "cannot", "can't", "don't", "doesn't", "isn't", "aren't", "won't", "didn't",
)


def _negation_hits(text: str, words: Sequence[str]) -> list[str]:
    hits = []
    for word in words:
        if re.search(rf"(?<![\w']){re.escape(word)}(?![\w'])", text, re.IGNORECASE):
            hits.append(word)
    return hits


def summarize_counts(summary: EvalSummary) -> str:
    """Counts as prompt text, e.g. 'examined=50 matched=32 unmatched=18'."""

    return (
        f"examined={summary.examined} matched={summary.matched} "
        f"unmatched={summary.unmatched}"
    )


@dataclass
class LLMDecider:
    """Exploit/explore decision delegated to the backend.

    Decisions run at temperature 0. If the reply defies the grammar twice,
    the safe default is to exploit: keep consuming the current ranking
    rather than churn the query on garbage output.
    """

    completer: object
    template: PromptTemplate | None = None
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.template is None:
            self.template = load_template("action")

    def decide(self, summary: EvalSummary, query: Query | None = None) -> Action:
        prompt = render(
            self.template,
            {
                "query": query.text if query is not None else "(unknown)",
                "eval_summary": summarize_counts(summary),
            },
        )
        request = ChatRequest.user(
            prompt, temperature=self.temperature, max_tokens=self.max_tokens
        )
        for attempt in range(2):
            try:
                reply = self.completer.complete(request)
            except TransportError as exc:
                raise AgentError(str(exc)) from exc
            try:
                parsed = parse_action(reply.text)
            except ParseFailure:
                continue
            reasoning = parsed.reasoning or "(no reasoning given)"
            return Action(parsed.kind, reasoning)
        return Action(ActionKind.EXPLOIT, "parse-failure default")


@dataclass
class LLMJudge:
    """Per-candidate matched/unmatched judging.

    ``with_reasoning`` switches to the JSON grammar that also returns a
    rationale. A candidate whose call fails hard is scored unmatched with
    reasoning "backend-error": one bad video must not sink the window.
    Candidates can be judged concurrently; results keep ranked order.
    """

    completer: object
    with_reasoning: bool = False
    template: PromptTemplate | None = None
    video_path: Callable[[str], str] = lambda cid: cid
    frame_template: str | None = None
    frame_count: int = 0
    temperature: float = 0.0
    max_tokens: int = 256
    max_workers: int = 1

    def __post_init__(self) -> None:
        if self.template is None:
            self.template = load_template(
                "eval_reasoning" if self.with_reasoning else "eval"
            )

    def _judge_one(self, query: Query, cid: str) -> Verdict:
        prompt = render(
            self.template,
            {"query": query.text, "Video_path": self.video_path(cid)},
        )
        attachments: tuple[str, ...] = ()
        if self.frame_template and self.frame_count:
            attachments = frame_attachments(self.frame_template, cid, self.frame_count)
        request = ChatRequest.user(
            prompt,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            attachments=attachments,
        )
        for attempt in range(2):
            try:
                reply = self.completer.complete(request)
                parsed = parse_verdict(reply.text, with_reasoning=self.with_reasoning)
            except (TransportError, ParseFailure):
                continue
            return Verdict(cid, parsed.matched, parsed.reasoning)
        return Verdict(cid, False, "backend-error")

    def judge(
        self, topic: str, query: Query, entries: Sequence[tuple[str, float]]
    ) -> JudgeResult:
        if not entries:
            raise AgentError("judge requires a non-empty window")
        ids = [cid for cid, _ in entries]
        if self.max_workers > 1 and len(ids) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                verdicts = list(pool.map(lambda c: self._judge_one(query, c), ids))
        else:
            verdicts = [self._judge_one(query, cid) for cid in ids]
        matched = tuple(v.candidate for v in verdicts if v.matched)
        unmatched = tuple(v.candidate for v in verdicts if not v.matched)
        return JudgeResult(matched, unmatched, tuple(verdicts))


@dataclass
class LLMReformulator:
    """Query rewriting with the memory-aware prompt.

    Replies must carry a <reformulate> block under the word cap, avoid
    negation words and actually change the query; any slip gets one fresh
    attempt, after which DuplicateReformulation tells the loop to fall back
    to exploiting.
    """

    completer: object
    template: PromptTemplate | None = None
    word_cap: int = 30
    negation_words: Sequence[str] = DEFAULT_NEGATION_WORDS
    temperature: float = 0.7
    max_tokens: int = 512
    embedder: Callable[[str], Sequence[float]] | None = None

    def __post_init__(self) -> None:
        if self.template is None:
            self.template = load_template("refine_memory")

    def reformulate(self, ctx) -> Query:
        prompt = render(
            self.template,
            {
                "memory_bank": serialize_memory(ctx.memory),
                "action_decision_reasoning": ctx.decision_reasoning or "(none given)",
                "original_query": ctx.original.text,
                "query": ctx.previous.text,
            },
        )
        request = ChatRequest.user(
            prompt, temperature=self.temperature, max_tokens=self.max_tokens
        )
        failure = "no usable reformulation"
        for attempt in range(2):
            try:
                reply = self.completer.complete(request)
            except TransportError as exc:
                raise AgentError(str(exc)) from exc
            try:
                parsed = parse_reformulation(reply.text, word_cap=self.word_cap)
            except ParseFailure as exc:
                failure = str(exc)
                continue
            hits = _negation_hits(parsed.text, self.negation_words)
            if hits:
                failure = f"negation words in reformulation: {hits}"
                continue
            if parsed.text == ctx.previous.text:
                failure = "backend repeated the previous query"
                continue
            vector = None
            if self.embedder is not None:
                import numpy as np

                vec = np.asarray(self.embedder(parsed.text), dtype=np.float64)
                norm = np.linalg.norm(vec)
                if norm == 0:
                    raise AgentError("embedder returned a zero vector")
                vector = tuple(float(x) for x in vec / norm)
            return Query(
                text=parsed.text,
                origin=QueryOrigin.REFORMULATED,
                reasoning=parsed.reasoning or "(no reasoning given)",
                vector=vector,
            )
        raise DuplicateReformulation(failure)
