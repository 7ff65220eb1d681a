"""Agent roles and their deterministic simulated backends.

Four independent roles drive the loop: retrieval (rank candidates),
reasoning (judge a window), reformulation (produce the next query) and
orchestration (pick exploit vs explore). Each is a small protocol so LLM
and simulated backends are interchangeable. Simulated backends here are
pure functions of their inputs plus a seed: safe to share across
concurrently running topics.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import kernels
from .core import (
    Action,
    ActionKind,
    EvalSummary,
    InvariantViolation,
    MemoryBank,
    Query,
    QueryOrigin,
    RankedList,
    precision_of,
)
from .corpus import CorpusIndex


class AgentError(RuntimeError):
    """Transient agent/backend failure; the caller may retry once."""


class DuplicateReformulation(RuntimeError):
    """Reformulation produced no change after its internal retry."""


@dataclass(frozen=True)
class ExclusionSet:
    """Candidates removed from the search space (already examined)."""

    ids: frozenset[str] = frozenset()

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, cid: str) -> bool:
        return cid in self.ids


@dataclass(frozen=True)
class Verdict:
    candidate: str
    matched: bool
    reasoning: str | None = None


@dataclass(frozen=True)
class JudgeResult:
    """Partition of one examined window, ranked order preserved."""

    matched: tuple[str, ...]
    unmatched: tuple[str, ...]
    verdicts: tuple[Verdict, ...]


@dataclass(frozen=True)
class ReformulationContext:
    """Everything a reformulation backend may draw on.

    LLM backends use the query/memory/reasoning fields only; the simulated
    vector-nudge backend additionally needs the judged candidate ids so it
    can form centroids.
    """

    topic: str
    original: Query
    previous: Query
    memory: MemoryBank
    decision_reasoning: str
    matched_ids: tuple[str, ...] = ()
    unmatched_ids: tuple[str, ...] = ()


class RetrievalAgent(Protocol):
    def retrieve(self, query: Query, excluded: ExclusionSet, limit: int) -> RankedList: ...


class ReasoningAgent(Protocol):
    def judge(
        self, topic: str, query: Query, entries: Sequence[tuple[str, float]]
    ) -> JudgeResult: ...


class ReformulationAgent(Protocol):
    def reformulate(self, ctx: ReformulationContext) -> Query: ...


class OrchestrationAgent(Protocol):
    def decide(self, summary: EvalSummary, query: Query | None = None) -> Action: ...


def _query_vector(query: Query | np.ndarray | Sequence[float], dim: int) -> np.ndarray:
    if isinstance(query, Query):
        if query.vector is None:
            raise AgentError(f"query {query.text!r} carries no embedding vector")
        vec = np.asarray(query.vector, dtype=np.float32)
    else:
        vec = np.asarray(query, dtype=np.float32)
    if vec.shape != (dim,):
        raise InvariantViolation(f"query vector shape {vec.shape} != ({dim},)")
    return vec


def retrieve(
    query: Query | np.ndarray | Sequence[float],
    index: CorpusIndex,
    excluded: ExclusionSet | Iterable[str] = (),
    limit: int = 50,
    n_chunks: int = 1,
) -> RankedList:
    """Exact cosine top-`limit` over the non-excluded corpus.

    Vectors are unit-normalized so the dot product is the cosine. Ties are
    broken by ascending candidate id; the result is shorter than `limit`
    when the remaining corpus is smaller, and empty when it is exhausted.
    """

    if limit < 1:
        raise InvariantViolation("limit must be >= 1")
    vec = _query_vector(query, index.dimension)
    excluded_ids = excluded.ids if isinstance(excluded, ExclusionSet) else excluded
    mask = np.zeros(len(index), dtype=bool)
    for cid in excluded_ids:
        pos = index.id_to_pos.get(cid)
        if pos is not None:
            mask[pos] = True
    scores = index.vectors @ vec
    if n_chunks > 1:
        picked = kernels.topk_select_chunked(scores, mask, index.tie_rank, limit, n_chunks)
    else:
        picked = kernels.topk_select(scores, mask, index.tie_rank, limit)
    return RankedList(tuple((index.ids[i], float(scores[i])) for i in picked))


@dataclass
class EmbeddingRetriever:
    """Retrieval over a fixed embedding index.

    ``embedder`` (text -> vector), when given, covers queries that carry no
    vector, e.g. LLM reformulations; without it such queries are an error.
    ``n_chunks`` partitions the scan; results are identical either way.
    """

    index: CorpusIndex
    n_chunks: int = 1
    embedder: object | None = None

    def retrieve(self, query: Query, excluded: ExclusionSet, limit: int) -> RankedList:
        if isinstance(query, Query) and query.vector is None and self.embedder is not None:
            vec = np.asarray(self.embedder(query.text), dtype=np.float64)
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise AgentError("embedder returned a zero vector")
            query = Query(
                text=query.text,
                origin=query.origin,
                reasoning=query.reasoning,
                vector=tuple(float(x) for x in vec / norm),
            )
        return retrieve(query, self.index, excluded, limit, n_chunks=self.n_chunks)


def _unit_draw(seed: int, topic: str, candidate: str) -> float:
    """Deterministic hash-based draw in [0, 1); order-independent."""

    digest = hashlib.blake2b(
        f"{seed}|{topic}|{candidate}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") / 2**64


@dataclass
class NoisyJudge:
    """Ground-truth judge with independent Bernoulli verdict flips.

    A relevant candidate is matched with probability ``tpr``, an irrelevant
    one with probability ``fpr``. Draws are keyed by (seed, topic,
    candidate) so results do not depend on evaluation order or concurrency.
    tpr=1, fpr=0 degenerates to the exact oracle.
    """

    relevant: Mapping[str, frozenset[str] | set[str]]
    tpr: float = 1.0
    fpr: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.fpr <= 1.0 and 0.0 <= self.tpr <= 1.0):
            raise InvariantViolation("tpr and fpr must lie in [0, 1]")

    def judge(
        self, topic: str, query: Query, entries: Sequence[tuple[str, float]]
    ) -> JudgeResult:
        if not entries:
            raise InvariantViolation("judge requires a non-empty window")
        relevant = self.relevant.get(topic, frozenset())
        matched: list[str] = []
        unmatched: list[str] = []
        verdicts: list[Verdict] = []
        for cid, _score in entries:
            p = self.tpr if cid in relevant else self.fpr
            is_match = _unit_draw(self.seed, topic, cid) < p
            (matched if is_match else unmatched).append(cid)
            verdicts.append(Verdict(cid, is_match))
        return JudgeResult(tuple(matched), tuple(unmatched), tuple(verdicts))


def oracle_judge(relevant: Mapping[str, frozenset[str] | set[str]]) -> NoisyJudge:
    """Exact ground-truth judge (no verdict noise)."""

    return NoisyJudge(relevant, tpr=1.0, fpr=0.0)


@dataclass
class ConstantJudge:
    """Degenerate judge calling every candidate the same way.

    ``matched=True`` turns the loop into plain rank-order consumption
    (retrieval-only arm); ``matched=False`` models a zero-precision world.
    """

    matched: bool

    def judge(
        self, topic: str, query: Query, entries: Sequence[tuple[str, float]]
    ) -> JudgeResult:
        if not entries:
            raise InvariantViolation("judge requires a non-empty window")
        ids = tuple(cid for cid, _ in entries)
        verdicts = tuple(Verdict(cid, self.matched) for cid in ids)
        if self.matched:
            return JudgeResult(ids, (), verdicts)
        return JudgeResult((), ids, verdicts)


@dataclass
class ThresholdDecider:
    """Exploit while window precision stays at or above ``tau``."""

    tau: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise InvariantViolation("tau must lie in [0, 1]")

    def decide(self, summary: EvalSummary, query: Query | None = None) -> Action:
        p = precision_of(summary)
        if p >= self.tau:
            return Action(
                ActionKind.EXPLOIT,
                f"precision {p:.3f} >= threshold {self.tau:.3f}; current query still productive",
            )
        return Action(
            ActionKind.EXPLORE,
            f"precision {p:.3f} < threshold {self.tau:.3f}; reformulate to refresh results",
        )


@dataclass
class AlwaysExploitDecider:
    def decide(self, summary: EvalSummary, query: Query | None = None) -> Action:
        return Action(ActionKind.EXPLOIT, "fixed policy: always exploit")


@dataclass
class AlwaysExploreDecider:
    def decide(self, summary: EvalSummary, query: Query | None = None) -> Action:
        return Action(ActionKind.EXPLORE, "fixed policy: always explore")


@dataclass
class CentroidNudgeReformulator:
    """Embedding-space reformulation with a controllable effect.

    With matched evidence the query moves toward the matched centroid c:
    q' = normalize(q + alpha * (c - q)). With none it moves away from the
    centroid of judged-irrelevant candidates, which is the only signal a
    zero-precision history offers. alpha=0 reproduces the previous query
    and raises DuplicateReformulation.
    """

    index: CorpusIndex
    alpha: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise InvariantViolation("alpha must lie in [0, 1]")

    def _centroid(self, ids: Sequence[str]) -> np.ndarray:
        vecs = np.stack([self.index.vector_of(c) for c in ids]).astype(np.float64)
        centroid = vecs.mean(axis=0)
        norm = np.linalg.norm(centroid)
        if norm == 0:
            raise DuplicateReformulation("judged candidates cancel out; no direction to move")
        return centroid / norm

    def reformulate(self, ctx: ReformulationContext) -> Query:
        prev = ctx.previous
        q = np.asarray(_query_vector(prev, self.index.dimension), dtype=np.float64)
        if ctx.matched_ids:
            target = self._centroid(ctx.matched_ids)
            moved = q + self.alpha * (target - q)
            note = f"nudged toward centroid of {len(ctx.matched_ids)} matched candidates"
        elif ctx.unmatched_ids:
            repel = self._centroid(ctx.unmatched_ids)
            moved = q - self.alpha * repel
            note = f"pushed away from centroid of {len(ctx.unmatched_ids)} unmatched candidates"
        else:
            raise DuplicateReformulation("no judged candidates to steer by")
        norm = np.linalg.norm(moved)
        if norm < 1e-12:
            raise DuplicateReformulation("nudge collapsed the query vector")
        vec = tuple(float(x) for x in moved / norm)
        if vec == prev.vector:
            raise DuplicateReformulation("nudge left the query unchanged")
        step = len(ctx.memory)
        return Query(
            text=f"{ctx.original.text} [refined #{step}]",
            origin=QueryOrigin.REFORMULATED,
            reasoning=f"{note} (alpha={self.alpha})",
            vector=vec,
        )
