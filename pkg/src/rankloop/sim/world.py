"""Synthetic retrieval worlds with known ground truth.

A world is a unit-vector corpus plus per-topic latent intent vectors; a
candidate is relevant to a topic exactly when its cosine against that
topic's intent reaches ``rho``. Planted candidates guarantee relevant
documents exist; the initial query starts displaced from the intent by a
controllable drift so there is something for reformulation to recover.

All randomness flows from the world seed through fixed-purpose
SeedSequence streams, so generation is reproducible bit for bit and
independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from ..core import InvariantViolation, Query
from ..corpus import CorpusIndex
from ..trec import Qrels


class WorldError(ValueError):
    """The requested world parameters cannot produce a usable world."""


@dataclass(frozen=True)
class WorldParams:
    kind: str = "standard"  # standard | two_cluster
    n: int = 5000
    dimension: int = 32
    topics: int = 10
    seed: int = 0
    rho: float = 0.7
    drift: float = 0.5
    planted_low: int = 75
    planted_high: int = 125
    # two_cluster only:
    distractors: int = 3500
    relevant: int = 200
    background: int = 800
    spread: float = 0.35
    q0_mix: float = 0.4

    def __post_init__(self) -> None:
        if self.kind not in ("standard", "two_cluster"):
            raise WorldError(f"unknown world kind {self.kind!r}")
        if self.dimension < 2 or self.topics < 1:
            raise WorldError("dimension must be >= 2 and topics >= 1")
        if not 0.0 < self.rho < 1.0:
            raise WorldError("rho must lie in (0, 1)")
        if not 0.0 <= self.drift < 1.0:
            raise WorldError("drift must lie in [0, 1)")
        if self.planted_low < 0 or self.planted_high < self.planted_low:
            raise WorldError("planted counts must satisfy 0 <= low <= high")

    @classmethod
    def from_mapping(cls, kv: Mapping[str, object]) -> "WorldParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(kv) - known
        if unknown:
            raise WorldError(f"unknown world keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in kv.items()})  # type: ignore[arg-type]


@dataclass(frozen=True)
class SimTopic:
    topic_id: str
    query: Query
    intent: np.ndarray
    relevant: frozenset[str]


@dataclass(frozen=True)
class SyntheticWorld:
    params: WorldParams
    index: CorpusIndex
    topics: tuple[SimTopic, ...]

    def relevant_by_topic(self) -> dict[str, frozenset[str]]:
        return {t.topic_id: t.relevant for t in self.topics}

    def qrels(self, include_nonrelevant: bool = False) -> Qrels:
        qrels = Qrels()
        for topic in self.topics:
            if include_nonrelevant:
                for cid in self.index.ids:
                    qrels.add(topic.topic_id, cid, 1 if cid in topic.relevant else 0)
            else:
                for cid in sorted(topic.relevant):
                    qrels.add(topic.topic_id, cid, 1)
        return qrels


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *stream)))


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise WorldError("degenerate zero vector drawn")
    return vec / norm


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    return _unit(rng.standard_normal(dim))


def _orthogonal_unit(rng: np.random.Generator, anchor: np.ndarray) -> np.ndarray:
    raw = rng.standard_normal(anchor.size)
    raw -= raw.dot(anchor) * anchor
    return _unit(raw)


def _drifted_query(rng: np.random.Generator, intent: np.ndarray, drift: float) -> np.ndarray:
    if drift == 0.0:
        return intent.copy()
    away = _orthogonal_unit(rng, intent)
    return _unit((1.0 - drift) * intent + drift * away)


def _planted_candidate(
    rng: np.random.Generator, intent: np.ndarray, rho: float
) -> np.ndarray:
    # Place the candidate at a cosine safely above rho so float32 storage
    # cannot drop it below the relevance line.
    lo = min(rho + 0.02, 0.999)
    hi = min(rho + 0.30, 0.9995)
    cos = rng.uniform(lo, max(hi, lo + 1e-4))
    ortho = _orthogonal_unit(rng, intent)
    return cos * intent + np.sqrt(1.0 - cos * cos) * ortho


def generate_world(params: WorldParams) -> SyntheticWorld:
    if params.kind == "standard":
        return _generate_standard(params)
    return _generate_two_cluster(params)


def _finish(
    params: WorldParams,
    rows: list[np.ndarray],
    intents: list[np.ndarray],
    queries: list[np.ndarray],
) -> SyntheticWorld:
    matrix = np.vstack(rows)
    ids = tuple(f"cand{i:06d}" for i in range(matrix.shape[0]))
    index = CorpusIndex.from_arrays(ids, matrix)
    topics: list[SimTopic] = []
    for i, (intent, q0) in enumerate(zip(intents, queries)):
        scores = index.vectors @ intent.astype(np.float32)
        members = np.flatnonzero(scores >= params.rho)
        if members.size == 0:
            raise WorldError(
                f"infeasible world: topic {i} has no relevant candidates "
                f"(rho={params.rho}, planted={params.planted_low}..{params.planted_high})"
            )
        relevant = frozenset(ids[j] for j in members)
        topics.append(
            SimTopic(
                topic_id=f"t{i:02d}",
                query=Query(
                    text=f"synthetic topic {i:02d} target scene",
                    vector=tuple(float(x) for x in q0),
                ),
                intent=intent,
                relevant=relevant,
            )
        )
    return SyntheticWorld(params=params, index=index, topics=tuple(topics))


def _generate_standard(params: WorldParams) -> SyntheticWorld:
    intents: list[np.ndarray] = []
    queries: list[np.ndarray] = []
    planted_rows: list[np.ndarray] = []
    for i in range(params.topics):
        rng = _rng(params.seed, 1, i)
        intent = _random_unit(rng, params.dimension)
        intents.append(intent)
        queries.append(_drifted_query(rng, intent, params.drift))
        if params.planted_high > 0:
            count = int(rng.integers(params.planted_low, params.planted_high + 1))
            for _ in range(count):
                planted_rows.append(_planted_candidate(rng, intent, params.rho))
    background = params.n - len(planted_rows)
    if background < 0:
        raise WorldError(
            f"n={params.n} is too small for {len(planted_rows)} planted candidates"
        )
    rng_bg = _rng(params.seed, 0)
    rows = planted_rows + [
        _random_unit(rng_bg, params.dimension) for _ in range(background)
    ]
    if not rows:
        raise WorldError("world has no candidates")
    # Shuffle deterministically so planted candidates are not id-clustered.
    order = _rng(params.seed, 2).permutation(len(rows))
    rows = [rows[j] for j in order]
    return _finish(params, rows, intents, queries)


def _generate_two_cluster(params: WorldParams) -> SyntheticWorld:
    """Adversarial geometry: the initial query leans toward a distractor cluster.

    Cluster A holds zero relevant candidates yet outranks cluster B (all
    relevant) under q0, so a policy that never reformulates spends its whole
    budget wading through A.
    """

    intents: list[np.ndarray] = []
    queries: list[np.ndarray] = []
    rows: list[np.ndarray] = []
    for i in range(params.topics):
        rng = _rng(params.seed, 1, i)
        center_a = _random_unit(rng, params.dimension)
        center_b = _orthogonal_unit(rng, center_a)
        intents.append(center_b)
        queries.append(_unit(center_a + params.q0_mix * center_b))
        # Members sit at cosine ~ 1/sqrt(1 + spread^2) from their center.
        for _ in range(params.distractors):
            rows.append(_unit(center_a + params.spread * _random_unit(rng, params.dimension)))
        for _ in range(params.relevant):
            rows.append(_unit(center_b + params.spread * _random_unit(rng, params.dimension)))
    rng_bg = _rng(params.seed, 0)
    rows.extend(
        _random_unit(rng_bg, params.dimension) for _ in range(params.background)
    )
    order = _rng(params.seed, 2).permutation(len(rows))
    rows = [rows[j] for j in order]
    return _finish(params, rows, intents, queries)
