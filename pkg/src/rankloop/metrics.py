"""Ranking metrics: exact AP, stratified inferred AP, and run comparison.

Exact AP treats unjudged documents as nonrelevant and normalizes by the
total number of relevant documents in the qrels. Inferred AP estimates the
same quantity when only a sampled subset of a pooled collection was judged:
judged documents stand in for their stratum with Horvitz-Thompson weights
1/rate, and the relevant-document total is estimated the same way. With
every stratum fully judged (rate 1) it reduces to exact AP.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .trec import Qrels


class EvalInputError(ValueError):
    pass


def average_precision(ranked: Sequence[str], qrels: Qrels, topic: str) -> float:
    """Mean of precision-at-rank over the ranks holding relevant documents."""

    if len(set(ranked)) != len(ranked):
        raise EvalInputError(f"topic {topic}: ranking contains duplicates")
    relevant = qrels.relevant(topic)
    if not relevant:
        return 0.0
    hits = 0
    total = 0.0
    for i, cid in enumerate(ranked, start=1):
        if cid in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


@dataclass(frozen=True)
class Stratum:
    """A sampled judging pool: its members and the fraction actually judged."""

    ids: frozenset[str]
    rate: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rate <= 1.0:
            raise EvalInputError("stratum sampling rate must be in (0, 1]")
        if not self.ids:
            raise EvalInputError("stratum must contain at least one candidate")


def complete_strata(qrels: Qrels, topic: str) -> list[Stratum]:
    """Single fully-judged stratum: the exact-judgment special case."""

    judged = qrels.judged(topic)
    if not judged:
        raise EvalInputError(f"topic {topic}: no judged documents")
    return [Stratum(judged, 1.0)]


def inferred_ap(
    ranked: Sequence[str],
    qrels: Qrels,
    topic: str,
    strata: Sequence[Stratum],
) -> float:
    """Estimate AP from stratified sampled judgments.

    Documents outside every stratum were never pooled and score as
    nonrelevant. Judged documents must lie inside a stratum. Precision at a
    judged-relevant rank is estimated from the judged density of each
    stratum within the preceding prefix; at rate 1 those densities are the
    true counts.
    """

    if len(set(ranked)) != len(ranked):
        raise EvalInputError(f"topic {topic}: ranking contains duplicates")
    if not strata:
        raise EvalInputError("at least one stratum is required")
    membership: dict[str, int] = {}
    for s_idx, stratum in enumerate(strata):
        for cid in stratum.ids:
            if cid in membership:
                raise EvalInputError(f"candidate {cid} appears in two strata")
            membership[cid] = s_idx
    judged = qrels.judged(topic)
    outside = judged - set(membership)
    if outside:
        raise EvalInputError(
            f"topic {topic}: judged documents outside every stratum: {sorted(outside)[:3]}"
        )

    n_strata = len(strata)
    # Estimated total relevant: judged relevant scaled by inverse rate.
    judged_rel_total = np.zeros(n_strata)
    judged_total = np.zeros(n_strata)
    for cid in judged:
        s_idx = membership[cid]
        judged_total[s_idx] += 1
        if qrels.judgment(topic, cid) > 0:  # type: ignore[operator]
            judged_rel_total[s_idx] += 1
    rates = np.array([s.rate for s in strata])
    r_hat = float(np.sum(judged_rel_total / rates))
    if r_hat == 0.0:
        return 0.0

    # Walk the ranking once, keeping per-stratum prefix tallies.
    in_prefix = np.zeros(n_strata)  # stratum members seen so far
    rel_prefix = np.zeros(n_strata)  # judged relevant so far
    nonrel_prefix = np.zeros(n_strata)  # judged nonrelevant so far
    total = 0.0
    for idx, cid in enumerate(ranked):
        rank = idx + 1
        s_idx = membership.get(cid)
        judgment = qrels.judgment(topic, cid)
        if judgment is not None and judgment > 0:
            # Expected precision over the prefix above this document.
            if rank == 1:
                expected = 1.0
            else:
                expected_rel = 0.0
                for s in range(n_strata):
                    if in_prefix[s] == 0.0:
                        continue
                    judged_here = rel_prefix[s] + nonrel_prefix[s]
                    if judged_here > 0.0:
                        density = rel_prefix[s] / judged_here
                    elif judged_total[s] > 0.0:
                        density = judged_rel_total[s] / judged_total[s]
                    else:
                        density = 0.0
                    expected_rel += in_prefix[s] * density
                expected = (1.0 / rank) + ((rank - 1.0) / rank) * (
                    expected_rel / (rank - 1.0)
                )
            total += expected / strata[s_idx].rate  # type: ignore[index]
        if s_idx is not None:
            in_prefix[s_idx] += 1.0
            if judgment is not None:
                if judgment > 0:
                    rel_prefix[s_idx] += 1.0
                else:
                    nonrel_prefix[s_idx] += 1.0
    return total / r_hat


def mean_score(values: Sequence[float]) -> float:
    if len(values) == 0:
        raise EvalInputError("mean of zero topics is undefined")
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def grouped_means(
    scores: Mapping[str, float], groups: Mapping[str, str]
) -> dict[str, float]:
    """Per-group means for topics that have a group label."""

    buckets: dict[str, list[float]] = {}
    for topic, value in scores.items():
        group = groups.get(topic)
        if group is not None:
            buckets.setdefault(group, []).append(value)
    return {g: mean_score(v) for g, v in sorted(buckets.items())}


def randomization_p_value(
    diffs: Sequence[float], rounds: int = 10000, seed: int = 0, exact_limit: int = 20
) -> float:
    """Two-sided paired sign-flip test on the mean difference.

    Exact enumeration of all 2^n sign assignments up to ``exact_limit``
    topics; Monte Carlo with add-one smoothing beyond that.
    """

    d = np.asarray(diffs, dtype=np.float64)
    n = d.size
    if n == 0:
        raise EvalInputError("no paired differences to test")
    observed = abs(d.mean())
    if n <= exact_limit:
        count = 0
        total = 2**n
        # Batch the enumeration to keep memory flat.
        signs = np.array([1.0, -1.0])
        for start in range(0, total, 65536):
            stop = min(start + 65536, total)
            block = np.arange(start, stop, dtype=np.uint64)
            bits = (block[:, None] >> np.arange(n, dtype=np.uint64)) & 1
            flipped = signs[bits.astype(np.intp)] * d
            count += int(np.sum(np.abs(flipped.mean(axis=1)) >= observed - 1e-15))
        return count / total
    rng = np.random.default_rng(seed)
    flips = rng.integers(0, 2, size=(rounds, n)) * 2 - 1
    stats = np.abs((flips * d).mean(axis=1))
    return (1 + int(np.sum(stats >= observed - 1e-15))) / (rounds + 1)


@dataclass(frozen=True)
class PairwiseComparison:
    run_a: str
    run_b: str
    wins: int  # topics where a strictly beats b
    ties: int
    losses: int
    win_rate: float
    mean_diff: float
    p_value: float


@dataclass
class ComparisonReport:
    """Per-topic scores, means, and pairwise statistics for a set of runs."""

    metric: str
    topics: tuple[str, ...]
    scores: dict[str, dict[str, float]]
    means: dict[str, float]
    group_means: dict[str, dict[str, float]] = field(default_factory=dict)
    pairs: list[PairwiseComparison] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "metric": self.metric,
            "topics": list(self.topics),
            "scores": self.scores,
            "means": self.means,
            "group_means": self.group_means,
            "pairs": [vars(p) for p in self.pairs],
        }

    def to_tsv(self) -> str:
        runs = sorted(self.scores)
        lines = ["topic\t" + "\t".join(runs)]
        for topic in self.topics:
            row = [topic] + [f"{self.scores[r][topic]:.6f}" for r in runs]
            lines.append("\t".join(row))
        lines.append("mean\t" + "\t".join(f"{self.means[r]:.6f}" for r in runs))
        for group, by_run in sorted(self.group_means.items()):
            lines.append(
                f"mean[{group}]\t" + "\t".join(f"{by_run[r]:.6f}" for r in runs)
            )
        return "\n".join(lines) + "\n"


def compare_runs(
    runs: Mapping[str, Mapping[str, Sequence[str]]],
    qrels: Qrels,
    metric: Callable[[Sequence[str], Qrels, str], float] = average_precision,
    metric_name: str = "ap",
    groups: Mapping[str, str] | None = None,
    seed: int = 0,
) -> ComparisonReport:
    """Score runs on their shared topics and compare every pair."""

    if not runs:
        raise EvalInputError("no runs given")
    topic_sets = [set(r) & set(qrels.topics()) for r in runs.values()]
    shared = sorted(set.intersection(*topic_sets)) if topic_sets else []
    if not shared:
        raise EvalInputError("runs share no judged topics")
    scores: dict[str, dict[str, float]] = {}
    for name, run in runs.items():
        scores[name] = {t: metric(run[t], qrels, t) for t in shared}
    means = {name: mean_score(list(per.values())) for name, per in scores.items()}
    group_means: dict[str, dict[str, float]] = {}
    if groups:
        for name, per in scores.items():
            for group, value in grouped_means(per, groups).items():
                group_means.setdefault(group, {})[name] = value
    pairs: list[PairwiseComparison] = []
    for a, b in itertools.combinations(sorted(runs), 2):
        diffs = [scores[a][t] - scores[b][t] for t in shared]
        wins = sum(1 for x in diffs if x > 0)
        losses = sum(1 for x in diffs if x < 0)
        ties = len(diffs) - wins - losses
        pairs.append(
            PairwiseComparison(
                run_a=a,
                run_b=b,
                wins=wins,
                ties=ties,
                losses=losses,
                win_rate=wins / len(diffs),
                mean_diff=float(np.mean(diffs)),
                p_value=randomization_p_value(diffs, seed=seed),
            )
        )
    return ComparisonReport(
        metric=metric_name,
        topics=tuple(shared),
        scores=scores,
        means=means,
        group_means=group_means,
        pairs=pairs,
    )
