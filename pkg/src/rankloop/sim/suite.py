"""Policy arms, ground-truth accumulation curves, and the ablation suite.

The four standard arms mirror how capability stacks up: raw ranking only,
judged windows without reformulation, reformulation every step, and the
full threshold-gated loop. The suite runs arms across world seeds, scores
exact AP against the world's ground truth and reports means with normal-
approximation confidence intervals, plus an optional (iterations, window)
sensitivity grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from ..agents import (
    AlwaysExploitDecider,
    AlwaysExploreDecider,
    CentroidNudgeReformulator,
    ConstantJudge,
    EmbeddingRetriever,
    NoisyJudge,
    ThresholdDecider,
)
from ..core import EngineConfig, InvariantViolation
from ..metrics import average_precision
from ..orchestrator import RunTrace, TopicRun, run_batch
from .world import SyntheticWorld, WorldParams, generate_world


@dataclass(frozen=True)
class PolicyConfig:
    """One arm: which decider drives the loop and how noisy judging is."""

    name: str
    decider: str = "threshold"  # always_exploit | always_explore | threshold | llm
    tau: float = 0.2
    alpha: float = 0.5
    tpr: float = 1.0
    fpr: float = 0.0
    judge: str = "noisy"  # noisy | all_matched

    def __post_init__(self) -> None:
        if self.decider not in ("always_exploit", "always_explore", "threshold", "llm"):
            raise InvariantViolation(f"unknown decider {self.decider!r}")
        if self.judge not in ("noisy", "all_matched"):
            raise InvariantViolation(f"unknown judge {self.judge!r}")


def standard_arms(tau: float = 0.2, alpha: float = 0.5, tpr: float = 1.0, fpr: float = 0.0) -> list[PolicyConfig]:
    return [
        PolicyConfig("retrieval_only", decider="always_exploit", judge="all_matched"),
        PolicyConfig("+reasoning", decider="always_exploit", tpr=tpr, fpr=fpr),
        PolicyConfig("+reformulation", decider="always_explore", alpha=alpha, tpr=tpr, fpr=fpr),
        PolicyConfig("full", decider="threshold", tau=tau, alpha=alpha, tpr=tpr, fpr=fpr),
    ]


def build_runs(
    world: SyntheticWorld,
    policy: PolicyConfig,
    config: EngineConfig,
    decider_factory: Callable[[], object] | None = None,
    on_record=None,
) -> list[TopicRun]:
    """Bind shared agents for every topic in the world."""

    retriever = EmbeddingRetriever(world.index)
    if policy.judge == "all_matched":
        judge = ConstantJudge(True)
    else:
        judge = NoisyJudge(
            world.relevant_by_topic(),
            tpr=policy.tpr,
            fpr=policy.fpr,
            seed=world.params.seed,
        )
    if policy.decider == "always_exploit":
        decider = AlwaysExploitDecider()
    elif policy.decider == "always_explore":
        decider = AlwaysExploreDecider()
    elif policy.decider == "threshold":
        decider = ThresholdDecider(policy.tau)
    else:
        if decider_factory is None:
            raise InvariantViolation("llm decider requires a decider_factory")
        decider = decider_factory()
    reformulator = CentroidNudgeReformulator(world.index, alpha=policy.alpha)
    return [
        TopicRun(
            topic=t.topic_id,
            query=t.query,
            retriever=retriever,
            judge=judge,
            reformulator=reformulator,
            decider=decider,
            config=config,
            on_record=on_record,
        )
        for t in world.topics
    ]


def run_policy(
    world: SyntheticWorld,
    policy: PolicyConfig,
    config: EngineConfig,
    parallelism: int = 1,
    decider_factory: Callable[[], object] | None = None,
) -> list[RunTrace]:
    runs = build_runs(world, policy, config, decider_factory=decider_factory)
    items = run_batch(runs, parallelism=parallelism)
    failed = [item for item in items if item.trace is None]
    if failed:
        raise RuntimeError(
            f"simulated topics failed: {[(f.topic, f.error) for f in failed]}"
        )
    return [item.trace for item in items]  # type: ignore[misc]


def accumulated_gt_curve(trace: RunTrace, relevant: frozenset[str] | set[str]) -> list[int]:
    """Cumulative relevant count per window-sized bin of the submission.

    Bin b covers submission ranks [0, b*k). A submission shorter than the
    target length simply stops accumulating, so the curve goes flat.
    """

    k = trace.config.window
    bins = max(trace.config.target_length // k, 1)
    candidates = trace.submission.candidates()
    curve: list[int] = []
    count = 0
    upto = 0
    for b in range(1, bins + 1):
        stop = min(b * k, len(candidates))
        while upto < stop:
            if candidates[upto] in relevant:
                count += 1
            upto += 1
        curve.append(count)
    return curve


def dominates(curve_a: Sequence[int], curve_b: Sequence[int]) -> bool:
    """True when a is at least b everywhere and strictly better somewhere."""

    if len(curve_a) != len(curve_b):
        raise InvariantViolation("curves must have equal length")
    return all(a >= b for a, b in zip(curve_a, curve_b)) and any(
        a > b for a, b in zip(curve_a, curve_b)
    )


def _scores_for(world: SyntheticWorld, traces: Sequence[RunTrace]) -> dict[str, float]:
    qrels = world.qrels()
    return {
        trace.topic: average_precision(trace.submission.candidates(), qrels, trace.topic)
        for trace in traces
    }


@dataclass(frozen=True)
class ArmResult:
    per_seed: tuple[float, ...]
    mean: float
    ci_low: float
    ci_high: float


def _summarize(per_seed: Sequence[float]) -> ArmResult:
    arr = np.asarray(per_seed, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size > 1:
        half = 1.96 * float(arr.std(ddof=1)) / float(np.sqrt(arr.size))
    else:
        half = 0.0
    return ArmResult(tuple(float(x) for x in arr), mean, mean - half, mean + half)


@dataclass
class SuiteReport:
    arms: dict[str, ArmResult]
    grid: dict[str, ArmResult] = field(default_factory=dict)
    seeds: tuple[int, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "arms": {k: vars(v) | {"per_seed": list(v.per_seed)} for k, v in self.arms.items()},
            "grid": {k: vars(v) | {"per_seed": list(v.per_seed)} for k, v in self.grid.items()},
        }

    def to_tsv(self) -> str:
        lines = ["section\tname\tmean_ap\tci_low\tci_high\tper_seed"]
        for name, result in self.arms.items():
            lines.append(
                f"arm\t{name}\t{result.mean:.6f}\t{result.ci_low:.6f}\t{result.ci_high:.6f}\t"
                + ",".join(f"{x:.6f}" for x in result.per_seed)
            )
        for name, result in self.grid.items():
            lines.append(
                f"grid\t{name}\t{result.mean:.6f}\t{result.ci_low:.6f}\t{result.ci_high:.6f}\t"
                + ",".join(f"{x:.6f}" for x in result.per_seed)
            )
        return "\n".join(lines) + "\n"


def ablation_suite(
    params: WorldParams,
    policies: Sequence[PolicyConfig],
    seeds: Sequence[int],
    config: EngineConfig | None = None,
    grid: Sequence[tuple[int, int]] = (),
    grid_policy: PolicyConfig | None = None,
    parallelism: int = 1,
) -> SuiteReport:
    """Mean AP per arm across seeds, plus an optional (T, k) sensitivity grid."""

    if not policies and not grid:
        raise InvariantViolation("nothing to run: no policies and no grid")
    if not seeds:
        raise InvariantViolation("at least one seed is required")
    config = config or EngineConfig()
    worlds = [generate_world(replace(params, seed=s)) for s in seeds]

    arm_scores: dict[str, list[float]] = {p.name: [] for p in policies}
    for world in worlds:
        for policy in policies:
            traces = run_policy(world, policy, config, parallelism=parallelism)
            arm_scores[policy.name].append(
                float(np.mean(list(_scores_for(world, traces).values())))
            )

    grid_scores: dict[str, list[float]] = {}
    if grid:
        base = grid_policy or PolicyConfig("full", decider="threshold")
        for iterations, window in grid:
            label = f"T{iterations}_k{window}"
            grid_scores[label] = []
            cfg = EngineConfig(iterations, window, config.target_length)
            for world in worlds:
                traces = run_policy(world, base, cfg, parallelism=parallelism)
                grid_scores[label].append(
                    float(np.mean(list(_scores_for(world, traces).values())))
                )

    return SuiteReport(
        arms={name: _summarize(vals) for name, vals in arm_scores.items()},
        grid={name: _summarize(vals) for name, vals in grid_scores.items()},
        seeds=tuple(seeds),
    )
