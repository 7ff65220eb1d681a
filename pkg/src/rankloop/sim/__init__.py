"""Closed-loop simulator: synthetic worlds, policy arms, ablation suite."""

from .suite import (
    ArmResult,
    PolicyConfig,
    SuiteReport,
    ablation_suite,
    accumulated_gt_curve,
    build_runs,
    dominates,
    run_policy,
    standard_arms,
)
from .world import SimTopic, SyntheticWorld, WorldError, WorldParams, generate_world

__all__ = [
    "ArmResult",
    "PolicyConfig",
    "SimTopic",
    "SuiteReport",
    "SyntheticWorld",
    "WorldError",
    "WorldParams",
    "ablation_suite",
    "accumulated_gt_curve",
    "build_runs",
    "dominates",
    "generate_world",
    "run_policy",
    "standard_arms",
]
