"""Iterative explore/exploit orchestration for embedding retrieval.

A run drives one topic through repeated retrieve -> judge -> decide ->
reformulate rounds, keeps a memory of how each round went, and emits a
fixed-length ranked submission plus a full trace. The package also ships
the evaluation stack (average precision, pooled-judgment estimation,
paired randomization tests, TREC-style I/O) and a synthetic closed-loop
simulator used for policy ablations.
"""

from .agents import (
    AgentError,
    CentroidNudgeReformulator,
    ConstantJudge,
    DuplicateReformulation,
    EmbeddingRetriever,
    ExclusionSet,
    JudgeResult,
    NoisyJudge,
    ReformulationContext,
    ThresholdDecider,
    Verdict,
    oracle_judge,
    retrieve,
)
from .core import (
    Action,
    ActionKind,
    EngineConfig,
    EvalSummary,
    ExaminationWindow,
    InvariantViolation,
    MemoryBank,
    MemoryEntry,
    Provenance,
    Query,
    QueryOrigin,
    RankedList,
    SubmissionEntry,
    SubmissionList,
    advance_window,
    append_submission,
    precision_of,
    reset_window,
    update_memory,
)
from .corpus import CorpusFormatError, CorpusIndex, read_index, write_index
from .metrics import (
    ComparisonReport,
    EvalInputError,
    Stratum,
    average_precision,
    compare_runs,
    inferred_ap,
    randomization_p_value,
)
from .orchestrator import (
    IterationRecord,
    RunTrace,
    Termination,
    TopicRun,
    TopicRunError,
    run_batch,
    run_topic,
)
from .trec import Qrels, RunFile, TrecFormatError, read_qrels, read_run, write_qrels, write_run

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "AgentError",
    "CentroidNudgeReformulator",
    "ComparisonReport",
    "ConstantJudge",
    "CorpusFormatError",
    "CorpusIndex",
    "DuplicateReformulation",
    "EmbeddingRetriever",
    "EngineConfig",
    "EvalInputError",
    "EvalSummary",
    "ExaminationWindow",
    "ExclusionSet",
    "InvariantViolation",
    "IterationRecord",
    "JudgeResult",
    "MemoryBank",
    "MemoryEntry",
    "NoisyJudge",
    "Provenance",
    "Qrels",
    "Query",
    "QueryOrigin",
    "RankedList",
    "ReformulationContext",
    "RunFile",
    "RunTrace",
    "Stratum",
    "SubmissionEntry",
    "SubmissionList",
    "Termination",
    "ThresholdDecider",
    "TopicRun",
    "TopicRunError",
    "TrecFormatError",
    "Verdict",
    "advance_window",
    "append_submission",
    "average_precision",
    "compare_runs",
    "inferred_ap",
    "oracle_judge",
    "precision_of",
    "randomization_p_value",
    "read_index",
    "read_qrels",
    "read_run",
    "reset_window",
    "retrieve",
    "run_batch",
    "run_topic",
    "update_memory",
    "write_index",
    "write_qrels",
    "write_run",
    "__version__",
]
