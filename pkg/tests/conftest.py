"""Shared fixtures: corpus builders and the loop-trace invariant checker."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rankloop.core import ActionKind, Provenance
from rankloop.corpus import CorpusIndex
from rankloop.orchestrator import RunTrace, Termination

settings.register_profile(
    "rankloop", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("rankloop")


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    rows = rng.standard_normal((n, d))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def make_index(rng: np.random.Generator, n: int, d: int, prefix: str = "c") -> CorpusIndex:
    ids = [f"{prefix}{i:05d}" for i in range(n)]
    return CorpusIndex.from_arrays(ids, unit_rows(rng, n, d))


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


def assert_trace_invariants(trace: RunTrace) -> None:
    """Structural checks every completed run must satisfy.

    Covers: at most T iterations, disjoint examined sets, judged partition
    per window, window reset/advance discipline, memory/record agreement,
    immediate break at target length, and submission shape.
    """

    cfg = trace.config
    k, budget, target = cfg.window, cfg.iterations, cfg.target_length
    records = trace.records
    assert len(records) <= budget, "iteration budget exceeded"
    assert len(trace.memory) == len(records), "memory entry per completed evaluation"

    seen: set[str] = set()
    all_matched: list[str] = []
    all_unmatched: list[str] = []
    cum = 0
    for i, rec in enumerate(records):
        assert rec.iteration == i, "iterations must be consecutive from 0"
        examined = set(rec.examined)
        assert len(examined) == len(rec.examined), "window repeats a candidate"
        assert not examined & seen, "candidate judged twice across iterations"
        seen |= examined
        matched, unmatched = set(rec.matched), set(rec.unmatched)
        assert matched | unmatched == examined, "verdicts must cover the window"
        assert not matched & unmatched, "verdict lists must be disjoint"
        assert 1 <= rec.summary.examined <= k
        assert rec.summary.examined == len(rec.examined)
        assert rec.summary.matched == len(rec.matched)
        assert rec.summary.unmatched == len(rec.unmatched)
        assert abs(rec.precision - rec.summary.matched / rec.summary.examined) < 1e-12
        assert rec.window.end - rec.window.start == k

        entry = trace.memory.entries[i]
        assert entry.iteration == rec.iteration
        assert entry.query == rec.query
        assert entry.window == rec.window
        assert entry.summary == rec.summary
        assert abs(entry.precision - rec.precision) < 1e-12

        if i > 0:
            prev = records[i - 1]
            assert prev.action is not None
            if prev.action.kind is ActionKind.EXPLORE:
                assert prev.reformulation is not None, "explore without a new query"
                assert rec.window.start == 0 and rec.window.end == k
                assert rec.query == prev.reformulation
                assert rec.query != prev.query, "explore must change the query"
            else:
                assert prev.reformulation is None
                assert rec.window.start == prev.window.start + k
                assert rec.window.end == prev.window.end + k
                assert rec.query == prev.query, "exploit must keep the query"

        cum += len(rec.matched)
        all_matched.extend(rec.matched)
        all_unmatched.extend(rec.unmatched)
        if i < len(records) - 1:
            assert rec.action is not None, "only the final record may lack an action"
            assert cum < target, "loop kept running after reaching the target length"

    if records:
        assert records[0].window.start == 0 and records[0].window.end == k

    sub = trace.submission
    assert len(sub) <= target
    assert len(set(sub.candidates())) == len(sub), "submission repeats a candidate"
    provs = [e.provenance for e in sub.entries]
    if Provenance.PADDING in provs:
        first_pad = provs.index(Provenance.PADDING)
        assert all(p is Provenance.PADDING for p in provs[first_pad:]), (
            "matched entries must precede all padding"
        )
    matched_part = [e.candidate for e in sub.entries if e.provenance is Provenance.MATCHED]
    padding_part = [e.candidate for e in sub.entries if e.provenance is Provenance.PADDING]
    assert matched_part == all_matched[: len(matched_part)], (
        "matched submission must mirror judged-matched order"
    )
    assert len(matched_part) == min(len(all_matched), target)
    assert not set(padding_part) & seen, "padding must come from unexamined candidates"
    assert not set(all_unmatched) & set(matched_part), (
        "judged-unmatched candidate in the matched portion"
    )

    if trace.termination is Termination.REACHED_L:
        assert records and records[-1].action is None
        assert cum >= target
        assert len(sub) == target and sub.matched_count() == target
    elif trace.termination is Termination.EXHAUSTED_T:
        assert len(records) == budget
        assert records[-1].action is not None
    elif trace.termination is Termination.CORPUS_EXHAUSTED:
        assert len(records) < budget
        if records:
            assert records[-1].action is not None


# Acceptance tests push (name, passed, detail) rows here; the summary hook
# prints one line per criterion after the normal pytest report.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    def _record(name: str, passed: bool, detail: str = "") -> None:
        ACCEPTANCE_RESULTS.append((name, passed, detail))

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
