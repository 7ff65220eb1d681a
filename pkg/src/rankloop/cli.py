"""Command-line interface.

Subcommands: run (drive topics against a corpus), simulate (synthetic
closed loop), evaluate (score run files against qrels), ablate (policy and
budget sweeps), trace (narrate a stored run trace).

Every flag can also be given in a key=value config file (--config); flags
win over the file. Each invocation writes all of its outputs under one
directory -- timestamped by default -- and echoes the effective
configuration into it. Exit codes: 0 success, 1 partial topic failures,
2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .agents import (
    CentroidNudgeReformulator,
    EmbeddingRetriever,
    NoisyJudge,
    ThresholdDecider,
)
from .config import ConfigError, read_kv_file, write_kv_file
from .core import EngineConfig, Provenance, Query
from .corpus import CorpusFormatError, CorpusIndex, read_index, read_vector_dir
from .metrics import EvalInputError, compare_runs
from .orchestrator import IterationRecord, RunTrace, TopicRun, run_batch
from .sim import (
    PolicyConfig,
    accumulated_gt_curve,
    ablation_suite,
    generate_world,
    run_policy,
    standard_arms,
)
from .sim.world import WorldError, WorldParams
from .trec import Qrels, TrecFormatError, read_qrels, read_run, write_qrels, write_run


class UsageError(Exception):
    """Bad invocation or unreadable input; maps to exit code 2."""


ARM_NAMES = ("retrieval_only", "+reasoning", "+reformulation", "full")


def _fail(message: str) -> "UsageError":
    return UsageError(message)


def _out_dir(given: str | None, subcommand: str) -> Path:
    if given:
        path = Path(given)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        path = Path(f"rankloop-{subcommand}-{stamp}")
        bump = 0
        while path.exists():
            bump += 1
            path = Path(f"rankloop-{subcommand}-{stamp}-{bump}")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_file_config(path: str | None) -> dict[str, object]:
    if not path:
        return {}
    try:
        return read_kv_file(path)
    except (OSError, ConfigError) as exc:
        raise _fail(f"cannot read config file: {exc}") from exc


def _effective(args: argparse.Namespace, file_cfg: dict[str, object], defaults: dict[str, object]) -> dict[str, object]:
    """defaults < config file < explicit flags."""

    merged = dict(defaults)
    for key, value in file_cfg.items():
        key = key.replace("-", "_")
        if key in merged or key in defaults:
            merged[key] = value
        else:
            raise _fail(f"unknown config key {key!r}")
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    return merged


def _engine_config(cfg: dict[str, object]) -> EngineConfig:
    return EngineConfig(int(cfg["T"]), int(cfg["k"]), int(cfg["L"]))


def _submission_rows(trace: RunTrace, matched_only: bool) -> list[tuple[str, float]]:
    entries = trace.submission.entries
    if matched_only:
        entries = tuple(e for e in entries if e.provenance is Provenance.MATCHED)
    n = len(entries)
    return [(e.candidate, (n - i) / n) for i, e in enumerate(entries)]


def _write_traces(out: Path, traces: list[RunTrace]) -> None:
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    for trace in traces:
        (tdir / f"{trace.topic}.json").write_text(trace.to_json(), encoding="utf-8")


def _record_sink(out: Path):
    tdir = out / "traces"
    tdir.mkdir(parents=True, exist_ok=True)

    def sink(topic: str, record: IterationRecord) -> None:
        line = json.dumps(record.to_json_obj(), ensure_ascii=False)
        with open(tdir / f"{topic}.records.jsonl", "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    return sink


# ---------------------------------------------------------------- run

_RUN_DEFAULTS: dict[str, object] = {
    "T": 60, "k": 50, "L": 1000,
    "parallelism": 1, "seed": 0, "backend": "sim",
    "tau": 0.2, "alpha": 0.5, "tpr": 1.0, "fpr": 0.0,
    "tag": "rankloop", "matched_only": False,
    "endpoint": "", "embed_endpoint": "", "model": "default",
    "judge_reasoning": False,
}


def _read_topics_file(path: str) -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _fail(f"cannot read topics file: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise _fail(f"{path}:{lineno}: expected 'topic<TAB>query text'")
        rows.append((parts[0].strip(), parts[1].strip()))
    if not rows:
        raise _fail(f"{path}: no topics found")
    return rows


def _load_corpus(args: argparse.Namespace) -> CorpusIndex:
    try:
        if args.corpus_dir:
            return read_vector_dir(args.corpus_dir, normalize=True)
        if not args.corpus or not args.corpus_ids:
            raise _fail("--corpus and --corpus-ids (or --corpus-dir) are required")
        return read_index(args.corpus, args.corpus_ids)
    except (OSError, CorpusFormatError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise _fail(f"cannot load corpus: {exc}") from exc


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _effective(args, _load_file_config(args.config), _RUN_DEFAULTS)
    engine = _engine_config(cfg)
    if not args.topics:
        raise _fail("--topics is required")
    topics = _read_topics_file(args.topics)
    index = _load_corpus(args)

    backend = str(cfg["backend"])
    if backend not in ("sim", "http"):
        raise _fail(f"--backend must be sim or http, got {backend!r}")

    queries: dict[str, Query] = {}
    if args.queries:
        try:
            qindex = read_index(args.queries, args.query_ids or args.queries + ".ids", normalize=True)
        except (OSError, CorpusFormatError, ValueError) as exc:
            raise _fail(f"cannot load query vectors: {exc}") from exc
        if qindex.dimension != index.dimension:
            raise _fail(
                f"query vectors are {qindex.dimension}-d but corpus is {index.dimension}-d"
            )
        for tid, text in topics:
            if tid not in qindex.id_to_pos:
                raise _fail(f"topic {tid} has no query vector")
            vec = tuple(float(x) for x in qindex.vector_of(tid))
            queries[tid] = Query(text=text, vector=vec)

    if backend == "sim":
        if not args.qrels:
            raise _fail("sim backend needs --qrels for ground-truth judging")
        if not queries:
            raise _fail("sim backend needs --queries/--query-ids vectors for retrieval")
        try:
            qrels = read_qrels(args.qrels)
        except (OSError, TrecFormatError) as exc:
            raise _fail(f"cannot read qrels: {exc}") from exc
        missing = [tid for tid, _ in topics if tid not in qrels]
        if missing:
            raise _fail(f"topics without judgments in qrels: {missing[:5]}")
        judge = NoisyJudge(
            qrels.relevant_by_topic(),
            tpr=float(cfg["tpr"]),
            fpr=float(cfg["fpr"]),
            seed=int(cfg["seed"]),
        )
        decider = ThresholdDecider(float(cfg["tau"]))
        reformulator = CentroidNudgeReformulator(index, alpha=float(cfg["alpha"]))
        retriever = EmbeddingRetriever(index)
    else:
        endpoint = str(cfg["endpoint"])
        if not endpoint:
            raise _fail("http backend needs --endpoint")
        embed_endpoint = str(cfg["embed_endpoint"])
        if not embed_endpoint:
            raise _fail(
                "http backend needs --embed-endpoint so reformulated queries can be embedded"
            )
        if not queries:
            raise _fail("http backend needs --queries/--query-ids vectors for the initial queries")
        from .llm import ChatClient, LLMDecider, LLMJudge, LLMReformulator

        out_probe = _out_dir(args.out, "run")
        client = ChatClient(
            endpoint=endpoint,
            model=str(cfg["model"]),
            embed_endpoint=embed_endpoint,
            audit_path=str(out_probe / "llm_audit.jsonl"),
        )
        judge = LLMJudge(client, with_reasoning=bool(cfg["judge_reasoning"]))
        decider = LLMDecider(client)
        reformulator = LLMReformulator(client, embedder=client.embed)
        retriever = EmbeddingRetriever(index, embedder=client.embed)
        args.out = str(out_probe)

    out = _out_dir(args.out, "run")
    sink = _record_sink(out)
    runs = [
        TopicRun(
            topic=tid,
            query=queries[tid],
            retriever=retriever,
            judge=judge,
            reformulator=reformulator,
            decider=decider,
            config=engine,
            on_record=sink,
        )
        for tid, _ in topics
    ]
    items = run_batch(runs, parallelism=int(cfg["parallelism"]))

    traces = [item.trace for item in items if item.trace is not None]
    _write_traces(out, traces)
    run_rows = {
        trace.topic: _submission_rows(trace, bool(cfg["matched_only"]))
        for trace in traces
        if len(trace.submission) > 0
    }
    write_run(out / "run.trec", run_rows, tag=str(cfg["tag"]))
    summary = {
        "topics": len(items),
        "failed": [
            {"topic": item.topic, "error": item.error} for item in items if item.error
        ],
        "terminations": {
            trace.topic: trace.termination.value if trace.termination else None
            for trace in traces
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    write_kv_file(out / "config.txt", {k: cfg[k] for k in sorted(cfg)})
    failed = [item for item in items if item.error]
    for item in failed:
        print(f"topic {item.topic} failed: {item.error}", file=sys.stderr)
    print(f"wrote {out}/run.trec ({len(run_rows)} topics)")
    return 1 if failed else 0


# ---------------------------------------------------------------- simulate

_SIM_DEFAULTS: dict[str, object] = {
    "T": 60, "k": 50, "L": 1000,
    "parallelism": 1, "seed": None, "policy": "full",
    "tau": 0.2, "alpha": 0.5, "tpr": 1.0, "fpr": 0.0,
    "tag": "rankloop-sim", "matched_only": False,
}


def _policy_from(cfg: dict[str, object]) -> PolicyConfig:
    name = str(cfg["policy"])
    if name not in ARM_NAMES:
        raise _fail(f"--policy must be one of {ARM_NAMES}, got {name!r}")
    arms = {
        p.name: p
        for p in standard_arms(
            tau=float(cfg["tau"]),
            alpha=float(cfg["alpha"]),
            tpr=float(cfg["tpr"]),
            fpr=float(cfg["fpr"]),
        )
    }
    return arms[name]


def _world_params(path: str | None, seed_override: object) -> WorldParams:
    if not path:
        raise _fail("--world is required")
    try:
        kv = read_kv_file(path)
    except (OSError, ConfigError) as exc:
        raise _fail(f"cannot read world spec: {exc}") from exc
    try:
        params = WorldParams.from_mapping(kv)
        if seed_override is not None:
            params = WorldParams.from_mapping({**kv, "seed": int(seed_override)})  # type: ignore[dict-item]
        return params
    except (WorldError, TypeError) as exc:
        raise _fail(f"bad world spec: {exc}") from exc


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _effective(args, _load_file_config(args.config), _SIM_DEFAULTS)
    engine = _engine_config(cfg)
    params = _world_params(args.world, cfg["seed"])
    policy = _policy_from(cfg)
    try:
        world = generate_world(params)
    except WorldError as exc:
        raise _fail(str(exc)) from exc
    try:
        traces = run_policy(world, policy, engine, parallelism=int(cfg["parallelism"]))
    except RuntimeError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 1

    out = _out_dir(args.out, "simulate")
    _write_traces(out, traces)
    run_rows = {t.topic: _submission_rows(t, bool(cfg["matched_only"])) for t in traces}
    write_run(out / "run.trec", run_rows, tag=str(cfg["tag"]))
    write_qrels(out / "qrels.txt", world.qrels())
    relevant = world.relevant_by_topic()
    lines = ["topic\tbin\tcumulative_relevant"]
    for trace in traces:
        for b, value in enumerate(accumulated_gt_curve(trace, relevant[trace.topic]), start=1):
            lines.append(f"{trace.topic}\t{b}\t{value}")
    (out / "curves.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    echo = {k: ("" if cfg[k] is None else cfg[k]) for k in sorted(cfg)}
    echo["world"] = args.world
    write_kv_file(out / "config.txt", echo)
    print(f"wrote {out}/run.trec ({len(traces)} topics, policy={policy.name})")
    return 0


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args: argparse.Namespace) -> int:
    if not args.run:
        raise _fail("at least one --run file is required")
    if not args.qrels:
        raise _fail("--qrels is required")
    try:
        qrels = read_qrels(args.qrels)
    except (OSError, TrecFormatError) as exc:
        raise _fail(f"cannot read qrels: {exc}") from exc
    runs: dict[str, dict[str, list[str]]] = {}
    for path in args.run:
        name = Path(path).stem
        if name in runs:
            name = f"{name}#{len(runs)}"
        try:
            runs[name] = read_run(path).rankings()
        except (OSError, TrecFormatError) as exc:
            raise _fail(f"cannot read run file {path}: {exc}") from exc
    groups = None
    if args.groups:
        groups = {}
        try:
            for lineno, line in enumerate(
                Path(args.groups).read_text(encoding="utf-8").splitlines(), start=1
            ):
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise _fail(f"{args.groups}:{lineno}: expected 'topic<TAB>group'")
                groups[parts[0].strip()] = parts[1].strip()
        except OSError as exc:
            raise _fail(f"cannot read groups file: {exc}") from exc
    try:
        report = compare_runs(runs, qrels, groups=groups, seed=int(args.seed or 0))
    except EvalInputError as exc:
        raise _fail(str(exc)) from exc

    out = _out_dir(args.out, "evaluate")
    (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    (out / "report.json").write_text(
        json.dumps(report.to_json_obj(), indent=2), encoding="utf-8"
    )
    for name in sorted(report.means):
        print(f"{name}\tmean_{report.metric}={report.means[name]:.4f}")
    for pair in report.pairs:
        print(
            f"{pair.run_a} vs {pair.run_b}: wins={pair.wins} ties={pair.ties} "
            f"losses={pair.losses} win_rate={pair.win_rate:.1%} p={pair.p_value:.4f}"
        )
    print(f"wrote {out}/report.tsv")
    return 0


# ---------------------------------------------------------------- ablate

_ABLATE_DEFAULTS: dict[str, object] = {
    "T": 60, "k": 50, "L": 1000,
    "parallelism": 1, "seeds": 5,
    "tau": 0.2, "alpha": 0.5, "tpr": 1.0, "fpr": 0.0,
    "arms": ",".join(ARM_NAMES), "grid": "",
}


def _parse_grid(text: str) -> list[tuple[int, int]]:
    pairs: list[tuple[int, int]] = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "x" not in chunk:
            raise _fail(f"bad grid entry {chunk!r}; use TxK like 60x50")
        t_s, _, k_s = chunk.partition("x")
        try:
            pairs.append((int(t_s), int(k_s)))
        except ValueError:
            raise _fail(f"bad grid entry {chunk!r}; use TxK like 60x50") from None
    return pairs


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _effective(args, _load_file_config(args.config), _ABLATE_DEFAULTS)
    engine = _engine_config(cfg)
    params = _world_params(args.world, None)
    all_arms = {
        p.name: p
        for p in standard_arms(
            tau=float(cfg["tau"]),
            alpha=float(cfg["alpha"]),
            tpr=float(cfg["tpr"]),
            fpr=float(cfg["fpr"]),
        )
    }
    wanted = [a.strip() for a in str(cfg["arms"]).split(",") if a.strip()]
    unknown = [a for a in wanted if a not in all_arms]
    if unknown:
        raise _fail(f"unknown arms {unknown}; choose from {ARM_NAMES}")
    policies = [all_arms[a] for a in wanted]
    grid = _parse_grid(str(cfg["grid"]))
    seeds = list(range(int(cfg["seeds"])))
    try:
        report = ablation_suite(
            params,
            policies,
            seeds,
            config=engine,
            grid=grid,
            grid_policy=all_arms["full"],
            parallelism=int(cfg["parallelism"]),
        )
    except WorldError as exc:
        raise _fail(str(exc)) from exc
    except RuntimeError as exc:
        print(f"ablation failed: {exc}", file=sys.stderr)
        return 1

    out = _out_dir(args.out, "ablate")
    (out / "ablation.tsv").write_text(report.to_tsv(), encoding="utf-8")
    (out / "ablation.json").write_text(
        json.dumps(report.to_json_obj(), indent=2), encoding="utf-8"
    )
    echo = {k: cfg[k] for k in sorted(cfg)}
    echo["world"] = args.world
    write_kv_file(out / "config.txt", echo)
    for name, arm in report.arms.items():
        print(f"arm {name}: mean_ap={arm.mean:.4f} ci=[{arm.ci_low:.4f},{arm.ci_high:.4f}]")
    for name, arm in report.grid.items():
        print(f"grid {name}: mean_ap={arm.mean:.4f}")
    print(f"wrote {out}/ablation.tsv")
    return 0


# ---------------------------------------------------------------- trace

def cmd_trace(args: argparse.Namespace) -> int:
    if not args.trace:
        raise _fail("--trace is required")
    try:
        trace = RunTrace.from_json(Path(args.trace).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise _fail(f"cannot load trace: {exc}") from exc
    matched = trace.submission.matched_count()
    padded = len(trace.submission) - matched
    print(
        f"topic {trace.topic}: {len(trace.records)} iterations, "
        f"termination={trace.termination.value if trace.termination else 'error'}, "
        f"submission={matched} matched + {padded} padding"
    )
    if trace.error:
        print(f"error: {trace.error}")
    records = trace.records
    if args.iteration is not None:
        records = tuple(r for r in records if r.iteration == args.iteration)
        if not records:
            raise _fail(f"no iteration {args.iteration} in trace")
    if not trace.records:
        print("no iterations recorded")
        return 0
    for r in records:
        act = "(final)" if r.action is None else r.action.kind.value
        print(
            f"[{r.iteration:03d}] window [{r.window.start},{r.window.end}) "
            f"of {r.query.text!r}: {r.summary.matched}/{r.summary.examined} matched "
            f"(precision {r.precision:.3f}) action={act}"
        )
        if r.action is not None and r.action.reasoning:
            print(f"      why: {r.action.reasoning}")
        if r.reformulation is not None:
            print(f"      reformulated -> {r.reformulation.text!r}")
            if r.reformulation.reasoning:
                print(f"      because: {r.reformulation.reasoning}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankloop",
        description="Iterative explore/exploit retrieval engine and simulator",
    )
    parser.add_argument("--version", action="version", version=f"rankloop {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--out", help="output directory (default: timestamped)")

    def engine(p: argparse.ArgumentParser) -> None:
        p.add_argument("--T", type=int, help="iteration budget")
        p.add_argument("--k", type=int, help="window size per iteration")
        p.add_argument("--L", type=int, help="target submission length")
        p.add_argument("--parallelism", type=int, help="concurrent topics")

    def knobs(p: argparse.ArgumentParser) -> None:
        p.add_argument("--tau", type=float, help="exploit threshold on window precision")
        p.add_argument("--alpha", type=float, help="reformulation nudge strength")
        p.add_argument("--tpr", type=float, help="judge true-positive rate")
        p.add_argument("--fpr", type=float, help="judge false-positive rate")

    p_run = sub.add_parser("run", help="run topics against a corpus")
    common(p_run)
    engine(p_run)
    knobs(p_run)
    p_run.add_argument("--topics", help="TSV file: topic_id<TAB>query text")
    p_run.add_argument("--corpus", help="binary vector matrix file")
    p_run.add_argument("--corpus-ids", help="candidate id list, one per line")
    p_run.add_argument("--corpus-dir", help="directory of <id>.vec files")
    p_run.add_argument("--queries", help="binary matrix of per-topic query vectors")
    p_run.add_argument("--query-ids", help="topic id list for --queries")
    p_run.add_argument("--qrels", help="ground-truth judgments (sim backend)")
    p_run.add_argument("--backend", choices=["sim", "http"], default=None)
    p_run.add_argument("--endpoint", help="chat-completions endpoint (http backend)")
    p_run.add_argument("--embed-endpoint", dest="embed_endpoint", help="embedding endpoint (http backend)")
    p_run.add_argument("--model", help="backend model name")
    p_run.add_argument("--judge-reasoning", dest="judge_reasoning", action="store_const", const=True, help="ask the judge for JSON verdicts with reasoning")
    p_run.add_argument("--seed", type=int, help="root seed for stochastic agents")
    p_run.add_argument("--tag", help="run tag written to the run file")
    p_run.add_argument("--matched-only", dest="matched_only", action="store_const", const=True, help="omit padding from the run file")
    p_run.set_defaults(func=cmd_run)

    p_sim = sub.add_parser("simulate", help="closed-loop run on a synthetic world")
    common(p_sim)
    engine(p_sim)
    knobs(p_sim)
    p_sim.add_argument("--world", help="world spec file (key=value)")
    p_sim.add_argument("--policy", help="retrieval_only | +reasoning | +reformulation | full")
    p_sim.add_argument("--seed", type=int, help="world seed override")
    p_sim.add_argument("--tag", help="run tag written to the run file")
    p_sim.add_argument("--matched-only", dest="matched_only", action="store_const", const=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_eval = sub.add_parser("evaluate", help="score run files against qrels")
    common(p_eval)
    p_eval.add_argument("--run", action="append", help="run file (repeatable)")
    p_eval.add_argument("--qrels", help="judgments file")
    p_eval.add_argument("--groups", help="TSV topic<TAB>group for per-set means")
    p_eval.add_argument("--seed", type=int, help="seed for the randomization test")
    p_eval.set_defaults(func=cmd_evaluate)

    p_abl = sub.add_parser("ablate", help="policy arms and (T,k) sensitivity sweep")
    common(p_abl)
    engine(p_abl)
    knobs(p_abl)
    p_abl.add_argument("--world", help="world spec file (key=value)")
    p_abl.add_argument("--seeds", type=int, help="number of world seeds")
    p_abl.add_argument("--arms", help="comma-separated arm names")
    p_abl.add_argument("--grid", help="comma-separated TxK pairs, e.g. 60x50,30x100")
    p_abl.set_defaults(func=cmd_ablate)

    p_tr = sub.add_parser("trace", help="narrate a stored run trace")
    p_tr.add_argument("--trace", help="trace JSON file")
    p_tr.add_argument("--iteration", type=int, help="show a single iteration")
    p_tr.set_defaults(func=cmd_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:  # pragma: no cover - console-script shim
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
