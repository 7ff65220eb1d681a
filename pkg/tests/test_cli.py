"""End-to-end CLI coverage through main(argv)."""

import json
import subprocess

import numpy as np
import pytest

from conftest import unit_rows
from rankloop.cli import main
from rankloop.config import read_kv_file
from rankloop.corpus import CorpusIndex, write_index
from rankloop.orchestrator import RunTrace
from rankloop.trec import Qrels, read_qrels, read_run, write_qrels, write_run


@pytest.fixture(scope="module")
def world_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("world") / "world.txt"
    path.write_text(
        "\n".join(
            [
                'kind = "standard"',
                "n = 200",
                "dimension = 16",
                "topics = 2",
                "seed = 5",
                "rho = 0.7",
                "drift = 0.4",
                "planted_low = 10",
                "planted_high = 15",
            ]
        )
        + "\n"
    )
    return str(path)


@pytest.fixture(scope="module")
def sim_out(tmp_path_factory, world_file):
    out = tmp_path_factory.mktemp("sim") / "out"
    code = main(
        [
            "simulate",
            "--world",
            world_file,
            "--out",
            str(out),
            "--T",
            "4",
            "--k",
            "10",
            "--L",
            "40",
            "--seed",
            "1",
        ]
    )
    assert code == 0
    return out


@pytest.fixture(scope="module")
def run_inputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("run-inputs")
    rng = np.random.default_rng(77)
    docs = unit_rows(rng, 80, 8)
    ids = tuple(f"c{i:05d}" for i in range(80))
    write_index(CorpusIndex.from_arrays(ids, docs), root / "corpus.bin", root / "corpus.ids")
    queries = np.vstack([docs[0], docs[40]])
    write_index(
        CorpusIndex.from_arrays(("t1", "t2"), queries),
        root / "queries.bin",
        root / "queries.ids",
    )
    (root / "topics.tsv").write_text("t1\tfind the red car\nt2\tfind the blue boat\n")
    qrels = Qrels()
    for cid in ids[:10]:
        qrels.add("t1", cid, 1)
    for cid in ids[40:50]:
        qrels.add("t2", cid, 1)
    write_qrels(root / "qrels.txt", qrels)
    return root


def run_argv(root, out, extra=()):
    return [
        "run",
        "--topics",
        str(root / "topics.tsv"),
        "--corpus",
        str(root / "corpus.bin"),
        "--corpus-ids",
        str(root / "corpus.ids"),
        "--queries",
        str(root / "queries.bin"),
        "--query-ids",
        str(root / "queries.ids"),
        "--qrels",
        str(root / "qrels.txt"),
        "--T",
        "4",
        "--k",
        "5",
        "--L",
        "15",
        "--out",
        str(out),
        *extra,
    ]


class TestTopLevel:
    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.startswith("rankloop ")

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 2

    def test_no_subcommand(self):
        assert main([]) == 2

    def test_console_script(self):
        proc = subprocess.run(["rankloop", "--version"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.startswith("rankloop ")


class TestSimulate:
    def test_outputs(self, sim_out):
        run = read_run(sim_out / "run.trec")
        rankings = run.rankings()
        assert sorted(rankings) == ["t00", "t01"]
        assert all(len(r) == 40 for r in rankings.values())
        qrels = read_qrels(sim_out / "qrels.txt")
        assert set(qrels.topics()) == {"t00", "t01"}
        curves = (sim_out / "curves.tsv").read_text().splitlines()
        assert curves[0] == "topic\tbin\tcumulative_relevant"
        assert len(curves) == 1 + 2 * 4  # 2 topics x L//k bins
        cfg = read_kv_file(sim_out / "config.txt")
        assert cfg["T"] == 4 and cfg["k"] == 10 and cfg["L"] == 40
        assert cfg["seed"] == 1
        assert cfg["world"].endswith("world.txt")
        for topic in ("t00", "t01"):
            trace = RunTrace.from_json((sim_out / "traces" / f"{topic}.json").read_text())
            assert trace.topic == topic

    def test_deterministic_rerun(self, tmp_path, world_file, sim_out):
        out2 = tmp_path / "again"
        argv = [
            "simulate", "--world", world_file, "--out", str(out2),
            "--T", "4", "--k", "10", "--L", "40", "--seed", "1",
        ]
        assert main(argv) == 0
        for name in ("run.trec", "qrels.txt", "curves.tsv"):
            assert (out2 / name).read_bytes() == (sim_out / name).read_bytes()

    def test_config_file_merge(self, tmp_path, world_file):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("k = 8\ntau = 0.5\n")
        out = tmp_path / "out"
        argv = [
            "simulate", "--world", world_file, "--config", str(cfg),
            "--out", str(out), "--T", "3", "--L", "24", "--seed", "2",
        ]
        assert main(argv) == 0
        echoed = read_kv_file(out / "config.txt")
        assert echoed["k"] == 8  # from file
        assert echoed["tau"] == 0.5  # from file
        assert echoed["T"] == 3  # flag wins over default

    def test_unknown_config_key(self, tmp_path, world_file, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("bogus = 1\n")
        assert main(["simulate", "--world", world_file, "--config", str(cfg)]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_missing_world(self, capsys):
        assert main(["simulate"]) == 2
        assert "--world is required" in capsys.readouterr().err

    def test_bad_policy(self, tmp_path, world_file, capsys):
        argv = ["simulate", "--world", world_file, "--policy", "zen", "--out", str(tmp_path / "o")]
        assert main(argv) == 2
        assert "--policy" in capsys.readouterr().err

    def test_bad_world_spec(self, tmp_path, capsys):
        spec = tmp_path / "w.txt"
        spec.write_text('kind = "hexagonal"\n')
        assert main(["simulate", "--world", str(spec), "--out", str(tmp_path / "o")]) == 2
        assert "bad world spec" in capsys.readouterr().err


class TestRun:
    def test_end_to_end(self, run_inputs, tmp_path):
        out = tmp_path / "out"
        assert main(run_argv(run_inputs, out)) == 0
        rankings = read_run(out / "run.trec").rankings()
        assert sorted(rankings) == ["t1", "t2"]
        assert all(len(r) == 15 for r in rankings.values())
        summary = json.loads((out / "summary.json").read_text())
        assert summary["topics"] == 2
        assert summary["failed"] == []
        assert set(summary["terminations"]) == {"t1", "t2"}
        cfg = read_kv_file(out / "config.txt")
        assert cfg["T"] == 4 and cfg["k"] == 5 and cfg["L"] == 15
        for topic in ("t1", "t2"):
            trace = RunTrace.from_json((out / "traces" / f"{topic}.json").read_text())
            lines = (out / "traces" / f"{topic}.records.jsonl").read_text().splitlines()
            assert len(lines) == len(trace.records)
            assert all(json.loads(line)["iteration"] == i for i, line in enumerate(lines))

    def test_matched_only(self, run_inputs, tmp_path):
        out = tmp_path / "out"
        assert main(run_argv(run_inputs, out, extra=["--matched-only"])) == 0
        rankings = read_run(out / "run.trec").rankings()
        for topic in ("t1", "t2"):
            trace = RunTrace.from_json((out / "traces" / f"{topic}.json").read_text())
            assert trace.submission.matched_count() >= 1
            assert len(rankings[topic]) == trace.submission.matched_count()

    def test_missing_topics(self, capsys):
        assert main(["run"]) == 2
        assert "--topics is required" in capsys.readouterr().err

    def test_missing_corpus(self, run_inputs, capsys):
        assert main(["run", "--topics", str(run_inputs / "topics.tsv")]) == 2
        assert "--corpus" in capsys.readouterr().err

    def test_sim_backend_needs_qrels(self, run_inputs, tmp_path, capsys):
        argv = run_argv(run_inputs, tmp_path / "o")
        cut = argv.index("--qrels")
        del argv[cut : cut + 2]
        assert main(argv) == 2
        assert "--qrels" in capsys.readouterr().err

    def test_sim_backend_needs_query_vectors(self, run_inputs, tmp_path, capsys):
        argv = run_argv(run_inputs, tmp_path / "o")
        cut = argv.index("--queries")
        del argv[cut : cut + 4]  # --queries X --query-ids Y
        assert main(argv) == 2
        assert "--queries" in capsys.readouterr().err

    def test_query_dimension_mismatch(self, run_inputs, tmp_path, capsys):
        rng = np.random.default_rng(3)
        bad = tmp_path / "bad"
        bad.mkdir()
        write_index(
            CorpusIndex.from_arrays(("t1", "t2"), unit_rows(rng, 2, 4)),
            bad / "q.bin",
            bad / "q.ids",
        )
        argv = run_argv(run_inputs, tmp_path / "o")
        argv[argv.index("--queries") + 1] = str(bad / "q.bin")
        argv[argv.index("--query-ids") + 1] = str(bad / "q.ids")
        assert main(argv) == 2
        assert "4-d but corpus is 8-d" in capsys.readouterr().err

    def test_topic_without_judgments(self, run_inputs, tmp_path, capsys):
        topics = tmp_path / "topics.tsv"
        topics.write_text("t1\tred car\nt9\tmystery topic\n")
        argv = run_argv(run_inputs, tmp_path / "o")
        argv[argv.index("--topics") + 1] = str(topics)
        assert main(argv) == 2
        err = capsys.readouterr().err
        assert "t9" in err

    def test_malformed_topics_file(self, run_inputs, tmp_path, capsys):
        topics = tmp_path / "topics.tsv"
        topics.write_text("just one field\n")
        argv = run_argv(run_inputs, tmp_path / "o")
        argv[argv.index("--topics") + 1] = str(topics)
        assert main(argv) == 2
        assert "topic<TAB>query" in capsys.readouterr().err

    def test_http_backend_needs_endpoint(self, run_inputs, tmp_path, capsys):
        argv = run_argv(run_inputs, tmp_path / "o", extra=["--backend", "http"])
        assert main(argv) == 2
        assert "--endpoint" in capsys.readouterr().err


class TestEvaluate:
    @pytest.fixture()
    def eval_inputs(self, tmp_path):
        qrels = Qrels()
        for i in range(6):
            qrels.add(f"t{i}", "good", 1)
            qrels.add(f"t{i}", "bad", 0)
        write_qrels(tmp_path / "qrels.txt", qrels)
        a = {f"t{i}": [("good", 2.0), ("bad", 1.0)] for i in range(6)}
        b = {f"t{i}": [("bad", 2.0), ("good", 1.0)] for i in range(6)}
        write_run(tmp_path / "alpha.trec", a, tag="alpha")
        write_run(tmp_path / "beta.trec", b, tag="beta")
        return tmp_path

    def test_pairwise(self, eval_inputs, capsys):
        out = eval_inputs / "out"
        argv = [
            "evaluate",
            "--run", str(eval_inputs / "alpha.trec"),
            "--run", str(eval_inputs / "beta.trec"),
            "--qrels", str(eval_inputs / "qrels.txt"),
            "--out", str(out),
        ]
        assert main(argv) == 0
        printed = capsys.readouterr().out
        assert "alpha\tmean_ap=1.0000" in printed
        assert "beta\tmean_ap=0.5000" in printed
        assert "alpha vs beta: wins=6 ties=0 losses=0" in printed
        report = json.loads((out / "report.json").read_text())
        assert report["means"]["alpha"] == 1.0
        tsv = (out / "report.tsv").read_text().splitlines()
        assert tsv[0] == "topic\talpha\tbeta"

    def test_single_run(self, eval_inputs, capsys):
        out = eval_inputs / "out1"
        argv = [
            "evaluate",
            "--run", str(eval_inputs / "alpha.trec"),
            "--qrels", str(eval_inputs / "qrels.txt"),
            "--out", str(out),
        ]
        assert main(argv) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["pairs"] == []

    def test_groups(self, eval_inputs):
        groups = eval_inputs / "groups.tsv"
        groups.write_text("".join(f"t{i}\t{'even' if i % 2 == 0 else 'odd'}\n" for i in range(6)))
        out = eval_inputs / "out2"
        argv = [
            "evaluate",
            "--run", str(eval_inputs / "alpha.trec"),
            "--qrels", str(eval_inputs / "qrels.txt"),
            "--groups", str(groups),
            "--out", str(out),
        ]
        assert main(argv) == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report["group_means"]) == {"even", "odd"}

    def test_duplicate_basenames_get_disambiguated(self, eval_inputs, tmp_path):
        other = tmp_path / "copy"
        other.mkdir()
        (other / "alpha.trec").write_bytes((eval_inputs / "alpha.trec").read_bytes())
        out = eval_inputs / "out3"
        argv = [
            "evaluate",
            "--run", str(eval_inputs / "alpha.trec"),
            "--run", str(other / "alpha.trec"),
            "--qrels", str(eval_inputs / "qrels.txt"),
            "--out", str(out),
        ]
        assert main(argv) == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report["scores"]) == {"alpha", "alpha#1"}

    def test_no_shared_topics(self, eval_inputs, tmp_path, capsys):
        write_run(tmp_path / "other.trec", {"zz": [("good", 1.0)]}, tag="x")
        argv = [
            "evaluate",
            "--run", str(tmp_path / "other.trec"),
            "--qrels", str(eval_inputs / "qrels.txt"),
        ]
        assert main(argv) == 2
        assert "share no judged topics" in capsys.readouterr().err

    def test_requires_run_and_qrels(self, eval_inputs, capsys):
        assert main(["evaluate"]) == 2
        assert main(["evaluate", "--run", str(eval_inputs / "alpha.trec")]) == 2

    def test_corrupt_run_file(self, eval_inputs, tmp_path, capsys):
        bad = tmp_path / "bad.trec"
        bad.write_text("not a run file\n")
        argv = [
            "evaluate",
            "--run", str(bad),
            "--qrels", str(eval_inputs / "qrels.txt"),
        ]
        assert main(argv) == 2
        assert "cannot read run file" in capsys.readouterr().err


class TestAblate:
    def test_small_sweep(self, world_file, tmp_path, capsys):
        out = tmp_path / "out"
        argv = [
            "ablate",
            "--world", world_file,
            "--out", str(out),
            "--seeds", "2",
            "--arms", "retrieval_only,full",
            "--grid", "3x8",
            "--T", "3", "--k", "8", "--L", "16",
        ]
        assert main(argv) == 0
        printed = capsys.readouterr().out
        assert "arm retrieval_only:" in printed and "grid T3_k8:" in printed
        report = json.loads((out / "ablation.json").read_text())
        assert report["seeds"] == [0, 1]
        assert set(report["arms"]) == {"retrieval_only", "full"}
        assert set(report["grid"]) == {"T3_k8"}
        tsv = (out / "ablation.tsv").read_text().splitlines()
        assert len(tsv) == 1 + 2 + 1
        assert read_kv_file(out / "config.txt")["arms"] == "retrieval_only,full"

    def test_bad_grid(self, world_file, capsys):
        argv = ["ablate", "--world", world_file, "--grid", "3y8"]
        assert main(argv) == 2
        assert "bad grid entry" in capsys.readouterr().err

    def test_unknown_arm(self, world_file, capsys):
        argv = ["ablate", "--world", world_file, "--arms", "sideways"]
        assert main(argv) == 2
        assert "unknown arms" in capsys.readouterr().err


class TestTrace:
    def test_narrative(self, sim_out, capsys):
        path = sim_out / "traces" / "t00.json"
        assert main(["trace", "--trace", str(path)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("topic t00: ")
        assert "termination=" in out
        assert "[000] window [0,10)" in out
        assert "matched (precision " in out

    def test_single_iteration(self, sim_out, capsys):
        path = sim_out / "traces" / "t00.json"
        assert main(["trace", "--trace", str(path), "--iteration", "0"]) == 0
        out = capsys.readouterr().out
        assert "[000]" in out and "[001]" not in out

    def test_missing_iteration(self, sim_out, capsys):
        path = sim_out / "traces" / "t00.json"
        assert main(["trace", "--trace", str(path), "--iteration", "99"]) == 2
        assert "no iteration 99" in capsys.readouterr().err

    def test_corrupt_trace(self, tmp_path, capsys):
        bad = tmp_path / "t.json"
        bad.write_text("{ not json")
        assert main(["trace", "--trace", str(bad)]) == 2
        assert "cannot load trace" in capsys.readouterr().err

    def test_requires_trace_flag(self, capsys):
        assert main(["trace"]) == 2
        assert "--trace is required" in capsys.readouterr().err
