import json
import shutil
import subprocess

import numpy as np
import pytest

from conftest import concept, mcq
from mcqforge.cli import main
from mcqforge.datamodel import Benchmark, Corpus, read_jsonl, write_jsonl
from mcqforge.evalharness import EvalReport, ItemResult
from mcqforge.merge import ParameterMap, load_npk, save_npk
from mcqforge.taxonomy import save_taxonomy

GOOD_REPLY = (
    "QUESTION: Which lab value should the nurse check before giving digoxin?\n"
    "CHOICES:\n"
    "A) Serum potassium\n"
    "B) Serum amylase\n"
    "C) Urine ketones\n"
    "D) Platelet count\n"
    "ANSWER: A\n"
    "RATIONALE: Hypokalemia potentiates digoxin toxicity.\n"
)


def write_script(path, rules=None, default=None):
    data = {}
    if rules is not None:
        data["rules"] = rules
    if default is not None:
        data["default"] = default
    path.write_text(json.dumps(data), encoding="utf-8")


def write_config(tmp_path, scripts, mas=None, extra=""):
    """scripts: {backend_id: script filename}; returns config path."""
    lines = []
    for backend_id, script in scripts.items():
        lines += [f"[backends.{backend_id}]", 'kind = "mock"',
                  f'script = "{script}"', ""]
    if mas:
        lines.append("[mas]")
        for key, value in mas.items():
            rendered = f'"{value}"' if isinstance(value, str) else str(value)
            lines.append(f"{key} = {rendered}")
        lines.append("")
    config = tmp_path / "forge.toml"
    config.write_text("\n".join(lines) + extra, encoding="utf-8")
    return config


def toy_taxonomy_csv(tmp_path, n=4):
    from conftest import toy_taxonomy
    path = tmp_path / "toy.csv"
    save_taxonomy(toy_taxonomy(n), path)
    return path


class TestUsageErrors:
    def test_no_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_decontam_requires_tests(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["decontam", "--in", "x.jsonl", "--out", "y.jsonl",
                  "--decisions", "d.jsonl"])
        assert exc.value.code == 2

    def test_eval_requires_out(self):
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--backend", "m", "--bench", "b.jsonl"])
        assert exc.value.code == 2


class TestStageErrors:
    def test_missing_taxonomy_file(self, tmp_path, capsys):
        code = main(["taxonomy", "--in", str(tmp_path / "absent.csv")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error: IoError:")

    def test_backend_without_config(self, tmp_path, capsys):
        bench = tmp_path / "b.jsonl"
        write_jsonl(Benchmark(name="b", items=(mcq("q?", item_id="x"),)), bench)
        code = main(["eval", "--backend", "m", "--bench", str(bench),
                     "--out", str(tmp_path / "r.json")])
        assert code == 1
        assert "error: ConfigError:" in capsys.readouterr().err

    def test_unknown_backend_id(self, tmp_path, capsys):
        config = write_config(tmp_path, {})
        bench = tmp_path / "b.jsonl"
        write_jsonl(Benchmark(name="b", items=(mcq("q?", item_id="x"),)), bench)
        code = main(["eval", "--config", str(config), "--backend", "ghost",
                     "--bench", str(bench), "--out", str(tmp_path / "r.json")])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ConfigError:") and "ghost" in err

    def test_malformed_npk(self, tmp_path, capsys):
        bad = tmp_path / "bad.npk"
        bad.write_bytes(b"nope")
        code = main(["merge", "--base", str(bad), "--ft", str(bad),
                     "--out", str(tmp_path / "m.npk")])
        assert code == 1
        assert "error: MalformedContainer:" in capsys.readouterr().err


class TestTaxonomyCmd:
    def test_bundled_counts(self, capsys):
        assert main(["taxonomy"]) == 0
        out = capsys.readouterr().out
        assert out.strip() == (
            "specializations=7 domains=60 topics=232 concepts=1830"
        )

    def test_custom_file(self, tmp_path, capsys):
        path = toy_taxonomy_csv(tmp_path, n=4)
        assert main(["taxonomy", "--in", str(path)]) == 0
        assert "concepts=4" in capsys.readouterr().out


class TestGenerateCmd:
    def test_generates_and_writes_provenance(self, tmp_path, capsys):
        write_script(tmp_path / "gen.json", default=GOOD_REPLY)
        config = write_config(tmp_path, {"gen": "gen.json"})
        taxonomy = toy_taxonomy_csv(tmp_path, n=5)
        out = tmp_path / "corpus.jsonl"
        code = main(["generate", "--config", str(config), "--backend", "gen",
                     "--taxonomy", str(taxonomy), "--limit-concepts", "3",
                     "--per-concept", "2", "--seed", "7", "--out", str(out)])
        assert code == 0
        assert "generated 6 items over 3 concepts" in capsys.readouterr().out

        corpus = read_jsonl(out)
        assert isinstance(corpus, Corpus)
        assert len(corpus.items) == 6
        assert all(item.source == "synthetic" for item in corpus)

        sidecar = json.loads(
            (tmp_path / "corpus.jsonl.provenance.json").read_text()
        )
        assert sidecar["stage"] == "generate"
        assert sidecar["backend_ids"] == ["gen"]
        assert sidecar["seeds"] == {"seed": 7}
        assert sidecar["config_digest"]
        assert sidecar["outputs"] == [str(out)]


class TestBenchmarkCmd:
    def test_checkpointed_runs_are_idempotent(self, tmp_path):
        write_script(tmp_path / "gen.json", default=GOOD_REPLY)
        config = write_config(tmp_path, {"gen": "gen.json"})
        taxonomy = toy_taxonomy_csv(tmp_path, n=4)
        out = tmp_path / "bench.jsonl"
        ck = tmp_path / "ck.jsonl"
        argv = ["benchmark", "--config", str(config), "--backend", "gen",
                "--taxonomy", str(taxonomy), "--checkpoint", str(ck),
                "--out", str(out)]
        assert main(argv) == 0
        first = out.read_bytes()
        assert len(ck.read_text().strip().split("\n")) == 4
        assert main(argv) == 0
        assert out.read_bytes() == first
        bench = read_jsonl(out)
        assert isinstance(bench, Corpus)  # benchmark items carry paths
        assert len(bench.items) == 4


class TestMineCmd:
    def test_keeps_only_yes(self, tmp_path, capsys):
        pool = Benchmark(name="pool", items=(
            mcq("insulin administration timing", source="multimedqa",
                item_id="p0"),
            mcq("orbital mechanics of satellites", source="multimedqa",
                item_id="p1"),
        ))
        infile = tmp_path / "pool.jsonl"
        write_jsonl(pool, infile)
        write_script(tmp_path / "cls.json",
                     rules=[{"match": "insulin", "response": "yes"}],
                     default="no")
        config = write_config(tmp_path, {"cls": "cls.json"})
        out = tmp_path / "mined.jsonl"
        code = main(["mine", "--config", str(config), "--backend", "cls",
                     "--in", str(infile), "--out", str(out)])
        assert code == 0
        assert "kept 1/2" in capsys.readouterr().out
        assert [item.id for item in read_jsonl(out)] == ["p0"]


class TestDecontamCmd:
    def test_two_step_flow(self, tmp_path, capsys):
        tests = Benchmark(name="tests", items=(
            mcq("a client with heart failure reports dyspnea at rest",
                source="nclex_test", item_id="t0"),
        ))
        candidates = Corpus(name="cand", items=(
            mcq("a client with heart failure reports dyspnea at rest",
                path=concept(1), item_id="c0"),
            mcq("which vaccine schedule applies to newborns", path=concept(0),
                item_id="c1"),
            mcq("which vaccine schedule applies to newborns", path=concept(0),
                item_id="c2"),
        ))
        tests_path = tmp_path / "tests.jsonl"
        cand_path = tmp_path / "cand.jsonl"
        write_jsonl(tests, tests_path)
        write_jsonl(candidates, cand_path)
        out = tmp_path / "kept.jsonl"
        decisions_path = tmp_path / "decisions.jsonl"
        code = main(["decontam", "--threshold", "0.5",
                     "--tests", str(tests_path), "--in", str(cand_path),
                     "--out", str(out), "--decisions", str(decisions_path)])
        assert code == 0
        assert "kept 1/3 (rejected_testset=1, rejected_pool=1)" in \
            capsys.readouterr().out
        assert [item.id for item in read_jsonl(out)] == ["c1"]

        decisions = [json.loads(line) for line in
                     decisions_path.read_text().strip().split("\n")]
        assert [d["verdict"] for d in decisions] == [
            "rejected_testset", "kept", "rejected_pool"
        ]
        assert decisions[0]["matched_id"] == "t0"
        assert decisions[2]["matched_id"] == "c1"

        sidecar = json.loads(
            (tmp_path / "kept.jsonl.provenance.json").read_text()
        )
        assert sidecar["stage"] == "decontam"
        assert sidecar["threshold"] == 0.5
        assert sidecar["verdicts"]["kept"] == 1


def eval_fixture(tmp_path):
    questions = [
        ("what monitors osmolarity in the body", 0, "A"),
        ("which nerve innervates the diaphragm", 1, "B"),
        ("when should metformin be withheld", 2, "C"),
        ("how is phenylketonuria screened", 3, "D"),
    ]
    items = tuple(
        mcq(q, answer=a, source="nclex_test", item_id=f"e{i}")
        for i, (q, a, _) in enumerate(questions)
    )
    bench_path = tmp_path / "quiz.jsonl"
    write_jsonl(Benchmark(name="quiz", items=items), bench_path)
    rules = [
        {"match": q.split()[2], "response": f"Answer: {letter}"}
        for q, _, letter in questions[:3]
    ]
    write_script(tmp_path / "solver.json", rules=rules, default="beats me")
    return bench_path


class TestEvalCmd:
    def test_accuracy_and_table(self, tmp_path, capsys):
        bench_path = eval_fixture(tmp_path)
        config = write_config(tmp_path, {"solver": "solver.json"})
        out = tmp_path / "report.json"
        code = main(["eval", "--config", str(config), "--backend", "solver",
                     "--bench", str(bench_path), "--out", str(out),
                     "--table", "md"])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "quiz: accuracy 75.00% (3/4, 1 unparsed)" in stdout
        assert "| Model " in stdout and "75.00" in stdout

        report = EvalReport.load(out)
        assert report.accuracy == 0.75
        assert report.model_id == "solver"
        assert (tmp_path / "report.json.provenance.json").exists()

    def test_csv_table(self, tmp_path, capsys):
        bench_path = eval_fixture(tmp_path)
        config = write_config(tmp_path, {"solver": "solver.json"})
        code = main(["eval", "--config", str(config), "--backend", "solver",
                     "--bench", str(bench_path),
                     "--out", str(tmp_path / "r.json"), "--table", "csv"])
        assert code == 0
        assert "Model,Avg,quiz" in capsys.readouterr().out


class TestMasCmd:
    def test_debate_flow(self, tmp_path, capsys):
        item = mcq("a chemical splashed into a client's eyes; first action?",
                   answer=1, source="nclex_test", item_id="m0")
        bench_path = tmp_path / "hard.jsonl"
        write_jsonl(Benchmark(name="hard", items=(item,)), bench_path)
        roster = (
            "Difficulty: hard\n"
            "Agent 1 (1. Emergency Room Nurse): Rapid triage.\n"
            "Agent 2 (2. Ophthalmic Nurse): Eye irrigation.\n"
        )
        write_script(
            tmp_path / "panel.json",
            rules=[
                {"match": "orchestrator of a panel", "response": roster,
                 "latency": 1.2},
                {"match": "initial assessment", "response": "Answer: (B)",
                 "latency": 2.0},
                {"match": "address one other agent",
                 "response": "Agent 1 -> Agent 2: agreed", "latency": 2.5},
                {"match": "final verdict",
                 "response": "Final Decision:\nAnswer: (B)", "latency": 4.6},
            ],
        )
        config = write_config(tmp_path, {"panel": "panel.json"},
                              mas={"backend": "panel", "k": 2, "rounds": 1,
                                   "baseline_s": 5.6})
        out_dir = tmp_path / "transcripts"
        code = main(["mas", "--config", str(config), "--bench",
                     str(bench_path), "--out", str(out_dir)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "accuracy 100.00%" in stdout
        assert "Single-LLM (baseline)" in stdout
        assert "MAS (hard)" in stdout

        lines = (out_dir / "transcripts.jsonl").read_text().strip().split("\n")
        record = json.loads(lines[0])
        assert record["answer"] == 1
        assert record["correct"] is True
        assert record["transcript"]["difficulty"] == "hard"
        # 1.2 + 2*2.0 + 2*2.5 + 4.6
        assert record["ledger"]["total"] == pytest.approx(14.8)
        assert (out_dir / "provenance.json").exists()

    def test_missing_mas_table(self, tmp_path, capsys):
        write_script(tmp_path / "panel.json", default="x")
        config = write_config(tmp_path, {"panel": "panel.json"})
        bench_path = tmp_path / "b.jsonl"
        write_jsonl(Benchmark(name="b", items=(mcq("q?", item_id="x"),)),
                    bench_path)
        code = main(["mas", "--config", str(config), "--bench",
                     str(bench_path), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error: ConfigError:" in capsys.readouterr().err


class TestDistillCmd:
    def test_agreement_filter(self, tmp_path, capsys):
        corpus = Corpus(name="seed", items=(
            mcq("first distill seed", answer=1, path=concept(0), item_id="s0"),
            mcq("second distill seed", answer=1, path=concept(1), item_id="s1"),
        ))
        infile = tmp_path / "seed.jsonl"
        write_jsonl(corpus, infile)
        write_script(
            tmp_path / "reasoner.json",
            rules=[
                {"match": "first distill", "response": "Because... Answer: (B)"},
                {"match": "second distill", "response": "Hence... Answer: (C)"},
            ],
        )
        config = write_config(tmp_path, {"reasoner": "reasoner.json"})
        out = tmp_path / "traces.jsonl"
        code = main(["distill", "--config", str(config), "--backend",
                     "reasoner", "--in", str(infile), "--out", str(out)])
        assert code == 0
        assert "kept 1/2 traces (retention 50.00%)" in capsys.readouterr().out
        records = [json.loads(line) for line in
                   out.read_text().strip().split("\n")]
        assert len(records) == 1
        assert records[0]["id"] == "s0"
        assert records[0]["agrees"] is True
        assert records[0]["distilled_answer"] == 1


class TestMergeCmd:
    def test_merge_is_deterministic(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        base = ParameterMap({"w": rng.normal(size=(16, 8)).astype(np.float32)})
        ft = ParameterMap({
            "w": base["w"] + rng.normal(size=(16, 8)).astype(np.float32)
        })
        base_path, ft_path = tmp_path / "base.npk", tmp_path / "ft.npk"
        save_npk(base, base_path)
        save_npk(ft, ft_path)
        args = ["merge", "--base", str(base_path), "--ft", str(ft_path),
                "--p", "0.5", "--w", "0.6", "--seed", "1"]
        out1, out2 = tmp_path / "m1.npk", tmp_path / "m2.npk"
        assert main(args + ["--out", str(out1)]) == 0
        assert "merged 1 parameters" in capsys.readouterr().out
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        merged = load_npk(out1)
        assert merged["w"].shape == (16, 8)
        assert (tmp_path / "m1.npk.provenance.json").exists()


class TestReportCmd:
    def test_pivot_and_save(self, tmp_path, capsys):
        def save_report(model, bench, acc, n=4):
            correct = round(acc * n)
            per = tuple(ItemResult(f"{bench}{i}", 0, i < correct, 0.0)
                        for i in range(n))
            report = EvalReport(bench, model, n, correct, 0, correct / n, per)
            path = tmp_path / f"{model}-{bench}.json"
            report.save(path)
            return path

        paths = [
            save_report("tuned", "quiz", 0.75),
            save_report("stock", "quiz", 0.5),
        ]
        out = tmp_path / "table.md"
        code = main(["report", "--reports", *map(str, paths),
                     "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "75.00" in text and "50.00" in text
        lines = [line for line in text.split("\n") if line.startswith("| ")]
        assert lines[1].startswith("| tuned")  # sorted by average, best first
        assert out.read_text() == text


@pytest.mark.skipif(shutil.which("forge") is None,
                    reason="console script not on PATH")
def test_console_script_runs():
    proc = subprocess.run(["forge", "taxonomy"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "concepts=1830" in proc.stdout
