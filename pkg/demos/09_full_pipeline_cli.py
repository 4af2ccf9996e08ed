"""Every pipeline stage driven through the forge CLI in one sandbox.

Builds a three-concept taxonomy, six scripted mock backends, and a
TOML config in a temp directory, then runs generate -> benchmark ->
mine -> decontam -> eval -> mas -> distill -> merge -> report exactly
as a shell user would. Each stage prints its own summary line; the
sidecar provenance files record backends, seeds, and config digest.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from mcqforge.cli import main
from mcqforge.merge import ParameterMap, save_npk
from mcqforge.taxonomy import ConceptPath, Taxonomy, save_taxonomy

GEN_STEMS = [
    "Which telemetry alarm requires the nurse to respond in person first?",
    "A client on insulin glargine asks when the dose peaks; what should "
    "the nurse explain?",
    "Which wound care order should the nurse question for a stage 2 "
    "pressure injury?",
]
BENCH_STEMS = [
    GEN_STEMS[0],  # planted test-set contamination
    "What finding after cardiac catheterization must be reported "
    "immediately?",
    "Which statement shows understanding of home oxygen safety rules?",
]


def reply(stem: str) -> str:
    return (f"QUESTION: {stem}\nCHOICES:\nA) First option\nB) Second option\n"
            "C) Third option\nD) Fourth option\nANSWER: B\n"
            "RATIONALE: Consistent with unit policy.\n")


def write_inputs(root: Path) -> Path:
    taxonomy = Taxonomy(paths=tuple(
        ConceptPath("Clinical Skills", "Acute Care", f"topic {i}", f"concept {i}")
        for i in range(3)
    ))
    save_taxonomy(taxonomy, root / "toy.csv")

    def script(name, rules=None, default=None):
        data = {}
        if rules is not None:
            data["rules"] = rules
        if default is not None:
            data["default"] = default
        (root / name).write_text(json.dumps(data), encoding="utf-8")

    script("gen.json", rules=[
        {"match": f"topic {i}", "response": reply(stem)}
        for i, stem in enumerate(GEN_STEMS)
    ])
    script("bench.json", rules=[
        {"match": f"topic {i}", "response": reply(stem)}
        for i, stem in enumerate(BENCH_STEMS)
    ])
    script("cls.json", rules=[
        {"match": "catheterization", "response": "yes"},
        {"match": "oxygen", "response": "yes"},
    ], default="no")
    script("solver.json", rules=[
        {"match": "catheterization", "response": "Answer: (C)"},
    ], default="Answer: (B)")
    script("panel.json", rules=[
        {"match": "orchestrator of a panel", "response": "Difficulty: easy",
         "latency": 0.5},
        {"match": "Answer with the option letter", "response": "Answer: (B)",
         "latency": 5.6},
    ])
    script("reasoner.json", rules=[
        {"match": "insulin", "response": "Thinking it through... Answer: (C)"},
    ], default="The policy answer holds. Answer: (B)")

    config = root / "forge.toml"
    config.write_text("\n".join(
        [f'[backends.{b}]\nkind = "mock"\nscript = "{b}.json"\n'
         for b in ("gen", "bench", "cls", "solver", "panel", "reasoner")]
        + ['[mas]', 'backend = "panel"', 'k = 2', 'rounds = 1',
           'baseline_s = 5.6', '']
    ), encoding="utf-8")

    rng = np.random.default_rng(3)
    base = ParameterMap({"w": rng.normal(size=(32, 16)).astype(np.float32),
                         "b": rng.normal(size=16).astype(np.float32)})
    ft = ParameterMap({n: base[n] + rng.normal(size=base[n].shape)
                      .astype(np.float32) for n in base})
    save_npk(base, root / "base.npk")
    save_npk(ft, root / "ft.npk")
    return config


def forge(*argv):
    print(f"\n$ forge {' '.join(argv)}")
    code = main(list(argv))
    assert code == 0, f"stage failed with exit code {code}"


with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    cfg = str(write_inputs(root))
    run = root / "run"
    run.mkdir()
    taxonomy = str(root / "toy.csv")

    forge("generate", "--config", cfg, "--backend", "gen",
          "--taxonomy", taxonomy, "--per-concept", "2", "--seed", "1",
          "--out", str(run / "corpus.jsonl"))
    forge("benchmark", "--config", cfg, "--backend", "bench",
          "--taxonomy", taxonomy, "--checkpoint", str(run / "ck.jsonl"),
          "--out", str(run / "bench.jsonl"))
    forge("mine", "--config", cfg, "--backend", "cls",
          "--in", str(run / "bench.jsonl"), "--out", str(run / "mined.jsonl"))
    forge("decontam", "--threshold", "0.5", "--tests", str(run / "bench.jsonl"),
          "--in", str(run / "corpus.jsonl"), "--out", str(run / "kept.jsonl"),
          "--decisions", str(run / "decisions.jsonl"))
    forge("eval", "--config", cfg, "--backend", "solver",
          "--bench", str(run / "bench.jsonl"),
          "--out", str(run / "report.json"), "--table", "md")
    forge("mas", "--config", cfg, "--bench", str(run / "bench.jsonl"),
          "--limit", "1", "--out", str(run / "transcripts"))
    forge("distill", "--config", cfg, "--backend", "reasoner",
          "--in", str(run / "kept.jsonl"), "--out", str(run / "traces.jsonl"))
    forge("merge", "--base", str(root / "base.npk"), "--ft", str(root / "ft.npk"),
          "--p", "0.5", "--w", "0.6", "--seed", "1",
          "--out", str(run / "merged.npk"))
    forge("report", "--reports", str(run / "report.json"),
          "--out", str(run / "table.md"))

    print("\nproduced files:")
    for p in sorted(run.rglob("*")):
        if p.is_file():
            print(f"  {p.relative_to(run)}  ({p.stat().st_size} bytes)")
