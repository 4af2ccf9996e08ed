"""Synthetic MCQ generation plus the resumable per-concept benchmark.

Part 1 generates two items for a single concept and survives one
malformed reply via the schema retry loop. Part 2 builds a benchmark
over a four-concept taxonomy, gets interrupted mid-run, and resumes
from the JSONL checkpoint touching only the unfinished concepts.
"""

import tempfile
from pathlib import Path

from mcqforge.generator import PromptTemplate, generate_benchmark, generate_mcqs
from mcqforge.llmclient import Exhausted, MockFailure, script_mock
from mcqforge.taxonomy import ConceptPath, Taxonomy

CONCEPTS = [
    ("telemetry strips", "Which rhythm on the telemetry strip needs defibrillation now?"),
    ("insulin timing", "How long before breakfast should regular insulin be given?"),
    ("wound staging", "Which description matches a stage 3 pressure injury?"),
    ("fall precautions", "Which client assignment carries the highest fall risk?"),
]


def reply(stem: str) -> str:
    return (
        f"QUESTION: {stem}\n"
        "CHOICES:\n"
        "A) First option\n"
        "B) Second option\n"
        "C) Third option\n"
        "D) Fourth option\n"
        "ANSWER: B\n"
        "RATIONALE: Matches the current standard of care.\n"
    )


taxonomy = Taxonomy(
    paths=tuple(
        ConceptPath("Clinical Skills", "Patient Safety", f"topic {i}", name)
        for i, (name, _) in enumerate(CONCEPTS)
    ),
    source="demo",
)
template = PromptTemplate.from_file("mcq_generation")
good_rules = [(name, reply(stem)) for name, stem in CONCEPTS]

# --- part 1: one concept, first reply malformed, retried transparently
flaky = script_mock(
    rules=[("telemetry", ["I cannot format that as requested.",
                          reply(CONCEPTS[0][1])])]
)
items, stats = generate_mcqs(flaky, taxonomy.paths[0], n=2, template=template)
print(f"generated {stats.produced} items, {stats.malformed} malformed reply retried,"
      f" {flaky.call_count} backend calls")
print(f"ids: {[it.id for it in items]}  source: {items[0].source}")

# --- part 2: benchmark run that dies on the third concept, then resumes
with tempfile.TemporaryDirectory() as tmp:
    checkpoint = Path(tmp) / "bench.ckpt.jsonl"
    dying = script_mock(rules=[("wound staging", MockFailure("transient", "HTTP 503"))]
                        + good_rules)
    try:
        generate_benchmark(dying, taxonomy, template, checkpoint_path=checkpoint)
    except Exhausted as exc:
        print(f"\nfirst run aborted: {exc}")
    done = [line for line in checkpoint.read_text().split("\n") if line.strip()]
    print(f"checkpoint holds {len(done)} finished concepts")

    steady = script_mock(rules=good_rules)
    bench = generate_benchmark(steady, taxonomy, template, checkpoint_path=checkpoint)
    print(f"resume made only {steady.call_count} calls for the missing concepts")
    print(f"benchmark '{bench.name}' has {len(bench.items)} items, "
          f"order follows the taxonomy:")
    for item in bench.items:
        print(f"  {item.id}  [{item.path.concept}] {item.question[:52]}...")
