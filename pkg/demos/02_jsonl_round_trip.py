"""MCQ items on disk: fixed-order JSONL with lossless round-trips.

Items carry their taxonomy path inline; unknown fields survive a
read/write cycle untouched, and subsampling is seed-deterministic.
"""

import tempfile
from pathlib import Path

from mcqforge.datamodel import Corpus, McqItem, read_jsonl, subsample, write_jsonl
from mcqforge.taxonomy import ConceptPath

path = ConceptPath("Cardiac Nursing", "Acute Coronary Care",
                   "Chest Pain Triage", "Nitroglycerin administration")

items = tuple(
    McqItem(
        question=f"Scenario {i}: which reassessment interval applies after "
                 f"the {i + 1}st sublingual dose?",
        choices=("One minute", "Five minutes", "Fifteen minutes", "One hour"),
        answer=1,
        rationale="Sublingual nitroglycerin is reassessed every five minutes.",
        path=path,
        id=f"demo-{i:03d}",
    )
    for i in range(6)
)
corpus = Corpus(name="demo", items=items)

workdir = Path(tempfile.mkdtemp())
out = workdir / "demo.jsonl"
write_jsonl(corpus, out)
print(f"wrote {len(corpus.items)} items to {out}")
print("first line on disk:")
print("  " + out.read_text(encoding="utf-8").split("\n")[0][:100] + "...")

loaded = read_jsonl(out)
print(f"\nread back {type(loaded).__name__} named {loaded.name!r}; "
      f"round-trip equal: {loaded.items == corpus.items}")

small = subsample(corpus, n=3, seed=7)
print(f"seed-7 subsample keeps {[item.id for item in small.items]}")
print(f"same seed, same pick: "
      f"{subsample(corpus, n=3, seed=7).items == small.items}")
