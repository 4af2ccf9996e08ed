"""Shared fixtures and independent reference implementations.

The reference functions here are deliberately written from scratch
(full-table DP, all-pairs scanning) so the optimized package code can
be checked against them rather than against itself.
"""

from __future__ import annotations

import random
import re
from typing import Dict, List, Optional, Sequence, Tuple

import pytest

from mcqforge.datamodel import Benchmark, Corpus, McqItem
from mcqforge.taxonomy import ConceptPath, Taxonomy

_WORDS = re.compile(r"[0-9a-z]+")


# ---------------------------------------------------------------- oracles

def oracle_lcs(a: Sequence[str], b: Sequence[str]) -> int:
    """Full-table LCS DP, no optimizations."""
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[n][m]


def oracle_rouge_f1(candidate: str, reference: str) -> float:
    ta = _WORDS.findall(candidate.lower())
    tb = _WORDS.findall(reference.lower())
    if not ta and not tb:
        return 1.0
    lcs = oracle_lcs(ta, tb)
    if lcs == 0:
        return 0.0
    return 2.0 * lcs / (len(ta) + len(tb))


def oracle_decontaminate(candidates, test_sets, threshold: float,
                         strict: bool = False):
    """All-pairs two-step reference; returns (kept ids, decisions).

    decisions: list of (item_id, verdict, matched_id) in input order.
    """
    def passes(v: float) -> bool:
        return v > threshold if strict else v >= threshold

    refs = [(item.id, item.question) for bench in test_sets for item in bench]
    decisions: List[Tuple[str, str, Optional[str]]] = []
    kept_ids: List[str] = []
    pools: Dict[tuple, List[Tuple[str, str]]] = {}
    for item in candidates:
        hit = None
        for rid, rq in refs:
            if passes(oracle_rouge_f1(item.question, rq)):
                hit = rid
                break
        if hit is not None:
            decisions.append((item.id, "rejected_testset", hit))
            continue
        pool = pools.setdefault(item.path.key(), [])
        hit = None
        for rid, rq in pool:
            if passes(oracle_rouge_f1(item.question, rq)):
                hit = rid
                break
        if hit is not None:
            decisions.append((item.id, "rejected_pool", hit))
            continue
        pool.append((item.id, item.question))
        kept_ids.append(item.id)
        decisions.append((item.id, "kept", None))
    return kept_ids, decisions


# ---------------------------------------------------------------- builders

def mcq(question: str, answer: int = 0, choices=None, path=None,
        source: str = "synthetic", item_id: str = "", rationale: str = "ok") -> McqItem:
    return McqItem(
        question=question,
        choices=tuple(choices) if choices else ("alpha", "beta", "gamma", "delta"),
        answer=answer,
        rationale=rationale,
        path=path,
        source=source,
        id=item_id,
    )


def concept(n: int) -> ConceptPath:
    return ConceptPath(
        specialization=f"spec {n % 3}",
        domain=f"domain {n % 5}",
        topic=f"topic {n}",
        concept=f"concept {n}",
    )


def toy_taxonomy(n: int) -> Taxonomy:
    return Taxonomy(paths=tuple(concept(i) for i in range(n)),
                    source="toy", digest=f"toy-{n}")


def random_corpus(seed: int, n_items: int = 120, n_concepts: int = 8,
                  test_sets=(), dup_rate: float = 0.1,
                  collision_rate: float = 0.05) -> Corpus:
    """Random questions with planted same-concept duplicates and
    planted copies of test-set questions."""
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(40)]
    paths = [concept(i) for i in range(n_concepts)]
    test_questions = [item.question for bench in test_sets for item in bench]

    items = []
    questions: List[Tuple[str, ConceptPath]] = []
    for i in range(n_items):
        path = rng.choice(paths)
        roll = rng.random()
        if test_questions and roll < collision_rate:
            question = rng.choice(test_questions)
        elif questions and roll < collision_rate + dup_rate:
            question, path = rng.choice(questions)
        else:
            question = " ".join(rng.choices(vocab, k=rng.randint(3, 12)))
        questions.append((question, path))
        items.append(mcq(question, answer=rng.randrange(4), path=path,
                         item_id=f"c{i:04d}"))
    return Corpus(name="random", items=tuple(items))


def random_benchmark(seed: int, n_items: int = 30, name: str = "tests") -> Benchmark:
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(40)]
    items = [
        mcq(" ".join(rng.choices(vocab, k=rng.randint(3, 12))),
            answer=rng.randrange(4), source="nclex_test", item_id=f"t{i:04d}")
        for i in range(n_items)
    ]
    return Benchmark(name=name, items=tuple(items))


@pytest.fixture
def chemical_item() -> McqItem:
    """Hard-question fixture in the transcript style used across tests."""
    return McqItem(
        question=("A client arrives in the emergency department after a "
                  "chemical splash to the eyes. Which information should "
                  "the nurse obtain first?"),
        choices=(
            "The time of the client's last meal",
            "The type and exact composition of the chemical",
            "The client's history of corrective lenses",
            "The name of the client's employer",
        ),
        answer=1,
        source="nclex_test",
        id="chem-eye-001",
    )


ROSTER_REPLY = "\n".join([
    "Difficulty: hard",
    "Recruitment: Agent 1 (1. Emergency Room Nurse): Specializes in rapid triage and assessment.",
    "Agent 2 (2. Occupational Health Nurse): Knows workplace chemical exposure protocols.",
    "Agent 3 (3. Ophthalmic Nurse): Expert in ocular irrigation and eye injuries.",
    "Agent 4 ( 4. Critical Care Nurse (ICU Nurse)): Manages rapidly deteriorating clients.",
    "Agent 5 (5. Toxicology Nurse Specialist): Guides decontamination decisions.",
])
