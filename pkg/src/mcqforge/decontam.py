"""ROUGE-L similarity and two-step corpus decontamination.

Candidates are screened first against every question in the supplied
test benchmarks, then sequentially against the pool of already-kept
questions sharing the same concept path. Similarity is ROUGE-L F1 over
question tokens only.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .datamodel import Benchmark, Corpus, McqItem
from .errors import ForgeError

DEFAULT_THRESHOLD = 0.5

_TOKEN_RE = re.compile(r"[0-9a-z]+")


class MissingConceptPath(ForgeError):
    """Candidate lacks the taxonomy path required for pool screening."""


def tokenize(text: str) -> List[str]:
    """Lowercase tokens, split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a)*len(b)) DP."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    lcs_len: int
    ref_len: int
    cand_len: int

    def to_record(self) -> dict:
        return {
            "value": self.value,
            "lcs_len": self.lcs_len,
            "ref_len": self.ref_len,
            "cand_len": self.cand_len,
        }


def _score(lcs: int, cand_len: int, ref_len: int) -> SimilarityScore:
    if cand_len == 0 and ref_len == 0:
        return SimilarityScore(1.0, 0, 0, 0)  # identical (empty) sequences
    if lcs == 0:
        return SimilarityScore(0.0, 0, ref_len, cand_len)
    value = 2.0 * lcs / (cand_len + ref_len)
    return SimilarityScore(value, lcs, ref_len, cand_len)


def rouge_l(candidate: str, reference: str) -> SimilarityScore:
    """ROUGE-L F1 between two texts (beta = 1, token-level)."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    return _score(lcs_length(cand, ref), len(cand), len(ref))


@dataclass(frozen=True)
class DecontamDecision:
    item_id: str
    verdict: str  # kept | rejected_testset | rejected_pool
    matched_id: Optional[str] = None
    score: Optional[SimilarityScore] = None

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "verdict": self.verdict,
            "matched_id": self.matched_id,
            "score": self.score.to_record() if self.score else None,
        }


def _passes(value: float, threshold: float, strict: bool) -> bool:
    return value > threshold if strict else value >= threshold


def _best_possible(cand_len: int, ref_len: int, cap: int) -> float:
    # Upper bound on F1: LCS can't exceed either length or the shared
    # token-bag size, so skipping pairs below threshold is lossless.
    if cand_len == 0 and ref_len == 0:
        return 1.0
    best = min(cand_len, ref_len, cap)
    if best == 0:
        return 0.0
    return 2.0 * best / (cand_len + ref_len)


class _Ref:
    __slots__ = ("item_id", "tokens", "bag")

    def __init__(self, item_id: str, tokens: List[str]):
        self.item_id = item_id
        self.tokens = tokens
        self.bag = Counter(tokens)


def _match_against(cand_tokens: List[str], cand_bag: Counter, ref: _Ref,
                   threshold: float, strict: bool) -> Optional[SimilarityScore]:
    cap = sum((cand_bag & ref.bag).values())
    bound = _best_possible(len(cand_tokens), len(ref.tokens), cap)
    if not _passes(bound, threshold, strict):
        return None
    lcs = lcs_length(cand_tokens, ref.tokens)
    score = _score(lcs, len(cand_tokens), len(ref.tokens))
    if _passes(score.value, threshold, strict):
        return score
    return None


class _TestIndex:
    """Inverted token index over flattened test-set questions."""

    def __init__(self, test_sets: Sequence[Benchmark]):
        self.refs: List[_Ref] = []
        self.postings: Dict[str, List[int]] = {}
        self.empty: List[int] = []  # refs whose question has no tokens
        for bench in test_sets:
            for item in bench:
                idx = len(self.refs)
                ref = _Ref(item.id, tokenize(item.question))
                self.refs.append(ref)
                if not ref.tokens:
                    self.empty.append(idx)
                for tok in set(ref.tokens):
                    self.postings.setdefault(tok, []).append(idx)

    def first_hit(self, cand_tokens: List[str], threshold: float,
                  strict: bool) -> Optional[Tuple[str, SimilarityScore]]:
        """First test question (in flattened order) passing the threshold."""
        if not cand_tokens:
            # empty vs empty scores 1.0; anything else scores 0
            if self.empty:
                ref = self.refs[self.empty[0]]
                return ref.item_id, _score(0, 0, 0)
            return None
        cand_bag = Counter(cand_tokens)
        hit_ids = set()
        for tok in cand_bag:
            hit_ids.update(self.postings.get(tok, ()))
        for idx in sorted(hit_ids):
            ref = self.refs[idx]
            score = _match_against(cand_tokens, cand_bag, ref, threshold, strict)
            if score is not None:
                return ref.item_id, score
        return None


def decontaminate(candidates, test_sets: Sequence[Benchmark],
                  threshold: float = DEFAULT_THRESHOLD,
                  strict: bool = False) -> Tuple[Corpus, List[DecontamDecision]]:
    """Two-step filter; returns kept corpus plus one decision per candidate.

    Step 1 rejects a candidate whose question matches any test-set
    question at or above the threshold. Step 2 walks survivors in input
    order and rejects those matching an earlier KEPT question with the
    same concept path. Set strict=True to reject only on score strictly
    above the threshold.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold {threshold} outside (0, 1]")
    for item in candidates:
        if item.path is None:
            raise MissingConceptPath(f"item {item.id} has no concept path")

    index = _TestIndex(test_sets)
    decisions: List[DecontamDecision] = []
    kept_items: List[McqItem] = []
    pools: Dict[tuple, List[_Ref]] = {}

    for item in candidates:
        tokens = tokenize(item.question)
        hit = index.first_hit(tokens, threshold, strict)
        if hit is not None:
            decisions.append(DecontamDecision(item.id, "rejected_testset", *hit))
            continue

        pool = pools.setdefault(item.path.key(), [])
        cand_bag = Counter(tokens)
        rejected = None
        for ref in pool:
            score = _match_against(tokens, cand_bag, ref, threshold, strict)
            if score is not None:
                rejected = (ref.item_id, score)
                break
        if rejected is not None:
            decisions.append(DecontamDecision(item.id, "rejected_pool", *rejected))
            continue

        pool.append(_Ref(item.id, tokens))
        kept_items.append(item)
        decisions.append(DecontamDecision(item.id, "kept"))

    kept = Corpus(name=candidates.name, items=tuple(kept_items))
    return kept, decisions
