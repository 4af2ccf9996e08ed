"""Synthetic MCQ production and its sibling pipelines.

Four stages share the same backend plumbing: per-concept MCQ generation
for training corpora, one-item-per-concept benchmark construction
(checkpointed and resumable), yes/no mining of nursing-relevant items
out of a general medical benchmark, and reasoning-trace distillation
with agreement filtering.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .datamodel import Benchmark, Corpus, McqItem
from .errors import ForgeError, IoError
from .evalharness import extract_answer, render_options
from .llmclient import (
    ChatRequest,
    TEMPERATURE_EVAL,
    TEMPERATURE_GENERATION,
    complete,
)
from .prompts import load_template
from .taxonomy import ConceptPath, Taxonomy

SCHEMA_RETRY_BUDGET = 3
N_CHOICES = 4


class MalformedReply(ForgeError):
    """Model reply does not follow the tagged MCQ layout."""


class SchemaRetriesExhausted(ForgeError):
    """A generation slot kept producing malformed replies."""

    def __init__(self, path: ConceptPath, attempts: int, last: str):
        self.path = path
        self.attempts = attempts
        super().__init__(
            f"no well-formed MCQ for {'/'.join(path.as_tuple())} "
            f"after {attempts} attempts: {last}"
        )


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @classmethod
    def from_file(cls, name: str) -> "PromptTemplate":
        return cls(name=name, body=load_template(name))

    def render(self, **slots) -> str:
        try:
            return self.body.format(**slots)
        except KeyError as exc:
            raise ValueError(
                f"template {self.name!r} needs placeholder {exc.args[0]!r}"
            ) from None


@dataclass
class GenerationStats:
    requested: int = 0
    produced: int = 0
    malformed: int = 0

    def to_record(self) -> dict:
        return {
            "requested": self.requested,
            "produced": self.produced,
            "malformed": self.malformed,
        }


@dataclass
class MiningStats:
    total: int = 0
    kept: int = 0
    unparsed: int = 0

    def to_record(self) -> dict:
        return {"total": self.total, "kept": self.kept, "unparsed": self.unparsed}


@dataclass
class RetentionStats:
    total: int = 0
    kept: int = 0

    @property
    def retention(self) -> float:
        return self.kept / self.total if self.total else 0.0

    def to_record(self) -> dict:
        return {"total": self.total, "kept": self.kept, "retention": self.retention}


@dataclass(frozen=True)
class ReasoningSample:
    item: McqItem
    trace: str
    distilled_answer: Optional[int]
    agrees: bool

    def __post_init__(self):
        if self.agrees != (self.distilled_answer == self.item.answer):
            raise ValueError("agrees flag inconsistent with answers")

    def to_record(self) -> dict:
        rec = self.item.to_record()
        rec["trace"] = self.trace
        rec["distilled_answer"] = self.distilled_answer
        rec["agrees"] = self.agrees
        return rec


_SECTION_RE = re.compile(
    r"^[ \t]*(QUESTION|CHOICES|ANSWER|RATIONALE)[ \t]*:", re.IGNORECASE | re.MULTILINE
)
_CHOICE_LINE_RE = re.compile(r"^\s*([A-D])[).]\s*(.*\S)\s*$")
_ANSWER_TAG_RE = re.compile(r"^\(?([A-D])\)?[.)]?$", re.IGNORECASE)


def parse_mcq_reply(text: str) -> Tuple[str, Tuple[str, str, str, str], int, str]:
    """Parse the strict QUESTION/CHOICES/ANSWER/RATIONALE reply layout.

    Returns (question, choices, answer index, rationale); raises
    MalformedReply on any deviation (wrong section order, missing or
    extra choice letters, unparseable answer tag, empty fields).
    """
    marks = list(_SECTION_RE.finditer(text))
    names = [m.group(1).upper() for m in marks]
    if names != ["QUESTION", "CHOICES", "ANSWER", "RATIONALE"]:
        raise MalformedReply(f"sections {names} (want QUESTION/CHOICES/ANSWER/RATIONALE)")
    bounds = [m.end() for m in marks] + [len(text)]
    starts = [m.start() for m in marks[1:]] + [len(text)]
    segs = [text[bounds[i]:starts[i]].strip() for i in range(4)]
    question, choices_blob, answer_blob, rationale = segs

    if not question:
        raise MalformedReply("empty question")
    if not rationale:
        raise MalformedReply("empty rationale")

    choices: List[str] = []
    letters: List[str] = []
    for line in choices_blob.splitlines():
        if not line.strip():
            continue
        m = _CHOICE_LINE_RE.match(line)
        if not m:
            raise MalformedReply(f"bad choice line {line.strip()!r}")
        letters.append(m.group(1))
        choices.append(m.group(2))
    if letters != ["A", "B", "C", "D"]:
        raise MalformedReply(f"choice letters {letters} (want A-D exactly)")

    m = _ANSWER_TAG_RE.match(answer_blob.split("\n")[0].strip())
    if not m:
        raise MalformedReply(f"bad answer tag {answer_blob[:20]!r}")
    answer = ord(m.group(1).upper()) - ord("A")
    return question, tuple(choices), answer, rationale


def _fill_slot(backend, path: ConceptPath, template: PromptTemplate,
               item_id: str, source: str, retry_budget: int,
               stats: GenerationStats) -> McqItem:
    prompt = template.render(
        specialization=path.specialization,
        domain=path.domain,
        topic=path.topic,
        concept=path.concept,
    )
    request = ChatRequest(
        messages=(("user", prompt),), temperature=TEMPERATURE_GENERATION
    )
    attempts = retry_budget + 1
    last = ""
    for _ in range(attempts):
        exchange = complete(backend, request)
        try:
            question, choices, answer, rationale = parse_mcq_reply(
                exchange.response_text
            )
        except MalformedReply as exc:
            stats.malformed += 1
            last = str(exc)
            continue
        stats.produced += 1
        return McqItem(
            question=question,
            choices=choices,
            answer=answer,
            rationale=rationale,
            path=path,
            source=source,
            id=item_id,
        )
    raise SchemaRetriesExhausted(path, attempts, last)


def generate_mcqs(backend, path: ConceptPath, n: int, template: PromptTemplate,
                  retry_budget: int = SCHEMA_RETRY_BUDGET
                  ) -> Tuple[List[McqItem], GenerationStats]:
    """Generate n schema-valid MCQs for one concept."""
    if n < 1:
        raise ValueError("n must be >= 1")
    stats = GenerationStats(requested=n)
    digest = path.digest()
    items = [
        _fill_slot(backend, path, template, f"syn-{digest[:12]}-{i:04d}",
                   "synthetic", retry_budget, stats)
        for i in range(n)
    ]
    return items, stats


def _load_checkpoint(path: Path) -> Dict[str, dict]:
    done: Dict[str, dict] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    for line in text.split("\n"):
        if not line.strip():
            continue
        rec = json.loads(line)
        done[rec["digest"]] = rec["item"]  # later entries win
    return done


def generate_benchmark(backend, taxonomy: Taxonomy, template: PromptTemplate,
                       checkpoint_path=None,
                       retry_budget: int = SCHEMA_RETRY_BUDGET) -> Benchmark:
    """One MCQ per concept path, in taxonomy order, source gpt4o_test.

    With checkpoint_path set, finished slots are appended to a JSONL
    file keyed by concept digest; a rerun regenerates only the missing
    slots and still returns items in taxonomy order.
    """
    if len(taxonomy) == 0:
        raise ValueError("taxonomy is empty")
    done: Dict[str, dict] = {}
    fh = None
    if checkpoint_path is not None:
        checkpoint_path = Path(checkpoint_path)
        if checkpoint_path.exists():
            done = _load_checkpoint(checkpoint_path)
        try:
            fh = checkpoint_path.open("a", encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot open checkpoint {checkpoint_path}: {exc}") from exc

    stats = GenerationStats(requested=len(taxonomy))
    items: List[McqItem] = []
    try:
        for path in taxonomy:
            digest = path.digest()
            if digest in done:
                items.append(McqItem.from_record(done[digest]))
                continue
            item = _fill_slot(backend, path, template, f"g4t-{digest[:12]}",
                              "gpt4o_test", retry_budget, stats)
            if fh is not None:
                fh.write(json.dumps({"digest": digest, "item": item.to_record()},
                                    ensure_ascii=False) + "\n")
                fh.flush()
            items.append(item)
    finally:
        if fh is not None:
            fh.close()
    return Benchmark(name="gpt4o_test", items=tuple(items))


_YESNO_RE = re.compile(r"[A-Za-z]+")


def _parse_yes_no(text: str) -> Optional[bool]:
    m = _YESNO_RE.search(text)
    if m is None:
        return None
    token = m.group(0).lower()
    if token == "yes":
        return True
    if token == "no":
        return False
    return None


def mine_nursing_subset(backend, items: Benchmark, classifier_template: PromptTemplate
                        ) -> Tuple[Benchmark, MiningStats]:
    """Keep the items a yes/no classifier labels nursing-relevant.

    The first alphabetic token of the reply decides; anything else is
    retried once, then treated as "no" and counted as unparsed.
    """
    if len(items) == 0:
        raise ValueError("benchmark is empty")
    stats = MiningStats(total=len(items))
    kept: List[McqItem] = []
    for item in items:
        prompt = classifier_template.render(
            question=item.question, choices=render_options(item.choices)
        )
        request = ChatRequest(
            messages=(("user", prompt),), temperature=TEMPERATURE_EVAL
        )
        verdict = None
        for _ in range(2):  # one retry for unparseable replies
            exchange = complete(backend, request)
            verdict = _parse_yes_no(exchange.response_text)
            if verdict is not None:
                break
        if verdict is None:
            stats.unparsed += 1
            verdict = False
        if verdict:
            kept.append(item)
    stats.kept = len(kept)
    return Benchmark(name=f"{items.name}-nursing", items=tuple(kept)), stats


def distill_reasoning(backend, corpus, template: PromptTemplate
                      ) -> Tuple[List[ReasoningSample], RetentionStats]:
    """Collect reasoning traces, keeping only answer-agreeing samples.

    Each item is posed without its reference answer; the trace's final
    answer is extracted with the shared extractor and the sample is
    retained iff it matches the reference. Extraction failure counts as
    disagreement.
    """
    stats = RetentionStats(total=len(corpus.items))
    kept: List[ReasoningSample] = []
    for item in corpus:
        prompt = template.render(
            question=item.question, choices=render_options(item.choices)
        )
        request = ChatRequest(
            messages=(("user", prompt),), temperature=TEMPERATURE_GENERATION
        )
        exchange = complete(backend, request)
        trace = exchange.response_text
        distilled = extract_answer(trace, len(item.choices), item.choices)
        if distilled == item.answer:
            kept.append(ReasoningSample(item, trace, distilled, True))
    stats.kept = len(kept)
    return kept, stats
