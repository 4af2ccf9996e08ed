"""MCQ records, benchmark containers, and JSONL persistence.

A record is one multiple-choice question: the stem, an ordered list of
choices, the 0-based index of the correct choice, an optional rationale,
and an optional taxonomy path saying which concept it was written for.
Collections come in two flavours: a Benchmark (items may lack taxonomy
paths, e.g. human-written test sets) and a Corpus (every item carries a
path, e.g. synthetic training data).
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

from .errors import ForgeError, IoError
from .taxonomy import ConceptPath

SOURCES = ("synthetic", "gpt4o_test", "nclex_test", "multimedqa", "multinurseqa")

# Serialization order for the known fields; unknown fields follow, in
# the order they appeared on the incoming record.
FIELD_ORDER = (
    "id", "question", "choices", "answer", "rationale",
    "specialization", "domain", "topic", "concept", "source",
)

_PATH_FIELDS = ("specialization", "domain", "topic", "concept")


class SchemaViolation(ForgeError):
    """A record does not satisfy the MCQ schema."""

    def __init__(self, field_name: str, reason: str, line_no: Optional[int] = None):
        self.field = field_name
        self.reason = reason
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}field '{field_name}': {reason}")


class DuplicateId(ForgeError):
    """Two items in one collection share an id."""

    def __init__(self, item_id: str):
        self.item_id = item_id
        super().__init__(f"duplicate item id {item_id!r}")


class NOutOfRange(ForgeError):
    """Requested sample size is outside [0, len(corpus)]."""


def content_digest(question: str, choices: Sequence[str]) -> str:
    """Stable 16-hex id derived from the question text and its choices."""
    blob = "\x1f".join([question, *choices])
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class McqItem:
    question: str
    choices: tuple
    answer: int
    rationale: str = ""
    path: Optional[ConceptPath] = None
    source: str = "synthetic"
    id: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if not self.question.strip():
            raise SchemaViolation("question", "must be non-empty")
        if len(self.choices) < 2:
            raise SchemaViolation("choices", "need at least 2 choices")
        for i, c in enumerate(self.choices):
            if not isinstance(c, str) or not c.strip():
                raise SchemaViolation("choices", f"choice {i} empty or not text")
        if not isinstance(self.answer, int) or isinstance(self.answer, bool):
            raise SchemaViolation("answer", "must be an integer index")
        if not 0 <= self.answer < len(self.choices):
            raise SchemaViolation(
                "answer", f"index {self.answer} out of range for {len(self.choices)} choices"
            )
        if self.source not in SOURCES:
            raise SchemaViolation("source", f"unknown source {self.source!r}")
        if not self.id:
            object.__setattr__(self, "id", content_digest(self.question, self.choices))

    @property
    def answer_text(self) -> str:
        return self.choices[self.answer]

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "question": self.question,
            "choices": list(self.choices),
            "answer": self.answer,
            "rationale": self.rationale,
        }
        if self.path is not None:
            rec["specialization"] = self.path.specialization
            rec["domain"] = self.path.domain
            rec["topic"] = self.path.topic
            rec["concept"] = self.path.concept
        rec["source"] = self.source
        rec.update(self.extra)
        return rec

    @classmethod
    def from_record(cls, rec: dict, line_no: Optional[int] = None) -> "McqItem":
        try:
            question = rec["question"]
            choices = rec["choices"]
            answer = rec["answer"]
        except KeyError as exc:
            raise SchemaViolation(exc.args[0], "missing", line_no) from None
        if not isinstance(question, str):
            raise SchemaViolation("question", "must be text", line_no)
        if not isinstance(choices, list):
            raise SchemaViolation("choices", "must be a list", line_no)

        present = [f for f in _PATH_FIELDS if f in rec]
        if present and len(present) < len(_PATH_FIELDS):
            missing = next(f for f in _PATH_FIELDS if f not in rec)
            raise SchemaViolation(missing, "partial concept path", line_no)
        path = None
        if present:
            try:
                path = ConceptPath(*(rec[f] for f in _PATH_FIELDS))
            except ForgeError as exc:
                raise SchemaViolation("concept", str(exc), line_no) from None

        extra = {k: v for k, v in rec.items() if k not in FIELD_ORDER}
        try:
            return cls(
                question=question,
                choices=tuple(choices),
                answer=answer,
                rationale=rec.get("rationale", ""),
                path=path,
                source=rec.get("source", "synthetic"),
                id=rec.get("id", ""),
                extra=extra,
            )
        except SchemaViolation as exc:
            if exc.line_no is None and line_no is not None:
                raise SchemaViolation(exc.field, exc.reason, line_no) from None
            raise


def _check_unique_ids(items: Sequence[McqItem]) -> None:
    seen = set()
    for item in items:
        if item.id in seen:
            raise DuplicateId(item.id)
        seen.add(item.id)


@dataclass(frozen=True)
class Benchmark:
    name: str
    items: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.name.strip():
            raise SchemaViolation("name", "must be non-empty")
        _check_unique_ids(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[McqItem]:
        return iter(self.items)


@dataclass(frozen=True)
class Corpus:
    name: str
    items: tuple

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.name.strip():
            raise SchemaViolation("name", "must be non-empty")
        _check_unique_ids(self.items)
        for item in self.items:
            if item.path is None:
                raise SchemaViolation("concept", f"item {item.id} has no concept path")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[McqItem]:
        return iter(self.items)


Collection = Union[Benchmark, Corpus]


def read_jsonl(path) -> Collection:
    """Load a JSONL file of MCQ records.

    Returns a Corpus when every record carries a full taxonomy path,
    otherwise a Benchmark. The collection is named after the file stem.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    items = []
    # split on real newlines only: JSON text may contain \x85 /  ,
    # which str.splitlines would treat as record breaks
    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation("record", f"invalid JSON ({exc.msg})", line_no) from None
        if not isinstance(rec, dict):
            raise SchemaViolation("record", "not a JSON object", line_no)
        items.append(McqItem.from_record(rec, line_no))

    name = path.stem or "collection"
    if items and all(item.path is not None for item in items):
        return Corpus(name=name, items=tuple(items))
    return Benchmark(name=name, items=tuple(items))


def write_jsonl(collection: Union[Collection, Iterable[McqItem]], path) -> None:
    """Write one JSON record per line, known fields first in fixed order."""
    path = Path(path)
    lines = [
        json.dumps(item.to_record(), ensure_ascii=False) for item in collection
    ]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def subsample(corpus: Corpus, n: int, seed: int) -> Corpus:
    """Uniform sample of n items without replacement, original order kept."""
    if not 0 <= n <= len(corpus):
        raise NOutOfRange(f"n={n} outside [0, {len(corpus)}]")
    picks = sorted(random.Random(seed).sample(range(len(corpus)), n))
    return Corpus(name=corpus.name, items=tuple(corpus.items[i] for i in picks))
