"""The 4-level nursing taxonomy (specialization > domain > topic > concept).

The taxonomy is stored as a UTF-8 CSV with the exact header
``Specialization,Domain,Topic,Concept`` (header optional). Each row is one
concept leaf; leaves must be unique case-insensitively. The full corpus file
shipped with the package has 1,830 leaves.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from importlib import resources

from .errors import ForgeError, IoError

HEADER = ("Specialization", "Domain", "Topic", "Concept")

BUNDLED_TAXONOMY = "nursing_taxonomy.csv"


class MalformedRecord(ForgeError):
    """A row does not have exactly 4 non-empty columns."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DuplicatePath(ForgeError):
    """The same 4-tuple appears more than once (case-insensitive)."""

    def __init__(self, line_no: int, path: "ConceptPath"):
        super().__init__(f"line {line_no}: duplicate path {path.as_tuple()}")
        self.line_no = line_no
        self.path = path


@dataclass(frozen=True)
class ConceptPath:
    """One leaf of the taxonomy. All four fields are non-empty after trimming."""

    specialization: str
    domain: str
    topic: str
    concept: str

    def __post_init__(self):
        for field in ("specialization", "domain", "topic", "concept"):
            if not getattr(self, field).strip():
                raise ValueError(f"ConceptPath.{field} must be non-empty")

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.specialization, self.domain, self.topic, self.concept)

    def key(self) -> tuple[str, str, str, str]:
        """Case-insensitive identity of the path."""
        return tuple(f.strip().lower() for f in self.as_tuple())

    def digest(self) -> str:
        """Stable hex digest of the case-insensitive path, for checkpoint keys."""
        joined = "\x1f".join(self.key())
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class LevelCounts:
    """Distinct counts per taxonomy level.

    The first three levels count distinct names exactly as written (the
    corpus tally treats casing variants as distinct entries); ``concepts``
    counts leaves, i.e. unique paths.
    """

    specializations: int
    domains: int
    topics: int
    concepts: int

    def as_line(self) -> str:
        return (
            f"specializations={self.specializations} domains={self.domains} "
            f"topics={self.topics} concepts={self.concepts}"
        )

    def to_dict(self) -> dict:
        return {
            "specializations": self.specializations,
            "domains": self.domains,
            "topics": self.topics,
            "concepts": self.concepts,
        }


@dataclass(frozen=True)
class Taxonomy:
    """An immutable, loaded taxonomy. Safe to share across workers."""

    paths: tuple[ConceptPath, ...]
    source: str = ""
    digest: str = ""

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


def load_taxonomy(path) -> Taxonomy:
    """Load a taxonomy CSV, preserving file order and original casing.

    Raises MalformedRecord on a row with the wrong column count or an empty
    field, DuplicatePath on a repeated 4-tuple, IoError on read failure.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            raw = f.read()
    except OSError as exc:
        raise IoError(f"cannot read taxonomy file {path}: {exc}") from exc
    digest = hashlib.sha256(raw.encode("utf-8")).hexdigest()

    paths: list[ConceptPath] = []
    seen: dict[tuple, int] = {}
    for line_no, row in enumerate(csv.reader(raw.splitlines()), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if line_no == 1 and tuple(cell.strip() for cell in row) == HEADER:
            continue
        if len(row) != 4:
            raise MalformedRecord(line_no, f"expected 4 columns, got {len(row)}")
        cells = [cell.strip() for cell in row]
        if any(not cell for cell in cells):
            raise MalformedRecord(line_no, "empty field after trimming")
        cp = ConceptPath(*cells)
        if cp.key() in seen:
            raise DuplicatePath(line_no, cp)
        seen[cp.key()] = line_no
        paths.append(cp)
    return Taxonomy(paths=tuple(paths), source=str(path), digest=digest)


def save_taxonomy(taxonomy: Taxonomy, path) -> None:
    """Write a taxonomy back to CSV (header row plus one row per leaf)."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(HEADER)
            for cp in taxonomy.paths:
                writer.writerow(cp.as_tuple())
    except OSError as exc:
        raise IoError(f"cannot write taxonomy file {path}: {exc}") from exc


def summarize(taxonomy: Taxonomy) -> LevelCounts:
    """Count distinct values at each level.

    Order-invariant: permuting rows never changes the counts.
    """
    return LevelCounts(
        specializations=len({p.specialization for p in taxonomy.paths}),
        domains=len({p.domain for p in taxonomy.paths}),
        topics=len({p.topic for p in taxonomy.paths}),
        concepts=len(taxonomy.paths),
    )


def bundled_taxonomy_path():
    """Filesystem path of the full nursing taxonomy shipped with the package."""
    return resources.files("mcqforge").joinpath("data", BUNDLED_TAXONOMY)
