"""Benchmark evaluation: prompt a backend per item, extract the picked
option from free text, and render accuracy tables.

Unparseable replies count as incorrect, so the accuracy denominator is
always the benchmark size.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .datamodel import Benchmark
from .errors import ForgeError, IoError
from .llmclient import (
    AuthError,
    ChatRequest,
    LlmError,
    TEMPERATURE_EVAL,
    complete,
)
from .prompts import load_template

LETTERS = string.ascii_uppercase


class CategoryMismatch(ForgeError):
    """Reports being pivoted do not share a category universe."""


# Pattern 1: "answer is (B" / "answer: 2", letter or 1-based number.
_ANSWER_RE = re.compile(
    r"answer\s*(?:is|:)\s*[\*\"']*\(?\s*([A-Za-z]\b|\d+)", re.IGNORECASE
)
# Pattern 2: isolated letter immediately followed by ")", "." or ":".
_LETTER_RE = re.compile(r"(?<![0-9A-Za-z])([A-Za-z])[).:]")


def extract_answer(response_text: str, n_choices: int,
                   choices: Optional[Sequence[str]] = None) -> Optional[int]:
    """Pull a 0-based choice index out of a free-text reply.

    Cascade: explicit "Answer:"/"answer is" statements, then standalone
    letters like "(C)" or "B.", then (when choice texts are given) the
    first choice text appearing verbatim. Each pattern yields its first
    in-range hit; None when nothing extractable remains.
    """
    if n_choices < 2:
        raise ValueError("n_choices must be >= 2")

    for match in _ANSWER_RE.finditer(response_text):
        token = match.group(1)
        if token.isdigit():
            idx = int(token) - 1  # numeric answers are 1-based
        else:
            idx = LETTERS.index(token.upper())
        if 0 <= idx < n_choices:
            return idx

    for match in _LETTER_RE.finditer(response_text):
        idx = LETTERS.index(match.group(1).upper())
        if 0 <= idx < n_choices:
            return idx

    if choices:
        lowered = response_text.lower().strip()
        for idx, choice in enumerate(choices):
            if lowered == choice.lower().strip():
                return idx
        best: Optional[Tuple[int, int, int]] = None  # (pos, -len, idx)
        for idx, choice in enumerate(choices):
            pos = lowered.find(choice.lower().strip())
            if pos >= 0:
                key = (pos, -len(choice), idx)
                if best is None or key < best:
                    best = key
        if best is not None:
            return best[2]
    return None


@dataclass(frozen=True)
class EvalConfig:
    backend_id: str = ""
    prompt_template: str = ""
    letter_scheme: str = LETTERS
    temperature: float = TEMPERATURE_EVAL

    def template(self) -> str:
        return self.prompt_template or load_template("eval_mcq")


@dataclass(frozen=True)
class ItemResult:
    id: str
    predicted: Optional[int]
    correct: bool
    latency: float

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "predicted": self.predicted,
            "correct": self.correct,
            "latency": self.latency,
        }


@dataclass(frozen=True)
class EvalReport:
    benchmark_name: str
    model_id: str
    n_total: int
    n_correct: int
    n_unparsed: int
    accuracy: float
    per_item: tuple

    def __post_init__(self):
        object.__setattr__(self, "per_item", tuple(self.per_item))
        if len(self.per_item) != self.n_total:
            raise ValueError("per_item length must equal n_total")
        if self.n_total > 0 and abs(self.accuracy - self.n_correct / self.n_total) > 1e-12:
            raise ValueError("accuracy inconsistent with counts")

    def to_record(self) -> dict:
        return {
            "benchmark_name": self.benchmark_name,
            "model_id": self.model_id,
            "n_total": self.n_total,
            "n_correct": self.n_correct,
            "n_unparsed": self.n_unparsed,
            "accuracy": self.accuracy,
            "per_item": [r.to_record() for r in self.per_item],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "EvalReport":
        return cls(
            benchmark_name=rec["benchmark_name"],
            model_id=rec["model_id"],
            n_total=rec["n_total"],
            n_correct=rec["n_correct"],
            n_unparsed=rec["n_unparsed"],
            accuracy=rec["accuracy"],
            per_item=tuple(
                ItemResult(r["id"], r["predicted"], r["correct"], r["latency"])
                for r in rec["per_item"]
            ),
        )

    def save(self, path) -> None:
        try:
            Path(path).write_text(
                json.dumps(self.to_record(), ensure_ascii=False, indent=2) + "\n",
                encoding="utf-8",
            )
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "EvalReport":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        return cls.from_record(json.loads(text))


def render_options(choices: Sequence[str], letter_scheme: str = LETTERS) -> str:
    return "\n".join(
        f"{letter_scheme[i]}) {choice}" for i, choice in enumerate(choices)
    )


def evaluate(backend, benchmark: Benchmark, config: Optional[EvalConfig] = None) -> EvalReport:
    """One call per item; failed or unparseable items score as incorrect."""
    if len(benchmark) == 0:
        raise ValueError("benchmark is empty")
    config = config or EvalConfig()
    template = config.template()
    max_choices = max(len(item.choices) for item in benchmark)
    if max_choices > len(config.letter_scheme):
        raise ValueError("letter scheme shorter than the widest item")

    results: List[ItemResult] = []
    n_correct = 0
    n_unparsed = 0
    for item in benchmark:
        prompt = template.format(
            question=item.question,
            choices=render_options(item.choices, config.letter_scheme),
        )
        request = ChatRequest(
            messages=(("user", prompt),), temperature=config.temperature
        )
        try:
            exchange = complete(backend, request)
        except AuthError:
            raise  # bad credentials fail every item; stop the run
        except LlmError:
            results.append(ItemResult(item.id, None, False, 0.0))
            n_unparsed += 1
            continue
        predicted = extract_answer(
            exchange.response_text, len(item.choices), item.choices
        )
        correct = predicted == item.answer
        if predicted is None:
            n_unparsed += 1
        if correct:
            n_correct += 1
        results.append(ItemResult(item.id, predicted, correct, exchange.latency))

    return EvalReport(
        benchmark_name=benchmark.name,
        model_id=backend.id,
        n_total=len(benchmark),
        n_correct=n_correct,
        n_unparsed=n_unparsed,
        accuracy=n_correct / len(benchmark),
        per_item=tuple(results),
    )


def _pivot(reports: Sequence[EvalReport], layout: str) -> Tuple[List[str], Dict[str, Dict[str, float]]]:
    columns: List[str] = []
    rows: Dict[str, Dict[str, float]] = {}
    for rep in reports:
        if rep.benchmark_name not in columns:
            columns.append(rep.benchmark_name)
        cells = rows.setdefault(rep.model_id, {})
        if rep.benchmark_name in cells:
            raise CategoryMismatch(
                f"duplicate cell for model {rep.model_id!r}, "
                f"category {rep.benchmark_name!r}"
            )
        cells[rep.benchmark_name] = rep.accuracy
    if layout == "per_category":
        for model, cells in rows.items():
            missing = [c for c in columns if c not in cells]
            if missing:
                raise CategoryMismatch(
                    f"model {model!r} missing categories: {', '.join(missing)}"
                )
    return columns, rows


def format_report(reports: Sequence[EvalReport], layout: str = "per_benchmark",
                  style: str = "md",
                  fixed_order: Optional[Sequence[str]] = None) -> Tuple[str, dict]:
    """Pivot reports into a models-by-categories accuracy table.

    Returns (table text, machine record). Cells are percents with two
    decimals; the Avg column (unweighted mean over categories) comes
    first. Rows sort by Avg descending unless fixed_order pins them.
    """
    if layout not in ("per_benchmark", "per_category"):
        raise ValueError(f"unknown layout {layout!r}")
    if style not in ("md", "csv"):
        raise ValueError(f"unknown table style {style!r}")
    if not reports:
        raise ValueError("no reports to format")

    columns, rows = _pivot(reports, layout)
    row_avgs = {
        model: sum(cells.values()) / len(cells) for model, cells in rows.items()
    }
    if fixed_order is not None:
        unknown = [m for m in fixed_order if m not in rows]
        if unknown:
            raise CategoryMismatch(f"fixed_order names absent models: {unknown}")
        ordered = list(fixed_order)
    else:
        ordered = sorted(rows, key=lambda m: (-row_avgs[m], m))

    def pct(x: float) -> str:
        return f"{100.0 * x:.2f}"

    header = ["Model", "Avg"] + columns
    body = []
    for model in ordered:
        cells = rows[model]
        body.append(
            [model, pct(row_avgs[model])]
            + [pct(cells[c]) if c in cells else "" for c in columns]
        )

    if style == "md":
        widths = [
            max(len(row[i]) for row in [header] + body) for i in range(len(header))
        ]
        def line(row):
            return "| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |"
        sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
        text = "\n".join([line(header), sep] + [line(r) for r in body]) + "\n"
    else:
        text = "\n".join(",".join(row) for row in [header] + body) + "\n"

    record = {
        "layout": layout,
        "columns": ["Avg"] + columns,
        "rows": [
            {
                "model": model,
                "avg": row_avgs[model],
                "cells": dict(rows[model]),
            }
            for model in ordered
        ],
    }
    return text, record
