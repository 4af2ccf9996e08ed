"""Multi-agent collaborative answering with runtime accounting.

An orchestrator call routes each question: easy questions get a single
direct answer; hard ones get a recruited panel of k experts, one or
more debate rounds, and a moderator verdict. All prompts live in the
package templates; all calls carry their latency into a per-stage
ledger so runtime ratios against a single-call baseline are exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .datamodel import McqItem
from .errors import ForgeError
from .evalharness import extract_answer, render_options
from .llmclient import ChatRequest, LlmError, complete
from .prompts import load_template

DEFAULT_K = 5
DEFAULT_ROUNDS = 1
DEFAULT_BASELINE_S = 5.6
RECRUIT_RETRY_BUDGET = 3


class RecruitmentParseFailed(ForgeError):
    """Recruitment replies never yielded the requested panel."""


class StageFailed(ForgeError):
    """A solve stage failed; carries the partial transcript."""

    def __init__(self, stage: str, transcript: "DebateTranscript", cause: Exception):
        self.stage = stage
        self.transcript = transcript
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass(frozen=True)
class ExpertSpec:
    index: int  # 1-based
    specialty: str
    persona_prompt: str

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("expert index is 1-based")
        if not self.specialty.strip():
            raise ValueError("specialty must be non-empty")


@dataclass(frozen=True)
class Utterance:
    from_expert: int
    to_expert: Optional[int]
    text: str


@dataclass(frozen=True)
class DebateTranscript:
    question: McqItem
    difficulty: str  # easy | hard
    panel: tuple = ()
    initial_reports: tuple = ()  # (expert index, text)
    rounds: tuple = ()  # (round number, tuple of Utterance)
    verdict: Optional[Tuple[int, str]] = None
    audit_majority: Optional[int] = None
    stage_latencies: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.difficulty not in ("easy", "hard"):
            raise ValueError(f"bad difficulty {self.difficulty!r}")
        if self.difficulty == "easy" and (self.panel or self.rounds):
            raise ValueError("easy transcripts carry no panel or rounds")
        if self.difficulty == "hard" and self.verdict is not None and len(self.panel) < 2:
            raise ValueError("hard transcripts need a panel of >= 2")
        indices = [s.index for s in self.panel]
        if len(set(indices)) != len(indices):
            raise ValueError("panel indices must be unique")
        if self.verdict is not None:
            if not 0 <= self.verdict[0] < len(self.question.choices):
                raise ValueError("verdict index out of choice range")

    @property
    def answer(self) -> Optional[int]:
        return None if self.verdict is None else self.verdict[0]

    def to_record(self) -> dict:
        return {
            "question": self.question.to_record(),
            "difficulty": self.difficulty,
            "panel": [
                {"index": s.index, "specialty": s.specialty,
                 "persona_prompt": s.persona_prompt}
                for s in self.panel
            ],
            "initial_reports": [[i, text] for i, text in self.initial_reports],
            "rounds": [
                [no, [[u.from_expert, u.to_expert, u.text] for u in utts]]
                for no, utts in self.rounds
            ],
            "verdict": list(self.verdict) if self.verdict is not None else None,
            "audit_majority": self.audit_majority,
            "stage_latencies": dict(self.stage_latencies),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DebateTranscript":
        return cls(
            question=McqItem.from_record(rec["question"]),
            difficulty=rec["difficulty"],
            panel=tuple(
                ExpertSpec(p["index"], p["specialty"], p["persona_prompt"])
                for p in rec["panel"]
            ),
            initial_reports=tuple((i, text) for i, text in rec["initial_reports"]),
            rounds=tuple(
                (no, tuple(Utterance(f, t, x) for f, t, x in utts))
                for no, utts in rec["rounds"]
            ),
            verdict=tuple(rec["verdict"]) if rec["verdict"] is not None else None,
            audit_majority=rec["audit_majority"],
            stage_latencies=dict(rec["stage_latencies"]),
        )


@dataclass(frozen=True)
class RuntimeLedger:
    stages: dict  # stage name -> seconds
    total: float
    ratio_vs_single: float

    @classmethod
    def from_stages(cls, stages: Dict[str, float], baseline_s: float) -> "RuntimeLedger":
        if baseline_s <= 0:
            raise ValueError("baseline must be positive")
        total = sum(stages.values())
        return cls(stages=dict(stages), total=total,
                   ratio_vs_single=total / baseline_s)

    def to_record(self) -> dict:
        return {
            "stages": dict(self.stages),
            "total": self.total,
            "ratio_vs_single": self.ratio_vs_single,
        }


@dataclass
class MasConfig:
    orchestrator: object
    expert: object
    moderator: object
    k: int = DEFAULT_K
    rounds: int = DEFAULT_ROUNDS
    baseline_s: float = DEFAULT_BASELINE_S
    retry_budget: int = RECRUIT_RETRY_BUDGET

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


_DIFFICULTY_RE = re.compile(r"\b(easy|hard)\b", re.IGNORECASE)
# "Agent 4 ( 4. Critical Care Nurse (ICU Nurse)): ...": the lazy group
# still swallows nested parens because the trailing ")\s*:" must match.
_AGENT_RE = re.compile(r"Agent\s+(\d+)\s*\(\s*(\d+)\.\s*(.+?)\s*\)\s*:\s*(.*)")
_ROUTE_RE = re.compile(r"Agent\s+(\d+)\s*->\s*Agent\s+(\d+)\s*:?\s*", re.IGNORECASE)


def _ask(backend, prompt: str, system: Optional[str] = None):
    messages = [("user", prompt)]
    if system is not None:
        messages.insert(0, ("system", system))
    return complete(backend, ChatRequest(messages=tuple(messages), temperature=0.0))


def _question_block(item: McqItem) -> Dict[str, str]:
    return {"question": item.question, "choices": render_options(item.choices)}


def _parse_difficulty(text: str) -> str:
    m = _DIFFICULTY_RE.search(text)
    return m.group(1).lower() if m else "hard"  # fail toward deliberation


def _parse_recruitment(text: str, k: int) -> Optional[Tuple[ExpertSpec, ...]]:
    specs: List[ExpertSpec] = []
    for line in text.splitlines():
        m = _AGENT_RE.search(line)
        if m is None:
            continue
        try:
            idx = int(m.group(1))
            specialty = m.group(3).strip()
            description = m.group(4).strip()
            persona = f"You are a {specialty}."
            if description:
                persona += f" {description}"
            specs.append(ExpertSpec(idx, specialty, persona))
        except ValueError:
            continue
    if len(specs) != k:
        return None
    if len({s.index for s in specs}) != k:
        return None
    return tuple(specs)


def classify_difficulty(backend, item: McqItem) -> str:
    """Route a question to easy or hard; unparseable replies mean hard."""
    prompt = load_template("mas_difficulty").format(**_question_block(item))
    exchange = _ask(backend, prompt)
    return _parse_difficulty(exchange.response_text)


def recruit_experts(backend, item: McqItem, k: int,
                    retry_budget: int = RECRUIT_RETRY_BUDGET) -> Tuple[ExpertSpec, ...]:
    """Ask for exactly k experts; malformed rosters are retried."""
    if k < 2:
        raise ValueError("k must be >= 2")
    prompt = load_template("mas_recruitment").format(k=k, **_question_block(item))
    attempts = retry_budget + 1
    for _ in range(attempts):
        exchange = _ask(backend, prompt)
        specs = _parse_recruitment(exchange.response_text, k)
        if specs is not None:
            return specs
    raise RecruitmentParseFailed(f"no {k}-expert roster after {attempts} attempts")


def _render_history(panel: Sequence[ExpertSpec],
                    reports: Sequence[Tuple[int, str]],
                    rounds: Sequence[Tuple[int, tuple]]) -> str:
    by_index = {s.index: s for s in panel}
    lines = []
    for idx, text in reports:
        specialty = by_index[idx].specialty if idx in by_index else f"agent {idx}"
        lines.append(f"Agent {idx} ({specialty.lower()}): {text}")
    for no, utts in rounds:
        for u in utts:
            if u.to_expert is None:
                lines.append(f"Agent {u.from_expert}: {u.text}")
            else:
                lines.append(f"Agent {u.from_expert} -> Agent {u.to_expert}: {u.text}")
    return "\n".join(lines)


def run_debate(backend, panel: Sequence[ExpertSpec], item: McqItem,
               rounds: int) -> Tuple[tuple, tuple, float, float]:
    """Initial expert reports, then per-round peer-addressed utterances.

    Returns (initial_reports, rounds, report_seconds, debate_seconds).
    A reply that does not name an addressee is kept as a free-form
    utterance with to_expert = None.
    """
    if len(panel) < 2:
        raise ValueError("panel must have >= 2 experts")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")

    block = _question_block(item)
    initial_template = load_template("mas_expert_initial")
    debate_template = load_template("mas_debate")

    reports: List[Tuple[int, str]] = []
    report_seconds = 0.0
    for spec in panel:
        exchange = _ask(backend, initial_template.format(**block),
                        system=spec.persona_prompt)
        reports.append((spec.index, exchange.response_text))
        report_seconds += exchange.latency

    rounds_log: List[Tuple[int, tuple]] = []
    debate_seconds = 0.0
    for round_no in range(1, rounds + 1):
        utterances: List[Utterance] = []
        for spec in panel:
            history = _render_history(panel, reports, rounds_log + [(round_no, tuple(utterances))])
            prompt = debate_template.format(index=spec.index, history=history, **block)
            exchange = _ask(backend, prompt, system=spec.persona_prompt)
            debate_seconds += exchange.latency
            text = exchange.response_text
            m = _ROUTE_RE.search(text)
            if m is None:
                utterances.append(Utterance(spec.index, None, text.strip()))
            else:
                utterances.append(
                    Utterance(spec.index, int(m.group(2)), text[m.end():].strip())
                )
        rounds_log.append((round_no, tuple(utterances)))

    return tuple(reports), tuple(rounds_log), report_seconds, debate_seconds


def majority_vote(transcript: DebateTranscript) -> Optional[int]:
    """Majority over each expert's last extractable answer.

    Ties break toward the lowest option index; None when no expert
    stated an extractable answer.
    """
    item = transcript.question
    votes: List[int] = []
    for spec in transcript.panel:
        texts = [t for i, t in transcript.initial_reports if i == spec.index]
        for _, utts in transcript.rounds:
            texts.extend(u.text for u in utts if u.from_expert == spec.index)
        for text in reversed(texts):
            idx = extract_answer(text, len(item.choices), item.choices)
            if idx is not None:
                votes.append(idx)
                break
    if not votes:
        return None
    counts = [votes.count(i) for i in range(len(item.choices))]
    best = max(counts)
    return counts.index(best)  # lowest index wins ties


def _moderate_ex(backend, transcript: DebateTranscript):
    item = transcript.question
    history = _render_history(transcript.panel, transcript.initial_reports,
                              transcript.rounds)
    prompt = load_template("mas_moderator").format(
        history=history, **_question_block(item)
    )
    exchange = _ask(backend, prompt)
    majority = majority_vote(transcript)
    idx = extract_answer(exchange.response_text, len(item.choices), item.choices)
    if idx is None:
        idx = majority if majority is not None else 0
    return (idx, exchange.response_text), majority, exchange.latency


def moderate(backend, transcript: DebateTranscript) -> Tuple[int, str]:
    """Moderator verdict; falls back to the expert majority vote."""
    if not transcript.initial_reports:
        raise ValueError("transcript has no expert reports to moderate")
    verdict, _, _ = _moderate_ex(backend, transcript)
    return verdict


def solve(config: MasConfig, item: McqItem) -> Tuple[int, DebateTranscript, RuntimeLedger]:
    """Answer one question through the routed pipeline.

    Easy: one orchestrator routing call plus one direct answer call.
    Hard: the routing call doubles as recruitment, then k initial
    reports, k utterances per debate round, and one moderator call.
    """
    block = _question_block(item)
    routing_prompt = load_template("mas_routing").format(k=config.k, **block)

    def partial(**kwargs) -> DebateTranscript:
        return DebateTranscript(question=item, **kwargs)

    try:
        exchange = _ask(config.orchestrator, routing_prompt)
    except LlmError as exc:
        raise StageFailed("orchestration", partial(difficulty="hard"), exc) from exc
    orch_seconds = exchange.latency
    difficulty = _parse_difficulty(exchange.response_text)

    if difficulty == "easy":
        answer_prompt = load_template("eval_mcq").format(**block)
        try:
            answer_exchange = _ask(config.expert, answer_prompt)
        except LlmError as exc:
            raise StageFailed(
                "answer",
                partial(difficulty="easy",
                        stage_latencies={"orchestration": orch_seconds}),
                exc,
            ) from exc
        idx = extract_answer(
            answer_exchange.response_text, len(item.choices), item.choices
        )
        if idx is None:
            idx = 0  # deterministic fail-safe: first option
        stages = {
            "orchestration": orch_seconds,
            "answer": answer_exchange.latency,
        }
        transcript = DebateTranscript(
            question=item,
            difficulty="easy",
            verdict=(idx, answer_exchange.response_text),
            stage_latencies=stages,
        )
        return idx, transcript, RuntimeLedger.from_stages(stages, config.baseline_s)

    # hard path; the routing reply carries the roster
    panel = _parse_recruitment(exchange.response_text, config.k)
    retries_left = config.retry_budget
    while panel is None and retries_left > 0:
        try:
            exchange = _ask(config.orchestrator, routing_prompt)
        except LlmError as exc:
            raise StageFailed("orchestration", partial(difficulty="hard"), exc) from exc
        orch_seconds += exchange.latency
        panel = _parse_recruitment(exchange.response_text, config.k)
        retries_left -= 1
    if panel is None:
        raise StageFailed(
            "orchestration",
            partial(difficulty="hard",
                    stage_latencies={"orchestration": orch_seconds}),
            RecruitmentParseFailed(
                f"no {config.k}-expert roster after "
                f"{config.retry_budget + 1} attempts"
            ),
        )

    try:
        reports, rounds_log, report_seconds, debate_seconds = run_debate(
            config.expert, panel, item, config.rounds
        )
    except LlmError as exc:
        raise StageFailed(
            "debate",
            partial(difficulty="hard", panel=panel,
                    stage_latencies={"orchestration": orch_seconds}),
            exc,
        ) from exc

    draft = DebateTranscript(
        question=item, difficulty="hard", panel=panel,
        initial_reports=reports, rounds=rounds_log,
    )
    try:
        verdict, majority, moderation_seconds = _moderate_ex(config.moderator, draft)
    except LlmError as exc:
        raise StageFailed(
            "moderation",
            partial(difficulty="hard", panel=panel, initial_reports=reports,
                    rounds=rounds_log,
                    stage_latencies={
                        "orchestration": orch_seconds,
                        "initial_reports": report_seconds,
                        "debate": debate_seconds,
                    }),
            exc,
        ) from exc

    stages = {
        "orchestration": orch_seconds,
        "initial_reports": report_seconds,
        "debate": debate_seconds,
        "moderation": moderation_seconds,
    }
    transcript = DebateTranscript(
        question=item, difficulty="hard", panel=panel,
        initial_reports=reports, rounds=rounds_log,
        verdict=verdict, audit_majority=majority, stage_latencies=stages,
    )
    return verdict[0], transcript, RuntimeLedger.from_stages(stages, config.baseline_s)


def runtime_table(rows: Sequence[Tuple[str, float, float]]) -> str:
    """Render (model, runtime seconds, ratio) rows as a small table."""
    header = ("Model", "Runtime (sec)", "Comparison")
    body = [(label, f"{seconds:.1f}", f"{ratio:.2f}x") for label, seconds, ratio in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(3)]
    lines = [
        "| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |"
        for r in [header] + body
    ]
    lines.insert(1, "|" + "|".join("-" * (w + 2) for w in widths) + "|")
    return "\n".join(lines) + "\n"
