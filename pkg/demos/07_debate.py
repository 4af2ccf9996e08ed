"""Difficulty-routed debate: direct answers for easy items, a recruited
expert panel with debate rounds and a moderator for hard ones.

Every latency below is scripted on the synthetic clock, so the runtime
ledger reproduces exact stage timings and the cost ratio against a
single-model baseline.
"""

from mcqforge.datamodel import McqItem
from mcqforge.llmclient import script_mock
from mcqforge.mas import MasConfig, runtime_table, solve
from mcqforge.taxonomy import ConceptPath

ROUTE = "orchestrator of a panel"
INITIAL = "initial assessment"
DEBATE = "address one other agent"
MODERATE = "final verdict"
ANSWER = "Answer with the option letter"

ROSTER = "\n".join([
    "Difficulty: hard",
    "Agent 1 (1. Emergency Room Nurse): Rapid triage and assessment.",
    "Agent 2 (2. Occupational Health Nurse): Workplace exposure protocols.",
    "Agent 3 (3. Ophthalmic Nurse): Ocular irrigation and eye injuries.",
    "Agent 4 (4. Critical Care Nurse (ICU Nurse)): Deteriorating clients.",
    "Agent 5 (5. Toxicology Nurse Specialist): Decontamination decisions.",
])

item = McqItem(
    question="A worker splashes an unknown chemical in both eyes. "
             "What should the occupational health nurse do first?",
    choices=("Check visual acuity", "Irrigate with saline for 20 minutes",
             "Patch both eyes", "Obtain the safety data sheet"),
    answer=1,
    rationale="Flush first; identification and acuity come after.",
    path=ConceptPath("Clinical Skills", "Emergency", "Eye injuries", "chemical splash"),
    source="nclex_test",
    id="splash-1",
)


def config(rules, **kwargs):
    backend = script_mock(rules)
    return MasConfig(orchestrator=backend, expert=backend, moderator=backend,
                     **kwargs), backend


# --- easy route: the orchestrator answers alone
easy_cfg, easy_backend = config([
    (ROUTE, "Difficulty: easy. A single nurse can answer this directly.", 0.5),
    (ANSWER, "Answer: (B)", 5.6),
])
answer, transcript, ledger = solve(easy_cfg, item)
print(f"easy route: answer={answer} ('{item.choices[answer]}'), "
      f"{easy_backend.call_count} calls, no panel={transcript.panel == ()}")
print(f"  stages: {ledger.stages}  total={ledger.total:.1f}s "
      f"ratio={ledger.ratio_vs_single:.2f}x")

# --- hard route: recruit 5 experts, 1 debate round, then moderation
hard_cfg, hard_backend = config([
    (ROUTE, ROSTER, 1.2),
    (INITIAL, "Answer: (B)\nReason: dilution beats identification.", 2.0),
    (DEBATE, "Agent 1 -> Agent 3: your irrigation point stands; flush first.", 2.5),
    (MODERATE, "Final Decision:\nAnswer: (B)", 4.6),
], k=5, rounds=1)
answer, transcript, hard_ledger = solve(hard_cfg, item)
print(f"\nhard route: answer={answer}, {hard_backend.call_count} calls "
      f"(1 routing + 5 reports + 5 debate turns + 1 moderation)")
print("  panel:", ", ".join(s.specialty for s in transcript.panel))
first = transcript.rounds[0][1][0]
print(f"  round 1 sample: Agent {first.from_expert} -> Agent {first.to_expert}: "
      f"{first.text[:60]!r}")
print(f"  moderator verdict={transcript.verdict[0]}  "
      f"audit majority={transcript.audit_majority}")
print(f"  stages: { {k: round(v, 1) for k, v in hard_ledger.stages.items()} }")

print("\n" + runtime_table([
    ("single model", 5.6, 1.0),
    ("panel (easy route)", ledger.total, ledger.ratio_vs_single),
    ("panel (hard route)", hard_ledger.total, hard_ledger.ratio_vs_single),
]))
