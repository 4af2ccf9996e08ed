"""Benchmark evaluation and the models-by-benchmarks report table.

Two scripted "models" answer two small benchmarks. Replies arrive in
several formats (explicit tags, standalone letters, bare choice text,
and outright refusals) to exercise the extraction cascade; unparseable
replies count as wrong and show up in n_unparsed.
"""

from mcqforge.datamodel import Benchmark, McqItem
from mcqforge.evalharness import EvalConfig, evaluate, extract_answer, format_report
from mcqforge.llmclient import script_mock
from mcqforge.taxonomy import ConceptPath

print("extraction cascade, one example per pattern:")
print(f'  "ANSWER: (C)"            -> {extract_answer("ANSWER: (C)", 4)}')
print(f'  "The answer is 2"        -> {extract_answer("The answer is 2", 4)}')
print(f'  "B." at line start       -> {extract_answer("B. hold the dose", 4)}')
print(f'  choice text fallback     -> '
      f'{extract_answer("I would give digoxin first", 4, ("Digoxin", "Metformin", "Warfarin", "Albuterol"))}')
print(f'  bare "B" stays ambiguous -> {extract_answer("B", 4)}')

PHARM = ConceptPath("Clinical Skills", "Pharmacology", "Cardiac Meds", "dosing")
MEDSURG = ConceptPath("Clinical Skills", "Med-Surg", "Acute Care", "priorities")


def bench(name, rows):
    return Benchmark(name=name, items=tuple(
        McqItem(question=q, choices=choices, answer=gold, rationale="per text",
                path=PHARM if name == "pharm" else MEDSURG,
                source="nclex_test", id=f"{name}-{i}")
        for i, (q, choices, gold) in enumerate(rows)
    ))


pharm = bench("pharm", [
    ("Which drug class does lisinopril belong to?",
     ("ACE inhibitor", "Beta blocker", "Loop diuretic", "Statin"), 0),
    ("Which electrolyte is depleted by furosemide?",
     ("Sodium", "Potassium", "Calcium", "Glucose"), 1),
    ("Which medication requires an apical pulse check before dosing?",
     ("Digoxin", "Metformin", "Warfarin", "Albuterol"), 0),
    ("Rapid vancomycin infusion risks which reaction?",
     ("Red man syndrome", "Tetany", "Hypoglycemia", "Melena"), 0),
])
medsurg = bench("med_surg", [
    ("Which position supports venous return in hypovolemic shock?",
     ("Legs elevated", "High Fowler", "Prone", "Left Sims"), 0),
    ("What is the earliest sign of rising intracranial pressure?",
     ("Level of consciousness change", "Fixed pupils", "Bradycardia",
      "Projectile vomiting"), 0),
    ("A celiac diet excludes which grain?",
     ("Wheat", "Rice", "Corn", "Quinoa"), 0),
    ("What is the most reliable bedside indicator of fluid status?",
     ("Daily weight", "Skin turgor", "Intake records", "Thirst"), 0),
])

tuned = script_mock(id="tuned", rules=[
    ("lisinopril", "Answer: (A)"),
    ("furosemide", "The answer is B."),
    ("apical", "Start by checking the rate; give digoxin only if over 60."),
    ("vancomycin", "Answer: A"),
    ("venous return", "Answer: (A)"),
    ("intracranial", "Answer: (A)"),
    ("celiac", "Answer: (A)"),
    ("fluid status", "Hard to say without labs."),
])
baseline = script_mock(id="baseline", rules=[
    ("lisinopril", "Answer: (B)"),
    ("furosemide", "It depends on the order."),
    ("apical", "Answer: A"),
    ("vancomycin", "Answer: A"),
    ("venous return", "Answer: (A)"),
    ("intracranial", "Answer: (C)"),
    ("celiac", "Answer: (A)"),
    ("fluid status", "Answer: (B)"),
])

reports = []
for model_id, backend in (("tuned", tuned), ("baseline", baseline)):
    for b in (pharm, medsurg):
        rep = evaluate(backend, b, EvalConfig(backend_id=model_id))
        assert rep.model_id == backend.id
        reports.append(rep)
        print(f"\n{model_id} on {b.name}: {rep.accuracy:.2%} "
              f"({rep.n_correct}/{rep.n_total}, {rep.n_unparsed} unparsed)")

table, record = format_report(reports, style="md")
print("\n" + table)
csv_table, _ = format_report(reports, style="csv")
print(csv_table)
print(f"machine record keeps exact floats: tuned avg = "
      f"{[r for r in record['rows'] if r['model'] == 'tuned'][0]['avg']!r}")
