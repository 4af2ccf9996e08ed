"""ROUGE-L similarity and the two-step decontamination filter.

The filter first drops candidates that match any held-out test
question, then walks the survivors and drops near-duplicates of an
earlier kept question under the same concept path. Identical text
under a different concept is allowed through by design.
"""

from mcqforge.datamodel import Benchmark, Corpus, McqItem
from mcqforge.decontam import decontaminate, rouge_l
from mcqforge.taxonomy import ConceptPath

score = rouge_l(
    "The nurse should elevate the head of the bed before feeding.",
    "Before feeding, the nurse should elevate the head of the bed.",
)
print(f"pairwise ROUGE-L: F1={score.value:.4f} (lcs={score.lcs_len}, "
      f"cand={score.cand_len}, ref={score.ref_len} tokens)")

HEPARIN = ConceptPath("Clinical Skills", "Pharmacology", "Anticoagulants", "heparin")
AIRWAY = ConceptPath("Clinical Skills", "Respiratory", "Airway", "suctioning")

CHOICES = ("aPTT", "INR", "platelets", "BUN")


def item(item_id, question, path):
    return McqItem(question=question, choices=CHOICES, answer=0,
                   rationale="per protocol", path=path, source="synthetic",
                   id=item_id)


test_set = Benchmark(name="boards", items=(
    McqItem(question="What is the priority action when a client reports "
                     "sudden chest pain at rest?",
            choices=CHOICES, answer=0, rationale="per protocol",
            path=HEPARIN, source="nclex_test", id="t0"),
))

candidates = Corpus(name="gen-pool", items=(
    item("c0", "Which lab value should the nurse monitor during a heparin "
               "infusion?", HEPARIN),
    item("c1", "What is the priority action when a patient reports sudden "
               "chest pain at rest?", HEPARIN),
    item("c2", "How long should the nurse apply suction during tracheostomy "
               "care?", AIRWAY),
    item("c3", "Which lab value should the nurse check during a heparin "
               "infusion?", HEPARIN),
    item("c4", "Which lab value should the nurse monitor during a heparin "
               "infusion?", AIRWAY),
))

kept, decisions = decontaminate(candidates, [test_set], threshold=0.7)
print(f"\nthreshold 0.7 -> kept {len(kept.items)} of {len(candidates.items)}:")
for d in decisions:
    hit = f" vs {d.matched_id} at {d.score.value:.3f}" if d.matched_id else ""
    print(f"  {d.item_id}: {d.verdict}{hit}")
print("note c4 survives: same words as c0 but a different concept pool")

print("\nkept count is nondecreasing in the threshold:")
for t in (0.3, 0.5, 0.7, 0.9, 1.0):
    kept_t, _ = decontaminate(candidates, [test_set], threshold=t)
    print(f"  t={t:.1f}  kept={len(kept_t.items)}")
