"""Load the bundled 4-level nursing taxonomy and count its levels.

Each row is one specialization -> domain -> topic -> concept path; a
concept is the unit that seeds one generation slot downstream.
"""

from mcqforge.taxonomy import bundled_taxonomy_path, load_taxonomy, summarize

taxonomy = load_taxonomy(bundled_taxonomy_path())
print(f"loaded {len(taxonomy)} concept paths from {taxonomy.source}")
print(f"file digest: {taxonomy.digest}")
print(summarize(taxonomy).as_line())

print("\nfirst three paths:")
for path in list(taxonomy)[:3]:
    print("  " + " > ".join(path.as_tuple()))

path = next(iter(taxonomy))
print(f"\nper-concept digest (stable id material): {path.digest()}")
