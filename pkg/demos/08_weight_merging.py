"""DARE-style weight merging plus the npk tensor container.

A fine-tuning delta is randomly sparsified (drop rate p), survivors
are rescaled by 1/(1-p), and a fraction w of the result is added back
onto the base weights. Seeded per-parameter RNG makes the merge
bit-reproducible and independent of dict iteration order.
"""

import tempfile
from pathlib import Path

import numpy as np

from mcqforge.merge import MergeSpec, ParameterMap, dare_merge, load_npk, save_npk

rng = np.random.default_rng(11)
shapes = {"encoder.weight": (64, 32), "encoder.bias": (32,), "head.weight": (4, 32)}
base = ParameterMap({n: rng.normal(size=s).astype(np.float32) for n, s in shapes.items()})
finetuned = ParameterMap(
    {n: base[n] + rng.normal(scale=0.05, size=s).astype(np.float32)
     for n, s in shapes.items()}
)

spec = MergeSpec(drop_rate=0.5, weight=0.6, seed=7)
merged = dare_merge(base, finetuned, spec)

total = sum(arr.size for _, arr in merged.items())
untouched = sum(int(np.sum(merged[n] == base[n])) for n, _ in merged.items())
print(f"p={spec.drop_rate} w={spec.weight}: {untouched}/{total} coordinates "
      f"kept the base value (expect about half)")

delta = finetuned["encoder.weight"] - base["encoder.weight"]
moved = merged["encoder.weight"] - base["encoder.weight"]
scale = spec.weight / (1.0 - spec.drop_rate)
print(f"surviving deltas carry w/(1-p) = {scale:.1f}x rescale: mean |moved|/|delta| = "
      f"{np.mean(np.abs(moved[moved != 0]) / np.abs(delta[moved != 0])):.3f}")

again = dare_merge(base, finetuned, spec)
print(f"same seed, bit-identical merge: "
      f"{all(np.array_equal(merged[n], again[n]) for n, _ in merged.items())}")

identity_w0 = dare_merge(base, finetuned, MergeSpec(0.5, 0.0, 7))
identity_p0 = dare_merge(base, finetuned, MergeSpec(0.0, 1.0, 7))
print(f"w=0 returns base exactly: "
      f"{all(np.array_equal(identity_w0[n], base[n]) for n, _ in base.items())}")
print(f"p=0, w=1 returns the fine-tune exactly: "
      f"{all(np.array_equal(identity_p0[n], finetuned[n]) for n, _ in base.items())}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "merged.npk"
    save_npk(merged, path)
    loaded = load_npk(path)
    print(f"\nnpk round trip: {path.stat().st_size} bytes on disk, "
          f"{len(loaded)} tensors, bit-identical = "
          f"{all(np.array_equal(loaded[n], merged[n]) for n, _ in merged.items())}")
    head = path.read_bytes()[:8]
    print(f"header starts {head[:4]!r} then little-endian count "
          f"{int.from_bytes(head[4:], 'little')}")
