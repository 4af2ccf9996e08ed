"""DARE-style merging of named float32 parameter maps.

The delta between a fine-tuned map and its base is randomly sparsified
(each coordinate dropped with probability p, survivors rescaled by
1/(1-p)) and added back onto the base with weight w. Seeding is per
parameter name, so merge results never depend on iteration order.

Maps travel in a small binary container (.npk):

    magic  b"NPK1"
    u32    entry count (little-endian)
    per entry:
        u16  name length in bytes
        ...  name (utf-8)
        u8   ndim
        u32  dim sizes, ndim of them
        f32  values, C order, little-endian
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, Tuple

import numpy as np

from .errors import ForgeError, IoError

MAGIC = b"NPK1"


class ShapeMismatch(ForgeError):
    """Parameter maps disagree on names or array shapes."""


class InvalidSpec(ForgeError):
    """Merge knobs outside their ranges."""


class MalformedContainer(ForgeError):
    """npk bytes do not follow the documented layout."""


class ParameterMap:
    """Ordered name -> float32 ndarray mapping."""

    def __init__(self, entries: Dict[str, np.ndarray]):
        self.entries: Dict[str, np.ndarray] = {}
        for name, arr in entries.items():
            if not name:
                raise ValueError("parameter names must be non-empty")
            # asarray with order="C", not ascontiguousarray: the latter
            # silently promotes 0-d scalars to shape (1,)
            self.entries[name] = np.asarray(arr, dtype=np.float32, order="C")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.entries.items())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParameterMap):
            return NotImplemented
        if self.entries.keys() != other.entries.keys():
            return False
        return all(
            a.shape == other.entries[n].shape and np.array_equal(a, other.entries[n])
            for n, a in self.entries.items()
        )

    def check_compatible(self, other: "ParameterMap") -> None:
        for name in self.entries:
            if name not in other.entries:
                raise ShapeMismatch(f"parameter {name!r} missing from one map")
        for name in other.entries:
            if name not in self.entries:
                raise ShapeMismatch(f"parameter {name!r} missing from one map")
        for name, arr in self.entries.items():
            if arr.shape != other.entries[name].shape:
                raise ShapeMismatch(
                    f"parameter {name!r}: shape {arr.shape} vs "
                    f"{other.entries[name].shape}"
                )


@dataclass(frozen=True)
class MergeSpec:
    drop_rate: float  # p: probability a delta coordinate is zeroed
    weight: float  # w: how much of the (rescaled) delta to add
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.drop_rate < 1.0:
            raise InvalidSpec(f"drop_rate {self.drop_rate} outside [0, 1)")
        if not 0.0 <= self.weight <= 1.0:
            raise InvalidSpec(f"weight {self.weight} outside [0, 1]")


def _param_rng(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in (0, 4, 8, 12)]
    return np.random.default_rng(np.random.SeedSequence([seed, *words]))


def dare_merge(base: ParameterMap, finetuned: ParameterMap,
               spec: MergeSpec) -> ParameterMap:
    """base + w * rescaled-random-sparsified (finetuned - base).

    w = 0 returns the base bit-for-bit; p = 0, w = 1 returns the
    fine-tuned map bit-for-bit. Fixed seed gives bit-identical output
    regardless of parameter iteration order.
    """
    base.check_compatible(finetuned)
    out: Dict[str, np.ndarray] = {}
    for name, b in base.items():
        f = finetuned[name]
        if spec.weight == 0.0:
            out[name] = b.copy()
            continue
        if spec.drop_rate == 0.0 and spec.weight == 1.0:
            out[name] = f.copy()
            continue
        delta = f - b
        keep = _param_rng(spec.seed, name).random(delta.shape) >= spec.drop_rate
        scale = np.float32(spec.weight / (1.0 - spec.drop_rate))
        out[name] = b + delta * keep * scale
    return ParameterMap(out)


def save_npk(pmap: ParameterMap, path) -> None:
    chunks = [MAGIC, struct.pack("<I", len(pmap))]
    for name, arr in pmap.items():
        name_bytes = name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise ValueError(f"parameter name too long: {name[:40]!r}...")
        if arr.ndim > 0xFF:
            raise ValueError(f"parameter {name!r} has too many dimensions")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4", copy=False).tobytes(order="C"))
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_npk(path) -> ParameterMap:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise MalformedContainer(f"truncated at byte {pos} (wanted {n} more)")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise MalformedContainer("bad magic (not an npk file)")
    (count,) = struct.unpack("<I", take(4))
    entries: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        if name in entries:
            raise MalformedContainer(f"duplicate parameter {name!r}")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n_values = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(take(4 * n_values), dtype="<f4").reshape(shape)
        entries[name] = data.copy()
    if pos != len(view):
        raise MalformedContainer(f"{len(view) - pos} trailing bytes")
    return ParameterMap(entries)
