"""Dense float32 tensors and named parameter collections.

Tensors are plain ``numpy.ndarray`` objects of dtype float32. A
:class:`ParameterSet` is an immutable, name-ordered mapping of such arrays
tagged with the lineage of the initialization it descends from.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping, Sequence

import numpy as np

from .errors import EmptyFusionInput, IncompatibleParameterSets, ShapeMismatch

DTYPE = np.float32


def as_tensor(values, shape=None) -> np.ndarray:
    """Return a read-only float32 copy of ``values`` (optionally reshaped)."""
    arr = np.array(values, dtype=DTYPE, copy=True)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ShapeMismatch(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


class ParameterSet(Mapping):
    """Named float32 tensors sharing one base initialization.

    Iteration order is lexicographic by name. The arrays handed out are
    read-only; build a new set with :meth:`replace` or :meth:`from_arrays`.
    """

    __slots__ = ("_entries", "base_id", "arch_hash")

    def __init__(self, entries: Mapping[str, np.ndarray], base_id: str, arch_hash: str):
        self._entries = {name: as_tensor(entries[name]) for name in sorted(entries)}
        self.base_id = str(base_id)
        self.arch_hash = str(arch_hash)

    @classmethod
    def from_arrays(cls, entries, like: "ParameterSet") -> "ParameterSet":
        return cls(entries, like.base_id, like.arch_hash)

    def __reduce__(self):
        return (ParameterSet, ({k: np.array(v) for k, v in self._entries.items()}, self.base_id, self.arch_hash))

    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        n = sum(t.size for t in self._entries.values())
        return (f"ParameterSet({len(self)} tensors, {n} values, "
                f"base_id={self.base_id!r}, arch_hash={self.arch_hash[:12]!r})")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: t.shape for name, t in self._entries.items()}

    def replace(self, **updates) -> "ParameterSet":
        entries = dict(self._entries)
        entries.update(updates)
        return ParameterSet(entries, self.base_id, self.arch_hash)

    def to_dict(self, dtype=DTYPE) -> dict[str, np.ndarray]:
        """Writable copies of every tensor, optionally cast."""
        return {name: np.array(t, dtype=dtype) for name, t in self._entries.items()}

    def all_finite(self) -> bool:
        return all(bool(np.isfinite(t).all()) for t in self._entries.values())

    def equals(self, other: "ParameterSet") -> bool:
        """Bitwise equality of lineage, names, shapes and values."""
        if not compatible(self, other):
            return False
        return all(
            self[n].tobytes() == other[n].tobytes() for n in self
        )


def incompatibility(a: ParameterSet, b: ParameterSet) -> str | None:
    """Reason the two sets cannot be fused, or None when they can."""
    if a.base_id != b.base_id:
        return f"base_id differs: {a.base_id!r} vs {b.base_id!r}"
    if a.arch_hash != b.arch_hash:
        return "arch_hash differs"
    if list(a) != list(b):
        missing = sorted(set(a) ^ set(b))
        return f"tensor names differ: {missing[:5]}"
    for name in a:
        if a[name].shape != b[name].shape:
            return f"shape of {name!r} differs: {a[name].shape} vs {b[name].shape}"
    return None


def compatible(a: ParameterSet, b: ParameterSet) -> bool:
    return incompatibility(a, b) is None


def elementwise_mean(sets: Sequence[ParameterSet]) -> ParameterSet:
    """Uniform average of fusion-compatible parameter sets.

    Sums are accumulated in float64 in input-list order, divided by n and
    rounded once to float32.
    """
    sets = list(sets)
    if not sets:
        raise EmptyFusionInput("elementwise_mean needs at least one ParameterSet")
    first = sets[0]
    for other in sets[1:]:
        reason = incompatibility(first, other)
        if reason:
            raise IncompatibleParameterSets(reason)
    n = len(sets)
    fused = {}
    for name in first:
        acc = np.zeros(first[name].shape, dtype=np.float64)
        for s in sets:
            acc += s[name]
        fused[name] = (acc / n).astype(DTYPE)
    return ParameterSet(fused, first.base_id, first.arch_hash)


# -- elementary helpers -------------------------------------------------------

def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")


def axpy(dst: np.ndarray, scale: float, src: np.ndarray) -> np.ndarray:
    """Return ``dst + scale * src`` as a new float32 tensor."""
    _check_same_shape(dst, src, "axpy")
    out = np.asarray(dst, dtype=np.float64) + float(scale) * np.asarray(src, dtype=np.float64)
    return as_tensor(out)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return axpy(a, 1.0, b)


def scale(a: np.ndarray, factor: float) -> np.ndarray:
    return as_tensor(np.asarray(a, dtype=np.float64) * float(factor))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return as_tensor(a.astype(np.float64) @ b.astype(np.float64))


def softmax(x, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (float64 result)."""
    x = np.asarray(x, dtype=np.float64)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)
