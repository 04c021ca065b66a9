"""Feature subsets as integer bitmasks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence


@dataclass(frozen=True, order=True)
class FeatureSubset:
    """An immutable set of feature indices stored as a bitmask.

    Bit ``k`` is set iff feature ``k`` (0-based) is in the subset. Python ints
    are unbounded, so there is no cap on the number of features.
    """

    bits: int = 0

    def __post_init__(self):
        if self.bits < 0:
            raise ValueError("bitmask must be non-negative")

    @classmethod
    def of(cls, indices: Iterable[int]) -> "FeatureSubset":
        bits = 0
        for k in indices:
            if k < 0:
                raise ValueError(f"negative feature index {k}")
            bits |= 1 << int(k)
        return cls(bits)

    @classmethod
    def full(cls, d: int) -> "FeatureSubset":
        return cls((1 << d) - 1)

    @property
    def indices(self) -> tuple[int, ...]:
        out = []
        b, k = self.bits, 0
        while b:
            if b & 1:
                out.append(k)
            b >>= 1
            k += 1
        return tuple(out)

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __contains__(self, k: int) -> bool:
        return k >= 0 and bool(self.bits >> k & 1)

    def __or__(self, other: "FeatureSubset") -> "FeatureSubset":
        return FeatureSubset(self.bits | other.bits)

    def __and__(self, other: "FeatureSubset") -> "FeatureSubset":
        return FeatureSubset(self.bits & other.bits)

    def __sub__(self, other: "FeatureSubset") -> "FeatureSubset":
        return FeatureSubset(self.bits & ~other.bits)

    def __bool__(self) -> bool:
        return self.bits != 0

    def issubset(self, other: "FeatureSubset") -> bool:
        return self.bits & ~other.bits == 0

    def issuperset(self, other: "FeatureSubset") -> bool:
        return other.issubset(self)

    def add(self, k: int) -> "FeatureSubset":
        return FeatureSubset(self.bits | (1 << k))

    def complement(self, d: int) -> "FeatureSubset":
        return FeatureSubset(((1 << d) - 1) & ~self.bits)

    def max_index(self) -> int:
        """Largest member, or -1 for the empty set."""
        return self.bits.bit_length() - 1

    def subsets(self) -> Iterator["FeatureSubset"]:
        """Every subset of ``self``, ascending by bitmask (empty set first)."""
        for m in submasks(self.bits):
            yield FeatureSubset(m)

    def name(self, feature_names: Sequence[str] | None = None, sep: str = ":") -> str:
        idx = self.indices
        if feature_names is None:
            return sep.join(f"x{k}" for k in idx)
        return sep.join(feature_names[k] for k in idx)

    def __repr__(self) -> str:
        return "{" + ",".join(map(str, self.indices)) + "}"


EMPTY = FeatureSubset(0)


def submasks(mask: int) -> list[int]:
    """All submasks of ``mask`` in ascending numeric order."""
    out = []
    sub = 0
    # standard (sub - mask) & mask walk enumerates submasks in increasing order
    while True:
        out.append(sub)
        if sub == mask:
            return out
        sub = (sub - mask) & mask


def as_subset(s) -> FeatureSubset:
    """Coerce an int bitmask, an iterable of indices or a FeatureSubset."""
    if isinstance(s, FeatureSubset):
        return s
    if isinstance(s, int):
        return FeatureSubset(s)
    return FeatureSubset.of(s)


def subset_sort_key(s: FeatureSubset) -> tuple:
    """Order subsets by size, then lexicographically by member indices."""
    return (len(s), s.indices)
