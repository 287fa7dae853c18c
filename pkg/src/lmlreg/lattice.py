"""Subset lattices and the zeta / Möbius linear maps built on them.

Subsets of a ground set of ``n`` labelled elements are encoded as bitmasks
``0 .. 2**n - 1``; bit ``i`` set means element ``i`` belongs to the subset,
so mask 0 is the empty set.  The zeta matrix ``Z`` has entry 1 at ``(E, H)``
iff ``E ⊆ H``; its inverse, the Möbius matrix ``M``, carries the alternating
sign ``(-1)**|H \\ E|`` on the same support.  Everything downstream (the
probability / mean / log-mean-linear parameter chain and the regression
coefficient algebra) is a combination of these two maps applied along rows
or columns of a matrix.

Dense matrices are only materialized for small ground sets; the fast
in-place transforms run in ``O(n * 2**n)`` and are exact to floating-point
associativity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Iterable, Sequence

import numpy as np

MAX_GROUND_SIZE = 20          # 2**20 subsets: hard cap to bound memory
MAX_DENSE_GROUND_SIZE = 12    # dense 2**q x 2**q matrices only below this


def _require_power_of_two(n: int) -> int:
    """Return log2(n), raising ValueError if n is not a power of two."""
    q = n.bit_length() - 1
    if n <= 0 or (1 << q) != n:
        raise ValueError(f"axis length {n} is not a power of two")
    return q


@dataclass(frozen=True)
class SubsetLattice:
    """The lattice of all subsets of an ordered, labelled ground set."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        n = len(self.labels)
        if not 1 <= n <= MAX_GROUND_SIZE:
            raise ValueError(
                f"ground set must have between 1 and {MAX_GROUND_SIZE} elements, got {n}"
            )
        if len(set(self.labels)) != n:
            raise ValueError(f"duplicate labels in {self.labels}")
        for lab in self.labels:
            if not lab or any(ch in lab for ch in ",;{} \t"):
                raise ValueError(f"label {lab!r} is empty or contains a reserved character")

    @property
    def ground_size(self) -> int:
        return len(self.labels)

    @property
    def size(self) -> int:
        """Number of subsets, 2**ground_size."""
        return 1 << len(self.labels)

    def check_mask(self, mask: int) -> int:
        if not 0 <= mask < self.size:
            raise ValueError(f"mask {mask} out of range for ground set of size {self.ground_size}")
        return mask

    def mask_of(self, members: Iterable[str]) -> int:
        """Bitmask of the subset holding the given labels."""
        mask = 0
        for lab in members:
            try:
                mask |= 1 << self.labels.index(lab)
            except ValueError:
                raise ValueError(f"unknown label {lab!r}; expected one of {self.labels}") from None
        return mask

    def members(self, mask: int) -> tuple[str, ...]:
        self.check_mask(mask)
        return tuple(lab for i, lab in enumerate(self.labels) if mask >> i & 1)

    def format_mask(self, mask: int) -> str:
        """Brace notation: ``{b,c}`` for subsets, ``{}`` for the empty set."""
        return "{" + ",".join(self.members(mask)) + "}"

    def parse_subset(self, text: str) -> int:
        """Inverse of :meth:`format_mask`; accepts optional surrounding braces."""
        text = text.strip()
        if text.startswith("{") and text.endswith("}"):
            text = text[1:-1]
        if not text:
            return 0
        return self.mask_of(part.strip() for part in text.split(","))

    def subset(self, mask: int) -> "Subset":
        return Subset(self, self.check_mask(mask))

    def iter_masks(self) -> Iterator[int]:
        return iter(range(self.size))

    def masks_by_cardinality(self, include_empty: bool = False) -> list[int]:
        """All masks sorted by (cardinality, member-index sequence).

        This matches the usual table layout: singletons first, then pairs
        in lexicographic label order, and so on.
        """
        masks = [m for m in range(self.size) if include_empty or m]
        masks.sort(key=lambda m: (m.bit_count(), _bit_tuple(m)))
        return masks


def _bit_tuple(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass(frozen=True)
class Subset:
    """Handle for one subset of a lattice: membership, iteration, rendering."""

    lattice: SubsetLattice
    mask: int

    @property
    def cardinality(self) -> int:
        return self.mask.bit_count()

    @property
    def members(self) -> tuple[str, ...]:
        return self.lattice.members(self.mask)

    def contains(self, label: str) -> bool:
        return bool(self.mask >> self.lattice.labels.index(label) & 1)

    def subsets(self) -> Iterator["Subset"]:
        """All S ⊆ self in increasing-mask order."""
        for m in iter_submasks(self.mask):
            yield Subset(self.lattice, m)

    def supersets(self) -> Iterator["Subset"]:
        """All S ⊇ self in increasing-mask order."""
        full = self.lattice.size - 1
        for extra in iter_submasks(full & ~self.mask):
            # extra is disjoint from self.mask, so mask|extra grows with extra
            yield Subset(self.lattice, self.mask | extra)

    def __str__(self) -> str:
        return self.lattice.format_mask(self.mask)


def subset_of_mask(lattice: SubsetLattice, mask: int) -> Subset:
    """Subset handle for ``mask``; raises ValueError if out of range."""
    return lattice.subset(mask)


def iter_submasks(mask: int) -> Iterator[int]:
    """All submasks of ``mask`` (including 0 and mask) in increasing order."""
    subs = []
    s = mask
    while True:
        subs.append(s)
        if s == 0:
            break
        s = (s - 1) & mask
    return iter(reversed(subs))


def compress_mask(mask: int, within: int) -> int:
    """Re-index ``mask ⊆ within`` onto the sub-lattice spanned by ``within``.

    Bits of ``within`` are renumbered 0,1,... in increasing position; the
    result is the mask of the same members in that smaller ground set.
    """
    out = 0
    j = 0
    pos = 0
    w = within
    while w:
        if w & 1:
            if mask >> pos & 1:
                out |= 1 << j
            j += 1
        w >>= 1
        pos += 1
    return out


def expand_mask(mask: int, within: int) -> int:
    """Inverse of :func:`compress_mask`: embed a sub-lattice mask back."""
    out = 0
    j = 0
    pos = 0
    w = within
    while w:
        if w & 1:
            if mask >> j & 1:
                out |= 1 << pos
            j += 1
        w >>= 1
        pos += 1
    return out


@dataclass(frozen=True)
class LatticeMatrix:
    """A dense subset-by-subset matrix tagged with its lattice."""

    lattice: SubsetLattice
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.lattice.size, self.lattice.size):
            raise ValueError(f"matrix shape {v.shape} does not match lattice size {self.lattice.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.lattice.size


def _check_dense(lattice: SubsetLattice) -> None:
    if lattice.ground_size > MAX_DENSE_GROUND_SIZE:
        raise ValueError(
            f"dense lattice matrices limited to ground size {MAX_DENSE_GROUND_SIZE}; "
            f"use the fast transforms for ground size {lattice.ground_size}"
        )


def zeta_matrix(lattice: SubsetLattice) -> LatticeMatrix:
    """Z with entry 1 at (E, H) iff E ⊆ H, else 0."""
    _check_dense(lattice)
    m = np.arange(lattice.size)
    sub = (m[:, None] & m[None, :]) == m[:, None]
    return LatticeMatrix(lattice, sub.astype(float))


def mobius_matrix(lattice: SubsetLattice) -> LatticeMatrix:
    """M = Z**-1, with entry (-1)**|H \\ E| at (E, H) iff E ⊆ H."""
    _check_dense(lattice)
    m = np.arange(lattice.size)
    sub = (m[:, None] & m[None, :]) == m[:, None]
    odd = np.bitwise_count(m[None, :] & ~m[:, None]) % 2 == 1
    return LatticeMatrix(lattice, np.where(sub, np.where(odd, -1.0, 1.0), 0.0))


def zeta_transform(x: np.ndarray, axis: int = -1, supersets: bool = False) -> np.ndarray:
    """Subset-sum transform along ``axis``: out[S] = Σ_{T ⊆ S} x[T].

    With ``supersets=True`` the sum runs over T ⊇ S instead.  Equivalent to
    multiplying by Z along that axis but computed in O(n·2**n).
    """
    y = np.array(x, dtype=float)
    n = _require_power_of_two(y.shape[axis])
    yl = np.moveaxis(y, axis, -1)
    idx = np.arange(1 << n)
    for b in range(n):
        bit = 1 << b
        hi = idx[(idx & bit) != 0]
        if supersets:
            yl[..., hi ^ bit] += yl[..., hi]
        else:
            yl[..., hi] += yl[..., hi ^ bit]
    return y


def mobius_transform(x: np.ndarray, axis: int = -1, supersets: bool = False) -> np.ndarray:
    """Inverse of :func:`zeta_transform` with the same orientation."""
    y = np.array(x, dtype=float)
    n = _require_power_of_two(y.shape[axis])
    yl = np.moveaxis(y, axis, -1)
    idx = np.arange(1 << n)
    for b in range(n):
        bit = 1 << b
        hi = idx[(idx & bit) != 0]
        if supersets:
            yl[..., hi ^ bit] -= yl[..., hi]
        else:
            yl[..., hi] -= yl[..., hi ^ bit]
    return y


def zeta_transform_cols(rowvec: Sequence[float] | np.ndarray) -> np.ndarray:
    """Fast subset sums of a vector indexed by subsets: out[E] = Σ_{E'⊆E} x[E']."""
    v = np.asarray(rowvec, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return zeta_transform(v)


def mobius_transform_cols(rowvec: Sequence[float] | np.ndarray) -> np.ndarray:
    """Inverse of :func:`zeta_transform_cols`."""
    v = np.asarray(rowvec, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return mobius_transform(v)
