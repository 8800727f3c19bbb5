"""Set partitions of a cyclically ordered index set and their pair statistics.

A partition of ``{1, ..., k}`` is stored in a canonical form: blocks are
ascending tuples, ordered by their minimum element.  On top of enumeration
(all partitions, noncrossing partitions) this module computes two pair sets
attached to the cyclic order:

* ``nearest_neighbor_pairs`` -- the pairs ``(i, i+1)`` (cyclically, so the
  wrap pair ``(k, 1)`` is included) whose endpoints share a block;
* ``noncrossing_links`` -- for each index, the link to the nearest larger
  same-block index that is not obstructed by a pair from another block.

From these, ``partition_stats`` derives the counts ``S`` and ``R`` that
drive the moment formulas: ``S`` counts collapsed neighbor pairs and ``R``
counts the independent cycle classes left after linking.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterable, Iterator

ENUMERATION_CAP = 10

_CONTEXTS = ("V-cycle", "W-cycle")


class EnumerationLimitError(ValueError):
    """Raised when an enumeration request exceeds the configured cap."""


@dataclass(frozen=True)
class Partition:
    """A partition of ``{1, ..., ground_size}`` into disjoint blocks.

    Parameters
    ----------
    ground_size:
        Number of indices; indices run from 1 to ``ground_size`` and are
        read in cyclic order.
    blocks:
        Disjoint, nonempty, covering blocks.  Stored as ascending tuples
        sorted by minimum element; use :meth:`from_blocks` to normalize.
    """

    ground_size: int
    blocks: tuple[tuple[int, ...], ...]

    @classmethod
    def from_blocks(cls, ground_size: int, blocks: Iterable[Iterable[int]]) -> "Partition":
        norm = []
        seen: set[int] = set()
        for raw in blocks:
            block = tuple(sorted(raw))
            if not block:
                raise ValueError("empty block")
            if seen.intersection(block):
                raise ValueError(f"overlapping blocks at {seen.intersection(block)}")
            seen.update(block)
            norm.append(block)
        if seen != set(range(1, ground_size + 1)):
            raise ValueError(
                f"blocks must cover 1..{ground_size} exactly, got {sorted(seen)}"
            )
        norm.sort(key=lambda b: b[0])
        return cls(ground_size, tuple(norm))

    @classmethod
    def from_rgs(cls, rgs: Iterable[int]) -> "Partition":
        """Build from a restricted growth string (0-based block labels)."""
        grouped: dict[int, list[int]] = {}
        n = 0
        for i, label in enumerate(rgs, start=1):
            grouped.setdefault(label, []).append(i)
            n = i
        return cls.from_blocks(n, grouped.values())

    def block_index_of(self, i: int) -> int:
        for idx, block in enumerate(self.blocks):
            if i in block:
                return idx
        raise KeyError(i)

    def block_of(self, i: int) -> tuple[int, ...]:
        return self.blocks[self.block_index_of(i)]

    def same_block(self, i: int, j: int) -> bool:
        return self.block_index_of(i) == self.block_index_of(j)

    def __len__(self) -> int:
        return len(self.blocks)


def _iter_rgs(k: int) -> Iterator[tuple[int, ...]]:
    # Lexicographic restricted growth strings: a_1 = 0, a_{i+1} <= max + 1.
    rgs = [0] * k
    maxes = [0] * k
    while True:
        yield tuple(rgs)
        i = k - 1
        while i > 0 and rgs[i] == maxes[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        rgs[i] += 1
        maxes[i] = max(maxes[i - 1], rgs[i])
        for j in range(i + 1, k):
            rgs[j] = 0
            maxes[j] = maxes[i]


def _check_cap(k: int) -> None:
    if not 1 <= k:
        raise ValueError(f"ground size must be positive, got {k}")
    if k > ENUMERATION_CAP:
        raise EnumerationLimitError(
            f"partition enumeration capped at k={ENUMERATION_CAP}, got {k}"
        )


def enumerate_set_partitions(k: int) -> list[Partition]:
    """All partitions of ``{1..k}`` in restricted-growth lexicographic order."""
    _check_cap(k)
    return [Partition.from_rgs(rgs) for rgs in _iter_rgs(k)]


def enumerate_noncrossing(k: int) -> list[Partition]:
    """Noncrossing partitions of ``{1..k}``, same order as the full list."""
    _check_cap(k)
    return [p for p in enumerate_set_partitions(k) if is_noncrossing(p)]


def is_noncrossing(p: Partition) -> bool:
    """True iff there are no indices i1 < j1 < i2 < j2 with i1~i2, j1~j2 in
    distinct blocks."""
    for block in p.blocks:
        for lo, hi in zip(block, block[1:]):
            # A stranger strictly inside a consecutive gap whose block leaks
            # outside [lo, hi] witnesses a crossing.
            for x in range(lo + 1, hi):
                other = p.block_of(x)
                if other is not p.blocks[p.block_index_of(lo)] and (
                    other[0] < lo or other[-1] > hi
                ):
                    return False
    return True


def nearest_neighbor_pairs(p: Partition) -> set[tuple[int, int]]:
    """b(p): cyclic neighbor pairs (i, i+1) with both endpoints in one block.

    The wrap pair is stored as ``(k, 1)``.  For the one-block partition the
    result has exactly k elements; in particular k=2 yields both (1,2) and
    (2,1), and k=1 yields the self pair (1,1).
    """
    k = p.ground_size
    out = set()
    for i in range(1, k + 1):
        j = i % k + 1
        if p.same_block(i, j):
            out.add((i, j))
    return out


def _obstructed(p: Partition, i: int, j: int) -> bool:
    # A link (i, j) is obstructed when a pair from some other block straddles
    # exactly one of its endpoints.
    own = p.block_index_of(i)
    for idx, block in enumerate(p.blocks):
        if idx == own:
            continue
        inside = any(i < x < j for x in block)
        outside = block[0] < i or block[-1] > j
        if inside and outside:
            return True
    return False


def noncrossing_links(p: Partition) -> set[tuple[int, int]]:
    """c(p): for each index, the nearest unobstructed same-block link.

    Each index i links to ``min{l > i : l ~ i and (i, l) unobstructed}`` when
    such l exists.  The wrap link of the cyclic definition needs no special
    case: when every interior candidate of index 1 is obstructed and the
    block of 1 reaches k, the minimum rule itself emits the spanning pair
    (1, k), which is exactly the wrap condition.  Pairs are stored with the
    smaller index first.
    """
    out = set()
    for i in range(1, p.ground_size + 1):
        for l in p.block_of(i):
            if l <= i:
                continue
            if not _obstructed(p, i, l):
                out.add((i, l))
                break
    return out


def partition_stats(p: Partition, context: str) -> tuple[int, int]:
    """(S, R) with S = |b(p)| and R = |c(p)| + 1 - S.

    ``context`` labels whether the ground set plays the V role or the W role
    in a cycle; the formulas coincide, the flag only validates intent.
    """
    if context not in _CONTEXTS:
        raise ValueError(f"context must be one of {_CONTEXTS}, got {context!r}")
    s = len(nearest_neighbor_pairs(p))
    r = len(noncrossing_links(p)) + 1 - s
    return s, r


def bell_number(n: int) -> int:
    """Number of partitions of an n-set, via the binomial-sum recurrence."""
    bells = [1]
    for m in range(n):
        bells.append(sum(comb(m, j) * bells[j] for j in range(m + 1)))
    return bells[n]


def catalan_number(n: int) -> int:
    """Number of noncrossing partitions of an n-set, multiplicative form."""
    c = 1
    for i in range(1, n + 1):
        c = c * 2 * (2 * i - 1) // (i + 1)
    return c
