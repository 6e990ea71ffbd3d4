"""Multi-indices over N^d and exact binomial helpers."""
from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterator, Sequence


class MultiIndex(tuple):
    """A d-tuple of non-negative integers.

    Ordering is graded-lexicographic: first by total order ``|k|``, then
    lexicographically. This differs from plain tuple ordering, so the
    comparison operators are overridden.
    """

    def __new__(cls, entries: Sequence[int] | int) -> "MultiIndex":
        if isinstance(entries, int):
            entries = (entries,)
        entries = tuple(int(e) for e in entries)
        if not entries:
            raise ValueError("a multi-index needs at least one entry")
        if any(e < 0 for e in entries):
            raise ValueError(f"negative entry in multi-index {entries}")
        return super().__new__(cls, entries)

    @property
    def d(self) -> int:
        return len(self)

    def order(self) -> int:
        return sum(self)

    def _key(self):
        return (sum(self), tuple(self))

    def __lt__(self, other):
        return self._key() < MultiIndex(other)._key()

    def __le__(self, other):
        return self._key() <= MultiIndex(other)._key()

    def __gt__(self, other):
        return self._key() > MultiIndex(other)._key()

    def __ge__(self, other):
        return self._key() >= MultiIndex(other)._key()

    def __add__(self, other) -> "MultiIndex":
        other = MultiIndex(other)
        if len(other) != len(self):
            raise ValueError("multi-index dimension mismatch")
        return MultiIndex(a + b for a, b in zip(self, other))

    def __sub__(self, other) -> "MultiIndex":
        other = MultiIndex(other)
        if len(other) != len(self):
            raise ValueError("multi-index dimension mismatch")
        return MultiIndex(a - b for a, b in zip(self, other))

    def dominated_by(self, other) -> bool:
        """True when every entry is <= the matching entry of ``other``."""
        return all(a <= b for a, b in zip(self, other))

    def __repr__(self) -> str:
        return f"MultiIndex{tuple(self)}"


def _graded(d: int, order: int) -> Iterator[tuple[int, ...]]:
    # compositions of ``order`` into d non-negative parts, lexicographic
    if d == 1:
        yield (order,)
        return
    for first in range(order + 1):
        for rest in _graded(d - 1, order - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _enumerate_cached(d: int, max_order: int) -> tuple[MultiIndex, ...]:
    out = []
    for order in range(max_order + 1):
        out.extend(MultiIndex(k) for k in _graded(d, order))
    return tuple(out)


def enumerate_multiindices(d: int, max_order: int) -> list[MultiIndex]:
    """All k in N^d with |k| <= max_order, in graded-lex order.

    >>> enumerate_multiindices(2, 1)
    [MultiIndex(0, 0), MultiIndex(0, 1), MultiIndex(1, 0)]
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    return list(_enumerate_cached(d, max_order))


def count_multiindices(d: int, max_order: int) -> int:
    return math.comb(max_order + d, d)


def box(upper: Sequence[int]) -> Iterator[MultiIndex]:
    """Multi-indices k with 0 <= k <= upper componentwise."""
    for k in itertools.product(*(range(u + 1) for u in upper)):
        yield MultiIndex(k)


def multi_binomial(n: Sequence[int], k: Sequence[int]) -> int:
    """Product of per-axis binomial coefficients, as an exact integer."""
    out = 1
    for a, b in zip(n, k):
        out *= math.comb(a, b)
    return out


def multi_factorial_count(n: Sequence[int]) -> int:
    """(n+1) in multi-index notation: the product of (n_i + 1)."""
    out = 1
    for a in n:
        out *= a + 1
    return out
