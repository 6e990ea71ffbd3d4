import math

import pytest
from hypothesis import given, strategies as st

from moment_ensemble.multiindex import (
    MultiIndex,
    box,
    count_multiindices,
    enumerate_multiindices,
    multi_binomial,
    multi_factorial_count,
)


def test_enumerate_1d():
    assert enumerate_multiindices(1, 2) == [(0,), (1,), (2,)]


def test_enumerate_2d_order_one():
    idx = enumerate_multiindices(2, 1)
    assert sorted(idx) == idx
    assert set(idx) == {(0, 0), (0, 1), (1, 0)}
    assert len(idx) == 3 == math.comb(3, 2)


def test_enumerate_3d_count_matches_brute_force():
    brute = [k for k in box((4, 4, 4)) if sum(k) <= 4]
    idx = enumerate_multiindices(3, 4)
    assert len(idx) == len(brute) == 35
    assert set(idx) == set(brute)


@given(st.integers(1, 4), st.integers(0, 6))
def test_enumeration_is_graded_and_complete(d, N):
    idx = enumerate_multiindices(d, N)
    assert len(idx) == count_multiindices(d, N) == math.comb(N + d, d)
    assert len(set(idx)) == len(idx)
    orders = [k.order() for k in idx]
    assert orders == sorted(orders)
    assert all(a < b for a, b in zip(idx, idx[1:]))


def test_multiindex_rejects_negative_entries():
    with pytest.raises(ValueError):
        MultiIndex((1, -1))


def test_multiindex_arithmetic():
    k = MultiIndex((1, 2))
    assert k + (2, 0) == (3, 2)
    assert k.order() == 3
    assert MultiIndex((0, 1)).dominated_by(k)
    assert not MultiIndex((2, 0)).dominated_by(k)
    with pytest.raises(ValueError):
        MultiIndex((0, 3)) - k


def test_multi_binomial_and_count():
    assert multi_binomial((4, 3), (2, 1)) == 6 * 3
    assert multi_factorial_count((2, 3)) == 12
    # exact integers well past double precision
    assert multi_binomial((60,), (30,)) == math.comb(60, 30)
    assert isinstance(multi_binomial((60,), (30,)), int)


def test_box_enumerates_every_point():
    pts = list(box((1, 2)))
    assert len(pts) == 6 and pts[0] == (0, 0) and pts[-1] == (1, 2)
