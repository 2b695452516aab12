import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balloc.core import (LoadVector, Ordering, first_majorization_violation, gap,
                         majorizes, normalize, ordering_by_load)

loads_st = st.lists(st.integers(0, 50), min_size=1, max_size=20)


def lv(loads):
    return LoadVector.from_loads(np.array(loads, dtype=np.int64))


@pytest.mark.parametrize("loads, expected", [
    ([0, 0, 0, 0], [0, 0, 0, 0]),
    ([2, 0], [1, -1]),
    ([3, 1, 0, 0], [2, 0, -1, -1]),
])
def test_normalize_examples(loads, expected):
    assert normalize(lv(loads)).tolist() == expected


@pytest.mark.parametrize("loads, expected", [([0, 0, 0], 0), ([2, 0], 1), ([5, 2, 1, 0], 3)])
def test_gap_examples(loads, expected):
    assert gap(lv(loads)) == expected


@pytest.mark.parametrize("loads, sigma", [
    ([0, 0, 0], [0, 1, 2]),
    ([1, 3, 2], [1, 2, 0]),
    ([2, 2, 5], [2, 0, 1]),
])
def test_ordering_examples(loads, sigma):
    o = ordering_by_load(lv(loads))
    assert o.sigma.tolist() == sigma
    assert o.rank[o.sigma].tolist() == list(range(len(loads)))


@pytest.mark.parametrize("v, u, expected", [
    ([1, 0, -1], [1, 0, -1], True),
    ([2, 0, -2], [1, 0, -1], True),
    ([1, 0, -1], [2, 0, -2], False),
])
def test_majorizes_examples(v, u, expected):
    assert majorizes(v, u) is expected


def test_majorizes_length_mismatch():
    with pytest.raises(ValueError):
        majorizes([1, 2], [1, 2, 3])


def test_majorizes_unsorted_mode_uses_given_order():
    assert majorizes([3, 1], [1, 3])
    assert not majorizes([1, 3], [3, 1], sort=False)
    assert first_majorization_violation([1, 3], [3, 1], sort=False) == 0


def test_ordering_rejects_non_permutation():
    with pytest.raises(ValueError):
        Ordering.from_sigma([0, 0, 1])


def test_loadvector_validation():
    with pytest.raises(ValueError):
        LoadVector(np.array([], dtype=np.int64), 0)
    with pytest.raises(ValueError):
        LoadVector(np.array([1, 2], dtype=np.int64), 4).validate()
    with pytest.raises(ValueError):
        LoadVector(np.array([-1, 2], dtype=np.int64), 1).validate()
    LoadVector(np.array([0.5, 0.25]), 0.75 + 1e-12).validate()
    assert LoadVector.zeros(3, weighted=True).loads.dtype == np.float64
    assert LoadVector.zeros(3).loads.dtype == np.int64


@given(loads_st)
def test_gap_is_first_normalized_entry(loads):
    v = lv(loads)
    y = normalize(v)
    assert gap(v) == y[0]
    assert abs(y.sum()) <= 1e-9 * len(loads)
    assert np.all(np.diff(y) <= 0)


@given(loads_st, st.randoms(use_true_random=False))
def test_normalize_is_permutation_invariant(loads, rnd):
    shuffled = list(loads)
    rnd.shuffle(shuffled)
    assert normalize(lv(loads)).tolist() == normalize(lv(shuffled)).tolist()


@settings(max_examples=1000)
@given(loads_st)
def test_ordering_sorts_loads(loads):
    v = lv(loads)
    o = ordering_by_load(v)
    assert np.all(np.diff(v.loads[o.sigma]) <= 0)


@given(st.lists(st.lists(st.integers(-20, 20), min_size=4, max_size=4), min_size=3, max_size=3))
def test_majorization_reflexive_and_transitive(vs):
    a, b, c = (np.array(v, dtype=float) for v in vs)
    assert majorizes(a, a)
    if majorizes(a, b) and majorizes(b, c):
        assert majorizes(a, c)
