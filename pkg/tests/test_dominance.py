import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_fronts
from nesr.evolution import crowding_distance, dominates, nondominated_sort, ranks, truncate


def test_dominates_examples():
    assert dominates((1, 1, 1), (2, 2, 2))
    assert not dominates((1, 2), (2, 1)) and not dominates((2, 1), (1, 2))
    assert not dominates((1, 1), (1, 1))
    with pytest.raises(ValueError):
        dominates((1,), (1, 2))


def test_sort_examples():
    assert nondominated_sort([(0, 3), (1, 2), (2, 1), (3, 0)]) == [[0, 1, 2, 3]]
    assert nondominated_sort([(3, 3), (0, 0), (2, 2), (1, 1)]) == [[1], [3], [2], [0]]
    assert nondominated_sort(np.zeros((0, 3))) == []


points = st.lists(st.tuples(*[st.integers(0, 4)] * 3), min_size=1, max_size=50)


@given(points)
def test_sort_matches_brute_force(pts):
    fronts = nondominated_sort(pts)
    assert fronts == brute_fronts(pts)
    r = ranks(pts)
    for k, front in enumerate(fronts):
        assert all(r[i] == k for i in front)


def test_truncate_example():
    # front 0: three points; front 1: four points on a line
    F = np.array([[0, 4], [2, 2], [4, 0], [1, 5], [2, 4.5], [3, 4], [5, 3.5]], dtype=float)
    assert nondominated_sort(F) == [[0, 1, 2], [3, 4, 5, 6]]
    keep = truncate(F, 5)
    # boundary points of front 1 have infinite crowding distance
    assert sorted(keep) == [0, 1, 2, 3, 6]


def test_truncate_small_and_duplicates():
    F = np.ones((6, 3))
    assert truncate(F, 10) == list(range(6))
    keep = truncate(F, 4)
    assert len(keep) == 4 and len(set(keep)) == 4
    with pytest.raises(ValueError):
        truncate(F, 0)


def test_crowding_distance_values():
    F = np.array([[0.0, 3.0], [1.0, 2.0], [3.0, 0.0]])
    cd = crowding_distance(F)
    assert np.isinf(cd[0]) and np.isinf(cd[2])
    assert cd[1] == pytest.approx(3 / 3 + 3 / 3)


@given(points, st.integers(1, 50))
def test_truncate_keeps_better_fronts(pts, target):
    keep = truncate(pts, target)
    assert len(keep) == min(target, len(pts)) and len(set(keep)) == len(keep)
    r = ranks(pts)
    if len(keep) < len(pts):
        dropped = set(range(len(pts))) - set(keep)
        assert max(r[i] for i in keep) <= min(r[i] for i in dropped)
