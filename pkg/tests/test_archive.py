import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import SMALL, brute_fronts
from nesr.evolution import Archive, FitnessVector, select_final, update_archive
from nesr.topology import Subtopology


def member(rmse, cv, links, units=1, uid=0):
    s = Subtopology(SMALL)
    s.fitness = FitnessVector(rmse, cv, links, units, 0.0, cv)
    s.uid = uid
    return s


def test_select_final_examples():
    a, b, c = member(0.1, 0.1, 20, uid=1), member(0.2, 0.2, 5, uid=2), member(0.3, 0.3, 4, uid=3)
    assert select_final([a, b, c]).uid == 2
    assert select_final([a]).uid == 1
    same = [member(0.1, 0.1, n, uid=n) for n in (9, 3, 7)]
    assert select_final(same).uid == 3
    ties = [member(0.1, 0.1, 3, units=u, uid=u) for u in (4, 2)]
    assert select_final(ties).uid == 2
    with pytest.raises(ValueError):
        select_final([])


def test_archive_update_examples():
    arc = Archive([member(0.1, 0.1, 5, uid=1), member(0.2, 0.0, 3, uid=2)])
    update_archive(arc, [member(0.3, 0.3, 9, uid=3)])
    assert sorted(s.uid for s in arc) == [1, 2]
    update_archive(arc, [member(0.0, 0.0, 1, uid=4), member(0.0, 0.5, 0, uid=5)])
    assert sorted(s.uid for s in arc) == [4, 5]


def test_archive_members_are_snapshots():
    s = member(0.1, 0.1, 5)
    arc = Archive([s])
    s.weights[0] = 3.0
    assert arc.members[0].weights[0] == 0.0


def test_archive_tie_keeps_less_complex():
    arc = Archive([member(0.1, 0.1, 5, units=4, uid=1)], objectives="mem")
    arc.update([member(0.1, 0.1, 2, units=2, uid=2)])
    assert [s.uid for s in arc] == [2]
    with pytest.raises(ValueError):
        Archive(objectives="both")


objs = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 6)), min_size=1, max_size=25)


@given(objs, st.integers(1, 5))
def test_interleaved_updates_equal_bulk(rows, chunks):
    pop = [member(r / 3, c / 3, n, uid=i) for i, (r, c, n) in enumerate(rows)]
    step = max(1, len(pop) // chunks)
    arc = Archive()
    for k in range(0, len(pop), step):
        arc.update(pop[k:k + step])
    pts = [s.fitness.pop_objectives for s in pop]
    expected = {pts[i] for i in brute_fronts(pts)[0]}
    assert {s.fitness.pop_objectives for s in arc} == expected
    assert len(arc) == len(expected)
    bulk = Archive(pop)
    assert sorted(s.fitness.pop_objectives for s in arc) == sorted(s.fitness.pop_objectives for s in bulk)


def test_mem_objective_archive():
    a = member(0.1, 0.2, 50)
    b = member(0.1, 0.2, 5)
    b.fitness = FitnessVector(0.1, 0.2, 5, 1, 0.5, 0.2)  # worse singularity loss
    arc = Archive([a, b], objectives="mem")
    assert len(arc) == 1 and arc.members[0].fitness.n_active_links == 50
    # under population objectives the smaller network dominates instead
    assert [s.fitness.n_active_links for s in Archive([a, b])] == [5]
