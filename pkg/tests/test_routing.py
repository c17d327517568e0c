"""Exact pair routing on a line and its binary-program constraints."""
import pytest

from qcmoments.routing import (
    Schedule, check_constraints, exhaustive_min_depth, route_pairs,
)


def assert_valid(schedule, pairs, n_qubits):
    assert check_constraints(schedule, pairs, n_qubits)
    # every pair interacts exactly once, at adjacent positions, tracked
    # through the swap schedule
    pos = {c: sorted(p) for c, p in enumerate(pairs)}
    interacted = set()
    for step in schedule.steps:
        for (i, j) in step.swaps:
            assert j == i + 1
        for c, (i, j) in step.interactions:
            assert j == i + 1
            assert sorted(pos[c]) == [i, j]
            assert c not in interacted
            interacted.add(c)
        for c, p in pos.items():
            if c in interacted:
                continue
            for (i, j) in step.swaps:
                for t in (0, 1):
                    if p[t] == i:
                        p[t] = j
                    elif p[t] == j:
                        p[t] = i
    assert interacted == set(range(len(pairs)))


def test_adjacent_pairs_need_one_step():
    sched = route_pairs([(0, 1), (4, 5)], 6)
    assert sched.depth == 1 and not sched.steps[0].swaps
    assert len(sched.steps[0].interactions) == 2
    assert_valid(sched, [(0, 1), (4, 5)], 6)


def test_crossed_pairs_on_four_qubits():
    pairs = [(0, 3), (1, 2)]
    sched = route_pairs(pairs, 4)
    # the inner pair blocks the outer one; brute force certifies depth 3
    assert exhaustive_min_depth(pairs, 4, 4) == 3
    assert sched.depth == 3
    assert_valid(sched, pairs, 4)


def test_nested_pairs_on_six_qubits():
    pairs = [(0, 5), (1, 4), (2, 3)]
    sched = route_pairs(pairs, 6)
    assert sched.depth == exhaustive_min_depth(pairs, 6, 6) == 4
    assert_valid(sched, pairs, 6)


@pytest.mark.parametrize("pairs,n", [
    ([(0, 7)], 8),
    ([(0, 2), (5, 7)], 8),
    ([(1, 6), (2, 5)], 8),
    ([(0, 4), (1, 5)], 6),
    ([(2, 3)], 4),
])
def test_solver_matches_exhaustive_optimum(pairs, n):
    sched = route_pairs(pairs, n)
    assert sched.certified
    assert sched.depth == exhaustive_min_depth(pairs, n, 8)
    assert_valid(sched, pairs, n)


def test_infeasible_at_max_depth():
    with pytest.raises(ValueError, match="max_depth"):
        route_pairs([(0, 7)], 8, max_depth=2)


def test_validation():
    with pytest.raises(ValueError):
        route_pairs([(0, 0)], 4)
    with pytest.raises(ValueError):
        route_pairs([(0, 4)], 4)
    with pytest.raises(ValueError):
        route_pairs([(0, 1), (1, 2)], 4)


def test_empty_input():
    sched = route_pairs([], 4)
    assert sched.depth == 0 and sched.certified


def test_greedy_fallback_above_threshold():
    pairs = [(0, 9), (1, 8), (2, 7), (3, 6), (4, 5)]
    sched = route_pairs(pairs, 10)
    assert not sched.certified
    assert_valid(sched, pairs, 10)


def test_schedule_json_roundtrip():
    sched = route_pairs([(0, 3), (1, 2)], 4)
    back = Schedule.from_json(sched.to_json())
    assert back.depth == sched.depth and back.certified == sched.certified
    assert [s.swaps for s in back.steps] == [s.swaps for s in sched.steps]
    assert [s.interactions for s in back.steps] == \
        [s.interactions for s in sched.steps]
