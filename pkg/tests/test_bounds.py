import random

import pytest

from stvmargin import (CandidateOrder, brute_force_mov, brute_force_distance_to, initial_upper_bound,
                       prefix_lower_bound, simple_stv_ub, upper_bound_manipulations, winner_elimination_ub)
from stvmargin.oracle import Exceeds
from stvmargin.search import verify_manipulation

from conftest import random_election

CEILINGS = {(0, 0): 26, (0, 1): 26, (1, 0): 10, (1, 1): 10, (1, 2): 10, (2, 0): 9,
           (3, 0): 15, (3, 1): 24, (3, 2): 24}


def test_example_a_upper_bounds(example_a):
    assert winner_elimination_ub(example_a) == 2
    assert simple_stv_ub(example_a) == 6
    assert initial_upper_bound(example_a) == 2


def test_example_b_upper_bounds(example_b):
    assert winner_elimination_ub(example_b) == 8
    assert simple_stv_ub(example_b) == 12
    assert initial_upper_bound(example_b) == 8


def test_literal_half_is_never_smaller(example_a, example_b):
    for e in (example_a, example_b):
        assert winner_elimination_ub(e, literal_half=True) >= winner_elimination_ub(e)


def test_prefix_rule_example(example_a):
    b = prefix_lower_bound(example_a, [(2, 0), (0, 1), (1, 1)])
    assert b.components == [5, 0, 11]
    assert b.lb == 11
    assert b.v_max == CEILINGS
    assert b.v_min == [26, 10, 9, 15]


def test_literal_gap_dominates(example_a):
    order = [(1, 0), (0, 1)]
    assert prefix_lower_bound(example_a, order, literal_gap=True).lb >= prefix_lower_bound(example_a, order).lb


def test_certified_manipulations_replay(example_a, example_b):
    for e in (example_a, example_b):
        ok = [m for m in upper_bound_manipulations(e) if verify_manipulation(e, m).changed]
        assert ok
        assert min(m.size for m in ok) == initial_upper_bound(e)


def _prefixes(e, rng, count):
    n = e.num_candidates
    for _ in range(count):
        perm = rng.sample(range(n), rng.randint(1, n))
        steps, elected = [], 0
        for c in perm:
            a = int(rng.random() < 0.5 and elected < e.seats)
            elected += a
            steps.append((c, a))
        yield CandidateOrder(tuple(steps))


def test_prefix_lower_bound_is_sound():
    rng = random.Random(11)
    checked = 0
    while checked < 60:
        e = random_election(rng, candidates=(3,), ballots=(5, 14))
        for order in _prefixes(e, rng, 2):
            d = brute_force_distance_to(e, order, k_max=2)
            if isinstance(d, Exceeds):
                continue
            assert prefix_lower_bound(e, order).lb <= d, (e, order)
            checked += 1


def test_certified_bounds_dominate_the_margin():
    rng = random.Random(5)
    for _ in range(40):
        e = random_election(rng, candidates=(3,), ballots=(5, 14))
        mov = brute_force_mov(e, k_max=2)
        for m in upper_bound_manipulations(e):
            if verify_manipulation(e, m).changed and not isinstance(mov, Exceeds):
                assert m.size >= mov
