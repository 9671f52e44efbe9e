from fractions import Fraction

from hypothesis import given, settings

from stvmargin import (Election, admits_order, apply_manipulation, outcome_changes, possible_outcomes,
                       run_count)
from stvmargin.count import CountState, highest_index

from conftest import elections


def test_example_a_trace(example_a):
    res = run_count(example_a)
    assert res.order.steps == ((0, 1), (1, 0), (2, 1))
    assert res.transfer_values == {1: Fraction(5, 6)}
    assert res.round_tallies == [
        {0: 26, 1: 10, 2: 9, 3: 15},
        {1: 10, 2: 14, 3: 15},
        {2: 24, 3: 15},
    ]
    assert res.elected == frozenset({0, 2})


def test_example_b_trace(example_b):
    res = run_count(example_b)
    assert res.transfer_values[1] == Fraction(9, 13)
    r2 = res.round_tallies[1]
    assert abs(float(r2[1]) - 20.46) < 0.01
    assert r2[2] == 5
    assert abs(float(r2[3]) - 15.54) < 0.01
    assert abs(float(res.round_tallies[2][1]) - 25.46) < 0.01


def test_surplus_with_few_transferable_votes_caps_at_one():
    e = Election.from_names(["a", "b", "c", "d"], {("a",): 9, ("a", "b"): 1, ("c",): 2, ("d",): 3}, 2)
    res = run_count(e)
    assert res.rounds[0].candidates == (0,)
    assert res.rounds[0].transfer_value == 1
    assert res.round_tallies[1][1] == 1


def test_last_seat_keeps_no_transfer_value():
    e = Election.from_names(["a", "b", "c"], {("a",): 9, ("a", "b"): 1, ("c",): 2}, 1)
    res = run_count(e)
    assert res.rounds[0].transfer_value is None


def test_exhausted_votes_counted():
    e = Election.from_names(["a", "b", "c", "d"],
                            {("a",): 5, ("b",): 4, ("c",): 3, ("d",): 2, ("d", "b"): 1}, 1)
    res = run_count(e)
    # c and d tie on 3; the lower index goes and its plumped votes exhaust
    assert res.rounds[0].candidates == (2,)
    assert res.exhausted_by_round[0] == 3


def test_forced_election():
    e = Election.from_names(["a", "b", "c"], {("a",): 3, ("b",): 2, ("c",): 2}, 2)
    res = run_count(e)
    assert res.rounds[-1].kind in ("forced", "elected")
    assert len(res.elected) == 2


def test_tie_policy_is_pluggable():
    e = Election.from_names(["a", "b", "c"], {("a",): 4, ("b",): 2, ("c",): 2}, 1)
    assert run_count(e).order.steps[0] == (1, 0)
    assert run_count(e, highest_index).order.steps[0] == (2, 0)


def test_tie_semantics():
    e = Election.from_names(["a", "b"], {("a",): 2, ("b",): 2}, 1)
    assert possible_outcomes(e) == {frozenset({0}), frozenset({1})}
    assert outcome_changes(e, e.profile, {0}, "any")
    # the lowest-index rule eliminates a
    assert outcome_changes(e, e.profile, {0}, "policy")
    assert not outcome_changes(e, e.profile, {1}, "policy")
    assert not outcome_changes(e, e.profile, {0}, "defender")


def test_admits_order(example_a):
    assert admits_order(example_a, [(0, 1), (1, 0), (2, 1)])
    assert admits_order(example_a, [(0, 1)])
    assert not admits_order(example_a, [(3, 1)])
    assert not admits_order(example_a, [(0, 1), (2, 0)])


def test_apply_manipulation(example_a):
    prof = apply_manipulation(example_a.profile, {(0,): 2}, {(3,): 2})
    assert prof[(0,)] == 18 and prof[(3,)] == 2 and prof.total == example_a.total


@given(elections(max_ballots=30))
@settings(max_examples=80, deadline=None)
def test_count_invariants(e):
    res = run_count(e)
    assert len(res.elected) == e.seats
    assert run_count(e) == res
    for rec in res.rounds:
        if rec.transfer_value is not None:
            assert 0 <= rec.transfer_value <= 1
        assert sum(rec.tallies.values()) <= e.total
    exh = res.exhausted_by_round
    assert all(a <= b for a, b in zip(exh, exh[1:]))
    assert res.elected in possible_outcomes(e)
    assert admits_order(e, res.order)


@given(elections(max_ballots=30))
@settings(max_examples=60, deadline=None)
def test_vote_conservation(e):
    st = CountState(e.profile, e.num_candidates, e.seats, e.quota)
    while True:
        kind, cands = st.next_action()
        if kind in ("done", "forced"):
            break
        st.elect(cands[0]) if kind == "elect" else st.eliminate(cands[0])
        assert st.conservation_gap() == 0


@given(elections(max_ballots=30))
@settings(max_examples=40, deadline=None)
def test_float_and_exact_agree(e):
    assert possible_outcomes(e, exact=False) == possible_outcomes(e)
