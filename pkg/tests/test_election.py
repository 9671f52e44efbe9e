import pytest
from hypothesis import given, settings

from stvmargin import (CandidateOrder, Election, ElectionError, ParseError, Profile,
                       UnsupportedFormatError, droop_quota, load_election, parse_preflib,
                       parse_profile, serialize)

from conftest import elections


QUOTAS = [
    ((43942, 4), 8789), ((29988, 3), 7498), ((64081, 5), 10681), ((9567, 4), 1914),
    ((8654, 3), 2164), ((103479, 2), 34494), ((246742, 2), 82248), ((60, 2), 21),
]


@pytest.mark.parametrize("args,quota", QUOTAS)
def test_droop_quota(args, quota):
    assert droop_quota(*args) == quota


def test_example_a_basics(example_a):
    assert example_a.total == 60
    assert example_a.quota == 21
    assert example_a.names == ["c1", "c2", "c3", "c4"]
    assert example_a.primary_votes() == [26, 10, 9, 15]


def test_round_trip(example_a):
    again = parse_profile(serialize(example_a))
    assert again.profile == example_a.profile
    assert again.seats == example_a.seats and again.quota == example_a.quota


def test_explicit_quota_survives_round_trip(example_a):
    e = parse_profile(serialize(example_a), quota=19)
    assert e.quota == 19
    assert parse_profile(serialize(e)).quota == 19


@given(elections())
@settings(max_examples=40, deadline=None)
def test_round_trip_property(e):
    again = parse_profile(serialize(e))
    assert again.profile == e.profile and again.names == e.names


def test_duplicate_rankings_merge():
    e = parse_profile("seats: 1\ncandidates: a, b\n2: a\n3: a\n1: b, a\n")
    assert e.profile[(0,)] == 5
    assert e.total == 6


def test_seat_override():
    e = parse_profile("seats: 1\ncandidates: a, b, c\n1: a\n", seats=2)
    assert e.seats == 2


@pytest.mark.parametrize("text,line", [
    ("seats: 1\ncandidates: a, b\n2: a, z\n", 3),
    ("seats: 1\ncandidates: a, b\n2: a, a\n", 3),
    ("seats: 1\ncandidates: a, b\n0: a\n", 3),
    ("seats: 1\ncandidates: a, b\nbogus\n", 3),
    ("1: a\n", 1),
    ("seats: x\ncandidates: a, b\n", 1),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_profile(text)
    assert info.value.line == line


def test_bad_seat_count():
    with pytest.raises(ParseError):
        parse_profile("seats: 2\ncandidates: a, b\n1: a\n")
    with pytest.raises(ParseError):
        parse_profile("candidates: a, b\n")


def test_election_validation():
    with pytest.raises(ElectionError):
        Election.from_names(["a", "b"], {("a", "q"): 1}, 1)
    with pytest.raises(ElectionError):
        Election.from_names(["a", "a"], {("a",): 1}, 1)
    e = Election.from_names(["a", "b", "c"], {("a",): 2}, 1)
    with pytest.raises(ElectionError):
        e.with_winners([0, 1])


def test_profile_rejects_bad_signatures():
    with pytest.raises(ElectionError):
        Profile({(0, 0): 1})
    with pytest.raises(ElectionError):
        Profile({(0,): -1})


MODERN = """# FILE NAME: x.soi
# DATA TYPE: soi
# NUMBER ALTERNATIVES: 3
# ALTERNATIVE NAME 1: Ann
# ALTERNATIVE NAME 2: Bob
# ALTERNATIVE NAME 3: Cat
4: 1,2
3: 3
2: 2,3,1
"""

LEGACY = """3
1,Ann
2,Bob
3,Cat
9,9,3
4,1,2
3,3
2,2,3,1
"""


@pytest.mark.parametrize("text", [MODERN, LEGACY])
def test_preflib(text):
    e = parse_preflib(text, seats=1)
    assert e.names == ["Ann", "Bob", "Cat"]
    assert e.profile[(0, 1)] == 4 and e.profile[(2,)] == 3 and e.profile[(1, 2, 0)] == 2


def test_preflib_ties_rejected():
    with pytest.raises(UnsupportedFormatError):
        parse_preflib(MODERN + "1: {1,2},3\n", seats=1)


def test_load_preflib_needs_seats(tmp_path):
    path = tmp_path / "e.soi"
    path.write_text(MODERN)
    with pytest.raises(ElectionError):
        load_election(str(path))
    assert load_election(str(path), seats=2).seats == 2


def test_candidate_order():
    o = CandidateOrder(((0, 1), (2, 0)))
    assert o.elected == (0,) and o.eliminated == (2,)
    assert o.extend(1, 1).steps[-1] == (1, 1)
    assert o.standing_before(1, 4) == frozenset({1, 2, 3})
    with pytest.raises(ElectionError):
        CandidateOrder(((0, 1), (0, 0)))
    with pytest.raises(ElectionError):
        CandidateOrder(((0, 1), (1, 1), (2, 1))).validate(4, 2)
