"""Exhaustive search for the smallest manipulation, for tiny elections only.

A manipulation of size k removes k ballots and adds k ballots with any
rankings. The search tries k = 0, 1, 2, ... over multisets of rankings,
counting with floats first and confirming hits with exact arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

from .bounds import Manipulation
from .count import admits_order, apply_manipulation, outcome_changes, run_count
from .election import CandidateOrder, Election, ElectionError, Profile, Signature

MAX_CANDIDATES = 5
MAX_BALLOTS = 60
MAX_K = 3


class OracleLimitError(ElectionError):
    """The instance is too large for exhaustive search (pass ``force=True`` to insist)."""


@dataclass(frozen=True)
class Exceeds:
    """No manipulation of size up to ``k`` works."""

    k: int

    def __str__(self) -> str:
        return f">{self.k}"


@dataclass(frozen=True)
class ManipulationDelta:
    removals: dict[Signature, int]
    additions: dict[Signature, int]

    def __post_init__(self):
        if sum(self.removals.values()) != sum(self.additions.values()):
            raise ElectionError("removals and additions must balance")

    @property
    def size(self) -> int:
        return sum(self.additions.values())

    def apply(self, profile: Profile) -> Profile:
        return apply_manipulation(profile, self.removals, self.additions)

    def as_manipulation(self, origin: str = "oracle") -> Manipulation:
        return Manipulation(dict(self.removals), dict(self.additions), origin)


def all_rankings(num_candidates: int) -> list[Signature]:
    """Every non-empty partial or complete ranking, shortest first."""
    out: list[Signature] = []
    for length in range(1, num_candidates + 1):
        out.extend(itertools.permutations(range(num_candidates), length))
    return out


def check_size(election: Election, k_max: int, force: bool = False) -> None:
    if force:
        return
    problems = []
    if election.num_candidates > MAX_CANDIDATES:
        problems.append(f"{election.num_candidates} candidates (limit {MAX_CANDIDATES})")
    if election.total > MAX_BALLOTS:
        problems.append(f"{election.total} ballots (limit {MAX_BALLOTS})")
    if k_max > MAX_K:
        problems.append(f"k_max {k_max} (limit {MAX_K})")
    if problems:
        raise OracleLimitError("too large for brute force: " + ", ".join(problems))


def _multisets(items: Sequence, k: int, caps: Sequence[int] | None = None) -> Iterator[dict]:
    for combo in itertools.combinations_with_replacement(range(len(items)), k):
        counts: dict = {}
        for i in combo:
            counts[i] = counts.get(i, 0) + 1
        if caps is not None and any(n > caps[i] for i, n in counts.items()):
            continue
        yield {items[i]: n for i, n in counts.items()}


def deltas(election: Election, k: int, rankings: Sequence[Signature] | None = None
           ) -> Iterator[ManipulationDelta]:
    """Every size-``k`` change, skipping those that remove and add the same ranking."""
    if k == 0:
        yield ManipulationDelta({}, {})
        return
    rankings = all_rankings(election.num_candidates) if rankings is None else rankings
    present = sorted(election.profile)
    caps = [election.profile[s] for s in present]
    for removals in _multisets(present, k, caps):
        pool = [r for r in rankings if r not in removals]
        for additions in _multisets(pool, k):
            yield ManipulationDelta(removals, additions)


def _search(election: Election, k_max: int, hit: Callable[[Profile, bool], bool]
            ) -> tuple[int, ManipulationDelta] | None:
    rankings = all_rankings(election.num_candidates)
    for k in range(k_max + 1):
        for delta in deltas(election, k, rankings):
            profile = delta.apply(election.profile)
            if hit(profile, False) and hit(profile, True):
                return k, delta
    return None


def find_mov_manipulation(election: Election, k_max: int, ties: str = "any", force: bool = False
                          ) -> tuple[int, ManipulationDelta] | None:
    """Smallest outcome-changing manipulation up to size ``k_max``, or None."""
    check_size(election, k_max, force)
    winners = election.winners
    if winners is None:
        winners = run_count(election).elected
    return _search(election, k_max,
                   lambda prof, exact: outcome_changes(election, prof, winners, ties, exact=exact))


def brute_force_mov(election: Election, k_max: int = 2, ties: str = "any", force: bool = False
                    ) -> int | Exceeds:
    """Exact margin of victory if it is at most ``k_max``.

    ``ties``: ``"any"`` counts an outcome reachable through some tie
    resolution, ``"policy"`` uses the engine's tie rule, ``"defender"``
    requires every resolution to change the outcome.
    """
    found = find_mov_manipulation(election, k_max, ties, force)
    return Exceeds(k_max) if found is None else found[0]


def _starts_with(election: Election, order: CandidateOrder, ties: str):
    if ties == "any":
        return lambda prof, exact: admits_order(election, order, prof, exact)
    if ties != "policy":
        raise ValueError("distance ties must be 'any' or 'policy'")

    def check(prof, exact):
        if not exact:
            return True  # the policy count is cheap enough to run exactly once
        return _same_until_full(run_count(election, profile=prof).order, order, election.seats)
    return check


def _same_until_full(realized: CandidateOrder, order: CandidateOrder, seats: int) -> bool:
    """Does the realized count match ``order`` up to eliminations after the seats fill?"""
    filled = 0
    for i, (c, a) in enumerate(order.steps):
        if filled == seats:
            rest = set(c2 for c2, _ in order.steps[i:])
            return all(a2 == 0 for _, a2 in order.steps[i:]) and rest <= set(c2 for c2, _ in realized.steps[i:])
        if i >= len(realized.steps) or realized.steps[i] != (c, a):
            return False
        filled += a
    return True


def find_distance_manipulation(election: Election, order, k_max: int, ties: str = "any",
                               force: bool = False) -> tuple[int, ManipulationDelta] | None:
    check_size(election, k_max, force)
    if not isinstance(order, CandidateOrder):
        order = CandidateOrder(tuple(order))
    order.validate(election.num_candidates, election.seats)
    return _search(election, k_max, _starts_with(election, order, ties))


def brute_force_distance_to(election: Election, order, k_max: int = 2, ties: str = "any",
                            force: bool = False) -> int | Exceeds:
    """Fewest changes after which the count can start with ``order``."""
    found = find_distance_manipulation(election, order, k_max, ties, force)
    return Exceeds(k_max) if found is None else found[0]
