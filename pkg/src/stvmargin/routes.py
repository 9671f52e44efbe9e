"""Round planning and ballot routing for a fixed candidate order.

Given an order, a ballot's journey through the count is only partly known:
during a surplus transfer it may skip candidates that happen to be at quota.
This module works out, per ballot ranking, which candidates can ever hold it
and in which rounds, and collapses rankings that always behave the same into
one canonical key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .election import ELECTED, ELIMINATED, CandidateOrder, Signature

NEVER = 10 ** 9  # removal round of a candidate the plan never removes
EXHAUSTED = -1


@dataclass(frozen=True)
class Round:
    kind: str  # "elect" or "eliminate"
    members: tuple[int, ...]  # more than one member means a grouped elimination block
    standing: frozenset[int]
    seats_left: int

    @property
    def candidate(self) -> int:
        return self.members[0]

    @property
    def is_block(self) -> bool:
        return len(self.members) > 1


class RoundPlan:
    """The rounds of an order that constrain the count.

    Rounds after every seat is filled, and forced elections (standing equals
    unfilled seats), impose nothing and are left out. ``feasible`` is False
    when the order contradicts the counting rules outright, e.g. it eliminates
    a candidate who would have been seated automatically. ``tail`` adds a
    tally level for the state after the last round.
    """

    def __init__(self, order: CandidateOrder | Sequence[tuple[int, int]], num_candidates: int,
                 seats: int, group: bool = False, tail: bool = False):
        if not isinstance(order, CandidateOrder):
            order = CandidateOrder(tuple(order))
        order.validate(num_candidates, seats)
        self.order = order
        self.num_candidates = num_candidates
        self.seats = seats
        self.group = group
        self.feasible = True
        self.reason = ""
        self.forced: tuple[int, ...] = ()
        rounds: list[Round] = []
        standing = set(range(num_candidates))
        seats_left = seats
        steps = list(order.steps)
        i = 0
        while i < len(steps):
            c, a = steps[i]
            if seats_left == 0:
                break
            if len(standing) == seats_left:
                rest = steps[i:]
                if any(a2 != ELECTED for _, a2 in rest):
                    self.feasible = False
                    self.reason = "eliminates a candidate who must be seated"
                self.forced = tuple(c2 for c2, _ in rest)
                break
            if a == ELECTED:
                rounds.append(Round("elect", (c,), frozenset(standing), seats_left))
                standing.discard(c)
                seats_left -= 1
                i += 1
                continue
            block = [c]
            i += 1
            if group:
                while (i < len(steps) and steps[i][1] == ELIMINATED
                       and len(standing) - len(block) > seats_left):
                    block.append(steps[i][0])
                    i += 1
            rounds.append(Round("eliminate", tuple(block), frozenset(standing), seats_left))
            standing.difference_update(block)
        self.rounds = rounds
        self.after_standing = frozenset(standing)
        self.after_seats = seats_left
        self.complete = seats_left == 0 or len(standing) == seats_left
        self.removal: dict[int, int] = {}
        for j, r in enumerate(rounds):
            for c in r.members:
                self.removal[c] = j
        L = len(rounds)
        self.num_rounds = L
        # tally levels: one per round, plus the state after the last round
        # when a trailing block needs it (or the caller asks for it)
        self.levels = L + (1 if rounds and (tail or rounds[-1].is_block) else 0)
        self.transfers = [j + 1 < self.levels for j in range(L)]
        nxt = NEVER + 1
        self._next_elim = [NEVER + 1] * (L + 1)
        for j in range(L - 1, -1, -1):
            if rounds[j].kind == "eliminate":
                nxt = j
            self._next_elim[j] = nxt
        self.max_skips = [r.seats_left - 1 for r in rounds]

    # ------------------------------------------------------------------
    def removed_at(self, c: int) -> int:
        return self.removal.get(c, NEVER)

    def standing_at(self, level: int) -> frozenset[int]:
        if level < self.num_rounds:
            return self.rounds[level].standing
        return self.after_standing

    def can_quota(self, c: int, j: int) -> bool:
        """Could ``c`` be standing with a quota at the start of round ``j``?"""
        if j >= self.num_rounds or c not in self.rounds[j].standing:
            return False
        return self._next_elim[j] > self.removed_at(c)

    def skippable(self, c: int, j: int) -> bool:
        """May a surplus transfer in round ``j`` pass over ``c`` because it is at quota?"""
        r = self.rounds[j]
        return r.kind == "elect" and c != r.candidate and self.can_quota(c, j)

    # ------------------------------------------------------------------
    def _advance(self, states, x: int):
        """Consider candidate ``x`` from every (round, skips) state; return (alive, next states)."""
        rx = self.removed_at(x)
        alive = False
        nxt = set()
        for t, s in states:
            if rx <= t:
                nxt.add((t, s))
                continue
            alive = True
            if s < self.max_skips[t] and self.skippable(x, t):
                nxt.add((t, s + 1))
            if rx < NEVER and self.transfers[rx]:
                nxt.add((rx, 0))
        return alive, nxt

    def _start(self, first: int):
        r = self.removed_at(first)
        return {(r, 0)} if r < NEVER and self.transfers[r] else set()

    def route_key(self, sig: Sequence[int]) -> Signature:
        """Canonical form of ``sig``: preferences that can never matter are dropped."""
        key = [sig[0]]
        states = self._start(sig[0])
        for x in sig[1:]:
            if not states:
                break
            alive, states = self._advance(states, x)
            if alive:
                key.append(x)
        return tuple(key)

    def all_keys(self) -> list[Signature]:
        """Every canonical key, i.e. every distinct way a ballot can behave."""
        out: list[Signature] = []

        def grow(key, states):
            out.append(tuple(key))
            if not states:
                return
            for x in range(self.num_candidates):
                if x in key:
                    continue
                alive, nxt = self._advance(states, x)
                if alive:
                    key.append(x)
                    grow(key, nxt)
                    key.pop()

        for c in range(self.num_candidates):
            grow([c], self._start(c))
        return out

    # ------------------------------------------------------------------
    def chain(self, key: Signature, pos: int, j: int) -> tuple[list[int], bool]:
        """Possible recipients when the holder at ``key[pos]`` is removed in round ``j``.

        Returns ``(positions, may_exhaust)``. For eliminations the list has at
        most one entry. For elections entry ``t`` receives the ballot when
        entries before it are at quota and it is not.
        """
        r = self.rounds[j]
        later = [p for p in range(pos + 1, len(key)) if self.removed_at(key[p]) > j]
        if r.kind == "eliminate":
            return later[:1], not later
        chain = []
        for p in later:
            chain.append(p)
            if not self.skippable(key[p], j) or len(chain) > self.max_skips[j]:
                return chain, False
        return chain, True

    def holders(self, key: Signature) -> list[set[int]]:
        """Possible holding positions of a ballot with this key at each tally level.

        Positions index into ``key``; ``EXHAUSTED`` marks an exhausted ballot.
        """
        cur = {0}
        out = [set(cur)]
        for j in range(self.levels - 1):
            nxt = set()
            for h in cur:
                if h == EXHAUSTED or self.removed_at(key[h]) != j:
                    nxt.add(h)
                    continue
                chain, may_exhaust = self.chain(key, h, j)
                nxt.update(chain)
                if may_exhaust:
                    nxt.add(EXHAUSTED)
            cur = nxt
            out.append(set(cur))
        return out


def group_eliminations(order: CandidateOrder | Iterable[tuple[int, int]]) -> list[tuple[tuple[int, ...], int]]:
    """Collapse runs of consecutive eliminations into blocks.

    Returns ``[(members, action), ...]``. This is the structural rewrite only;
    :class:`RoundPlan` with ``group=True`` also respects seat limits.
    """
    steps = order.steps if isinstance(order, CandidateOrder) else tuple(order)
    out: list[tuple[tuple[int, ...], int]] = []
    for c, a in steps:
        if a == ELIMINATED and out and out[-1][1] == ELIMINATED:
            out[-1] = (out[-1][0] + (c,), ELIMINATED)
        else:
            out.append(((c,), a))
    return out

