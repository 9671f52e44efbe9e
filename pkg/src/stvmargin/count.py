"""Inclusive Gregory STV counting with exact rational arithmetic."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .election import (ELECTED, ELIMINATED, CandidateOrder, Election, ElectionError,
                       Profile, Signature)

FLOAT_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class Parcel:
    signature: Signature
    count: int
    value_per_vote: Fraction | float
    position: int = 0  # index of the holding candidate within ``signature``

    @property
    def value(self):
        return self.count * self.value_per_vote


TieBreak = Callable[[list[int], str], int]


def lowest_index(tied: list[int], kind: str) -> int:
    return min(tied)


def highest_index(tied: list[int], kind: str) -> int:
    return max(tied)


class CountState:
    """Mutable state of a count in progress.

    With ``exact=False`` values are floats and comparisons use a small
    tolerance; this is only used by the brute-force search, which re-checks
    anything it reports with exact arithmetic.
    """

    def __init__(self, profile: Profile, num_candidates: int, seats: int, quota: int,
                 exact: bool = True):
        self.exact = exact
        self.tol = 0 if exact else FLOAT_TOL
        one = Fraction(1) if exact else 1.0
        self.zero = one - one
        self.quota = quota
        self.total = profile.total
        self.num_candidates = num_candidates
        self.round = 1
        self.standing: set[int] = set(range(num_candidates))
        self.seats_remaining = seats
        self.piles: dict[int, list[Parcel]] = {c: [] for c in range(num_candidates)}
        self.tallies: dict[int, Fraction | float] = {c: self.zero for c in range(num_candidates)}
        for sig, n in profile.items():
            self.piles[sig[0]].append(Parcel(sig, n, one, 0))
            self.tallies[sig[0]] += n
        self.retained: dict[int, Fraction | float] = {}
        self.exhausted = self.zero
        self.order: list[tuple[int, int]] = []
        self.last_transfer_value = None

    def clone(self) -> "CountState":
        other = object.__new__(CountState)
        other.__dict__.update(self.__dict__)
        other.standing = set(self.standing)
        other.piles = {c: list(p) for c, p in self.piles.items()}
        other.tallies = dict(self.tallies)
        other.retained = dict(self.retained)
        other.order = list(self.order)
        return other

    # -- queries ------------------------------------------------------------
    def at_quota(self, c: int) -> bool:
        return self.tallies[c] >= self.quota - self.tol

    @property
    def surpluses(self) -> list[int]:
        """Standing candidates at or above quota, largest surplus first."""
        hits = [c for c in self.standing if self.at_quota(c)]
        return sorted(hits, key=lambda c: (-self.tallies[c], c))

    @property
    def done(self) -> bool:
        return self.seats_remaining == 0

    def next_action(self) -> tuple[str, list[int]]:
        """What the rules require next: ``("done"|"forced"|"elect"|"eliminate", candidates)``.

        For elect/eliminate the list holds every candidate tied for the choice.
        """
        if self.seats_remaining == 0:
            return "done", []
        if len(self.standing) <= self.seats_remaining:
            return "forced", sorted(self.standing)
        t = self.tallies
        hits = [c for c in self.standing if t[c] >= self.quota - self.tol]
        if hits:
            best = max(t[c] for c in hits)
            return "elect", sorted(c for c in hits if t[c] >= best - self.tol)
        low = min(t[c] for c in self.standing)
        return "eliminate", sorted(c for c in self.standing if t[c] <= low + self.tol)

    # -- transitions --------------------------------------------------------
    def _move(self, parcels: list[Parcel], eligible: set[int], factor) -> tuple:
        """Send parcels to their next eligible preference; return (moved value, transferable value)."""
        moved = self.zero
        transferable = self.zero
        piles, tallies = self.piles, self.tallies
        for p in parcels:
            sig = p.signature
            for pos in range(p.position + 1, len(sig)):
                nxt = sig[pos]
                if nxt in eligible:
                    transferable += p.count * p.value_per_vote
                    v = p.value_per_vote * factor if factor is not None else p.value_per_vote
                    piles[nxt].append(Parcel(sig, p.count, v, pos))
                    add = p.count * v
                    tallies[nxt] += add
                    moved += add
                    break
        return moved, transferable

    def _transferable(self, parcels: list[Parcel], eligible: set[int]):
        total = self.zero
        for p in parcels:
            sig = p.signature
            for pos in range(p.position + 1, len(sig)):
                if sig[pos] in eligible:
                    total += p.count * p.value_per_vote
                    break
        return total

    def elect(self, c: int):
        """Elect ``c`` (must be at quota) and distribute its surplus. Returns τ or None."""
        if c not in self.standing:
            raise ElectionError(f"candidate {c} is not standing")
        tally = self.tallies[c]
        skip = {k for k in self.standing if self.at_quota(k)}
        self.standing.discard(c)
        self.seats_remaining -= 1
        self.order.append((c, ELECTED))
        self.round += 1
        parcels, self.piles[c] = self.piles[c], []
        self.retained[c] = Fraction(self.quota) if self.exact else float(self.quota)
        self.last_transfer_value = None
        if self.seats_remaining == 0:
            self.exhausted += tally - self.quota
            return None
        eligible = self.standing - skip
        surplus = tally - self.quota
        rho = self._transferable(parcels, eligible)
        if rho > surplus:
            tau = surplus / rho
        else:
            tau = Fraction(1) if self.exact else 1.0
        moved, _ = self._move(parcels, eligible, tau)
        self.exhausted += surplus - moved
        self.last_transfer_value = tau
        return tau

    def eliminate(self, c: int) -> None:
        if c not in self.standing:
            raise ElectionError(f"candidate {c} is not standing")
        skip = {k for k in self.standing if self.at_quota(k)}
        self.standing.discard(c)
        self.order.append((c, ELIMINATED))
        self.round += 1
        parcels, self.piles[c] = self.piles[c], []
        moved, _ = self._move(parcels, self.standing - skip, None)
        self.exhausted += self.tallies[c] - moved
        self.tallies[c] = self.zero
        self.last_transfer_value = None

    def force(self, c: int) -> None:
        """Seat ``c`` because standing candidates equal unfilled seats."""
        if c not in self.standing:
            raise ElectionError(f"candidate {c} is not standing")
        self.standing.discard(c)
        self.seats_remaining -= 1
        self.order.append((c, ELECTED))
        self.retained[c] = self.tallies[c]
        self.piles[c] = []

    def conservation_gap(self):
        """Total minus everything accounted for; zero in exact mode."""
        held = sum((self.tallies[c] for c in self.standing), self.zero)
        return self.total - held - sum(self.retained.values(), self.zero) - self.exhausted


@dataclass(frozen=True)
class RoundRecord:
    number: int
    tallies: dict[int, Fraction]
    kind: str  # "elected", "eliminated" or "forced"
    candidates: tuple[int, ...]
    transfer_value: Fraction | None
    exhausted: Fraction


@dataclass(frozen=True)
class CountResult:
    order: CandidateOrder
    rounds: tuple[RoundRecord, ...]
    elected: frozenset[int]
    quota: int
    tie_policy: str = "lowest_index"

    @property
    def round_tallies(self) -> list[dict[int, Fraction]]:
        return [r.tallies for r in self.rounds]

    @property
    def transfer_values(self) -> dict[int, Fraction]:
        return {r.number: r.transfer_value for r in self.rounds if r.transfer_value is not None}

    @property
    def exhausted_by_round(self) -> list[Fraction]:
        return [r.exhausted for r in self.rounds]


def run_count(election: Election, tie_break: TieBreak = lowest_index,
              profile: Profile | None = None) -> CountResult:
    """Count ``election`` (or ``profile`` under the election's seats and quota)."""
    profile = election.profile if profile is None else profile
    st = CountState(profile, election.num_candidates, election.seats, election.quota)
    rounds = []
    while True:
        kind, cands = st.next_action()
        if kind == "done":
            break
        snapshot = {c: st.tallies[c] for c in sorted(st.standing)}
        number = st.round
        if kind == "forced":
            forced = sorted(cands, key=lambda c: (-st.tallies[c], c))
            for c in forced:
                st.force(c)
            rounds.append(RoundRecord(number, snapshot, "forced", tuple(forced), None, st.exhausted))
            break
        pick = cands[0] if len(cands) == 1 else tie_break(list(cands), kind)
        if pick not in cands:
            raise ElectionError(f"tie-break returned {pick}, not one of {cands}")
        if kind == "elect":
            tau = st.elect(pick)
            rounds.append(RoundRecord(number, snapshot, "elected", (pick,), tau, st.exhausted))
        else:
            st.eliminate(pick)
            rounds.append(RoundRecord(number, snapshot, "eliminated", (pick,), None, st.exhausted))
    elected = frozenset(c for c, a in st.order if a == ELECTED)
    return CountResult(CandidateOrder(tuple(st.order)), tuple(rounds), elected, election.quota,
                       getattr(tie_break, "__name__", repr(tie_break)))


def counted(election: Election, tie_break: TieBreak = lowest_index) -> tuple[Election, CountResult]:
    """Run the count and return the election with its winners recorded."""
    res = run_count(election, tie_break)
    return election.with_winners(res.elected), res


def apply_manipulation(profile: Profile, removals: Mapping[Sequence[int], int],
                       additions: Mapping[Sequence[int], int]) -> Profile:
    counts = dict(profile.counts)
    rem = sum(removals.values())
    add = sum(additions.values())
    if rem != add:
        raise ElectionError(f"unbalanced manipulation: {rem} removed, {add} added")
    for sig, n in removals.items():
        sig = tuple(sig)
        if n < 0 or counts.get(sig, 0) < n:
            raise ElectionError(f"cannot remove {n} ballots {list(sig)}: only {counts.get(sig, 0)} exist")
        counts[sig] = counts.get(sig, 0) - n
    for sig, n in additions.items():
        if n < 0:
            raise ElectionError("negative addition")
        sig = tuple(sig)
        counts[sig] = counts.get(sig, 0) + n
    return Profile(counts)


# ----------------------------------------------------------------------------
# tie-aware reachability


def _initial(election: Election, profile: Profile | None, exact: bool) -> CountState:
    profile = election.profile if profile is None else profile
    return CountState(profile, election.num_candidates, election.seats, election.quota, exact)


def possible_outcomes(election: Election, profile: Profile | None = None,
                      exact: bool = True) -> set[frozenset[int]]:
    """Every elected set reachable under some resolution of ties."""
    out: set[frozenset[int]] = set()
    stack = [_initial(election, profile, exact)]
    while stack:
        st = stack.pop()
        while True:
            kind, cands = st.next_action()
            if kind == "done":
                out.add(frozenset(c for c, a in st.order if a == ELECTED))
                break
            if kind == "forced":
                out.add(frozenset([c for c, a in st.order if a == ELECTED] + cands))
                break
            for alt in cands[1:]:
                branch = st.clone()
                branch.elect(alt) if kind == "elect" else branch.eliminate(alt)
                stack.append(branch)
            st.elect(cands[0]) if kind == "elect" else st.eliminate(cands[0])
    return out


def outcome_changes(election: Election, profile: Profile, winners: Iterable[int],
                    ties: str = "any", exact: bool = True,
                    tie_break: TieBreak = lowest_index) -> bool:
    """Does counting ``profile`` elect a set other than ``winners``?

    ``ties="any"``: some tie resolution changes the outcome (favourable to the
    manipulator). ``"policy"``: the engine's tie policy does. ``"defender"``:
    every resolution does.
    """
    winners = frozenset(winners)
    if ties == "policy":
        if exact:
            return run_count(election, tie_break, profile).elected != winners
        st = _initial(election, profile, exact)
        while True:
            kind, cands = st.next_action()
            if kind == "done":
                return frozenset(c for c, a in st.order if a == ELECTED) != winners
            if kind == "forced":
                return frozenset([c for c, a in st.order if a == ELECTED] + cands) != winners
            pick = cands[0] if len(cands) == 1 else tie_break(list(cands), kind)
            st.elect(pick) if kind == "elect" else st.eliminate(pick)
    outs = possible_outcomes(election, profile, exact)
    if ties == "any":
        return any(o != winners for o in outs)
    if ties == "defender":
        return winners not in outs
    raise ValueError(f"unknown tie semantics {ties!r}")


def admits_order(election: Election, order: CandidateOrder | Sequence[tuple[int, int]],
                 profile: Profile | None = None, exact: bool = True) -> bool:
    """Can some resolution of ties produce a count that starts with ``order``?

    Steps after all seats are filled are accepted if they eliminate standing
    candidates; forced seats must appear as elections.
    """
    steps = order.steps if isinstance(order, CandidateOrder) else order
    st = _initial(election, profile, exact)
    for c, a in steps:
        if c not in st.standing:
            return False
        kind, cands = st.next_action()
        if kind == "done":
            if a != ELIMINATED:
                return False
            st.standing.discard(c)
        elif kind == "forced":
            if a != ELECTED:
                return False
            st.force(c)
        elif kind == "elect":
            if a != ELECTED or c not in cands:
                return False
            st.elect(c)
        else:
            if a != ELIMINATED or c not in cands:
                return False
            st.eliminate(c)
    return True
