"""Cheap bounds on the margin: two upper bounds and a prefix lower-bound rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

from .count import CountResult, CountState, run_count
from .election import CandidateOrder, Election, Signature
from .routes import EXHAUSTED, RoundPlan


@dataclass(frozen=True)
class Manipulation:
    """A concrete ballot change: remove some rankings, add as many others."""

    removals: dict[Signature, int]
    additions: dict[Signature, int]
    origin: str = ""

    @property
    def size(self) -> int:
        return sum(self.additions.values())

    def to_json(self, names: Sequence[str] | None = None) -> dict:
        def fmt(sig):
            return [names[c] for c in sig] if names else list(sig)
        return {
            "size": self.size,
            "origin": self.origin,
            "removals": [{"ranking": fmt(s), "count": n} for s, n in sorted(self.removals.items())],
            "additions": [{"ranking": fmt(s), "count": n} for s, n in sorted(self.additions.items())],
        }


# ----------------------------------------------------------------------------
# winner elimination bound


@dataclass(frozen=True)
class EliminationCandidate:
    """One way of knocking out an eventual winner ``winner`` in round ``round``."""

    value: int
    round: int  # 1-based round number of the original count
    winner: int
    eliminated: int
    halved: bool


def winner_elimination_options(election: Election, result: CountResult,
                               literal_half: bool = False) -> list[EliminationCandidate]:
    winners = result.elected if election.winners is None else election.winners
    out = []
    for rec in result.rounds:
        if rec.kind != "eliminated":
            continue
        (cj,) = rec.candidates
        vj = rec.tallies[cj]
        for w in sorted(winners):
            if w not in rec.tallies:
                continue
            wj = rec.tallies[w]
            gap = wj - vj
            out.append(EliminationCandidate(math.ceil(gap), rec.number, w, cj, False))
            half = math.ceil(wj - vj / 2) if literal_half else math.ceil(gap / 2)
            others = [t for c, t in rec.tallies.items() if c not in (w, cj)]
            if all(wj - half <= t for t in others):
                out.append(EliminationCandidate(half, rec.number, w, cj, True))
    return sorted(out, key=lambda o: (o.value, o.round, o.winner, not o.halved))


def winner_elimination_ub(election: Election, result: CountResult | None = None,
                          literal_half: bool = False) -> int:
    """Cheapest way found to push an eventual winner out in some elimination round.

    ``literal_half`` swaps the halved step for ``ceil(w - v/2)``.
    """
    result = run_count(election) if result is None else result
    best = election.total
    for opt in winner_elimination_options(election, result, literal_half):
        best = min(best, opt.value)
    return best


def simple_stv_ub(election: Election) -> int:
    winners = election.winners
    if winners is None:
        winners = run_count(election).elected
    fp = election.primary_votes()
    vals = [max(0, election.quota - fp[c]) for c in range(election.num_candidates) if c not in winners]
    return min(vals)


def initial_upper_bound(election: Election, result: CountResult | None = None) -> int:
    result = run_count(election) if result is None else result
    return min(winner_elimination_ub(election, result), simple_stv_ub(election))


# ----------------------------------------------------------------------------
# constructing manipulations behind the upper bounds (checked by simulation elsewhere)


def _state_at(election: Election, result: CountResult, round_number: int) -> CountState:
    st = CountState(election.profile, election.num_candidates, election.seats, election.quota)
    for c, a in result.order.steps[:round_number - 1]:
        kind, _ = st.next_action()
        if kind == "forced":
            st.force(c)
        elif a:
            st.elect(c)
        else:
            st.eliminate(c)
    return st


def _take(parcels, k: int) -> dict[Signature, int] | None:
    """Pick ``k`` ballots, highest value first, as a removal map."""
    out: dict[Signature, int] = {}
    left = k
    for p in sorted(parcels, key=lambda p: (-p.value_per_vote, p.signature)):
        if left == 0:
            break
        n = min(left, p.count)
        out[p.signature] = out.get(p.signature, 0) + n
        left -= n
    return out if left == 0 else None


def upper_bound_manipulations(election: Election, result: CountResult | None = None,
                              limit: int | None = None) -> Iterator[Manipulation]:
    """Candidate manipulations realising the two upper bounds, smallest first.

    Nothing here is guaranteed to change the outcome; callers simulate.
    """
    result = run_count(election) if result is None else result
    winners = result.elected if election.winners is None else election.winners
    found: list[Manipulation] = []
    for opt in winner_elimination_options(election, result):
        if limit is not None and opt.value > limit:
            continue
        if opt.value == 0:
            found.append(Manipulation({}, {}, f"tie in round {opt.round}"))
            continue
        st = _state_at(election, result, opt.round)
        removals = _take(st.piles[opt.winner], opt.value)
        if removals is None:
            continue
        standing = sorted(st.standing - {opt.winner})
        targets = [opt.eliminated] + [c for c in standing if c != opt.eliminated and c not in winners]
        for t in targets:
            found.append(Manipulation(removals, {(t,): opt.value},
                                      f"winner elimination round {opt.round}"))
    fp = election.primary_votes()
    for c in range(election.num_candidates):
        if c in winners:
            continue
        need = max(0, election.quota - fp[c])
        if limit is not None and need > limit:
            continue
        pool = [(sig, n) for sig, n in election.profile.items() if sig[0] != c]
        # drain the biggest winners first so nobody else races ahead
        pool.sort(key=lambda x: (-(x[0][0] in winners), -fp[x[0][0]], x[0]))
        removals: dict[Signature, int] = {}
        left = need
        for sig, n in pool:
            if left == 0:
                break
            k = min(n, left)
            removals[sig] = k
            left -= k
        if left == 0:
            found.append(Manipulation(removals, {(c,): need} if need else {}, "simple"))
    found.sort(key=lambda m: m.size)
    yield from found


# ----------------------------------------------------------------------------
# prefix lower bound


def infer_possible_signatures(election: Election, order, group: bool = False
                              ) -> dict[tuple[int, int], set[Signature]]:
    """``{(candidate, round): rankings that may sit in that tally}``, rounds 0-based.

    Includes the round following the last step of ``order``.
    """
    plan = order if isinstance(order, RoundPlan) else RoundPlan(
        order, election.num_candidates, election.seats, group, tail=True)
    out: dict[tuple[int, int], set[Signature]] = {}
    for sig in election.profile:
        key = plan.route_key(sig)
        for level, positions in enumerate(plan.holders(key)):
            for pos in positions:
                if pos != EXHAUSTED:
                    out.setdefault((key[pos], level), set()).add(sig)
    return out


@dataclass
class LowerBoundBreakdown:
    v_max: dict[tuple[int, int], int]
    v_min: list[int]
    components: list[int]
    detail: list[dict] = field(default_factory=list)

    @property
    def lb(self) -> int:
        return max(self.components, default=0)


def prefix_lower_bound(election: Election, order, literal_gap: bool = False) -> LowerBoundBreakdown:
    """Closed-form lower bound on the cost of any count starting with ``order``.

    For an elimination step the fewest-votes condition needs the removed
    candidate's guaranteed votes to fall to another's ceiling. One changed
    ballot can move both sides, so the gap is halved; ``literal_gap`` keeps
    the unhalved gap.
    """
    plan = RoundPlan(order, election.num_candidates, election.seats)
    q = election.quota
    vmin = election.primary_votes()
    poss = infer_possible_signatures(election, plan)
    profile = election.profile
    vmax = {(c, j): sum(profile[s] for s in sigs) for (c, j), sigs in poss.items()}
    comps, detail = [], []
    for j, rnd in enumerate(plan.rounds):
        c = rnd.candidate

        def vm(k):
            return vmax.get((k, j), 0)

        if rnd.kind == "elect":
            lq = max(0, q - vm(c))
            comps.append(lq)
            detail.append({"round": j + 1, "candidate": c, "action": 1, "quota_shortfall": lq})
        else:
            gaps = [vmin[c] - vm(k) for k in rnd.standing if k != c]
            if literal_gap:
                le1 = max([0] + gaps)
            else:
                le1 = max([0] + [math.ceil(g / 2) for g in gaps])
            le2 = max([0] + [vmin[k] - q for k in rnd.standing])
            comps.append(max(le1, le2))
            detail.append({"round": j + 1, "candidate": c, "action": 0, "lowest_gap": le1, "over_quota": le2})
    return LowerBoundBreakdown(vmax, vmin, comps, detail)
