"""Best-first branch and bound over candidate orders for the margin of victory.

Every partial order gets a lower bound on the ballot changes needed to make
the count start with it. Orders are expanded cheapest first, complete orders
that elect a different set tighten the upper bound, and anything whose bound
reaches the upper bound is dropped.

Only manipulations that have been replayed through the count ever lower the
reported upper bound. In relaxed modes a separate, possibly smaller, search
bound drives pruning and becomes the reported lower bound.
"""

from __future__ import annotations

import heapq
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .bounds import Manipulation, prefix_lower_bound, simple_stv_ub, upper_bound_manipulations, \
    winner_elimination_ub
from .count import CountResult, apply_manipulation, outcome_changes, run_count
from .distance import DEFAULT_EPS, MODES, DistanceResult, distance_to
from .election import ELECTED, ELIMINATED, CandidateOrder, Election, ElectionError
from .milp import DEFAULT_BACKEND, Limits, Status


@dataclass
class SearchConfig:
    mode: str = "exact"
    K: int = 5
    use_rule_lb: bool = True
    nf: int = 1
    fix_rounds: int = 0
    wall_limit: float | None = None  # whole search
    stall_limit: float | None = None  # each model solve
    backend: str = DEFAULT_BACKEND
    group: bool = False
    ties: str = "any"
    eps: Fraction = DEFAULT_EPS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.nf < 1:
            raise ValueError("nf must be at least 1")
        if self.fix_rounds < 0:
            raise ValueError("fix_rounds must be non-negative")
        if self.ties not in ("any", "policy", "defender"):
            raise ValueError(f"unknown tie semantics {self.ties!r}")

    def to_json(self) -> dict:
        return {
            "mode": self.mode, "K": self.K if self.mode == "piecewise" else None,
            "use_rule_lb": self.use_rule_lb, "nf": self.nf, "fix_rounds": self.fix_rounds,
            "wall_limit": self.wall_limit, "stall_limit": self.stall_limit, "backend": self.backend,
            "group": self.group, "ties": self.ties, "eps": str(self.eps),
        }


@dataclass(order=True)
class FrontierEntry:
    lb: float
    size: int
    steps: tuple[tuple[int, int], ...]

    @property
    def order(self) -> CandidateOrder:
        return CandidateOrder(self.steps)


@dataclass
class SearchStats:
    models_solved: int = 0
    rule_pruned: int = 0
    nodes_expanded: int = 0
    invalid: int = 0
    wall_time: float = 0.0


@dataclass
class MarginResult:
    lower_bound: float
    upper_bound: int
    exact: bool
    certificate: Manipulation | None
    conditional: bool = False
    status: str = "complete"  # or "wall_limit"
    initial: dict = field(default_factory=dict)
    stats: SearchStats = field(default_factory=SearchStats)
    history: list[dict] = field(default_factory=list)
    evaluations: list[dict] = field(default_factory=list)
    frontier: list[FrontierEntry] = field(default_factory=list)
    blocked: list[FrontierEntry] = field(default_factory=list)

    @property
    def mov(self) -> int | None:
        return self.upper_bound if self.exact else None


@dataclass
class Verification:
    order: CandidateOrder
    elected: frozenset[int]
    changed: bool
    certified_ub: int | None


# ----------------------------------------------------------------------------
# order helpers


def complete_order(order: CandidateOrder | Iterable[tuple[int, int]], num_candidates: int,
                   seats: int) -> CandidateOrder:
    """Add the obvious ending when the rest of the count is already decided.

    With every seat filled the remaining candidates are eliminated (in index
    order, which is irrelevant); when the standing candidates exactly fill the
    remaining seats they are all elected.
    """
    if not isinstance(order, CandidateOrder):
        order = CandidateOrder(tuple(order))
    rest = sorted(set(range(num_candidates)) - order.mentioned)
    if not rest:
        return order
    seats_left = seats - len(order.elected)
    if seats_left <= 0:
        return CandidateOrder(order.steps + tuple((c, ELIMINATED) for c in rest))
    if len(rest) == seats_left:
        return CandidateOrder(order.steps + tuple((c, ELECTED) for c in rest))
    return order


def is_complete(order: CandidateOrder, num_candidates: int) -> bool:
    return len(order.mentioned) == num_candidates


def is_valid_order(order: CandidateOrder | Iterable[tuple[int, int]], winners: Iterable[int],
                   seats: int, num_candidates: int | None = None) -> bool:
    """False when the order elects too many, or is bound to elect exactly ``winners``."""
    if not isinstance(order, CandidateOrder):
        order = CandidateOrder(tuple(order))
    winners = frozenset(winners)
    elected = frozenset(order.elected)
    if len(elected) > seats:
        return False
    if len(elected) == seats:
        return elected != winners
    if num_candidates is not None:
        full = complete_order(order, num_candidates, seats)
        if is_complete(full, num_candidates):
            return frozenset(full.elected) != winners
    return True


@dataclass(frozen=True)
class PrefixRule:
    """Orders allowed when the first ``rounds`` rounds of the real count are kept."""

    rounds: int
    fixed: tuple[tuple[int, int], ...]
    eliminated: frozenset[int]

    def allows(self, order: CandidateOrder) -> bool:
        for i, (c, a) in enumerate(order.steps[:self.rounds]):
            oc, oa = self.fixed[i]
            if oa == ELECTED:
                if (c, a) != (oc, oa):
                    return False
            elif a != ELIMINATED or c not in self.eliminated:
                return False
        return True


def fix_prefix(election: Election, rounds: int, result: CountResult | None = None) -> PrefixRule:
    """Restrict the search to orders that replay the first ``rounds`` rounds.

    Elected candidates keep their rounds; candidates eliminated within the
    window may be eliminated in any order inside it.
    """
    result = run_count(election) if result is None else result
    total = len(result.rounds)
    if not 0 <= rounds < total:
        raise ValueError(f"fix_rounds must be in [0, {total - 1}] for this count")
    fixed = []
    for rec in result.rounds[:rounds]:
        action = ELIMINATED if rec.kind == "eliminated" else ELECTED
        for c in rec.candidates:
            fixed.append((c, action))
    fixed = fixed[:rounds]
    elim = frozenset(c for c, a in fixed if a == ELIMINATED)
    return PrefixRule(rounds, tuple(fixed), elim)


def verify_manipulation(election: Election, manipulation: Manipulation, ties: str = "any"
                        ) -> Verification:
    """Replay ``manipulation`` and report whether the elected set changes."""
    if election.winners is None:
        raise ElectionError("election has no recorded winners")
    for part in (manipulation.removals, manipulation.additions):
        if any(int(n) != n or n < 0 for n in part.values()):
            raise ElectionError("manipulation counts must be non-negative integers")
    profile = apply_manipulation(election.profile, manipulation.removals, manipulation.additions)
    res = run_count(election, profile=profile)
    changed = outcome_changes(election, profile, election.winners, ties)
    return Verification(res.order, res.elected, changed, manipulation.size if changed else None)


# ----------------------------------------------------------------------------
# the search


class _Search:
    def __init__(self, election: Election, config: SearchConfig):
        if election.winners is None:
            election = election.with_winners(run_count(election).elected)
        self.e = election
        self.cfg = config
        self.n = election.num_candidates
        self.start = time.monotonic()
        self.lock = threading.Lock()
        self.stats = SearchStats()
        self.history: list[dict] = []
        self.evaluations: list[dict] = []
        self.frontier: list[FrontierEntry] = []
        self.blocked: list[FrontierEntry] = []
        self.seen: set[tuple] = set()
        self.result = run_count(election)
        self.prefix = fix_prefix(election, config.fix_rounds, self.result) if config.fix_rounds else None
        self.ub, self.certificate = self._initial_ub()
        self.search_bound = self.ub
        self.timed_out = False

    # -- bounds --------------------------------------------------------------
    def _initial_ub(self) -> tuple[int, Manipulation | None]:
        e = self.e
        weub = winner_elimination_ub(e, self.result)
        simple = simple_stv_ub(e)
        self.initial = {"winner_elimination": weub, "simple_stv": simple, "heuristic": min(weub, simple)}
        for man in upper_bound_manipulations(e, self.result):
            if verify_manipulation(e, man, self.cfg.ties).changed:
                self.initial["certified"] = man.size
                return man.size, man
        # fall back to handing every ballot to a losing candidate
        loser = min(set(range(self.n)) - set(e.winners))
        removals = {s: c for s, c in e.profile.items() if s != (loser,)}
        man = Manipulation(removals, {(loser,): sum(removals.values())}, "everything to one loser")
        self.initial["certified"] = man.size
        return man.size, man

    def elapsed(self) -> float:
        return time.monotonic() - self.start

    def out_of_time(self) -> bool:
        return self.cfg.wall_limit is not None and self.elapsed() > self.cfg.wall_limit

    def lower(self) -> float:
        cands = [self.search_bound] + [f.lb for f in self.frontier] + [b.lb for b in self.blocked]
        return min(cands)

    def note(self, event: str) -> None:
        self.history.append({"t": round(self.elapsed(), 4), "event": event, "lower": self.lower(),
                             "upper": self.ub})

    def _accept(self, man: Manipulation) -> bool:
        """Lower the certified bound if ``man`` really changes the outcome."""
        if man.size >= self.ub:
            return False
        if not verify_manipulation(self.e, man, self.cfg.ties).changed:
            return False
        self.ub = man.size
        self.certificate = man
        self.search_bound = min(self.search_bound, self.ub)
        self.frontier = [f for f in self.frontier if f.lb < self.search_bound]
        heapq.heapify(self.frontier)
        return True

    # -- evaluation ----------------------------------------------------------
    def evaluate(self, order: CandidateOrder) -> None:
        """Bound one order and file it (frontier, blocked, bound update or pruned)."""
        with self.lock:
            threshold = self.search_bound
        log = {"order": order.to_json(), "complete": is_complete(order, self.n)}
        rule = 0
        if self.cfg.use_rule_lb:
            rule = prefix_lower_bound(self.e, order).lb
            log["rule_lb"] = rule
            if rule >= threshold:
                with self.lock:
                    self.stats.rule_pruned += 1
                    log.update(lb=rule, outcome="pruned by rule")
                    self.evaluations.append(log)
                return
        limits = Limits(stall_time=self.cfg.stall_limit)
        if self.cfg.wall_limit is not None:
            limits.wall_time = max(0.05, self.cfg.wall_limit - self.elapsed())
        res: DistanceResult = distance_to(
            self.e, order, ub=max(threshold - 1, 0), mode=self.cfg.mode, K=self.cfg.K, limits=limits,
            backend=self.cfg.backend, group=self.cfg.group, eps=self.cfg.eps)
        lb = max(rule, res.lb)
        complete = log["complete"]
        with self.lock:
            self.stats.models_solved += 1
            log.update(model_lb=res.lb, value=res.value, status=res.status.value, lb=lb)
            if res.manipulation is not None and self._accept(res.manipulation):
                self.note("upper bound")
            settled = res.status in (Status.OPTIMAL, Status.INFEASIBLE)
            if lb >= self.search_bound:
                log["outcome"] = "pruned"
            elif complete and settled:
                # proven distance (or relaxed bound) of a full alternative outcome
                self.search_bound = lb
                self.frontier = [f for f in self.frontier if f.lb < lb]
                heapq.heapify(self.frontier)
                log["outcome"] = "bound"
                self.note("search bound")
            elif complete:
                self.blocked.append(FrontierEntry(lb, len(order), order.steps))
                log["outcome"] = "blocked"
            else:
                heapq.heappush(self.frontier, FrontierEntry(lb, len(order), order.steps))
                log["outcome"] = "frontier"
            self.evaluations.append(log)

    def children(self, order: CandidateOrder) -> list[CandidateOrder]:
        out = []
        for c in range(self.n):
            if c in order.mentioned:
                continue
            for a in (ELECTED, ELIMINATED):
                child = complete_order(order.extend(c, a), self.n, self.e.seats)
                if child.steps in self.seen:
                    continue
                self.seen.add(child.steps)
                if self.prefix is not None and not self.prefix.allows(child):
                    continue
                if not is_valid_order(child, self.e.winners, self.e.seats, self.n):
                    self.stats.invalid += 1
                    self.evaluations.append({"order": child.to_json(), "outcome": "invalid"})
                    continue
                out.append(child)
        return out

    def run_batch(self, orders: list[CandidateOrder], pool: ThreadPoolExecutor | None) -> None:
        if pool is None:
            for o in orders:
                if self.out_of_time():
                    self.timed_out = True
                    return
                self.evaluate(o)
        else:
            list(pool.map(self.evaluate, orders))

    def run(self) -> MarginResult:
        self.note("start")
        pool = ThreadPoolExecutor(self.cfg.nf) if self.cfg.nf > 1 else None
        try:
            if self.search_bound > 0:
                self.run_batch(self.children(CandidateOrder(())), pool)
                if self.timed_out:
                    # some first steps were never bounded
                    heapq.heappush(self.frontier, FrontierEntry(0, 0, ()))
            while self.frontier and not self.timed_out:
                if self.out_of_time():
                    self.timed_out = True
                    break
                batch = []
                while self.frontier and len(batch) < self.cfg.nf:
                    top = heapq.heappop(self.frontier)
                    if top.lb < self.search_bound:
                        batch.append(top)
                if not batch:
                    break
                self.stats.nodes_expanded += len(batch)
                kids = []
                for entry in batch:
                    kids.extend(self.children(entry.order))
                self.run_batch(kids, pool)
                if self.timed_out:
                    # unexpanded parents keep their bounds
                    for entry in batch:
                        heapq.heappush(self.frontier, entry)
        finally:
            if pool is not None:
                pool.shutdown()
        self.stats.wall_time = self.elapsed()
        self.note("end")
        lower = min(self.lower(), self.ub)
        exact = lower >= self.ub and self.certificate is not None and self.prefix is None
        return MarginResult(
            lower_bound=lower, upper_bound=self.ub, exact=exact, certificate=self.certificate,
            conditional=self.prefix is not None, status="wall_limit" if self.timed_out else "complete",
            initial=self.initial, stats=self.stats, history=self.history,
            evaluations=self.evaluations, frontier=sorted(self.frontier), blocked=sorted(self.blocked))


def margin_stv(election: Election, config: SearchConfig | None = None, **kwargs) -> MarginResult:
    """Bounds on the margin of victory; exact when ``lower_bound == upper_bound``.

    Keyword arguments are forwarded to :class:`SearchConfig`.
    """
    config = config or SearchConfig(**kwargs)
    return _Search(election, config).run()
