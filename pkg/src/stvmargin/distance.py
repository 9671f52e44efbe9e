"""The DistanceTo model: fewest ballot changes that make the count follow an order.

Variables are indexed by equivalence class of ballot ranking (see
:mod:`stvmargin.routes`). Tally levels are 0-based and match the rounds of a
:class:`~stvmargin.routes.RoundPlan`.

Naming (used verbatim in LP exports):

``p_s<k>``/``m_s<k>``      ballots added to / removed from class k
``y_<c>_<j>_s<k>``         value of class-k ballots held by candidate c at level j
``v_<c>_<j>``              tally of c at level j
``q_<c>_<j>``              c is at quota at level j
``tau_<j>``, ``rho_<j>``   transfer value and transferable total of round j
``tr_<j>``                 value actually transferred in round j (= tau * rho)
``u_<j>_s<k>``             tau_j times the elected candidate's class-k value
``r_<c>_<j>_s<k>``         class k's surplus goes to c in round j
``d_<c>_<j>_s<k>``         value class k passes to c in round j
``g_<j>_s<k>``             transferable part of the elected candidate's class-k value
``w_<j>``                  the transfer value is capped at 1 in round j
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .bounds import Manipulation
from .count import admits_order, apply_manipulation
from .election import CandidateOrder, Election, ElectionError, Signature
from .linear import BINARY, INTEGER, LinearModel
from .milp import DEFAULT_BACKEND, Limits, SolveResult, Status, solve, solve_bilinear
from .relax import relax_model
from .routes import EXHAUSTED, RoundPlan

MODES = ("exact", "mccormick", "piecewise")
DEFAULT_EPS = Fraction(1, 1000)


@dataclass
class EquivalenceClasses:
    plan: RoundPlan
    keys: list[Signature]
    counts: list[int]
    members: list[list[tuple[Signature, int]]]
    index: dict[Signature, int]

    def __len__(self) -> int:
        return len(self.keys)

    def class_of(self, sig: Sequence[int]) -> int:
        return self.index[self.plan.route_key(tuple(sig))]


def equivalence_classes(election: Election, order, group: bool = False,
                        plan: RoundPlan | None = None, merge: bool = True) -> EquivalenceClasses:
    """Partition rankings into classes that behave identically under ``order``.

    With ``merge=False`` every ranking in the profile keeps its own class;
    classes for added ballots are still canonical.
    """
    plan = plan or RoundPlan(order, election.num_candidates, election.seats, group)
    keys: list[Signature] = []
    counts: list[int] = []
    members: list[list[tuple[Signature, int]]] = []
    index: dict[Signature, int] = {}

    def slot(key):
        if key not in index:
            index[key] = len(keys)
            keys.append(key)
            counts.append(0)
            members.append([])
        return index[key]

    for key in plan.all_keys():
        slot(key)
    for sig, n in election.profile.items():
        k = slot(plan.route_key(sig) if merge else sig)
        counts[k] += n
        members[k].append((sig, n))
    return EquivalenceClasses(plan, keys, counts, members, index)


@dataclass
class DistanceModel:
    election: Election
    order: CandidateOrder
    mode: str
    K: int | None
    plan: RoundPlan
    classes: EquivalenceClasses
    model: LinearModel
    ub: int
    eps: Fraction
    p: dict[int, int] = field(default_factory=dict)
    m: dict[int, int] = field(default_factory=dict)
    tau: dict[int, int] = field(default_factory=dict)
    tally: dict[tuple[int, int], int] = field(default_factory=dict)
    at_quota: dict[tuple[int, int], int] = field(default_factory=dict)
    infeasible: bool = False

    @property
    def grouped(self) -> bool:
        return any(r.is_block for r in self.plan.rounds)

    @property
    def relaxed(self) -> bool:
        """True when the model's optimum is only a lower bound on the true distance."""
        return self.mode != "exact" or self.grouped

    def manipulation(self, x) -> Manipulation:
        """Turn class-level ``p``/``m`` values into concrete ballot changes."""
        removals: dict[Signature, int] = {}
        additions: dict[Signature, int] = {}
        for k, v in self.m.items():
            left = int(round(x[v]))
            for sig, n in sorted(self.classes.members[k], key=lambda t: (-t[1], t[0])):
                if left <= 0:
                    break
                take = min(n, left)
                removals[sig] = removals.get(sig, 0) + take
                left -= take
            if left > 0:
                raise ElectionError("solution removes more ballots than a class holds")
        for k, v in self.p.items():
            n = int(round(x[v]))
            if n:
                key = self.classes.keys[k]
                additions[key] = additions.get(key, 0) + n
        # a ranking both removed and added is a wasted change; cancel it
        for sig in set(removals) & set(additions):
            c = min(removals[sig], additions[sig])
            removals[sig] -= c
            additions[sig] -= c
        removals = {s: n for s, n in removals.items() if n}
        additions = {s: n for s, n in additions.items() if n}
        return Manipulation(removals, additions, f"{self.mode} distance")

    def realizes(self, x) -> bool:
        """Does applying the solution make the exact count follow the order?"""
        try:
            man = self.manipulation(x)
            prof = apply_manipulation(self.election.profile, man.removals, man.additions)
        except ElectionError:
            return False
        return admits_order(self.election, self.order, prof)


def build_distance_model(election: Election, order, ub: int | None = None, mode: str = "exact",
                         K: int = 5, eps: Fraction | float = DEFAULT_EPS, group: bool = False,
                         merge: bool = True) -> DistanceModel:
    """Build the DistanceTo model of ``order``.

    ``mode`` is ``exact`` (bilinear terms kept), ``mccormick`` or
    ``piecewise`` (with ``K`` segments on each transfer value).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not isinstance(order, CandidateOrder):
        order = CandidateOrder(tuple(order))
    n = election.num_candidates
    order.validate(n, election.seats)
    total = election.total
    ub = total if ub is None else int(ub)
    if ub < 0:
        raise ValueError("ub must be non-negative")
    Q = float(election.quota)
    eps_f = float(eps)
    M = float(total + ub)
    plan = RoundPlan(order, n, election.seats, group)
    classes = equivalence_classes(election, order, plan=plan, merge=merge)
    lm = LinearModel(f"distance {order.format(election.names)}")
    dm = DistanceModel(election, order, mode, K if mode == "piecewise" else None, plan, classes,
                       lm, ub, Fraction(eps))
    if not plan.feasible:
        dm.infeasible = True
    # --- manipulation variables
    for k in range(len(classes)):
        dm.p[k] = lm.var(f"p_s{k}", 0, ub, INTEGER)
        if classes.counts[k] > 0:
            dm.m[k] = lm.var(f"m_s{k}", 0, min(classes.counts[k], ub), INTEGER)
    row = {v: 1.0 for v in dm.m.values()}
    for v in dm.p.values():
        row[v] = row.get(v, 0.0) - 1.0
    lm.add(row, "=", 0.0, "balance")
    lm.add({v: 1.0 for v in dm.p.values()}, "<=", ub, "budget")
    lm.minimize({v: 1.0 for v in dm.p.values()})
    if not plan.rounds:
        return dm

    yub = {k: float(min(classes.counts[k] + ub, total)) for k in range(len(classes))}
    holders = {k: plan.holders(classes.keys[k]) for k in range(len(classes))}
    y: dict[tuple[int, int, int], int] = {}
    for k, key in enumerate(classes.keys):
        for level, positions in enumerate(holders[k]):
            for pos in positions:
                if pos != EXHAUSTED:
                    y[key[pos], level, k] = lm.var(f"y_{key[pos]}_{level}_s{k}", 0, yub[k])
    # level 0: every ballot sits with its first preference
    for k, key in enumerate(classes.keys):
        row = {y[key[0], 0, k]: 1.0}
        if k in dm.p:
            row[dm.p[k]] = -1.0
        if k in dm.m:
            row[dm.m[k]] = 1.0
        lm.add(row, "=", float(classes.counts[k]), f"init_s{k}")

    # tallies
    v = dm.tally
    for level in range(plan.levels):
        for c in sorted(plan.standing_at(level)):
            v[c, level] = lm.var(f"v_{c}_{level}", 0, float(total))
            row = {v[c, level]: -1.0}
            for k in range(len(classes)):
                if (c, level, k) in y:
                    row[y[c, level, k]] = 1.0
            lm.add(row, "=", 0.0, f"tally_{c}_{level}")

    # quota indicators, only where reaching the quota is possible at all
    q = dm.at_quota
    for j, rnd in enumerate(plan.rounds):
        for c in sorted(rnd.standing):
            if plan.can_quota(c, j):
                lo = 1.0 if rnd.kind == "elect" and c == rnd.candidate else 0.0
                q[c, j] = lm.var(f"q_{c}_{j}", lo, 1, BINARY)
                lm.add({v[c, j]: 1.0, q[c, j]: -Q}, ">=", 0.0, f"qlo_{c}_{j}")
                lm.add({v[c, j]: 1.0, q[c, j]: -(total - Q + eps_f)}, "<=", Q - eps_f, f"qhi_{c}_{j}")
                if (c, j - 1) in q:
                    lm.add({q[c, j - 1]: 1.0, q[c, j]: -1.0}, "<=", 0.0, f"qkeep_{c}_{j}")
            else:
                lm.add({v[c, j]: 1.0}, "<=", Q - eps_f, f"below_{c}_{j}")
        qs = [q[c, j] for c in sorted(rnd.standing) if (c, j) in q]
        if len(qs) > rnd.seats_left:
            lm.add({x: 1.0 for x in qs}, "<=", rnd.seats_left, f"qseats_{j}")

    # who is removed in each round
    for j, rnd in enumerate(plan.rounds):
        e = rnd.candidate
        if rnd.kind == "elect":
            for c in sorted(rnd.standing - {e}):
                lm.add({v[e, j]: 1.0, v[c, j]: -1.0}, ">=", 0.0, f"most_{e}_{c}_{j}")
        elif not rnd.is_block:
            for c in sorted(rnd.standing - {e}):
                lm.add({v[e, j]: 1.0, v[c, j]: -1.0}, "<=", 0.0, f"least_{e}_{c}_{j}")
        else:
            # a block only promises each member trailed every survivor's later tally
            for x in rnd.members:
                for c in sorted(rnd.standing - set(rnd.members)):
                    lm.add({v[x, j]: 1.0, v[c, j + 1]: -1.0}, "<=", 0.0, f"block_{x}_{c}_{j}")

    # transfers between levels
    for j in range(plan.levels - 1):
        rnd = plan.rounds[j]
        inflow: dict[tuple[int, int], dict[int, float]] = {}

        def give(c, k, var):
            slot = inflow.setdefault((c, k), {})
            slot[var] = slot.get(var, 0.0) + 1.0

        surplus_terms = []
        for k, key in enumerate(classes.keys):
            for pos in holders[k][j]:
                if pos == EXHAUSTED:
                    continue
                c = key[pos]
                if c not in rnd.members:
                    give(c, k, y[c, j, k])
                    continue
                chain, may_exhaust = plan.chain(key, pos, j)
                if not chain:
                    continue
                if rnd.kind == "eliminate":
                    give(key[chain[0]], k, y[c, j, k])
                else:
                    surplus_terms.append((k, y[c, j, k], [key[t] for t in chain]))
        if surplus_terms:
            _surplus_transfer(dm, j, surplus_terms, give, Q, float(total))
        for (c, k), terms in inflow.items():
            row = dict(terms)
            row[y[c, j + 1, k]] = -1.0
            lm.add(row, "=", 0.0, f"flow_{c}_{j + 1}_s{k}")
    return dm


def _and(lm: LinearModel, name: str, lits: list[tuple[int, bool]]) -> int:
    """Binary equal to the conjunction of literals ``(var, positive)``."""
    r = lm.var(name, 0, 1, BINARY)
    row = {r: 1.0}
    const = 1.0 - len(lits)
    for var, positive in lits:
        if positive:
            lm.add({r: 1.0, var: -1.0}, "<=", 0.0)
            row[var] = row.get(var, 0.0) - 1.0
        else:
            lm.add({r: 1.0, var: 1.0}, "<=", 1.0)
            row[var] = row.get(var, 0.0) + 1.0
            const += 1.0
    lm.add(row, ">=", const)
    return r


def _surplus_transfer(dm: DistanceModel, j: int, terms, give, Q: float, total: float) -> None:
    """Round ``j`` elects someone: each class passes on ``tau_j`` times its value.

    A class goes to chain member ``t`` when every earlier member is at quota
    and ``t`` is not.
    """
    lm = dm.model
    q = dm.at_quota
    tau = lm.var(f"tau_{j}", 0, 1)
    dm.tau[j] = tau
    rho = lm.var(f"rho_{j}", 0, total)
    moved = lm.var(f"tr_{j}", 0, total)
    capped = lm.var(f"w_{j}", 0, 1, BINARY)
    rho_row = {rho: -1.0}
    moved_row = {moved: -1.0}
    for k, yv, chain in terms:
        big = float(lm.ub[yv])
        u = lm.var(f"u_{j}_s{k}", 0, big)
        lm.add_bilinear(u, tau, yv)
        lm.add({u: 1.0, yv: -1.0}, "<=", 0.0)
        routes = []  # (recipient, literal or None for "always")
        for t, c in enumerate(chain):
            lits = [(q[chain[i], j], True) for i in range(t)]
            if (c, j) in q:
                lits.append((q[c, j], False))
            if not lits:
                routes.append((c, None))
            elif len(lits) == 1:
                routes.append((c, lits[0]))
            else:
                routes.append((c, (_and(lm, f"r_{c}_{j}_s{k}", lits), True)))
        if routes[0][1] is None:
            # nothing can be skipped: the whole class moves to its next preference
            give(routes[0][0], k, u)
            moved_row[u] = moved_row.get(u, 0.0) + 1.0
            rho_row[yv] = rho_row.get(yv, 0.0) + 1.0
            continue
        # sum of route literals = 1 when the ballot finds a recipient, 0 if it exhausts
        ind: dict[int, float] = {}
        const = 0.0
        for c, (var, positive) in routes:
            d = lm.var(f"d_{c}_{j}_s{k}", 0, big)
            lm.add({d: 1.0, u: -1.0}, "<=", 0.0)
            if positive:
                lm.add({d: 1.0, var: -big}, "<=", 0.0)
                lm.add({d: 1.0, u: -1.0, var: -big}, ">=", -big)
                ind[var] = ind.get(var, 0.0) + 1.0
            else:
                lm.add({d: 1.0, var: big}, "<=", big)
                lm.add({d: 1.0, u: -1.0, var: big}, ">=", 0.0)
                ind[var] = ind.get(var, 0.0) - 1.0
                const += 1.0
            give(c, k, d)
            moved_row[d] = moved_row.get(d, 0.0) + 1.0
        g = lm.var(f"g_{j}_s{k}", 0, big)
        lm.add({g: 1.0, yv: -1.0}, "<=", 0.0)
        row = {g: 1.0}
        for var, a in ind.items():
            row[var] = row.get(var, 0.0) - big * a
        lm.add(row, "<=", big * const)
        row = {g: 1.0, yv: -1.0}
        for var, a in ind.items():
            row[var] = row.get(var, 0.0) - big * a
        lm.add(row, ">=", big * const - big)
        rho_row[g] = 1.0
    lm.add(rho_row, "=", 0.0, f"rho_def_{j}")
    lm.add(moved_row, "=", 0.0, f"tr_def_{j}")
    lm.add_bilinear(moved, tau, rho)
    # the transfer is the surplus, unless every transferable vote fits under it (tau = 1)
    ve = dm.tally[dm.plan.rounds[j].candidate, j]
    lm.add({moved: 1.0, ve: -1.0}, "<=", -Q, f"cap_{j}")
    lm.add({moved: 1.0, ve: -1.0, capped: total}, ">=", -Q, f"uncap_{j}")
    lm.add({tau: 1.0, capped: -1.0}, ">=", 0.0, f"tau_one_{j}")
    lm.add({moved: 1.0, rho: -1.0}, "<=", 0.0, f"tr_rho_{j}")
    lm.add({moved: 1.0, rho: -1.0, capped: -total}, ">=", -total, f"tr_all_{j}")

# ----------------------------------------------------------------------------


@dataclass
class DistanceResult:
    order: CandidateOrder
    status: Status
    lb: float  # proven lower bound on the distance (math.inf if impossible)
    value: int | None  # verified distance, when known exactly
    manipulation: Manipulation | None
    relaxed: bool
    solve: SolveResult | None = None
    classes: int = 0
    variables: int = 0
    constraints: int = 0
    seconds: float = 0.0

    @property
    def exact(self) -> bool:
        return self.value is not None and self.lb >= self.value


def distance_to(election: Election, order, ub: int | None = None, mode: str = "exact", K: int = 5,
                limits: Limits | None = None, backend: str = DEFAULT_BACKEND, group: bool = False,
                eps: Fraction | float = DEFAULT_EPS, merge: bool = True,
                segments: int = 2) -> DistanceResult:
    """Solve DistanceTo for ``order``; relaxed modes give lower bounds only.

    Solutions of relaxed models are still simulated, and when they do make
    the count follow the order the value is reported as exact.
    """
    dm = build_distance_model(election, order, ub, mode, K, eps, group, merge)
    return solve_distance(dm, limits, backend, segments)


def solve_distance(dm: DistanceModel, limits: Limits | None = None, backend: str = DEFAULT_BACKEND,
                   segments: int = 2) -> DistanceResult:
    lm = dm.model
    stats = dict(classes=len(dm.classes), variables=lm.num_vars, constraints=len(lm.rows))
    if dm.infeasible:
        return DistanceResult(dm.order, Status.INFEASIBLE, math.inf, None, None, dm.relaxed, **stats)
    limits = limits or Limits()
    if dm.mode == "exact" and lm.bilinear:
        res, _ = solve_bilinear(lm, dm.realizes, limits, backend, segments)
    else:
        model = lm if not lm.bilinear else relax_model(lm, dm.mode, dm.K or 1)
        res = solve(model, limits, backend)
    stats["seconds"] = res.seconds
    if res.status == Status.INFEASIBLE:
        # nothing within the budget; with a cutoff, nothing below the cutoff either
        lb = dm.ub + 1 if dm.ub < dm.election.total else math.inf
        if res.cutoff_pruned and math.isfinite(res.bound):
            lb = min(lb, math.ceil(res.bound - 1e-6))
        return DistanceResult(dm.order, res.status, lb, None, None, dm.relaxed, res, **stats)
    lb = math.ceil(res.bound - 1e-6) if math.isfinite(res.bound) else 0
    value = None
    man = None
    if res.x is not None:
        x = res.x[:lm.num_vars]
        obj = int(round(lm.objective_value(x)))
        if dm.realizes(x):
            man = dm.manipulation(x)
            value = obj
            if res.status == Status.OPTIMAL:
                lb = max(lb, obj)
    return DistanceResult(dm.order, res.status, lb, value, man, dm.relaxed, res, **stats)
