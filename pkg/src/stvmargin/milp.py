"""Branch-and-bound for :class:`LinearModel`, plus spatial refinement of bilinear terms.

The LP relaxations are solved with HiGHS through :func:`scipy.optimize.linprog`.
``backend="highs"`` hands the whole MILP to :func:`scipy.optimize.milp` instead.
"""

from __future__ import annotations

import heapq
import math
import os
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .linear import CONTINUOUS, LinearModel, ModelError, export_lp

INT_TOL = 1e-6
DEFAULT_STALL = 30.0
DEFAULT_BACKEND = "highs"


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    STALLED = "StalledWithBound"
    TIME_LIMIT = "TimeLimit"


@dataclass
class Limits:
    wall_time: float | None = None
    stall_time: float | None = None
    objective_cutoff: float = math.inf
    node_limit: int | None = None


@dataclass
class SolveResult:
    status: Status
    objective: float | None = None
    bound: float = -math.inf
    x: np.ndarray | None = None
    nodes: int = 0
    seconds: float = 0.0
    backend: str = "bnb"
    cutoff_pruned: bool = False

    def value(self, model: LinearModel, name: str) -> float:
        return float(self.x[model.index(name)])


class SolverError(RuntimeError):
    pass


def _check(model: LinearModel) -> None:
    if model.bilinear:
        raise ModelError("model still has bilinear terms; relax it or use solve_bilinear")
    for i in range(model.num_vars):
        if model.lb[i] > model.ub[i]:
            raise ModelError(f"inconsistent bounds on {model.names[i]}")


def _round_up(value: float, integral: bool) -> float:
    return math.ceil(value - INT_TOL) if integral else value


class _LP:
    """The LP relaxation in linprog's ``A_ub``/``A_eq`` form."""

    def __init__(self, model: LinearModel):
        c, A, lo, hi = model.arrays()
        self.c = c
        eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
        up = np.isfinite(hi) & ~eq
        dn = np.isfinite(lo) & ~eq
        from scipy import sparse
        blocks, rhs = [], []
        if up.any():
            blocks.append(A[up])
            rhs.append(hi[up])
        if dn.any():
            blocks.append(-A[dn])
            rhs.append(-lo[dn])
        self.A_ub = sparse.vstack(blocks).tocsr() if blocks else None
        self.b_ub = np.concatenate(rhs) if rhs else None
        self.A_eq = A[eq] if eq.any() else None
        self.b_eq = lo[eq] if eq.any() else None

    def solve(self, lb, ub):
        bounds = np.column_stack([lb, ub])
        bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in bounds]
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise SolverError(f"LP solve failed: {res.message}")
        return res.fun, res.x


def solve(model: LinearModel, limits: Limits | None = None, backend: str = DEFAULT_BACKEND) -> SolveResult:
    """Minimise ``model``. Nodes whose bound reaches ``objective_cutoff`` are pruned."""
    _check(model)
    limits = limits or Limits()
    if backend == "highs":
        return _solve_highs(model, limits)
    if backend.startswith("external:"):
        return solve_external(model, backend.split(":", 1)[1], limits)
    if backend != "bnb":
        raise ModelError(f"unknown backend {backend!r}")
    return _solve_bnb(model, limits)


def _solve_bnb(model: LinearModel, limits: Limits) -> SolveResult:
    start = time.monotonic()
    last_improve = start
    integral = model.integral_objective()
    lp = _LP(model)
    ints = np.array([k != CONTINUOUS for k in model.kind], dtype=bool)
    lb0 = np.array(model.lb, dtype=float)
    ub0 = np.array(model.ub, dtype=float)
    lb0[ints] = np.ceil(lb0[ints] - INT_TOL)
    ub0[ints] = np.floor(ub0[ints] + INT_TOL)
    if np.any(lb0 > ub0):
        return SolveResult(Status.INFEASIBLE, seconds=time.monotonic() - start)
    cutoff = limits.objective_cutoff
    best_obj, best_x = math.inf, None
    cut_hit = False
    nodes = 0
    heap: list = []
    seq = 0

    def bound_ok(b):
        nonlocal cut_hit
        rb = _round_up(b, integral)
        if rb >= best_obj - (0.5 if integral else 1e-9):
            return False
        if rb >= cutoff - (1e-9 if not integral else 1e-9):
            cut_hit = True
            return False
        return True

    root = lp.solve(lb0, ub0)
    if root is not None:
        heapq.heappush(heap, (root[0], seq, lb0, ub0, root[1]))
        seq += 1
    status = None
    while heap:
        now = time.monotonic()
        if limits.wall_time is not None and now - start > limits.wall_time:
            status = Status.TIME_LIMIT
            break
        if limits.stall_time is not None and now - last_improve > limits.stall_time:
            status = Status.STALLED
            break
        if limits.node_limit is not None and nodes >= limits.node_limit:
            status = Status.STALLED
            break
        bound, _, lb, ub, x = heapq.heappop(heap)
        if not bound_ok(bound):
            continue
        nodes += 1
        frac = np.abs(x - np.round(x))
        frac[~ints] = 0.0
        if frac.max(initial=0.0) <= INT_TOL:
            xi = x.copy()
            xi[ints] = np.round(xi[ints])
            obj = float(model.objective_value(xi))
            if obj < best_obj:
                best_obj, best_x = obj, xi
                last_improve = time.monotonic()
            continue
        # most fractional, lowest index on ties
        score = np.where(ints, -np.abs(frac - 0.5), -np.inf)
        score[frac <= INT_TOL] = -np.inf
        k = int(np.argmax(score))
        for lo_k, hi_k in ((lb[k], math.floor(x[k])), (math.ceil(x[k]), ub[k])):
            if lo_k > hi_k:
                continue
            clb, cub = lb.copy(), ub.copy()
            clb[k], cub[k] = lo_k, hi_k
            res = lp.solve(clb, cub)
            if res is None:
                continue
            # a child's relaxation can never beat its parent's
            assert res[0] >= bound - 1e-6 * max(1.0, abs(bound)), "LP bound decreased on branching"
            if bound_ok(res[0]):
                heapq.heappush(heap, (res[0], seq, clb, cub, res[1]))
                seq += 1
    elapsed = time.monotonic() - start
    open_bound = min((h[0] for h in heap), default=math.inf)
    if status is None:
        if best_x is not None:
            return SolveResult(Status.OPTIMAL, best_obj, best_obj, best_x, nodes, elapsed, "bnb", cut_hit)
        return SolveResult(Status.INFEASIBLE, None, cutoff if cut_hit else math.inf, None, nodes,
                           elapsed, "bnb", cut_hit)
    proven = min(open_bound, best_obj)
    proven = _round_up(proven, integral) if math.isfinite(proven) else proven
    return SolveResult(status, best_obj if best_x is not None else None, proven, best_x, nodes,
                       elapsed, "bnb", cut_hit)


def _solve_highs(model: LinearModel, limits: Limits) -> SolveResult:
    start = time.monotonic()
    c, A, lo, hi = model.arrays()
    integral = model.integral_objective()
    cons = []
    if A.shape[0]:
        cons.append(LinearConstraint(A, lo, hi))
    cutoff = limits.objective_cutoff
    if math.isfinite(cutoff):
        cons.append(LinearConstraint(c.reshape(1, -1), -np.inf, cutoff - (1 - 1e-6 if integral else 1e-9)))
    integrality = np.array([0 if k == CONTINUOUS else 1 for k in model.kind])
    budget = [t for t in (limits.wall_time, limits.stall_time) if t is not None]
    options = {"disp": False, "mip_rel_gap": 0.0}
    if budget:
        options["time_limit"] = max(min(budget), 0.01)
    if limits.node_limit is not None:
        options["node_limit"] = limits.node_limit
    res = milp(c, integrality=integrality, bounds=Bounds(np.array(model.lb), np.array(model.ub)),
               constraints=cons, options=options)
    elapsed = time.monotonic() - start
    bound = getattr(res, "mip_dual_bound", None)
    bound = -math.inf if bound is None or not np.isfinite(bound) else float(bound)
    if res.status == 0:
        x = np.array(res.x)
        ints = integrality.astype(bool)
        x[ints] = np.round(x[ints])
        obj = float(model.objective_value(x))
        return SolveResult(Status.OPTIMAL, obj, obj, x, int(getattr(res, "mip_node_count", 0) or 0),
                           elapsed, "highs")
    if res.status == 2:
        cut = math.isfinite(cutoff)
        return SolveResult(Status.INFEASIBLE, None, cutoff if cut else math.inf, None, 0, elapsed,
                           "highs", cut)
    if res.status == 1:
        x = None if res.x is None else np.array(res.x)
        obj = None if x is None else float(model.objective_value(x))
        status = Status.STALLED if limits.stall_time is not None and (
            limits.wall_time is None or limits.stall_time <= limits.wall_time) else Status.TIME_LIMIT
        return SolveResult(status, obj, _round_up(bound, integral) if math.isfinite(bound) else bound,
                           x, 0, elapsed, "highs")
    raise SolverError(f"HiGHS failed: {res.message}")


# ----------------------------------------------------------------------------
# external solvers


def solve_external(model: LinearModel, command: str, limits: Limits | None = None) -> SolveResult:
    """Run ``command <model.lp> <solution.txt>`` and read the solution file.

    The solution file holds ``status <Optimal|Infeasible|...>``, optionally
    ``objective <value>`` and ``bound <value>``, then one ``<variable> <value>``
    line per variable. Lines starting with ``#`` are ignored.
    """
    _check(model)
    start = time.monotonic()
    with tempfile.TemporaryDirectory() as tmp:
        lp_path = os.path.join(tmp, "model.lp")
        sol_path = os.path.join(tmp, "solution.txt")
        with open(lp_path, "w") as fh:
            fh.write(export_lp(model))
        timeout = limits.wall_time if limits and limits.wall_time else None
        try:
            proc = subprocess.run([command, lp_path, sol_path], capture_output=True, text=True,
                                  timeout=timeout)
        except subprocess.TimeoutExpired:
            return SolveResult(Status.TIME_LIMIT, seconds=time.monotonic() - start, backend="external")
        except OSError as exc:
            raise SolverError(f"cannot run external solver {command!r}: {exc}") from None
        if proc.returncode != 0:
            raise SolverError(f"external solver exited {proc.returncode}: {proc.stderr.strip()}")
        with open(sol_path) as fh:
            text = fh.read()
    return parse_solution(model, text, time.monotonic() - start)


def parse_solution(model: LinearModel, text: str, seconds: float = 0.0) -> SolveResult:
    status = Status.OPTIMAL
    bound = None
    values: dict[str, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition(" ")
        val = val.strip()
        if key == "status":
            status = Status(val)
        elif key == "objective":
            continue
        elif key == "bound":
            bound = float(val)
        else:
            values[key] = float(val)
    if status == Status.INFEASIBLE:
        return SolveResult(status, bound=math.inf, seconds=seconds, backend="external")
    x = np.zeros(model.num_vars)
    for nm, v in values.items():
        if not model.has(nm):
            raise SolverError(f"solution names unknown variable {nm}")
        x[model.index(nm)] = v
    obj = model.objective_value(x) if values else None
    if bound is None:
        bound = obj if status == Status.OPTIMAL and obj is not None else -math.inf
    return SolveResult(status, obj, bound, x if values else None, 0, seconds, "external")


# ----------------------------------------------------------------------------
# bilinear models


@dataclass
class SpatialStats:
    nodes: int = 0
    relaxations: int = 0
    verified: int = 0
    rejected: int = 0
    history: list = field(default_factory=list)


def _products_exact(model: LinearModel, x, tol: float = 1e-7) -> bool:
    return all(abs(x[b.z] - x[b.x] * x[b.y]) <= tol * max(1.0, abs(x[b.z])) for b in model.bilinear)


def solve_bilinear(model: LinearModel, verify: Callable[[np.ndarray], bool],
                   limits: Limits | None = None, backend: str = DEFAULT_BACKEND,
                   segments: int = 2, max_depth: int = 60) -> tuple[SolveResult, SpatialStats]:
    """Globally minimise a model with bilinear equalities.

    Each node relaxes every product over the current box of its first factor
    (a piecewise envelope with ``segments`` pieces) and solves the resulting
    MILP. The relaxed optimum is a lower bound for the box. A relaxed solution
    is accepted as an incumbent only if ``verify`` confirms it is genuinely
    feasible. Otherwise the box is split at the offending factor value.

    A point that satisfies every product yet fails ``verify`` still solves
    its box, so the box is closed. If such points end up cheaper than every
    verified one, the model optimum is only a bound: the result is
    ``STALLED`` with that bound, and the best verified point (if any).
    Requires an integral objective.
    """
    from .relax import relax_model

    limits = limits or Limits()
    start = time.monotonic()
    last_improve = start
    stats = SpatialStats()
    if not model.integral_objective():
        raise ModelError("spatial refinement needs an integral objective")
    xs = sorted({b.x for b in model.bilinear})
    box0 = {v: (model.lb[v], model.ub[v]) for v in xs}
    best_obj, best_x = math.inf, None
    model_best = math.inf  # cheapest point exact on every product, verified or not
    cutoff = limits.objective_cutoff
    heap = [(-math.inf, 0, 0, box0)]
    seq = 1
    status = None
    cut_hit = False
    while heap:
        now = time.monotonic()
        if limits.wall_time is not None and now - start > limits.wall_time:
            status = Status.TIME_LIMIT
            break
        if limits.stall_time is not None and now - last_improve > limits.stall_time:
            status = Status.STALLED
            break
        bound, _, depth, box = heapq.heappop(heap)
        limit = min(best_obj, cutoff)
        if math.isfinite(bound) and math.ceil(bound - INT_TOL) >= limit:
            if cutoff <= best_obj:
                cut_hit = True
            heapq.heappush(heap, (bound, seq, depth, box))
            break
        stats.nodes += 1
        relaxed = relax_model(model, "piecewise", segments, box)
        sub_limits = Limits(
            wall_time=None if limits.wall_time is None else max(0.01, limits.wall_time - (now - start)),
            stall_time=limits.stall_time, objective_cutoff=limit)
        res = solve(relaxed, sub_limits, backend)
        stats.relaxations += 1
        if res.status == Status.INFEASIBLE:
            if res.cutoff_pruned:
                cut_hit = cut_hit or cutoff <= best_obj
            continue
        if res.x is None:
            status = res.status
            heapq.heappush(heap, (max(bound, res.bound), seq, depth, box))
            break
        node_bound = max(bound, res.bound)
        node_bound = math.ceil(node_bound - INT_TOL) if math.isfinite(node_bound) else node_bound
        x = res.x[:model.num_vars]
        obj = round(model.objective_value(x))
        if verify(x):
            stats.verified += 1
            model_best = min(model_best, obj)
            if obj < best_obj:
                best_obj, best_x = obj, x
                last_improve = time.monotonic()
                stats.history.append((time.monotonic() - start, obj))
            if obj <= node_bound:
                continue
        else:
            stats.rejected += 1
            if _products_exact(model, x) and obj <= node_bound:
                model_best = min(model_best, obj)
                continue
        if depth >= max_depth:
            status = Status.STALLED
            heapq.heappush(heap, (node_bound, seq, depth, box))
            break
        # split the factor whose products are furthest from exact
        worst, pick = -1.0, None
        for b in model.bilinear:
            lo, hi = box[b.x]
            if hi - lo <= 1e-12:
                continue
            err = abs(x[b.z] - x[b.x] * x[b.y])
            if err > worst:
                worst, pick = err, b.x
        if pick is None:
            # every factor is pinned yet the point fails verification; nothing left to refine
            status = Status.STALLED
            heapq.heappush(heap, (node_bound, seq, depth, box))
            break
        lo, hi = box[pick]
        at = float(x[pick])
        width = hi - lo
        if not lo + 0.05 * width < at < hi - 0.05 * width:
            at = (lo + hi) / 2
        for part in ((lo, at), (at, hi)):
            child = dict(box)
            child[pick] = part
            heapq.heappush(heap, (node_bound, seq, depth + 1, child))
            seq += 1
    elapsed = time.monotonic() - start
    open_bound = min((h[0] for h in heap), default=math.inf)
    if status is None and model_best < best_obj:
        status = Status.STALLED
    if status is None:
        if best_x is not None and open_bound >= best_obj - INT_TOL:
            return SolveResult(Status.OPTIMAL, best_obj, best_obj, best_x, stats.nodes, elapsed,
                               backend, cut_hit), stats
        if best_x is None:
            bound = min(open_bound, cutoff) if cut_hit or heap else math.inf
            return SolveResult(Status.INFEASIBLE, None, bound, None, stats.nodes, elapsed, backend,
                               cut_hit or bool(heap)), stats
        return SolveResult(Status.OPTIMAL, best_obj, best_obj, best_x, stats.nodes, elapsed,
                           backend, cut_hit), stats
    proven = min(open_bound, best_obj, model_best)
    if math.isfinite(proven):
        proven = math.ceil(proven - INT_TOL)
    return SolveResult(status, None if best_x is None else best_obj, proven, best_x, stats.nodes,
                       elapsed, backend, cut_hit), stats
