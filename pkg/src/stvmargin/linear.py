"""A small mixed-integer linear model container with LP-text export and import.

Models may additionally carry bilinear equalities ``z = x * y``; those are
written as quadratic rows in the LP text and must be relaxed before a linear
solve.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

CONTINUOUS, INTEGER, BINARY = "C", "I", "B"
SENSES = ("<=", ">=", "=")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Row:
    name: str
    coeffs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float


@dataclass(frozen=True)
class Bilinear:
    z: int
    x: int
    y: int


class LinearModel:
    def __init__(self, name: str = "model"):
        self.name = name
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.kind: list[str] = []
        self.rows: list[Row] = []
        self.objective: dict[int, float] = {}
        self.bilinear: list[Bilinear] = []
        self._index: dict[str, int] = {}

    # ------------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.names)

    def var(self, name: str, lb: float = 0.0, ub: float = math.inf, kind: str = CONTINUOUS) -> int:
        if name in self._index:
            raise ModelError(f"duplicate variable {name}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if not lb <= ub:
            raise ModelError(f"inconsistent bounds for {name}: {lb} > {ub}")
        if math.isnan(lb) or math.isnan(ub):
            raise ModelError(f"NaN bound on {name}")
        self._index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.kind.append(kind)
        return len(self.names) - 1

    def index(self, name: str) -> int:
        return self._index[name]

    def has(self, name: str) -> bool:
        return name in self._index

    def add(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]], sense: str, rhs: float,
            name: str | None = None) -> int:
        if sense not in SENSES:
            raise ModelError(f"bad sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for v, a in items:
            if not 0 <= v < len(self.names):
                raise ModelError(f"unknown variable index {v}")
            a = float(a)
            if not math.isfinite(a):
                raise ModelError("non-finite coefficient")
            merged[v] = merged.get(v, 0.0) + a
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise ModelError("non-finite right-hand side")
        row = Row(name or f"r{len(self.rows)}", tuple((v, a) for v, a in merged.items() if a != 0.0),
                  sense, rhs)
        self.rows.append(row)
        return len(self.rows) - 1

    def minimize(self, coeffs: Mapping[int, float]) -> None:
        self.objective = {v: float(a) for v, a in coeffs.items() if a}

    def add_bilinear(self, z: int, x: int, y: int) -> None:
        for v in (z, x, y):
            if not 0 <= v < len(self.names):
                raise ModelError(f"unknown variable index {v}")
        self.bilinear.append(Bilinear(z, x, y))

    def copy(self) -> "LinearModel":
        other = LinearModel(self.name)
        other.names = list(self.names)
        other.lb = list(self.lb)
        other.ub = list(self.ub)
        other.kind = list(self.kind)
        other.rows = list(self.rows)
        other.objective = dict(self.objective)
        other.bilinear = list(self.bilinear)
        other._index = dict(self._index)
        return other

    def objective_value(self, x) -> float:
        return float(sum(a * x[v] for v, a in self.objective.items()))

    def integral_objective(self) -> bool:
        """True when every feasible objective value is an integer."""
        return all(self.kind[v] != CONTINUOUS and float(a).is_integer() for v, a in self.objective.items())

    def violation(self, x, tol: float = 1e-6) -> float:
        """Largest constraint/bound/integrality violation of point ``x`` (bilinear included)."""
        worst = 0.0
        for i in range(self.num_vars):
            worst = max(worst, self.lb[i] - x[i], x[i] - self.ub[i])
            if self.kind[i] != CONTINUOUS:
                worst = max(worst, abs(x[i] - round(x[i])))
        for r in self.rows:
            lhs = sum(a * x[v] for v, a in r.coeffs)
            if r.sense == "<=":
                worst = max(worst, lhs - r.rhs)
            elif r.sense == ">=":
                worst = max(worst, r.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - r.rhs))
        for b in self.bilinear:
            worst = max(worst, abs(x[b.z] - x[b.x] * x[b.y]))
        return worst

    def arrays(self):
        """``(c, A, row_lo, row_hi)`` with ``A`` a CSR matrix."""
        n = self.num_vars
        c = np.zeros(n)
        for v, a in self.objective.items():
            c[v] = a
        data, ri, ci = [], [], []
        lo = np.empty(len(self.rows))
        hi = np.empty(len(self.rows))
        for k, r in enumerate(self.rows):
            for v, a in r.coeffs:
                data.append(a)
                ri.append(k)
                ci.append(v)
            if r.sense == "<=":
                lo[k], hi[k] = -np.inf, r.rhs
            elif r.sense == ">=":
                lo[k], hi[k] = r.rhs, np.inf
            else:
                lo[k] = hi[k] = r.rhs
        A = sparse.csr_matrix((data, (ri, ci)), shape=(len(self.rows), n))
        return c, A, lo, hi

    def structure(self):
        """Hashable structural summary, used to compare round-tripped models."""
        return (
            tuple(self.names), tuple(self.lb), tuple(self.ub), tuple(self.kind),
            tuple((r.name, tuple(sorted((self.names[v], a) for v, a in r.coeffs)), r.sense, r.rhs)
                  for r in self.rows),
            tuple(sorted((self.names[v], a) for v, a in self.objective.items())),
            tuple((self.names[b.z], self.names[b.x], self.names[b.y]) for b in self.bilinear),
        )


# ----------------------------------------------------------------------------
# LP text


def _num(a: float) -> str:
    if a == int(a) and abs(a) < 1e15:
        return str(int(a))
    return repr(float(a))


def _terms(coeffs: Iterable[tuple[int, float]], names: list[str]) -> str:
    parts = []
    for v, a in coeffs:
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {names[v]}")
    return " ".join(parts) if parts else "0"


def export_lp(model: LinearModel) -> str:
    """Write ``model`` in CPLEX-style LP text.

    Sections appear in a fixed order (objective, constraints, bounds,
    integrality) and every variable gets a bounds line, so identical models
    give identical text.
    """
    names = model.names
    out = [f"\\ stvmargin LP export", f"\\ model: {model.name}", "Minimize"]
    out.append(" obj: " + _terms(sorted(model.objective.items()), names))
    out.append("Subject To")
    for r in model.rows:
        rel = {"<=": "<=", ">=": ">=", "=": "="}[r.sense]
        out.append(f" {r.name}: {_terms(r.coeffs, names)} {rel} {_num(r.rhs)}")
    for k, b in enumerate(model.bilinear):
        out.append(f" bilinear{k}: + 1 {names[b.z]} - [ 1 {names[b.x]} * {names[b.y]} ] = 0")
    out.append("Bounds")
    for i, nm in enumerate(names):
        lo, hi = model.lb[i], model.ub[i]
        los = "-inf" if lo == -math.inf else _num(lo)
        his = "+inf" if hi == math.inf else _num(hi)
        out.append(f" {los} <= {nm} <= {his}")
    out.append("General")
    ints = [nm for i, nm in enumerate(names) if model.kind[i] == INTEGER]
    for nm in ints:
        out.append(f" {nm}")
    out.append("Binary")
    for i, nm in enumerate(names):
        if model.kind[i] == BINARY:
            out.append(f" {nm}")
    out.append("End")
    return "\n".join(out) + "\n"


_TERM = re.compile(r"([+-])\s*([0-9.eE+-]+|inf)\s+([A-Za-z_][\w.]*)")


def _parse_float(s: str) -> float:
    s = s.strip()
    if s in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if s in ("-inf", "-infinity"):
        return -math.inf
    return float(s)


def read_lp(text: str) -> LinearModel:
    """Read LP text as produced by :func:`export_lp`."""
    model = LinearModel()
    section = None
    pending_rows: list[tuple[str, list[tuple[str, float]], str, float]] = []
    pending_bil: list[tuple[str, str, str]] = []
    objective: list[tuple[str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    general: list[str] = []
    binary: list[str] = []
    order: list[str] = []

    def note(nm):
        if nm not in seen:
            seen.add(nm)
            order.append(nm)

    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("\\"):
            m = re.match(r"\\\s*model:\s*(.*)$", line)
            if m:
                model.name = m.group(1)
            continue
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "subject to", "bounds", "general", "binary", "end"):
            section = low
            continue
        try:
            if section == "minimize":
                _, body = line.split(":", 1)
                for sign, a, nm in _TERM.findall(body):
                    objective.append((nm, float(a) * (-1 if sign == "-" else 1)))
                    note(nm)
            elif section == "subject to":
                name, body = line.split(":", 1)
                name = name.strip()
                m = re.match(r"^(.*)\s(<=|>=|=)\s*(\S+)$", body.strip())
                if not m:
                    raise ModelError("bad constraint")
                lhs, sense, rhs = m.group(1), m.group(2), float(m.group(3))
                bil = re.search(r"\[\s*([0-9.eE+-]+)\s+(\S+)\s*\*\s*(\S+)\s*\]", lhs)
                if bil:
                    z = _TERM.findall(lhs[:bil.start()])
                    note(z[0][2])
                    note(bil.group(2))
                    note(bil.group(3))
                    pending_bil.append((z[0][2], bil.group(2), bil.group(3)))
                    continue
                terms = [(nm, float(a) * (-1 if sign == "-" else 1)) for sign, a, nm in _TERM.findall(lhs)]
                for nm, _ in terms:
                    note(nm)
                pending_rows.append((name, terms, sense, rhs))
            elif section == "bounds":
                m = re.match(r"^(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", line)
                if not m:
                    raise ModelError("bad bound")
                note(m.group(2))
                bounds[m.group(2)] = (_parse_float(m.group(1)), _parse_float(m.group(3)))
            elif section == "general":
                note(line)
                general.append(line)
            elif section == "binary":
                note(line)
                binary.append(line)
            elif section == "end":
                continue
            else:
                raise ModelError("text outside a section")
        except (ValueError, IndexError) as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
    kinds = {nm: INTEGER for nm in general}
    kinds.update({nm: BINARY for nm in binary})
    # the exporter lists every variable under Bounds, in model order
    ordered = list(bounds) + [nm for nm in order if nm not in bounds]
    for nm in ordered:
        lo, hi = bounds.get(nm, (0.0, 1.0) if kinds.get(nm) == BINARY else (0.0, math.inf))
        model.var(nm, lo, hi, kinds.get(nm, CONTINUOUS))
    model.minimize({model.index(nm): a for nm, a in objective})
    for name, terms, sense, rhs in pending_rows:
        model.add([(model.index(nm), a) for nm, a in terms], sense, rhs, name)
    for z, x, y in pending_bil:
        model.add_bilinear(model.index(z), model.index(x), model.index(y))
    return model
