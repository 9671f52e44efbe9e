"""Linear relaxations of bilinear products ``z = x * y``.

Both schemes need finite bounds on ``x`` and ``y``. The piecewise scheme
splits the domain of ``x`` into segments, picks one with a binary indicator
per segment, and applies the McCormick envelope inside it. With a single
segment it is exactly McCormick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .linear import BINARY, LinearModel, ModelError

# An envelope row: (coef_x, coef_y, coef_z, sense, rhs)
EnvelopeRow = tuple[float, float, float, str, float]


def mccormick_envelope(xL: float, xU: float, yL: float, yU: float) -> list[EnvelopeRow]:
    if not (xL <= xU and yL <= yU):
        raise ModelError("envelope bounds out of order")
    if not all(math.isfinite(b) for b in (xL, xU, yL, yU)):
        raise ModelError("envelope needs finite bounds")
    # z >= xL*y + yL*x - xL*yL ;  z >= xU*y + yU*x - xU*yU
    # z <= xU*y + yL*x - xU*yL ;  z <= xL*y + yU*x - xL*yU
    return [
        (-yL, -xL, 1.0, ">=", -xL * yL),
        (-yU, -xU, 1.0, ">=", -xU * yU),
        (-yL, -xU, 1.0, "<=", -xU * yL),
        (-yU, -xL, 1.0, "<=", -xL * yU),
    ]


@dataclass(frozen=True)
class PiecewiseConfig:
    breakpoints: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if len(bp) < 2:
            raise ModelError("need at least two breakpoints")
        if any(b1 >= b2 for b1, b2 in zip(bp, bp[1:])):
            raise ModelError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)

    @classmethod
    def uniform(cls, K: int, lo: float = 0.0, hi: float = 1.0) -> "PiecewiseConfig":
        if K < 1:
            raise ModelError("K must be at least 1")
        if hi <= lo:
            return cls((lo, lo + 1e-12)) if K == 1 else cls.uniform(1, lo, hi)
        return cls(tuple(lo + (hi - lo) * k / K for k in range(K + 1)))

    @property
    def K(self) -> int:
        return len(self.breakpoints) - 1

    def refines(self, other: "PiecewiseConfig") -> bool:
        """True when every breakpoint of ``other`` is also one of ours."""
        mine = set(round(b, 12) for b in self.breakpoints)
        return all(round(b, 12) in mine for b in other.breakpoints)


def add_mccormick(model: LinearModel, z: int, x: int, y: int, xb=None, yb=None, tag: str = "") -> None:
    xL, xU = xb if xb is not None else (model.lb[x], model.ub[x])
    yL, yU = yb if yb is not None else (model.lb[y], model.ub[y])
    for k, (ax, ay, az, sense, rhs) in enumerate(mccormick_envelope(xL, xU, yL, yU)):
        model.add({x: ax, y: ay, z: az}, sense, rhs, f"mc{k}_{tag}")


def add_segments(model: LinearModel, x: int, config: PiecewiseConfig, tag: str) -> list[int]:
    """Segment indicators for ``x``: exactly one is on, and ``x`` lies inside it."""
    bp = config.breakpoints
    lam = [model.var(f"lam_{tag}_{k}", 0, 1, BINARY) for k in range(config.K)]
    model.add({v: 1.0 for v in lam}, "=", 1.0, f"seg_{tag}")
    lower = {v: -bp[k] for k, v in enumerate(lam)}
    lower[x] = lower.get(x, 0.0) + 1.0
    model.add(lower, ">=", 0.0, f"seglo_{tag}")
    upper = {v: -bp[k + 1] for k, v in enumerate(lam)}
    upper[x] = upper.get(x, 0.0) + 1.0
    model.add(upper, "<=", 0.0, f"seghi_{tag}")
    return lam


def add_piecewise(model: LinearModel, z: int, x: int, y: int, config: PiecewiseConfig,
                  lam: list[int], yb=None, tag: str = "") -> None:
    """Piecewise envelope of ``z = x*y`` over the segments selected by ``lam``.

    ``y = yL + sum(dy_k)`` with ``dy_k`` non-zero only in the active segment.
    """
    bp = config.breakpoints
    yL, yU = yb if yb is not None else (model.lb[y], model.ub[y])
    if not (math.isfinite(yL) and math.isfinite(yU)):
        raise ModelError("piecewise envelope needs finite y bounds")
    span = yU - yL
    K = config.K
    dy = [model.var(f"dy_{tag}_{k}", 0, span) for k in range(K)]
    row = {y: 1.0}
    for v in dy:
        row[v] = row.get(v, 0.0) - 1.0
    model.add(row, "=", yL, f"ydec_{tag}")
    for k in range(K):
        model.add({dy[k]: 1.0, lam[k]: -span}, "<=", 0.0, f"dyon_{tag}_{k}")

    def row_with(base: dict[int, float], extra: dict[int, float]) -> dict[int, float]:
        out = dict(base)
        for v, a in extra.items():
            out[v] = out.get(v, 0.0) + a
        return out

    lo_b = bp[:-1]
    hi_b = bp[1:]
    # z >= yU*x + sum x_k dy_k - span * sum x_k lam_k
    r1 = row_with({z: 1.0, x: -yU}, {dy[k]: -hi_b[k] for k in range(K)})
    r1 = row_with(r1, {lam[k]: span * hi_b[k] for k in range(K)})
    model.add(r1, ">=", 0.0, f"pw1_{tag}")
    # z <= yU*x + sum x_{k-1} dy_k - span * sum x_{k-1} lam_k
    r2 = row_with({z: 1.0, x: -yU}, {dy[k]: -lo_b[k] for k in range(K)})
    r2 = row_with(r2, {lam[k]: span * lo_b[k] for k in range(K)})
    model.add(r2, "<=", 0.0, f"pw2_{tag}")
    # z <= yL*x + sum x_k dy_k
    r3 = row_with({z: 1.0, x: -yL}, {dy[k]: -hi_b[k] for k in range(K)})
    model.add(r3, "<=", 0.0, f"pw3_{tag}")
    # z >= yL*x + sum x_{k-1} dy_k
    r4 = row_with({z: 1.0, x: -yL}, {dy[k]: -lo_b[k] for k in range(K)})
    model.add(r4, ">=", 0.0, f"pw4_{tag}")


def relax_model(model: LinearModel, mode: str, K: int = 1,
                boxes: dict[int, tuple[float, float]] | None = None,
                configs: dict[int, PiecewiseConfig] | None = None) -> LinearModel:
    """Copy of ``model`` with every bilinear term replaced by linear rows.

    ``boxes`` narrows the domain of first factors (new variables are only
    appended, so indices of the original variables are unchanged).
    """
    if mode not in ("mccormick", "piecewise"):
        raise ModelError(f"unknown relaxation {mode!r}")
    out = model.copy()
    out.bilinear = []
    boxes = boxes or {}
    for v, (lo, hi) in boxes.items():
        out.lb[v] = max(out.lb[v], lo)
        out.ub[v] = min(out.ub[v], hi)
    segs: dict[int, tuple[PiecewiseConfig, list[int]]] = {}
    for k, b in enumerate(model.bilinear):
        xb = (out.lb[b.x], out.ub[b.x])
        tag = f"{model.names[b.z]}"
        if mode == "mccormick" or K == 1 and not configs:
            add_mccormick(out, b.z, b.x, b.y, xb=xb, tag=tag)
            continue
        if b.x not in segs:
            cfg = (configs or {}).get(b.x) or PiecewiseConfig.uniform(K, *xb)
            if xb[1] - xb[0] <= 1e-12:
                add_mccormick(out, b.z, b.x, b.y, xb=xb, tag=tag)
                continue
            segs[b.x] = (cfg, add_segments(out, b.x, cfg, model.names[b.x]))
        cfg, lam = segs[b.x]
        add_piecewise(out, b.z, b.x, b.y, cfg, lam, tag=tag)
    return out


def piecewise_relaxation(config: PiecewiseConfig, y_bounds: tuple[float, float]) -> LinearModel:
    """Standalone relaxation of ``z = x*y`` with ``x`` over the config's breakpoints.

    Variables are named ``x``, ``y`` and ``z``. Useful for inspecting the
    feasible region of a single product.
    """
    bp = config.breakpoints
    yL, yU = y_bounds
    if not yL <= yU:
        raise ModelError("y bounds out of order")
    m = LinearModel("piecewise product")
    x = m.var("x", bp[0], bp[-1])
    y = m.var("y", yL, yU)
    lo = min(bp[0] * yL, bp[0] * yU, bp[-1] * yL, bp[-1] * yU)
    hi = max(bp[0] * yL, bp[0] * yU, bp[-1] * yL, bp[-1] * yU)
    z = m.var("z", lo, hi)
    lam = add_segments(m, x, config, "x")
    add_piecewise(m, z, x, y, config, lam, yb=(yL, yU), tag="z")
    return m
