import pytest
from hypothesis import given, settings, strategies as st

from stvmargin import (LinearModel, PiecewiseConfig, Status, mccormick_envelope, piecewise_relaxation,
                       relax_model, solve)
from stvmargin.linear import ModelError


def satisfies(rows, x, y, z, tol=1e-9):
    for ax, ay, az, sense, rhs in rows:
        lhs = ax * x + ay * y + az * z
        if sense == ">=" and lhs < rhs - tol or sense == "<=" and lhs > rhs + tol:
            return False
    return True


boxes = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 30), st.floats(0, 30)).map(
    lambda b: (min(b[0], b[1]), max(b[0], b[1]), min(b[2], b[3]), max(b[2], b[3])))


@given(boxes, st.floats(0, 1), st.floats(0, 1))
def test_envelope_contains_product(box, s, t):
    xL, xU, yL, yU = box
    x, y = xL + s * (xU - xL), yL + t * (yU - yL)
    assert satisfies(mccormick_envelope(xL, xU, yL, yU), x, y, x * y)


def test_envelope_is_exact_at_corners():
    rows = mccormick_envelope(0, 1, 2, 5)
    assert satisfies(rows, 1, 5, 5)
    assert not satisfies(rows, 1, 5, 4.9)


def test_envelope_rejects_bad_bounds():
    with pytest.raises(ModelError):
        mccormick_envelope(1, 0, 0, 1)
    with pytest.raises(ModelError):
        mccormick_envelope(0, float("inf"), 0, 1)


def z_range(model: LinearModel, x: float, y: float) -> tuple[float, float]:
    m = model.copy()
    ix, iy, iz = m.index("x"), m.index("y"), m.index("z")
    m.lb[ix] = m.ub[ix] = x
    m.lb[iy] = m.ub[iy] = y
    m.minimize({iz: 1})
    lo = solve(m)
    m.minimize({iz: -1})
    hi = solve(m)
    assert lo.status == hi.status == Status.OPTIMAL
    return lo.objective, -hi.objective


def test_single_segment_matches_mccormick():
    pw = piecewise_relaxation(PiecewiseConfig.uniform(1), (0, 10))
    for x, y in [(0.3, 4), (0.5, 5), (0.9, 1)]:
        lo, hi = z_range(pw, x, y)
        mc_lo = max(0 * y + 0 * x, 1 * y + 10 * x - 10)
        mc_hi = min(1 * y + 0 * x, 0 * y + 10 * x)
        assert lo == pytest.approx(mc_lo) and hi == pytest.approx(mc_hi)


@given(st.floats(0, 1), st.floats(0, 20))
@settings(max_examples=30, deadline=None)
def test_nested_segments_tighten(x, y):
    widths = []
    for K in (1, 2, 4, 8):
        lo, hi = z_range(piecewise_relaxation(PiecewiseConfig.uniform(K), (0, 20)), x, y)
        assert lo - 1e-6 <= x * y <= hi + 1e-6
        widths.append(hi - lo)
    assert all(b <= a + 1e-6 for a, b in zip(widths, widths[1:]))


def test_refines():
    assert PiecewiseConfig.uniform(10).refines(PiecewiseConfig.uniform(5))
    assert not PiecewiseConfig.uniform(5).refines(PiecewiseConfig.uniform(10))
    with pytest.raises(ModelError):
        PiecewiseConfig((0.5, 0.2))


def test_relax_model_replaces_products():
    m = LinearModel()
    x, y, z = m.var("x", 0, 1), m.var("y", 0, 4), m.var("z", 0, 4)
    m.add_bilinear(z, x, y)
    m.add({y: 1}, ">=", 3)
    m.add({x: 1}, ">=", 0.5)
    m.minimize({z: 1})
    mc = solve(relax_model(m, "mccormick"))
    pw = solve(relax_model(m, "piecewise", K=4))
    assert mc.objective <= pw.objective + 1e-9 <= 1.5 + 1e-9
    assert pw.objective == pytest.approx(1.5)
    with pytest.raises(ModelError):
        relax_model(m, "bogus")
