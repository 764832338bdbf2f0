import math

import numpy as np
from hypothesis import given, settings, strategies as st

from charfront.curvature import kn_norm_sq, kretschmann_assembled, ktilde_formula, leading_components
from charfront.goursat import CharGrid, LinearGoursatOp, Rectangle, gronwall_bound, solve_first_order, solve_linear
from charfront.iface import extract_sigma
from charfront.pipeline import _fmt, singular_grid, to_jsonable
from charfront.pulse import PulseData, PulseProfile, TracefreeSym2

coef = st.floats(-2.0, 2.0, allow_nan=False)
pos = st.floats(0.1, 3.0)
small = settings(max_examples=25, deadline=None)


@given(coef, coef)
def test_tracefree_eigenvalues(a, b):
    m = TracefreeSym2(a, b)
    ev = np.linalg.eigvalsh(m.matrix)
    r = math.sqrt(m.tr_sq / 2)
    assert np.allclose(ev, [-r, r], atol=1e-12)
    assert math.isclose(np.trace(m.matrix @ m.matrix), m.tr_sq, abs_tol=1e-12)


@given(coef, coef)
def test_kn_identity(a, b):
    S = TracefreeSym2(a, b).matrix
    t = np.trace(S @ S)
    assert math.isclose(float(kn_norm_sq(S)), 4 * (2 - t) ** 2, rel_tol=1e-10, abs_tol=1e-10)


@given(pos, pos, pos, st.floats(1e-3, 0.5), coef, coef)
def test_assembled_matches_closed_form(dg, eta, om2, s, a, b):
    S = TracefreeSym2(a, b).matrix
    c = leading_components(dg, eta, om2, s, S)
    k1 = float(kretschmann_assembled(c))
    k2 = float(ktilde_formula(dg, eta, om2, s, np.trace(S @ S)))
    assert math.isclose(k1, k2, rel_tol=1e-9, abs_tol=1e-12 * max(1.0, abs(k2)))


@given(st.floats(0.05, 1.0), st.floats(0.1, 1.0), st.floats(-1.0, 1.0))
@small
def test_digamma_is_four_on_initial_line(v, slope, a):
    data = PulseData(PulseProfile.linear(slope), (TracefreeSym2(1.0, a),))
    assert math.isclose(float(data.geometry(0).digamma(v, 0.0)), 4.0, abs_tol=1e-12)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), pos, pos)
def test_gronwall_monotone(M, dM, lv, le):
    r = Rectangle(0.0, lv, 0.0, le)
    big = Rectangle(0.0, lv + 0.5, 0.0, le)
    assert gronwall_bound(M, 0.0, r) == 0.0
    assert gronwall_bound(M + dM, 1.0, r) >= gronwall_bound(M, 1.0, r)
    assert gronwall_bound(M, 1.0, big) >= gronwall_bound(M, 1.0, r)
    assert gronwall_bound(M, 1.0, r) >= 1.0


def test_gronwall_overflow_is_infinite():
    assert gronwall_bound(50.0, 1.0, Rectangle(0, 10, 0, 10)) == math.inf


def _op(c):
    return LinearGoursatOp(c[0], c[1], lambda v, e: c[2] * v, lambda v, e: c[3] * e)


@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4), st.floats(-2, 2), st.floats(-2, 2))
@small
def test_edge_data_reproduced(c, x0, y0):
    g = CharGrid.uniform(Rectangle(0, 1, 0, 1), 17, 23)
    sol = solve_linear(_op(c), g, 1.0, lambda v, e: v, lambda v: x0 + np.sin(v), lambda e: y0 * e)
    assert np.array_equal(sol.X[:, 0, 0], x0 + np.sin(g.v))
    assert np.array_equal(sol.Y[0, :, 0], y0 * g.eta)


@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4))
@small
def test_direct_and_picard_agree(c):
    op = _op(c)
    g = CharGrid.uniform(Rectangle(0, 1, 0, 1), 17, 17)
    a = solve_linear(op, g, 1.0, 0.5, lambda v: np.cos(v), lambda e: e)
    b = solve_first_order(op.as_problem(1.0, 0.5, lambda v: np.cos(v), lambda e: e), g, tol=1e-14, max_iter=200)
    assert np.max(np.abs(a.X - b.X)) < 1e-11
    assert np.max(np.abs(a.Y - b.Y)) < 1e-11


_DATA = PulseData(PulseProfile.linear(), (TracefreeSym2(1.0, 0.0),))
_GEOM = _DATA.geometry(0)
_GRID = singular_grid(_GEOM, 1.0, 17, 257, 1e-3)


@given(st.floats(-3.0, 3.0), st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
@small
def test_sigma_extraction_recovers_pole(sp, c1, c2):
    H = np.full(_GRID.shape, np.nan)
    s = _GEOM.sigma(_GRID.v[-1], _GRID.eta)
    H[-1] = (-sp + c1 * s * np.log(s) + c2 * s) / s
    sf = extract_sigma(H, _GEOM, _GRID, 1e-3, 1e-2, 8, [_GRID.nv - 1])
    assert abs(sf.sigma_prime[0] - sp) < 1e-8


@given(st.floats(0.0, 2.5), st.floats(0.1, 10.0), st.floats(-1.0, 1.0))
def test_rate_ignores_lapse_scale(tr, scale, q):
    s = np.geomspace(1e-3, 1e-2, 16)
    om2 = s ** q
    k1 = ktilde_formula(1.0, 0.7, om2, s, tr)
    k2 = ktilde_formula(1.0, 0.7, scale * om2, s, tr)
    slope = lambda k: np.polyfit(np.log(s), np.log(k), 1)[0]
    assert math.isclose(slope(k1), slope(k2), abs_tol=1e-9)


@given(st.recursive(st.floats(allow_nan=True) | st.integers() | st.booleans(),
                    lambda ch: st.lists(ch, max_size=4) | st.dictionaries(st.text(max_size=3), ch, max_size=4),
                    max_leaves=12))
def test_jsonable_has_no_nonfinite(obj):
    import json
    json.dumps(to_jsonable(obj), allow_nan=False)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_csv_float_round_trip(x):
    s = _fmt(x)
    assert float(s) == x
    assert not s.startswith("-0.0") or x != 0
