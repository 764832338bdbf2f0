import math

import numpy as np
import pytest

from charfront.errors import IncompatibleCorner, NonConvergence, NonFinite, SourceNotVanishing
from charfront.goursat import (
    CharGrid,
    GoursatProblem,
    LinearGoursatOp,
    Rectangle,
    gronwall_bound,
    solve_first_order,
    solve_linear,
    solve_second_order,
    solve_singular,
)

from conftest import UNIT, unit_grid

# I0(2) + I1(2) and J0(2), from scipy.special at double precision
BESSEL_I_SUM = 3.870222156973396
BESSEL_J0_2 = 0.22389077914123562


def coupled():
    return GoursatProblem(1, lambda v, e, x, y: y, lambda v, e, x, y: x, 1.0, 1.0)


def test_rectangle_rejects_empty_ranges():
    with pytest.raises(ValueError):
        Rectangle(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        CharGrid.uniform(UNIT, 1, 5)


def test_zero_rhs_keeps_constant_data():
    prob = GoursatProblem(1, lambda v, e, x, y: 0 * x, lambda v, e, x, y: 0 * y, 1.0, 1.0)
    sol = solve_first_order(prob, unit_grid(16))
    assert np.all(sol.X == 1.0)
    assert np.all(sol.Y == 1.0)


def test_coupled_system_matches_bessel_series():
    sol = solve_first_order(coupled(), unit_grid(128))
    assert abs(sol.X[-1, -1, 0] - BESSEL_I_SUM) < 1e-5
    assert abs(sol.Y[-1, -1, 0] - BESSEL_I_SUM) < 1e-5


def test_coupled_system_second_order_convergence():
    errs = [abs(solve_first_order(coupled(), unit_grid(n)).X[-1, -1, 0] - BESSEL_I_SUM) for n in (16, 32, 64)]
    assert errs[0] / errs[1] >= 3.5
    assert errs[1] / errs[2] >= 3.5


def test_edge_data_reproduced_exactly():
    prob = GoursatProblem(1, lambda v, e, x, y: y * np.sin(v), lambda v, e, x, y: x - e,
                          lambda v: np.cos(3 * v), lambda e: 1 + e ** 2)
    g = unit_grid(20)
    sol = solve_first_order(prob, g)
    assert np.array_equal(sol.X[:, 0, 0], np.cos(3 * g.v))
    assert np.array_equal(sol.Y[0, :, 0], 1 + g.eta ** 2)


def test_marching_seed_does_not_change_fixed_point():
    prob = GoursatProblem(1, lambda v, e, x, y: -0.5 * x * y, lambda v, e, x, y: -0.5 * e * e * x * y + 2 * e * x,
                          lambda v: -v, 0.0)
    a = solve_first_order(prob, unit_grid(32), tol=1e-12, seed="previous")
    b = solve_first_order(prob, unit_grid(32), tol=1e-12, seed="zero")
    assert np.max(np.abs(a.X - b.X)) <= 1e-11
    assert np.max(np.abs(a.Y - b.Y)) <= 1e-11
    assert a.residual <= 1e-12


def test_nonconvergence_reports_cell():
    with pytest.raises(NonConvergence) as info:
        solve_first_order(coupled(), unit_grid(8), tol=1e-14, max_iter=1)
    assert info.value.cell == (0, 1) or info.value.cell == (1, 0)


def test_nonfinite_rhs_fails_fast():
    prob = GoursatProblem(1, lambda v, e, x, y: np.where(e > 0.5, np.nan, 0 * x), lambda v, e, x, y: 0 * y, 0.0, 0.0)
    with pytest.raises(NonFinite):
        solve_first_order(prob, unit_grid(8))


def test_linear_direct_solve_matches_picard():
    op = LinearGoursatOp(lambda v, e: 0.3 + v * e, -0.2, lambda v, e: np.sin(v), 0.1)
    g = unit_grid(24)
    F = lambda v, e: np.exp(v - e)
    direct = solve_linear(op, g, F, None, lambda v: 1 + v, lambda e: np.cos(e))
    picard = solve_first_order(op.as_problem(F, None, lambda v: 1 + v, lambda e: np.cos(e)), g, tol=1e-14)
    assert np.max(np.abs(direct.X - picard.X)) < 1e-12
    assert np.max(np.abs(direct.Y - picard.Y)) < 1e-12


def test_masked_nodes_are_not_computed():
    g = unit_grid(10)
    js = np.linspace(11, 4, 11).astype(int)
    sol = solve_first_order(coupled(), g, jstop=js)
    assert np.all(np.isnan(sol.X[~sol.valid]))
    assert np.all(np.isfinite(sol.X[sol.valid]))


def test_second_order_free_wave():
    g = unit_grid(16)
    V, E = g.mesh()
    Z = solve_second_order(lambda v, e, zv, ze, z: 0 * z, lambda v: v, lambda e: e, g)
    assert np.max(np.abs(Z - (V + E))) < 1e-14


def test_second_order_unit_source():
    g = unit_grid(16)
    V, E = g.mesh()
    Z = solve_second_order(lambda v, e, zv, ze, z: np.ones_like(z), 0.0, 0.0, g)
    assert np.max(np.abs(Z - V * E)) < 1e-14


def test_second_order_bessel_j0():
    errs = []
    for n in (32, 64):
        Z = solve_second_order(lambda v, e, zv, ze, z: -z, 1.0, 1.0, unit_grid(n), dZ0=0.0, dZ1=0.0)
        errs.append(abs(Z[-1, -1] - BESSEL_J0_2))
    assert errs[1] < 1e-5
    assert errs[0] / errs[1] >= 3.5


def test_second_order_corner_mismatch():
    with pytest.raises(IncompatibleCorner):
        solve_second_order(lambda v, e, zv, ze, z: 0 * z, 1.0, 2.0, unit_grid(4))


def test_singular_trivial():
    sol = solve_singular(1.0, 1.0, 1.0, 1.0, None, None, 0.0, unit_grid(16))
    assert np.all(sol.X == 0.0)
    assert np.all(sol.Y == 0.0)


def manufactured_error(n):
    g = unit_grid(n)
    V, E = g.mesh()
    F = lambda v, e: 6 * e ** 5 * np.sin(v) + e ** 4 * v
    G = lambda v, e: e ** 4 + e ** 5 * np.sin(v) + e ** 4 * v
    sol = solve_singular(1.0, 1.0, 1.0, 1.0, F, G, 0.0, g)
    err = max(np.max(np.abs(sol.X[..., 0] - E ** 5 * np.sin(V))), np.max(np.abs(sol.Y[..., 0] - E ** 4 * V)))
    return err, sol


def test_singular_manufactured_solution():
    e1, s1 = manufactured_error(32)
    e2, s2 = manufactured_error(64)
    assert e1 / e2 >= 3.5
    assert np.all(s2.X[:, 0, 0] == 0.0)


def test_singular_power_solution_converges():
    errs = []
    for n in (16, 32, 64):
        g = unit_grid(n)
        sol = solve_singular(-3.0, 0.0, 0.0, 0.0, lambda v, e: e ** 4, None, 0.0, g)
        errs.append(np.max(np.abs(sol.X[..., 0] - g.eta[None, :] ** 4)))
    assert errs[0] / errs[1] >= 3.5
    assert errs[1] / errs[2] >= 3.5


def test_singular_source_must_vanish():
    with pytest.raises(SourceNotVanishing):
        solve_singular(1.0, 0.0, 0.0, 0.0, lambda v, e: e, None, 0.0, unit_grid(16))


def test_gronwall_trivial_cases():
    assert gronwall_bound(2.0, 0.0, UNIT) == 0.0
    assert gronwall_bound(0.0, 3.5, UNIT) == 3.5


def test_gronwall_unit_constant():
    # M = 1, L = 1: e * 2 * exp(2e)
    assert math.isclose(gronwall_bound(1.0, 1.0, UNIT), 2 * math.e * math.exp(2 * math.e), rel_tol=1e-14)


def test_gronwall_ceiling_holds_for_coupled_solves():
    bound = gronwall_bound(1.0, 1.0, UNIT)
    for n in (8, 16, 32, 64):
        sol = solve_first_order(coupled(), unit_grid(n))
        assert max(np.max(np.abs(sol.X)), np.max(np.abs(sol.Y))) <= bound
