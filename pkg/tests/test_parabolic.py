import numpy as np
import pytest
import sympy as sp_
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import fsolve

import oracles
import problems
from semicontrol import (
    INF,
    EllipticCoefficients,
    GridSpec,
    Nonlinearity,
    ParabolicProblem,
    SolveOptions,
    SolverDivergence,
    SpaceTimeField,
    SpatialField,
    ValidationError,
    lp_norm,
    solve_adjoint,
    solve_state,
)
from semicontrol.parabolic import (
    assemble_operator,
    energy_ratio,
    linf_scaling_check,
    solve_state_truncated,
    stiffness_matrix,
)


# -- operator --------------------------------------------------------------


def test_1d_stencil():
    g = GridSpec((1.0,), (5,))
    A = assemble_operator(EllipticCoefficients(), g, "dirichlet").matrix.toarray()
    expected = np.array([[32, -16, 0], [-16, 32, -16], [0, -16, 32]], dtype=float)
    np.testing.assert_allclose(A, expected, atol=1e-12)
    A1 = assemble_operator(EllipticCoefficients(1.0, 1.0), g, "dirichlet").matrix.toarray()
    np.testing.assert_allclose(A1, expected + np.eye(3), atol=1e-12)


def test_operator_matches_kronecker_stencils():
    g = GridSpec((1.0, 2.0), (6, 9))
    h = g.spacing
    A = assemble_operator(EllipticCoefficients(), g, "dirichlet").matrix.toarray()
    ref = oracles.kron_sum([oracles.lap1d_dirichlet(m - 2, hh) for m, hh in zip(g.nx, h)])
    np.testing.assert_allclose(A, ref, atol=1e-10)
    N = assemble_operator(EllipticCoefficients(1.0, 1.0), g, "neumann").matrix.toarray()
    ref = oracles.kron_sum([oracles.lap1d_neumann(m, hh) for m, hh in zip(g.nx, h)]) + np.eye(g.num_nodes)
    np.testing.assert_allclose(N, ref, atol=1e-10)


def test_operator_rejects_unknown_bc():
    with pytest.raises(ValueError):
        assemble_operator(EllipticCoefficients(), GridSpec((1.0,), (5,)), "robin")


def _operator_error(a, nx):
    x, y = sp_.symbols("x y")
    expr = sp_.sin(2 * x) * sp_.exp(y)
    grad = [sp_.diff(expr, x), sp_.diff(expr, y)]
    A = sp_.Matrix(a)
    flux = A.T * sp_.Matrix(grad)  # a_ij d_i y contributes to component j
    div = sp_.diff(flux[0], x) + sp_.diff(flux[1], y)
    exact_fn = sp_.lambdify((x, y), -div, "numpy")
    val_fn = sp_.lambdify((x, y), expr, "numpy")
    g = GridSpec((1.0, 1.0), (nx, nx))
    K = stiffness_matrix(EllipticCoefficients(np.array(a, dtype=float)), g)
    vals = val_fn(*g.coords.T)
    action = (K @ vals) / g.weights
    idx = g.interior_index
    return np.max(np.abs(action[idx] - exact_fn(*g.coords[idx].T)))


@pytest.mark.parametrize("a", [[[1.0, 0.0], [0.0, 2.0]], [[2.0, 0.5], [0.5, 1.0]]])
def test_operator_second_order_on_smooth_function(a):
    errs = [_operator_error(a, nx) for nx in (9, 17, 33)]
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_dirichlet_operator_symmetric_for_nodal_coefficient():
    g = GridSpec((1.0, 1.0), (7, 7))
    a = 1.0 + g.coords[:, 0] ** 2
    A = assemble_operator(EllipticCoefficients(a), g, "dirichlet").matrix
    assert abs(A - A.T).max() < 1e-10


def test_nonelliptic_coefficients_rejected():
    with pytest.raises(ValidationError):
        EllipticCoefficients(np.array([[1.0, 2.0], [2.0, 1.0]]))


# -- state -----------------------------------------------------------------


def test_zero_data_gives_zero_state():
    p = problems.parabolic("cubic")
    y = solve_state(p, SpaceTimeField.zeros(p.grid))
    assert np.all(y.values == 0.0)


def test_state_matches_dense_newton_oracle_and_is_positive(rng):
    # five unknowns; each implicit Euler step solved independently by fsolve
    g = GridSpec((1.0,), (7,), nt=6, T=0.6)
    y0 = SpatialField.from_function(g, lambda x: np.sin(np.pi * x))
    p = ParabolicProblem(g, EllipticCoefficients(), Nonlinearity("cubic"), y0, SpaceTimeField.zeros(g), 1.0)
    u = SpaceTimeField(g, rng.random((7, 7)) * 10)
    y = solve_state(p, u).values
    A = oracles.lap1d_dirichlet(5, 1 / 6)
    prev = y0.values[1:-1]
    for m in range(1, 7):
        step = lambda v: v + 0.1 * (A @ v + v**3) - prev - 0.1 * u.values[m, 1:-1]
        prev = fsolve(step, prev, xtol=1e-12)
        np.testing.assert_allclose(y[m, 1:-1], prev, atol=1e-11)
    assert y.min() >= 0.0


def test_newton_residual_within_tolerance():
    p = problems.parabolic("cubic", y0=lambda x, y: problems.sinsin(x, y))
    g = p.grid
    u = SpaceTimeField.from_function(g, lambda t, x, y: 30 * np.cos(3 * x) * (1 + t))
    y = solve_state(p, u).values
    nodes = p.operator.nodes
    for m in range(1, g.nt + 1):
        rhs = y[m - 1, nodes] + g.tau * u.values[m, nodes]
        res = p.step_matrix @ y[m, nodes] + g.tau * y[m, nodes] ** 3 - rhs
        assert np.max(np.abs(res)) <= 1e-10 * (1 + np.max(np.abs(rhs)))


def test_divergence_reports_step_and_residual():
    p = problems.parabolic("cubic")
    u = SpaceTimeField(p.grid, np.full((p.grid.nt + 1, p.grid.num_nodes), 1e9))
    with pytest.raises(SolverDivergence) as err:
        solve_state(p, u, SolveOptions(max_newton=2))
    assert err.value.step == 1
    assert err.value.residual > 0


def test_weak_continuity_of_control_to_state(rng):
    p = problems.parabolic("cubic")
    u = problems.random_control(p, rng, 5.0)
    v = problems.random_control(p, rng, 5.0)
    y = solve_state(p, u)
    dists = []
    for j in range(1, 7):
        yj = solve_state(p, SpaceTimeField(p.grid, u.values + 2.0**-j * v.values))
        dists.append(lp_norm(SpaceTimeField(p.grid, yj.values - y.values), 2))
    assert all(b < a for a, b in zip(dists, dists[1:]))
    assert dists[-1] < 0.05 * dists[0]


# -- truncated state -------------------------------------------------------


def test_truncated_state_with_huge_level_matches(rng):
    p = problems.parabolic("cubic", y0=lambda x, y: problems.sinsin(x, y))
    u = problems.random_control(p, rng, 10.0)
    y = solve_state(p, u)
    yk = solve_state_truncated(p, u, 1e6)
    assert np.max(np.abs(y.values - yk.values)) <= 1e-8


def test_truncated_state_zero_data():
    p = problems.parabolic("cubic")
    assert np.all(solve_state_truncated(p, SpaceTimeField.zeros(p.grid), 0.5).values == 0.0)


def test_truncated_level_below_initial_data_rejected():
    p = problems.parabolic("cubic", y0=lambda x, y: 2 * problems.sinsin(x, y))
    with pytest.raises(ValueError):
        solve_state_truncated(p, SpaceTimeField.zeros(p.grid), 1.0)


def test_truncated_nonlinearity_bounded_for_large_control():
    p = problems.parabolic("cubic")
    u = SpaceTimeField(p.grid, np.full((p.grid.nt + 1, p.grid.num_nodes), 200.0))
    yk = solve_state_truncated(p, u, 1.0)
    assert yk.values.max() > 1.0  # the truncation is actually exercised
    fk = p.f.value(np.clip(yk.values, -1, 1))
    assert np.max(np.abs(fk)) <= 1.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 30.0), st.floats(1.0, 5.0))
def test_truncation_consistency(scale, k):
    p = problems.parabolic("cubic")
    u = SpaceTimeField.from_function(p.grid, lambda t, x, y: scale * problems.sinsin(x, y) + 0 * t)
    yk = solve_state_truncated(p, u, k)
    if np.max(np.abs(yk.values)) <= k:
        y = solve_state(p, u)
        assert np.max(np.abs(y.values - yk.values)) <= 10 * 1e-10


# -- adjoint ---------------------------------------------------------------


def test_adjoint_vanishes_on_target():
    p = problems.parabolic("cubic")
    y = SpaceTimeField(p.grid, p.yd.values)
    assert np.all(solve_adjoint(p, y).values == 0.0)


def test_adjoint_linear_in_source(rng):
    p = problems.parabolic("cubic")
    y = problems.random_control(p, rng)
    y = SpaceTimeField(p.grid, np.where(p.grid.boundary_mask, 0.0, y.values))
    tr = solve_adjoint(p, y, "tracking").values
    st_ = solve_adjoint(p, y, "state_only").values
    tg = solve_adjoint(p, y, "target_only").values
    assert np.max(np.abs(tr - (st_ - tg))) <= 1e-10
    with pytest.raises(ValueError):
        solve_adjoint(p, y, "bogus")


def test_adjoint_matches_dense_backward_solve():
    p = problems.parabolic_1d("zero")
    g = p.grid
    u = SpaceTimeField.from_function(g, lambda t, x: np.cos(3 * x) * t)
    y = solve_state(p, u)
    dense = oracles.DenseParabolic(g.nx, g.lengths, g.nt, g.T)
    ref = dense.adjoint(y.values, p.yd.values)
    assert np.max(np.abs(solve_adjoint(p, y).values - ref)) <= 1e-10


# -- a priori estimates ----------------------------------------------------


def test_energy_ratio_rejects_zero_data():
    p = problems.parabolic("zero")
    with pytest.raises(ValueError):
        energy_ratio(p, SpaceTimeField.zeros(p.grid))


def test_energy_ratio_scale_invariant_for_linear_problem(rng):
    p = problems.parabolic("zero")
    u = problems.random_control(p, rng)
    r1 = energy_ratio(p, u)
    r2 = energy_ratio(p, SpaceTimeField(p.grid, 2 * u.values))
    assert r1 == pytest.approx(r2, rel=1e-12)


def test_energy_ratio_bounded_over_random_ensemble(rng):
    p = problems.parabolic("cubic")
    calib = energy_ratio(p, SpaceTimeField.from_function(p.grid, lambda t, x, y: problems.sinsin(x, y) + 0 * t))
    ratios = [energy_ratio(p, problems.random_control(p, rng, 3.0)) for _ in range(20)]
    assert np.all(np.isfinite(ratios))
    assert max(ratios) <= 2 * calib


def test_linf_scaling_linear_problem_constant(rng):
    p = problems.parabolic("zero")
    u = problems.random_control(p, rng)
    table = linf_scaling_check(p, u, [1, 2, 4])
    ratios = [r for _, r in table]
    assert max(ratios) - min(ratios) <= 1e-12 * max(ratios)


def test_linf_scaling_cubic_damped():
    p = problems.parabolic("cubic")
    u = SpaceTimeField.from_function(p.grid, lambda t, x, y: 5 * problems.sinsin(x, y) + 0 * t)
    ratios = [r for _, r in linf_scaling_check(p, u, [1, 2, 4, 8])]
    assert max(ratios) <= ratios[0] * 1.01


def test_linf_scaling_constant_initial_data():
    c = 0.7
    p = problems.parabolic("zero", y0=lambda x, y: c + 0 * x)
    table = linf_scaling_check(p, SpaceTimeField.zeros(p.grid), [1.0])
    assert table[0][1] == pytest.approx(abs(c) / c)


def test_linf_scaling_rejects_bad_exponents():
    p = problems.parabolic("zero")
    u = SpaceTimeField.zeros(p.grid)
    with pytest.raises(ValueError, match="1/sigma"):
        linf_scaling_check(p, u, [1.0], sigma=2.0, gamma=2.0)
    with pytest.raises(ValueError):
        linf_scaling_check(p, u, [1.0], sigma=1.0, gamma=INF)
