import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from semicontrol import (
    INF,
    BoundaryField,
    EllipticCoefficients,
    GridSpec,
    Nonlinearity,
    SpaceTimeField,
    SpatialField,
    ValidationError,
    check_nonlinearity,
    lp_norm,
    truncate,
)
from semicontrol.core import CATALOG, bochner_norm, h1_seminorm_sq, inner

finite = st.floats(-1e6, 1e6, allow_nan=False)
# magnitudes whose eighth powers stay normal floats
moderate = st.one_of(st.just(0.0), st.floats(1e-3, 100), st.floats(-100, -1e-3))


# -- grids and fields ------------------------------------------------------


def test_grid_geometry():
    g = GridSpec((2.0, 1.0), (5, 3), nt=4, T=2.0)
    assert g.n == 2 and g.num_nodes == 15
    assert g.spacing == (0.5, 0.5)
    assert g.tau == 0.5
    assert g.time_weights.tolist() == [0.0, 0.5, 0.5, 0.5, 0.5]
    assert g.weights.sum() == pytest.approx(2.0)
    assert g.boundary_index.size == 15 - 3
    # C-order numbering: the last axis varies fastest
    assert g.coords[1].tolist() == [0.0, 0.5]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(lengths=(1.0,), nx=(2,)),
        dict(lengths=(0.0,), nx=(5,)),
        dict(lengths=(1.0, 1.0), nx=(5,)),
        dict(lengths=(1.0,) * 4, nx=(3,) * 4),
        dict(lengths=(1.0,), nx=(5,), nt=0, T=1.0),
        dict(lengths=(1.0,), nx=(5,), nt=4),
        dict(lengths=(1.0,), nx=(5,), nt=4, T=-1.0),
        dict(lengths=(1.0, 1.0, 1.0), nx=(2000, 2000, 2000)),
    ],
)
def test_grid_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


def test_boundary_weights_sum_to_perimeter():
    g = GridSpec((2.0, 1.0), (9, 5))
    assert g.boundary_weights.sum() == pytest.approx(6.0)
    g3 = GridSpec((1.0, 2.0, 3.0), (4, 5, 6))
    assert g3.boundary_weights.sum() == pytest.approx(2 * (2 + 3 + 6))


def test_fields_validate_shape_and_finiteness():
    g = GridSpec((1.0,), (5,), nt=2, T=1.0)
    with pytest.raises(ValueError):
        SpatialField(g, np.zeros(4))
    with pytest.raises(ValueError):
        SpatialField(g, [0, 0, np.nan, 0, 0])
    with pytest.raises(ValueError):
        SpaceTimeField(g, np.zeros((2, 5)))
    with pytest.raises(ValueError):
        SpaceTimeField(GridSpec((1.0,), (5,)), np.zeros((1, 5)))
    with pytest.raises(ValueError):
        BoundaryField(g, np.zeros(3))
    f = SpatialField(g, np.arange(5.0))
    with pytest.raises(ValueError):
        f.values[0] = 1.0  # read-only


# -- truncation ------------------------------------------------------------


@pytest.mark.parametrize("s,k,expected", [(3.5, 2, 2), (0.5, 3, 0.5), (-5, 1, -1)])
def test_truncate_examples(s, k, expected):
    assert truncate(s, k) == expected


@pytest.mark.parametrize("k", [0, -1.0])
def test_truncate_rejects_nonpositive_level(k):
    with pytest.raises(ValueError):
        truncate(1.0, k)


@given(finite, finite, st.floats(1e-6, 1e6))
def test_truncate_nonexpansive_and_bounded(s, t, k):
    ps, pt = truncate(s, k), truncate(t, k)
    assert abs(ps - pt) <= abs(s - t)
    assert abs(ps) <= k
    if abs(s) <= k:
        assert ps == s
    assert truncate(ps, k) == ps


# -- norms -----------------------------------------------------------------


def test_lp_norm_examples():
    g = GridSpec((1.0, 1.0), (9, 9))
    assert lp_norm(SpatialField(g, np.ones(g.num_nodes)), 2) == pytest.approx(1.0, abs=1e-14)
    assert lp_norm(SpatialField.zeros(g), 3.5) == 0.0
    g1 = GridSpec((1.0,), (257,))
    s = SpatialField.from_function(g1, lambda x: np.sin(np.pi * x))
    assert lp_norm(s, 2) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert lp_norm(s, INF) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        lp_norm(s, 0.5)


def test_lp_norm_time_rule_skips_initial_level():
    g = GridSpec((1.0,), (5,), nt=4, T=1.0)
    v = np.zeros((5, 5))
    v[0] = 100.0
    assert lp_norm(SpaceTimeField(g, v), 2) == 0.0
    v[1:] = 1.0
    assert lp_norm(SpaceTimeField(g, v), 1) == pytest.approx(1.0)


def test_quadrature_exact_for_affine_fields():
    # p=1 on a nonnegative affine field: trapezoid is exact
    g = GridSpec((2.0, 3.0), (7, 5))
    f = SpatialField.from_function(g, lambda x, y: 1.0 + 0.5 * x + 2.0 * y)
    exact = 2 * 3 * (1 + 0.5 * 1.0 + 2.0 * 1.5)
    assert lp_norm(f, 1) == pytest.approx(exact, rel=10 * g.num_nodes * np.finfo(float).eps)
    # p=2 equals the trapezoid sum of the square (which is not exact for affine^2)
    assert lp_norm(f, 2) ** 2 == pytest.approx(inner(f, f), rel=1e-14)


@given(hnp.arrays(float, 9 * 9, elements=moderate), st.floats(1, 8), st.floats(1, 8))
def test_normalized_lp_monotone_in_p(values, p, q):
    g = GridSpec((1.0, 1.0), (9, 9))
    f = SpatialField(g, values)
    lo, hi = sorted((p, q))
    a, b = lp_norm(f, lo, normalized=True), lp_norm(f, hi, normalized=True)
    assert a <= b * (1 + 1e-12) + 1e-300
    assert b <= lp_norm(f, INF) * (1 + 1e-12)


@given(hnp.arrays(float, (3, 5), elements=st.floats(-10, 10)))
def test_lp2_matches_inner(values):
    g = GridSpec((1.0,), (5,), nt=2, T=1.0)
    f = SpaceTimeField(g, values)
    assert lp_norm(f, 2) ** 2 == pytest.approx(inner(f, f), rel=1e-12, abs=1e-300)


def test_bochner_norm_examples():
    g = GridSpec((1.0, 1.0), (9, 9), nt=8, T=1.0)
    assert bochner_norm(SpaceTimeField(g, np.ones((9, 81))), 2, 2) == pytest.approx(1.0)
    assert bochner_norm(SpaceTimeField.zeros(g), 3, 4) == 0.0
    a = lambda t: 1 + t
    b = lambda x, y: np.cos(x) * (1 + y)
    field = SpaceTimeField.from_function(g, lambda t, x, y: a(t) * b(x, y))
    sigma, gamma = 3.0, 1.5
    at = SpaceTimeField.from_function(g, lambda t, x, y: a(t) + 0 * x)
    norm_a = np.sum(g.time_weights * np.abs(at.values[:, 0]) ** sigma) ** (1 / sigma)
    norm_b = lp_norm(SpatialField.from_function(g, b), gamma)
    assert bochner_norm(field, sigma, gamma) == pytest.approx(norm_a * norm_b, rel=1e-12)
    assert bochner_norm(field, 2, 2) == pytest.approx(lp_norm(field, 2), rel=1e-12)
    with pytest.raises(ValueError):
        bochner_norm(field, 0.5, 2)


def test_h1_seminorm_of_linear_function():
    g = GridSpec((1.0, 2.0), (5, 9))
    y = SpatialField.from_function(g, lambda x, y: 3 * x - y)
    assert h1_seminorm_sq(y.values, g) == pytest.approx((9 + 1) * 2.0)


# -- nonlinearities --------------------------------------------------------


def test_check_nonlinearity_examples():
    rep = check_nonlinearity(Nonlinearity("cubic", coef=1.0), R=10.0, samples=201)
    assert rep.min_slope == 0.0
    f = Nonlinearity("cubic_minus_linear", coef=1.0, lam=2.0)
    assert f.lambda_f == 2.0
    rep = check_nonlinearity(f, R=10.0, samples=201)
    assert rep.min_slope == pytest.approx(-2.0)
    with pytest.raises(ValidationError) as err:
        check_nonlinearity(Nonlinearity("zero", offset=1.0), R=10.0, samples=11)
    assert "f(0)" in str(err.value)


def test_check_nonlinearity_names_witness():
    f = Nonlinearity("cubic_minus_linear", coef=1.0, lam=2.0, lambda_f=1.0)
    with pytest.raises(ValidationError) as err:
        check_nonlinearity(f, R=1.0, samples=101)
    assert err.value.witness == pytest.approx(0.0, abs=0.02)
    assert "lambda_f" in str(err.value)


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_passes_at_large_range(name):
    check_nonlinearity(Nonlinearity(name, coef=1.0, lam=1.5), R=1e3, samples=4001)


def test_nonlinearity_weight():
    w = np.array([0.0, 1.0, 2.0])
    f = Nonlinearity("cubic", weight=w)
    assert f.value(np.array([2.0, 2.0, 2.0])).tolist() == [0.0, 8.0, 16.0]
    assert f.derivative(np.array([1.0, 1.0]), nodes=np.array([1, 2])).tolist() == [3.0, 6.0]
    with pytest.raises(ValidationError):
        Nonlinearity("cubic", weight=np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        Nonlinearity("sine")


@given(st.sampled_from(CATALOG), st.floats(0, 5), st.floats(0, 5), finite.filter(lambda s: abs(s) < 20))
def test_nonlinearity_derivative_matches_difference(name, coef, lam, s):
    f = Nonlinearity(name, coef=coef, lam=lam)
    h = 1e-6 * max(1.0, abs(s))
    fd = (f.base(s + h) - f.base(s - h)) / (2 * h)
    assert f.base_derivative(s) == pytest.approx(fd, rel=1e-5, abs=1e-5)


# -- coefficients ----------------------------------------------------------


def test_coefficients():
    c = EllipticCoefficients(np.array([[1.0, 0.0], [0.0, 2.0]]), 0.5)
    assert c.kind == "matrix" and c.lambda_a == pytest.approx(1.0)
    assert EllipticCoefficients(np.array([2.0, 3.0, 0.5])).lambda_a == 0.5
    with pytest.raises(ValidationError):
        EllipticCoefficients(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ValidationError):
        EllipticCoefficients(1.0, -1.0)
    with pytest.raises(ValueError):
        c.check_grid(GridSpec((1.0,), (5,)))
