"""Sampled Lipschitz estimates: exact laws on fixed pair sets, lower-bound
behaviour against known constants, and reproducibility."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipdyn.config import load_fixture
from lipdyn.errors import DegenerateRegion, DomainError, ParseError
from lipdyn.lipcore import (
    Box,
    Combination,
    Expr,
    FunctionMap,
    Iterate,
    Rect,
    SamplingBudget,
    coordinate_names,
    estimate_lip,
    estimate_reverse_lip,
    lip_distance,
    lip_norm,
    maxnorm,
    sample_pairs,
    sup_norm,
)

FIXED = SamplingBudget(pairs=256, seed=3, refine_depth=0)


def wavy():
    return FunctionMap(lambda x: np.sin(3 * x) + 0.5 * x, dim=1)


def bumpy():
    return FunctionMap(lambda x: np.abs(x - 0.2) + 0.3 * x ** 2, dim=1)


def planar():
    return FunctionMap(lambda X: np.stack([np.sin(X[:, 0]) * X[:, 1], np.cos(X[:, 1]) - X[:, 0]], axis=1),
                       dim=2, scalar=False)


# ---------------------------------------------------------------- geometry


def test_maxnorm_is_the_largest_coordinate():
    assert maxnorm(np.array([[3.0, -4.0], [0.5, 0.25]])).tolist() == [4.0, 0.5]


def test_box_is_a_max_norm_ball():
    b = Box([1.0, -1.0], 0.5)
    assert b.contains([[1.5, -0.5], [1.2, -1.3]]).tolist() == [True, True]
    assert not b.contains([1.51, -1.0])[0]
    assert b.corners().shape == (4, 2)
    assert b.subset_of(Rect([0.5, -1.5], [1.5, -0.5]))


def test_rect_split_and_intersection():
    r = Rect([0, 0], [1, 2])
    kids = r.split()
    assert len(kids) == 4
    assert sum(np.prod(k.hi_a - k.lo_a) for k in kids) == pytest.approx(2.0)
    assert Rect([0, 0], [1, 1]).intersect(Rect([2, 2], [3, 3])).is_empty()


def test_box_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        Box([0.0], 0.0)


# ---------------------------------------------------------------- expressions


def test_expression_grammar_evaluates_vectorized():
    e = Expr("x^2 + sin(y) - abs(x)", coordinate_names(2))
    X = np.array([[2.0, 0.0], [-1.0, math.pi / 2]])
    np.testing.assert_allclose(e(X), [2.0, 1.0])


@pytest.mark.parametrize("bad", ["x +", "foo(x)", "x.y", "'a'"])
def test_malformed_expressions_are_parse_errors(bad):
    with pytest.raises(ParseError):
        Expr(bad, coordinate_names(1))


def test_boundary_belongs_to_first_matching_piece():
    f = load_fixture("four_piece")
    # x = 0.1 is claimed by "x <= 1" (x^2), not by "x < 0.1"
    assert f(np.array([0.1]))[0] == pytest.approx(0.01)
    # x = 1 belongs to x^2 rather than the affine tail
    assert f(np.array([1.0]))[0] == 1.0


def test_points_outside_domain_raise():
    f = load_fixture("logistic")
    with pytest.raises(DomainError):
        f(np.array([1.5]))


# ---------------------------------------------------------------- fixed-sample laws


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(-50, 50, allow_nan=False).filter(lambda a: abs(a) > 1e-6))
def test_scaling_law_on_fixed_pairs(alpha):
    region = Box([0.1], 1.0)
    pairs = sample_pairs(region, FIXED)
    f = wavy()
    base = estimate_lip(f, region, FIXED, pairs=pairs).value
    scaled = estimate_lip(Combination([(alpha, f)]), region, FIXED, pairs=pairs).value
    assert scaled == pytest.approx(abs(alpha) * base, rel=1e-12)


@pytest.mark.parametrize("k", [-3, -1, 1, 2, 5])
def test_scaling_by_powers_of_two_is_bit_exact(k):
    region = Box([0.1], 1.0)
    pairs = sample_pairs(region, FIXED)
    f = wavy()
    alpha = 2.0 ** k
    base = estimate_lip(f, region, FIXED, pairs=pairs).value
    assert estimate_lip(Combination([(alpha, f)]), region, FIXED, pairs=pairs).value == alpha * base


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 50))
def test_triangle_law_on_fixed_pairs(a, b, seed):
    budget = SamplingBudget(pairs=128, seed=seed, refine_depth=0)
    region = Box([0.0], 0.8)
    pairs = sample_pairs(region, budget)
    f, g = Combination([(a, wavy())]), Combination([(b, bumpy())])
    total = estimate_lip(Combination([(1.0, f), (1.0, g)]), region, budget, pairs=pairs).value
    parts = estimate_lip(f, region, budget, pairs=pairs).value + estimate_lip(g, region, budget, pairs=pairs).value
    assert total <= parts * (1 + 1e-12) + 1e-14


def test_triangle_law_in_two_dimensions():
    region = Box([0.0, 0.0], 1.0)
    pairs = sample_pairs(region, FIXED)
    f, g = planar(), FunctionMap(lambda X: X ** 2, dim=2, scalar=False)
    total = estimate_lip(Combination([(1.0, f), (1.0, g)]), region, FIXED, pairs=pairs).value
    parts = estimate_lip(f, region, FIXED, pairs=pairs).value + estimate_lip(g, region, FIXED, pairs=pairs).value
    assert total <= parts * (1 + 1e-12)


# ---------------------------------------------------------------- sandwich and convergence


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 1000), pairs=st.integers(8, 512))
def test_estimates_never_exceed_known_constants(seed, pairs):
    budget = SamplingBudget(pairs=pairs, seed=seed)
    cases = [
        (FunctionMap(lambda x: 2 * x - 1, dim=1), Box([0.3], 2.0), 2.0),
        (FunctionMap(np.abs, dim=1), Box([0.1], 1.0), 1.0),
        (load_fixture("cubic"), Box([0.0], 2.0), 11.0),
    ]
    for m, region, true in cases:
        assert estimate_lip(m, region, budget).value <= true * (1 + 1e-12)


def test_affine_constant_is_recovered():
    est = estimate_lip(load_fixture("affine2x"), Box([0.0], 1.0))
    assert est.value == pytest.approx(2.0, abs=1e-12)
    assert est.is_lower_bound
    assert estimate_reverse_lip(load_fixture("affine2x"), Box([0.0], 1.0)).value == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("center, radius, sup_deriv", [
    (0.3, 0.5, 1.0),              # sup |cos| on [-0.2, 0.8] is cos 0
    (1.0, 0.5, 5.75),             # x^3 - x on [0.5, 1.5]: 3 * 1.5^2 - 1
])
def test_smooth_maps_converge_to_sup_of_derivative(center, radius, sup_deriv):
    m = FunctionMap(np.sin, dim=1) if sup_deriv == 1.0 else load_fixture("cubic")
    region = Box([center], radius)
    values = [estimate_lip(m, region, SamplingBudget(pairs=p)).value for p in (16, 256, 4096)]
    assert values[-1] == pytest.approx(sup_deriv, abs=1e-6)
    assert values[-1] <= sup_deriv + 1e-12


def test_kink_is_found_by_refinement():
    # |x - 0.2| + 0.3 x^2 has one-sided slopes up to 1 + 0.6 * 0.9 at the far end
    est = estimate_lip(bumpy(), Box([0.0], 0.9))
    assert est.value == pytest.approx(1 + 0.6 * 0.9, abs=1e-6)


def test_monotone_under_region_enlargement():
    small, large = Box([0.0], 0.3), Box([0.0], 1.0)
    ps = sample_pairs(small, FIXED)
    pl = sample_pairs(large, FIXED)
    union = (np.concatenate([ps[0], pl[0]]), np.concatenate([ps[1], pl[1]]))
    f = wavy()
    assert estimate_lip(f, large, FIXED, pairs=union).value >= estimate_lip(f, small, FIXED, pairs=ps).value


def test_estimates_are_bit_reproducible():
    region = Box([0.2, -0.1], 0.7)
    a = estimate_lip(planar(), region, SamplingBudget(pairs=300, seed=11))
    b = estimate_lip(planar(), region, SamplingBudget(pairs=300, seed=11))
    assert a.value == b.value
    assert a.argpair == b.argpair
    assert a.to_json() == b.to_json()


def test_jump_makes_the_literal_piecewise_logistic_non_lipschitz():
    lit = load_fixture("piecewise_logistic_literal")
    fixed = load_fixture("piecewise_logistic")
    region = Box([0.4794], 1e-3)
    assert estimate_lip(lit, region).value > 1e3
    assert estimate_lip(fixed, region).value < 3.0


def test_tiny_or_out_of_domain_regions_are_rejected():
    f = load_fixture("logistic")
    with pytest.raises(DegenerateRegion):
        estimate_lip(f, Box([0.5], 1e-17))
    with pytest.raises(DomainError):
        estimate_lip(f, Box([0.9], 0.2))


def test_lip_norm_and_distance():
    region = Box([0.0], 1.0)
    two_x = load_fixture("affine2x")
    assert lip_norm(two_x, region) == pytest.approx(2.0)
    shifted = FunctionMap(lambda x: 2 * x + 3.0, dim=1)
    assert lip_distance(shifted, two_x, region) == pytest.approx(3.0)
    assert sup_norm(FunctionMap(np.sin, dim=1), Box([0.0], 2.0)) == pytest.approx(1.0, abs=1e-9)


def test_iterate_composes():
    f = load_fixture("logistic")
    x = np.array([[0.3]])
    np.testing.assert_allclose(Iterate(f, 2).eval_points(x), f.eval_points(f.eval_points(x)))
