"""Intersections of complementary Lipschitz graphs."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipdyn.errors import NotOnSet, PreconditionFailed
from lipdyn.graphs import GraphFn
from lipdyn.transversal import (
    TransversalityProblem,
    check_hypotheses,
    find_intersection,
    l_transversal_graphs,
    uniqueness_check,
)


def affine_problem(a=0.3, b=0.1, c=0.2, r=1.0):
    return TransversalityProblem(1, 1, r, lambda Y: a * Y + b, lambda X: c * X)


def brute_force(theta, sigma, lo=-0.5, hi=0.5, step=1e-6):
    y = np.arange(lo, hi + step, step)[:, None]
    gap = np.abs(sigma(theta(y)) - y)[:, 0]
    return float(y[np.argmin(gap), 0])


def test_affine_pair_intersection():
    p = affine_problem()
    cert = find_intersection(p)
    assert cert.y1[0] == pytest.approx(0.02 / 0.94, abs=1e-9)
    assert cert.y2[0] == pytest.approx(0.3 * 0.02 / 0.94 + 0.1, abs=1e-9)
    assert cert.y1[0] == pytest.approx(brute_force(p.theta_t, p.sigma_t), abs=1e-6)
    assert cert.verdict == "transversal"


def test_observed_ratios_respect_the_contraction_bound():
    cert = find_intersection(affine_problem())
    assert cert.ratios
    eps = np.finfo(float).eps
    for a, b in zip(cert.steps, cert.steps[1:]):
        # the step itself carries an absolute rounding error of a few eps
        assert b <= cert.contraction_bound * a + 8 * eps


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-0.45, 0.45), b=st.floats(-0.2, 0.2), c=st.floats(-0.45, 0.45))
def test_iterate_stays_in_the_compactum_and_is_unique(a, b, c):
    p = TransversalityProblem(1, 1, 1.0, lambda Y: a * Y + b, lambda X: c * X + 0.5 * b)
    if not check_hypotheses(p).passed:
        return
    cert = find_intersection(p)
    assert abs(cert.y1[0]) <= 0.5 + 1e-12
    u = uniqueness_check(p, seeds=10)
    assert u["unique"]
    assert u["symmetric"]


def test_translated_graphs_vanish_at_the_origin():
    cert = find_intersection(affine_problem())
    assert cert.theta_star.at_center()[0] == 0.0
    assert cert.sigma_star.at_center()[0] == 0.0
    assert cert.lip_theta_star == pytest.approx(0.3)
    assert cert.lip_sigma_star == pytest.approx(0.2)


def test_hypotheses_failure_is_a_precondition_error():
    far = TransversalityProblem(1, 1, 1.0, lambda Y: 0.3 * Y + 0.45, lambda X: 0.2 * X)
    assert not check_hypotheses(far).passed
    with pytest.raises(PreconditionFailed):
        find_intersection(far)
    cert = find_intersection(far, override=True)
    assert cert.hypotheses_overridden


def test_planar_graphs():
    theta = lambda Y: 0.2 * Y[:, ::-1] + 0.05  # noqa: E731
    sigma = lambda X: -0.3 * X  # noqa: E731
    p = TransversalityProblem(2, 2, 1.0, theta, sigma)
    cert = find_intersection(p)
    y1, y2 = cert.y1, cert.y2
    np.testing.assert_allclose(theta(y1[None, :])[0], y2, atol=1e-12)
    np.testing.assert_allclose(sigma(y2[None, :])[0], y1, atol=1e-12)


@pytest.mark.parametrize("scale, verdict", [(0.99, "transversal"), (1.01, "rejected")])
def test_lipschitz_verdict_around_one(scale, verdict):
    w1 = GraphFn.from_function(lambda X: scale * np.abs(X), 1.0, 201)
    w2 = GraphFn.from_function(lambda X: 0.0 * X, 1.0, 201)
    assert l_transversal_graphs(w1, w2, np.zeros(2), 0.5).verdict == verdict


def test_point_must_lie_on_both_graphs():
    w = GraphFn.from_function(lambda X: 0.1 * X, 1.0, 21)
    with pytest.raises(NotOnSet):
        l_transversal_graphs(w, w, np.array([0.5, 0.0]), 0.2)
