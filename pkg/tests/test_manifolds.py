"""Graph transform, local invariant manifolds and their continuity in the
perturbation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipdyn.errors import BoundInapplicable
from lipdyn.hyperbolic import SaddleSystem, Splitting
from lipdyn.lipcore import FunctionMap
from lipdyn.manifolds import (
    PerturbationRow,
    block_maps,
    compute_manifold,
    graph_points,
    graph_transform_step,
    perturbation_study,
    require_bound,
    verify_characterization,
)

TAU = 0.5


def unstable_series(xi, eta=0.2, terms=60):
    k = np.arange(1, terms)
    return (0.5 ** (k - 1) * eta * np.sin(xi / 2.0 ** k)).sum(axis=-1)


def sin_family(eta):
    return FunctionMap(lambda X: np.stack([np.zeros(len(X)), eta * np.sin(X[:, 0])], axis=1), dim=2, scalar=False)


def test_unstable_graph_matches_closed_form(sin_saddle):
    res = compute_manifold(sin_saddle, "unstable", r=1.0, grid_n=257)
    xi = res.graph.nodes()
    err = np.max(np.abs(res.graph.node_values()[:, 0] - unstable_series(xi)))
    assert err <= 1e-6


def test_trace_contracts_at_the_predicted_rate(sin_saddle):
    res = compute_manifold(sin_saddle, "unstable", r=1.0, grid_n=129)
    bound = TAU + 2 * 0.2
    rounding = 1e3 * np.finfo(float).eps
    for a, b in zip(res.changes, res.changes[1:]):
        if a > rounding:
            assert b <= bound * a + rounding
    assert all(lip <= 1 for lip in res.lips)


@pytest.mark.parametrize("side", ["unstable", "stable"])
def test_converged_graph_is_invariant(sin_saddle, side):
    tol = 1e-13
    res = compute_manifold(sin_saddle, side, r=1.0, grid_n=129, tol=tol)
    again, _ = graph_transform_step(res.graph, res.block)
    assert np.max(np.abs(again.values - res.graph.values)) <= 2 * tol


@settings(max_examples=10, deadline=None)
@given(r=st.floats(0.1, 2.0), n=st.integers(3, 65))
def test_linear_maps_have_flat_manifolds(linear_saddle, r, n):
    for side in ("unstable", "stable"):
        res = compute_manifold(linear_saddle, side, r=r, grid_n=n)
        assert np.all(res.graph.values == 0.0)


def test_stable_manifold_of_the_sin_saddle_is_the_axis(sin_saddle):
    # phi only moves the stable coordinate as a function of x, so {x = 0} is invariant
    res = compute_manifold(sin_saddle, "stable", r=1.0, grid_n=65)
    assert res.graph.sup() <= 1e-14


def test_grid_refinement_error_is_second_order(sin_saddle):
    errs = []
    for n in (33, 65, 129):
        res = compute_manifold(sin_saddle, "unstable", r=1.0, grid_n=n)
        xi = np.linspace(-1, 1, 1001)[:, None]
        errs.append(np.max(np.abs(res.graph(xi)[:, 0] - unstable_series(xi))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.7)


def test_graph_points_lie_on_the_manifold(sin_saddle):
    res = compute_manifold(sin_saddle, "unstable", r=1.0, grid_n=129)
    pts = graph_points(res, np.array([[0.25], [-0.5]]))
    assert pts.shape == (2, 2)
    assert pts[0, res.block.dom[0]] == 0.25


def test_orbit_characterization(sin_saddle):
    for side in ("unstable", "stable"):
        res = compute_manifold(sin_saddle, side, r=1.0, grid_n=129)
        rep = verify_characterization(res, n_steps=20)
        assert rep.stayed_in_ball
        assert not rep.cone_violations
        assert rep.worst_step_ratio <= rep.rate_bound + 1e-9
        assert rep.escape_steps is not None and rep.escape_steps <= rep.escape_bound


def test_continuity_bounds_hold_and_shrink_with_eta():
    A = np.diag([2.0, 0.5])
    etas = (0.1, 0.05, 0.01)
    rows = perturbation_study(A, None, [(e, sin_family(e)) for e in etas], grid_n=129)
    for row in rows:
        require_bound(row)
        assert row.c0 <= row.bound1
        assert row.lip <= row.bound2
    assert rows[0].c0 > rows[1].c0 > rows[2].c0
    assert rows[0].lip > rows[1].lip > rows[2].lip


def test_nonpositive_denominator_is_reported():
    row = PerturbationRow(0.5, 0.1, 0.1, None, 0.3, 0.5, 0.5, 0.1)
    with pytest.raises(BoundInapplicable):
        require_bound(row)


def test_non_coordinate_splitting_gives_the_same_graph_in_adapted_frame():
    sp = Splitting([[1.0, 1.0]], [[1.0, -1.0]])
    P = sp.P
    A = P @ np.diag([0.5, 2.0]) @ sp.Pinv
    phi = FunctionMap(lambda X: np.zeros_like(X), dim=2, scalar=False)
    res = compute_manifold(SaddleSystem(A, phi, sp), "unstable", r=0.5, grid_n=17)
    assert res.graph.sup() == 0.0


def test_block_maps_are_mutually_inverse(sin_saddle):
    fwd, bwd = block_maps(sin_saddle, np.zeros(2), 1.0)
    V = np.random.default_rng(2).uniform(-0.5, 0.5, (50, 2))
    np.testing.assert_allclose(bwd.forward(fwd.forward(V)), V, atol=1e-13)
