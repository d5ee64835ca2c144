import numpy as np
import pytest

from lipdyn.config import load_fixture
from lipdyn.conjugacy import conjugacy_report, orbit_conjugation, solve_conjugacy
from lipdyn.hyperbolic import SaddleSystem
from lipdyn.manifolds import compute_manifold


@pytest.fixture(scope="module")
def sin_conjugacy(sin_saddle):
    return solve_conjugacy(sin_saddle, r=1.0, grid_n=33)


def test_iteration_contracts_every_step(sin_conjugacy):
    assert sin_conjugacy.ratios
    assert max(sin_conjugacy.ratios) < 1


def test_residual_decreases_after_the_first_steps(sin_conjugacy):
    tail = sin_conjugacy.residuals[3:]
    floor = 1e-13
    assert all(b <= a + floor for a, b in zip(tail, tail[1:]))


def test_linear_system_gives_zero_correction(linear_saddle):
    res = solve_conjugacy(linear_saddle, r=1.0, grid_n=17)
    assert np.all(res.field.values == 0.0)
    assert res.residual == 0.0


def test_orbits_are_conjugated(sin_saddle):
    res = solve_conjugacy(sin_saddle, r=1.0, grid_n=65)
    chk = orbit_conjugation(res, samples=50, horizon=10, seed=0)
    assert chk.steps_checked >= 1
    assert chk.max_error <= 1e-4
    assert res.residual <= 1e-5


def test_conjugacy_straightens_the_manifolds():
    sysm = SaddleSystem.from_map(load_fixture("conj_saddle"))
    res = solve_conjugacy(sysm, r=1.0, grid_n=65)
    wu = compute_manifold(sysm, "unstable", r=1.0, grid_n=129)
    ws = compute_manifold(sysm, "stable", r=1.0, grid_n=129)
    rep = conjugacy_report(res, wu, ws)
    assert rep.unstable_deviation <= 1e-5
    assert rep.stable_deviation <= 1e-5
    assert rep.injective_on_nodes


def test_field_csv_has_one_row_per_node(sin_conjugacy):
    text = sin_conjugacy.field.to_csv()
    assert len(text.strip().splitlines()) == 33 * 33 + 1


def test_off_grid_values_follow_the_series(sin_conjugacy):
    fld = sin_conjugacy.field
    outside = np.array([[1.5, 0.2], [-0.3, -1.7]])
    np.testing.assert_array_equal(fld(outside), fld.series.psi(outside))
