"""One-dimensional fixed points: classification, permanence under
perturbation and delta-Lyapunov exponents."""

import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from lipdyn.config import load_fixture
from lipdyn.errors import (DegenerateC, DegenerateRegion, NotAsymptotic, NotFixed, OrbitEscape,
                           PreconditionFailed, ThresholdExceeded, ZeroConstant)
from lipdyn.lipcore import Box, FunctionMap, shifted
from lipdyn.onedim import (
    check_gordura,
    classify_fixed_point,
    constant_product_limit,
    delta_lyapunov,
    local_constants,
    locate_periodic_orbit,
    lyapunov_comparison,
    orbit,
    perturbed_fixed_point,
    perturbed_periodic_point,
)

from conftest import bisect_root


def logistic_map(r):
    return FunctionMap(lambda x: r * x * (1 - x), dim=1, domain=Box([0.5], 0.5))


def affine_map(slope, shift):
    return FunctionMap(lambda x: slope * x + shift, dim=1, domain=Box([0.0], 1e6))


# ---------------------------------------------------------------- classification


@settings(max_examples=20, deadline=None)
@given(offsets=st.lists(st.floats(-1.0, 1.0).filter(lambda t: abs(t) > 1e-3), min_size=20, max_size=20))
def test_sink_orbits_stay_inside_their_envelope(offsets):
    f, p, delta = logistic_map(2.5), 0.6, 0.05
    rep = classify_fixed_point(f, p, delta)
    assert rep.classification == "sink"
    rate = rep.lip.value + 1e-9
    for o in offsets:
        x0 = p + o * delta
        x = x0
        for n in range(1, 30):
            x = float(f(np.array([x]))[0])
            assert abs(x - p) <= abs(x0 - p) * rate ** n + 1e-15


@settings(max_examples=20, deadline=None)
@given(offsets=st.lists(st.floats(-1.0, 1.0).filter(lambda t: abs(t) > 1e-3), min_size=20, max_size=20))
def test_source_orbits_leave_within_the_predicted_time(offsets):
    f, delta = logistic_map(3.3), 0.02
    p = 1 - 1 / 3.3
    rep = classify_fixed_point(f, p, delta)
    assert rep.classification == "source"
    rate = rep.rev_lip.value - 1e-9
    for o in offsets:
        x0 = p + o * delta
        bound = math.ceil(math.log(delta / abs(x0 - p)) / math.log(rate))
        x, steps = x0, 0
        while abs(x - p) <= delta:
            x = float(f(np.array([x]))[0])
            steps += 1
            assert steps <= max(bound, 1)


def test_affine_classification():
    assert classify_fixed_point(affine_map(0.2, 0.0), 0.0, 0.5).classification == "sink"
    assert classify_fixed_point(affine_map(2.0, 0.0), 0.0, 0.5).classification == "source"


def test_oscillating_map_is_not_classified():
    rep = classify_fixed_point(load_fixture("x_cos_ln"), 0.0, 0.1)
    assert rep.classification == "indifferent_or_unknown"


def test_point_must_be_fixed():
    with pytest.raises(NotFixed):
        classify_fixed_point(logistic_map(2.5), 0.5, 0.05)


# ---------------------------------------------------------------- gordura and permanence


def test_gordura_on_the_bridged_h():
    rep = check_gordura(load_fixture("four_piece_sink"), 0.0, 0.1, C=0.2)
    assert rep.passed
    assert rep.worst_ratio == pytest.approx(0.125, abs=1e-9)


@pytest.mark.parametrize("C", [0.5, 1.5, 2.0, 3.0, -1.0])
def test_gordura_fails_at_the_corner_of_f(C):
    assert not check_gordura(load_fixture("four_piece"), 1.0, 0.5, C=C).passed


def test_gordura_rejects_c_equal_to_one():
    with pytest.raises(DegenerateC):
        check_gordura(load_fixture("four_piece_sink"), 0.0, 0.1, C=1.0)


def test_downward_shift_of_h_moves_the_fixed_point_left():
    h = load_fixture("four_piece_sink")
    cert = perturbed_fixed_point(h, shifted(h, -1e-3), 0.0, 0.05)
    assert cert.q == pytest.approx(-0.00125, abs=1e-12)
    assert cert.classification == "sink"
    assert cert.roots_in_ball == 1


def test_upward_shift_lands_on_the_bridge_piece():
    h = load_fixture("four_piece_sink")
    cert = perturbed_fixed_point(h, shifted(h, 1e-3), 0.0, 0.05)
    g = lambda t: float(shifted(h, 1e-3)(np.array([t]))[0]) - t  # noqa: E731
    assert cert.q == pytest.approx(bisect_root(g, 0.0, 0.05), abs=1e-12)
    assert cert.q == pytest.approx(1e-3 / 0.9, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(-0.02, 0.02))
def test_affine_permanence_has_a_unique_root(eps):
    f = affine_map(0.5, 0.0)
    cert = perturbed_fixed_point(f, shifted(f, eps), 0.0, 0.2)
    assert cert.q == pytest.approx(2 * eps, abs=1e-12)
    assert cert.roots_in_ball == 1
    assert abs(cert.q) <= cert.delta


def test_large_perturbation_violates_a_threshold():
    h = load_fixture("four_piece_sink")
    with pytest.raises(ThresholdExceeded) as info:
        perturbed_fixed_point(h, shifted(h, 0.5), 0.0, 0.05)
    assert "epsilon" in info.value.inequality


def test_gordura_failure_blocks_permanence():
    f = load_fixture("four_piece")
    with pytest.raises(PreconditionFailed):
        perturbed_fixed_point(f, shifted(f, 1e-4), 1.0, 0.5)


def test_periodic_permanence_on_the_piecewise_logistic(piecewise_logistic):
    eps = 1e-4
    cert = perturbed_periodic_point(piecewise_logistic, shifted(piecewise_logistic, eps), 0.4794, 2, 1e-3)
    assert abs(cert.q - 0.4794) <= 10 * eps
    assert cert.classification == "periodic_sink"
    assert cert.roots_in_ball == 1
    assert cert.constant_product == pytest.approx(0.3204, rel=0.02)


def test_logistic_two_cycle(logistic):
    orb = locate_periodic_orbit(logistic, 0.4794, 2)
    r = 3.3
    exact = (r + 1 - np.sqrt((r - 3) * (r + 1))) / (2 * r)
    assert orb[0] == pytest.approx(exact, abs=1e-13)
    lim = constant_product_limit(logistic, orb)
    assert lim["limit"] == pytest.approx(abs(-r * r + 2 * r + 4), abs=1e-6)
    assert lim["products"][0] > lim["products"][-1] > lim["limit"]


# ---------------------------------------------------------------- delta-Lyapunov


@settings(max_examples=25, deadline=None)
@given(k=st.sampled_from([-2, -1, 1, 2]), delta=st.floats(1e-6, 1e-2), n=st.integers(1, 8),
       x1=st.floats(-0.5, 0.5))
def test_power_of_two_slopes_give_bit_exact_exponents(k, delta, n, x1):
    rec = delta_lyapunov(affine_map(2.0 ** k, 0.0), x1, delta, n)
    assert rec.exponent == k * math.log(2)


@settings(max_examples=25, deadline=None)
@given(slope=st.sampled_from([0.3, 0.5, 1.5, 3.0]), delta=st.floats(1e-6, 1e-2), n=st.integers(1, 8),
       x1=st.floats(-0.5, 0.5))
@example(slope=3.0, delta=0.009765625, n=1, x1=-0.03125)
def test_affine_exponent_is_delta_free_up_to_rounding(slope, delta, n, x1):
    # difference quotients of a shifted map carry rounding of order eps * |f| / separation
    f = affine_map(slope, 0.1)
    rec = delta_lyapunov(f, x1, delta, n)
    other = delta_lyapunov(f, x1, 1e-2, n)
    size = max(1.0, float(np.max(np.abs(slope * rec.points + 0.1))))
    # micro-pairs sit 1e-3 * delta apart
    scale = 1e4 * np.finfo(float).eps * size / delta
    assert rec.exponent == pytest.approx(math.log(slope), abs=scale)
    assert rec.exponent == pytest.approx(other.exponent, abs=scale)


@pytest.mark.parametrize("n", [1, 10, 40])
@pytest.mark.parametrize("delta", [1e-6, 1e-3, 0.1])
def test_doubling_map_exponent_is_ln_two(n, delta):
    f = FunctionMap(lambda x: 2 * x, dim=1)
    rec = delta_lyapunov(f, 1e-9, delta, n)
    assert rec.exponent == pytest.approx(math.log(2), abs=1e-15)


def test_doubling_below_rounding_scale_is_degenerate():
    f = FunctionMap(lambda x: 2 * x, dim=1)
    with pytest.raises(DegenerateRegion):
        delta_lyapunov(f, 0.3, 1e-12, 60)


@pytest.mark.parametrize("x1", [0.2, 0.3, 0.6])
def test_tail_estimate_bounds_the_doubling_change(piecewise_logistic, x1):
    n = 200
    short = delta_lyapunov(piecewise_logistic, x1, 1e-3, n)
    long = delta_lyapunov(piecewise_logistic, x1, 1e-3, 2 * n)
    assert abs(long.exponent - short.exponent) <= short.tail_estimate


def test_constants_are_thread_count_invariant(piecewise_logistic, monkeypatch):
    pts = orbit(piecewise_logistic, 0.3, 300)
    monkeypatch.setenv("LIPDYN_THREADS", "1")
    one = local_constants(piecewise_logistic, pts, 1e-3)
    monkeypatch.setenv("LIPDYN_THREADS", "4")
    four = local_constants(piecewise_logistic, pts, 1e-3)
    assert one.tobytes() == four.tobytes()


def test_orbit_record_csv(piecewise_logistic):
    rec = delta_lyapunov(piecewise_logistic, 0.3, 1e-3, 5)
    lines = rec.to_csv().splitlines()
    assert lines[0] == "i,x,C,log_sum,h_partial" and len(lines) == 6


def test_constant_map_has_zero_constants():
    f = FunctionMap(lambda x: 0 * x + 0.5, dim=1)
    with pytest.raises(ZeroConstant):
        delta_lyapunov(f, 0.1, 1e-3, 3)


def test_escaping_balls_are_reported(logistic):
    with pytest.raises(OrbitEscape):
        local_constants(logistic, np.array([0.0005]), 1e-3)


def test_attracted_orbit_is_bounded_by_the_cycle(piecewise_logistic):
    y1 = locate_periodic_orbit(piecewise_logistic, 0.4794, 2)[0]
    cmp = lyapunov_comparison(piecewise_logistic, 0.3, y1, 2, 1e-3)
    assert cmp.holds and cmp.nested
    assert cmp.h_window <= cmp.h_periodic + 1e-3


def test_orbit_that_never_settles_is_not_asymptotic(logistic):
    # the fixed point 1 - 1/3.3 repels, so nothing near it stays close to the 2-cycle for long
    y1 = locate_periodic_orbit(logistic, 0.4794, 2)[0]
    with pytest.raises(NotAsymptotic):
        lyapunov_comparison(logistic, 1 - 1 / 3.3, y1, 2, 1e-3, n=20)
