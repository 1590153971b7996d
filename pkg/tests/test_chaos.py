import math

import numpy as np
import pytest

from hypsg.chaos import (
    ChargedPointSet,
    best_pairing,
    cancellation_ratio_scan,
    cauchy_rate,
    dipole_bound,
    interaction_product,
    lq_time_statistic,
    moment_mc,
    second_moment_diff_exact,
    second_moment_exact,
    torus_distance,
)
from hypsg.noise import NoiseStream
from hypsg.torus import TorusGrid

from oracles import FROZEN, dipole_loop, interaction_loop, second_moment_direct


def _points(seed, p):
    return np.random.default_rng(seed).uniform(0, 2 * np.pi, size=(2 * p, 2))


def test_point_set_validation_and_charges():
    with pytest.raises(ValueError):
        ChargedPointSet(np.zeros((3, 2)))
    pts = ChargedPointSet(_points(0, 2))
    assert pts.p == 2
    np.testing.assert_array_equal(pts.charges, [-1, 1, -1, 1])


def test_torus_distance_wraps_and_is_symmetric():
    a, b = np.array([0.1, 0.2]), np.array([2 * np.pi - 0.1, 0.2])
    assert torus_distance(a, b) == pytest.approx(0.2)
    assert torus_distance(a, b) == torus_distance(b, a)


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("N", [1.0, 10.0, math.inf])
def test_interaction_and_dipole_match_loops(p, N):
    pts = _points(p, p)
    lam = 0.7
    assert interaction_product(ChargedPointSet(pts), lam, N) == pytest.approx(interaction_loop(pts, lam, N), rel=1e-12)
    assert dipole_bound(ChargedPointSet(pts), lam, N) == pytest.approx(dipole_loop(pts, lam, N), rel=1e-12)


@pytest.mark.parametrize("N", [1.0, 100.0])
def test_single_pair_is_equality(N):
    pts = ChargedPointSet(_points(5, 1))
    assert interaction_product(pts, 1.3, N) == pytest.approx(dipole_bound(pts, 1.3, N), rel=1e-14)


def test_coincident_points_at_finite_N():
    pts = ChargedPointSet(np.array([[1.0, 1.0], [1.0, 1.0]]))
    N = 50.0
    assert interaction_product(pts, 2.0, N) == pytest.approx(-2.0 * math.log(1 / N))
    assert interaction_product(pts, 2.0, math.inf) == math.inf


def test_swapping_same_charge_points_is_invariant():
    pts = _points(7, 3)
    swapped = pts[[2, 1, 0, 3, 4, 5]]
    a = interaction_product(ChargedPointSet(pts), 0.9, 10)
    b = interaction_product(ChargedPointSet(swapped), 0.9, 10)
    assert a == pytest.approx(b, rel=1e-13)
    assert dipole_bound(ChargedPointSet(pts), 0.9, 10) == pytest.approx(dipole_bound(ChargedPointSet(swapped), 0.9, 10))


def test_best_pairing_picks_nearest_neighbours():
    # two tight dipoles far apart, listed crosswise
    pts = np.array([[0.0, 0.0], [3.0, 3.0], [3.0, 3.05], [0.05, 0.0]])
    assert best_pairing(ChargedPointSet(pts), 1.0, math.inf) == (1, 0)


def test_dipole_bound_rejects_large_p():
    with pytest.raises(ValueError):
        dipole_bound(ChargedPointSet(_points(0, 9)), 1.0, 1.0)
    with pytest.raises(ValueError):
        cancellation_ratio_scan(p_values=(9,), trials=2)


def test_scan_small_lambda_and_p1():
    rows = cancellation_ratio_scan(p_values=(1, 2), lambdas=(1e-9, 1.0), Ns=(1, 100), trials=50)
    assert len(rows) == 8
    for r in rows:
        if r.p == 1:
            assert r.max_ratio == pytest.approx(1.0, rel=1e-12)
        if r.lam < 1e-6:
            assert r.max_ratio == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        cancellation_ratio_scan(trials=0)


def test_second_moment_beta_zero():
    assert second_moment_exact(0.5, 0.3, 0.0, 8, TorusGrid(32)) == pytest.approx(4 * math.pi**2, rel=1e-13)


def test_second_moment_matches_direct_oracle():
    assert second_moment_exact(0.25, 0.2, math.sqrt(math.pi), 3, TorusGrid(8)) == pytest.approx(
        FROZEN["moment_N3_M8"], rel=1e-11
    )
    assert second_moment_exact(0.5, 0.0, math.sqrt(math.pi), 4, TorusGrid(10)) == pytest.approx(
        FROZEN["moment_N4_M10_t05_a0"], rel=1e-11
    )


def test_second_moment_direct_small_grid():
    val = second_moment_exact(0.7, 0.4, 1.1, 2.2, TorusGrid(8))
    assert val == pytest.approx(second_moment_direct(0.7, 0.4, 1.1**2, 2.2, 8), rel=1e-10)


def test_second_moment_alpha_zero_is_parseval():
    # E ||Theta||_{L^2}^2 = 4 pi^2 gamma^2 |Theta|^2 / gamma^2 = 4 pi^2 exp(beta^2 sigma)
    from hypsg.renorm import sigma_exact

    g = TorusGrid(32)
    val = second_moment_exact(0.4, 0.0, 1.2, 10, g)
    assert val == pytest.approx(4 * math.pi**2 * math.exp(1.44 * sigma_exact(0.4, 10, g)), rel=1e-12)


def test_diff_vanishes_on_diagonal_and_rejects_order():
    g = TorusGrid(32)
    assert second_moment_diff_exact(0.5, 0.2, 1.5, 8, 8, g) == 0.0
    assert second_moment_diff_exact(0.5, 0.2, 1.5, 8, 12, g) > 0
    with pytest.raises(ValueError):
        second_moment_diff_exact(0.5, 0.2, 1.5, 12, 8, g)
    with pytest.raises(ValueError):
        second_moment_exact(0.5, -0.1, 1.5, 8, g)


def test_dynamic_range_refusal():
    with pytest.raises(ValueError, match="dynamic range"):
        second_moment_exact(2.0, 0.2, 12.0, 64)


def test_moment_mc_agrees_with_exact():
    grid = TorusGrid(16)
    t, alpha, beta, N = 0.5, 0.3, 1.5, 6
    est = moment_mc(t, alpha, 1, beta, N, 600, NoiseStream(seed=1, experiment="mm"), grid)
    exact = second_moment_exact(t, alpha, beta, N, grid)
    assert abs(est.mean - exact) < 4.5 * est.se
    assert est.wmax_mean > 0 and est.samples == 600
    with pytest.raises(ValueError):
        moment_mc(t, alpha, 1, beta, N, 50, NoiseStream(), grid)


def test_lq_statistic_runs():
    m, se = lq_time_statistic([0.0, 0.1, 0.2], 0.3, 2.0, 1.0, 4, 20, NoiseStream(seed=2), TorusGrid(12))
    assert m > 0 and se >= 0
    with pytest.raises(ValueError):
        lq_time_statistic([0.1, 0.2], 0.3, 2.0, 1.0, 4, 20, NoiseStream(), TorusGrid(12))


def test_cauchy_rate_validation_and_fit():
    with pytest.raises(ValueError):
        cauchy_rate(0.5, 0.5, 1.0, [4, 8, 16])
    with pytest.raises(ValueError):
        cauchy_rate(0.5, 0.5, 1.0, [4, 8, 8, 16])
    res = cauchy_rate(0.5, 0.5, 1.0, [4, 8, 16, 32])
    assert res.monotone and not res.flagged
    assert res.eps_hat > 0


def test_alpha_zero_moment_grows_with_N():
    vals = [second_moment_exact(0.5, 0.0, math.sqrt(math.pi), N) for N in (16, 32, 64, 128)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_smoother_test_functions_decay_faster():
    beta = math.sqrt(math.pi)
    rough = cauchy_rate(0.25, 0.3, beta, [16, 32, 64, 128])
    smooth = cauchy_rate(0.25, 2.0, beta, [16, 32, 64, 128])
    assert smooth.eps_hat > rough.eps_hat


def test_mc_moment_bounded_in_N_above_threshold():
    # alpha = 0.3 > beta^2 t / (8 pi) = 1/32: MC tracks the exact values and the
    # increments between successive N contract, so the sequence stays bounded
    beta, t, alpha = math.sqrt(math.pi), 0.25, 0.3
    means = []
    for N in (16, 32, 64):
        est = moment_mc(t, alpha, 1, beta, N, 400, NoiseStream(seed=N, experiment="stable"))
        assert abs(est.mean - second_moment_exact(t, alpha, beta, N)) < 4 * est.se
        means.append(est.mean)
    steps = np.diff(means)
    assert 0 < steps[1] < steps[0]
