import math

import numpy as np
import pytest
from numpy.polynomial import hermite_e

from hypsg.noise import NoiseStream
from hypsg.renorm import (
    gamma_exact,
    hermite,
    log_gamma,
    sigma_exact,
    theta_field,
    wick_exponential_series,
    wick_power,
)
from hypsg.stochconv import advance, initial_state, psi_field
from hypsg.torus import TorusGrid, grid_for

from oracles import FROZEN, sigma_loop


def test_sigma_matches_frozen_and_loop():
    assert sigma_exact(0.5, 32, TorusGrid(66)) == pytest.approx(FROZEN["sigma_32_t05_M66"], rel=1e-12)
    assert sigma_exact(0.3, 5.5, TorusGrid(16)) == pytest.approx(sigma_loop(0.3, 5.5, 16), rel=1e-12)


def test_sigma_basic_properties():
    g = grid_for(20)
    assert sigma_exact(0.0, 20, g) == 0.0
    ts = [0.1, 0.2, 0.5, 1.0]
    vals = [sigma_exact(t, 20, g) for t in ts]
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(ValueError):
        sigma_exact(-0.1, 20, g)
    with pytest.raises(ValueError):
        sigma_exact(0.1, 40, TorusGrid(32))


def test_sigma_grows_logarithmically():
    t = 0.5
    Ns = [16, 32, 64, 128]
    vals = [sigma_exact(t, N, grid_for(N)) for N in Ns]
    slopes = np.diff(vals) / np.log(2)
    np.testing.assert_allclose(slopes, t / (4 * math.pi), rtol=0.02)


@pytest.mark.parametrize("t, beta", [(0.0, 2.0), (0.4, 0.0)])
def test_gamma_is_one(t, beta):
    assert gamma_exact(t, beta, 8, TorusGrid(32)) == 1.0


def test_gamma_and_overflow():
    g = TorusGrid(32)
    assert math.log(gamma_exact(0.5, 1.3, 8, g)) == pytest.approx(log_gamma(0.5, 1.3, 8, g), rel=1e-14)
    with pytest.raises(OverflowError):
        gamma_exact(0.5, 200.0, 8, g)


@pytest.mark.parametrize("k", [0, 1, 2, 5, 9])
@pytest.mark.parametrize("sigma", [0.0, 1.0, 0.37])
def test_hermite_against_probabilists(k, sigma):
    x = np.linspace(-2, 2, 9)
    if sigma == 0:
        expected = x**k
    else:
        s = math.sqrt(sigma)
        coef = np.zeros(k + 1)
        coef[k] = 1
        expected = s**k * hermite_e.hermeval(x / s, coef)
    np.testing.assert_allclose(hermite(k, x, sigma), expected, rtol=1e-12, atol=1e-12)


def test_hermite_rejects_bad_input():
    for k in (-1, 61, 2.5):
        with pytest.raises(ValueError):
            hermite(k, 0.3, 1.0)
    with pytest.raises(ValueError):
        hermite(2, 0.3, -1.0)
    assert hermite(3, 0.5, 1.0) == pytest.approx(0.125 - 1.5)


def test_generating_function():
    x = np.linspace(-2, 2, 11)
    for beta, sigma in [(0.5, 1.0), (1.5, 2.0), (2.0, 0.2)]:
        series = wick_exponential_series(x, beta, sigma, K=40)
        closed = np.exp(1j * beta * x + 0.5 * beta**2 * sigma)
        assert np.max(np.abs(series - closed)) < 1e-8


def test_wick_powers_have_mean_zero():
    rng = np.random.default_rng(0)
    sigma = 0.8
    x = rng.normal(scale=math.sqrt(sigma), size=400_000)
    for k in (1, 2, 3, 4):
        m = wick_power(x, k, sigma).mean()
        sd = math.sqrt(math.factorial(k) * sigma**k / len(x))
        assert abs(m) < 5 * sd


def test_theta_modulus_and_mean():
    grid = TorusGrid(24)
    N, t, beta = 10.0, 0.5, 1.5
    sigma = sigma_exact(t, N, grid)
    st = advance(initial_state(N, grid, NoiseStream(seed=1, experiment="theta"), samples=range(400)), t)
    theta = theta_field(psi_field(st), t, beta, N, grid)
    assert theta.sigma == sigma
    np.testing.assert_allclose(np.abs(theta.values), theta.modulus, rtol=1e-12)
    # E Theta_N = 1 pointwise; the spatial average has much smaller spread
    means = theta.values.mean(axis=(-2, -1))
    assert abs(means.mean() - 1) < 5 * means.std() / math.sqrt(len(means))
    with pytest.raises(OverflowError):
        theta_field(np.zeros(3), t, 500.0, N, grid, sigma=sigma)


def test_sigma_strictly_increasing_on_dense_grid():
    g = grid_for(32)
    ts = np.linspace(0.005, 1.0, 200)
    vals = np.array([sigma_exact(t, 32, g) for t in ts])
    assert np.all(np.diff(vals) > 0)


def test_log_gamma_slope():
    t, beta = 0.5, math.sqrt(math.pi)
    Ns = [32, 64, 128, 256, 512]
    vals = [log_gamma(t, beta, N, grid_for(N)) for N in Ns]
    slope = np.polyfit(np.log(Ns), vals, 1)[0]
    assert slope == pytest.approx(beta**2 * t / (8 * math.pi), rel=0.1)


def test_wick_series_matches_theta_over_gamma():
    # sum_k (i beta)^k / k! :psi^k: = Theta_N for |beta psi| <= 4 within the series tail
    rng = np.random.default_rng(3)
    beta, sigma = math.sqrt(math.pi), 0.1
    psi = rng.uniform(-4 / beta, 4 / beta, size=200)
    theta = theta_field(psi, 0.5, beta, 8, TorusGrid(32), sigma=sigma).values
    series = wick_exponential_series(psi, beta, sigma, K=40)
    assert np.max(np.abs(series - theta)) < 1e-8
