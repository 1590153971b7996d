import math

import numpy as np
import pytest

from hypsg.torus import (
    SpectralField,
    TorusGrid,
    apply_bessel,
    cutoff_multiplier,
    cutoff_radial,
    forward_transform,
    grid_for,
    hermitian_residual,
    inverse_transform,
    lp_norm,
    project,
    regrid,
    smooth_cutoff_eval,
    sobolev_norm,
    wneg_alpha_infty_norm,
)

from oracles import chi


@pytest.fixture
def grid():
    return TorusGrid(16)


def _random_bandlimited(grid, rng, K=5):
    x1, x2 = grid.points
    f = np.zeros_like(x1)
    for _ in range(8):
        k1, k2 = rng.integers(-K, K + 1, size=2)
        f += rng.normal() * np.cos(k1 * x1 + k2 * x2 + rng.uniform(0, 2 * np.pi))
    return f


@pytest.mark.parametrize("M", [3, 2, 15, 0])
def test_grid_rejects_bad_sizes(M):
    with pytest.raises(ValueError):
        TorusGrid(M)


def test_grid_lattice(grid):
    assert grid.freqs.min() == -8 and grid.freqs.max() == 7
    assert grid.n1.size == 16 * 16
    x1, _ = grid.points
    assert x1[-1, 0] == pytest.approx(2 * np.pi * 15 / 16)


def test_grid_for_is_fft_friendly_and_resolving():
    for N in (3, 32, 100, 512):
        g = grid_for(N)
        assert g.M % 2 == 0 and g.resolves(N)


def test_constant_field_coefficients(grid):
    c = 0.7
    f = forward_transform(np.full((16, 16), c), grid)
    assert f.coeff((0, 0)) == pytest.approx(2 * np.pi * c, rel=1e-14)
    rest = f.coeffs.copy()
    rest[0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-14


def test_cosine_coefficients(grid):
    x1, _ = grid.points
    f = forward_transform(np.cos(x1), grid)
    # quadrature oracle: <cos x1, e^{i x1}/(2 pi)> = (1/2pi) * pi * (2pi) = pi
    assert f.coeff((1, 0)) == pytest.approx(np.pi, abs=1e-13)
    assert f.coeff((-1, 0)) == pytest.approx(np.pi, abs=1e-13)
    mask = np.ones((16, 16), bool)
    mask[1, 0] = mask[-1, 0] = False
    assert np.max(np.abs(f.coeffs[mask])) < 1e-13


def test_zero_field(grid):
    f = forward_transform(np.zeros((16, 16)), grid)
    assert not np.any(f.coeffs)
    assert not np.any(inverse_transform(f))


def test_forward_rejects_nonfinite(grid):
    v = np.zeros((16, 16))
    v[3, 4] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        forward_transform(v, grid)


def test_single_coefficient_gives_plane_wave(grid):
    c = np.zeros((16, 16), complex)
    c[1, 0] = 2 * np.pi
    vals = inverse_transform(SpectralField(grid, c, is_real=False))
    x1, _ = grid.points
    assert np.max(np.abs(vals - np.exp(1j * x1))) < 1e-13


def test_inverse_rejects_asymmetric_real_flag(grid):
    c = np.zeros((16, 16), complex)
    c[1, 0] = 1.0
    with pytest.raises(ValueError, match="Hermitian"):
        inverse_transform(SpectralField(grid, c, is_real=True))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_round_trip_and_parseval(grid, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(16, 16))
    f = forward_transform(v, grid)
    assert hermitian_residual(f.coeffs) < 1e-14
    back = inverse_transform(f)
    assert np.max(np.abs(back - v)) / np.max(np.abs(v)) < 1e-12
    lhs = np.sum(np.abs(f.coeffs) ** 2)
    rhs = np.sum(v**2) * grid.cell_area
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize(
    "xi, expected",
    [((0.3, 0.0), 1.0), ((0.0, 0.5), 1.0), ((1.5, 0.0), 0.0), ((0.6, 0.8), 0.0)],
)
def test_cutoff_support(xi, expected):
    assert smooth_cutoff_eval(xi) == expected


def test_cutoff_transition_matches_profile_and_is_monotone():
    r = np.linspace(0.55, 0.95, 300)
    vals = cutoff_radial(r)
    assert np.all((vals > 0) & (vals < 1))
    assert np.all(np.diff(vals) < 0)
    assert np.all(np.diff(cutoff_radial(np.linspace(0.0, 1.2, 500))) <= 0)
    for rr in (0.55, 0.75, 0.9):
        assert cutoff_radial(rr) == pytest.approx(chi(rr), rel=1e-14)
    assert 0 < smooth_cutoff_eval((0.75, 0.0)) < 1


def test_cutoff_is_radial():
    a = smooth_cutoff_eval((0.7 * math.cos(1.1), 0.7 * math.sin(1.1)))
    assert a == pytest.approx(smooth_cutoff_eval((0.7, 0.0)), rel=1e-15)


def test_project_identity_for_large_N(grid):
    rng = np.random.default_rng(3)
    f = forward_transform(rng.normal(size=(16, 16)), grid)
    with pytest.warns(RuntimeWarning, match="truncated"):
        g = project(f, 4 * grid.nyquist)
    np.testing.assert_array_equal(g.coeffs, f.coeffs)


def test_project_kills_high_modes_and_composes():
    grid = TorusGrid(32)
    rng = np.random.default_rng(4)
    f = forward_transform(rng.normal(size=(32, 32)), grid)
    g = project(f, 6)
    assert np.all(g.coeffs[np.sqrt(grid.norm_sq) >= 6] == 0)
    twice = project(g, 6)
    np.testing.assert_allclose(twice.coeffs, f.coeffs * cutoff_multiplier(grid, 6) ** 2, rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        project(f, 0)


def test_project_commutes_with_bessel():
    grid = TorusGrid(32)
    f = forward_transform(np.random.default_rng(5).normal(size=(32, 32)), grid)
    a = project(apply_bessel(f, -0.7), 8).coeffs
    b = apply_bessel(project(f, 8), -0.7).coeffs
    np.testing.assert_allclose(a, b, rtol=1e-15, atol=1e-17)


def test_bessel_identities(grid):
    rng = np.random.default_rng(6)
    f = forward_transform(rng.normal(size=(16, 16)), grid)
    np.testing.assert_array_equal(apply_bessel(f, 0.0).coeffs, f.coeffs)
    back = apply_bessel(apply_bessel(f, 1.3), -1.3)
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12 * np.max(np.abs(f.coeffs))
    const = forward_transform(np.full((16, 16), 2.0), grid)
    np.testing.assert_allclose(apply_bessel(const, 3.0).coeffs, const.coeffs)
    real = inverse_transform(apply_bessel(f, -0.5))
    assert np.isrealobj(real)


@pytest.mark.parametrize("s", [-1.0, 0.0, 0.5, 2.0])
def test_sobolev_norm_of_constant(grid, s):
    f = forward_transform(np.full((16, 16), -1.5), grid)
    assert sobolev_norm(f, s) == pytest.approx(2 * np.pi * 1.5, rel=1e-13)


@pytest.mark.parametrize("n0", [(1, 0), (2, -3), (0, 5)])
def test_sobolev_norm_single_mode(grid, n0):
    x1, x2 = grid.points
    f = forward_transform(np.exp(1j * (n0[0] * x1 + n0[1] * x2)) / (2 * np.pi), grid)
    br = math.sqrt(1 + n0[0] ** 2 + n0[1] ** 2)
    assert sobolev_norm(f, 0.8) == pytest.approx(br**0.8, rel=1e-12)


def test_norms_of_zero(grid):
    z = forward_transform(np.zeros((16, 16)), grid)
    assert sobolev_norm(z, 1.0) == 0.0
    assert wneg_alpha_infty_norm(z, 0.3) == 0.0


def test_wneg_norm_at_alpha_zero_is_sup(grid):
    rng = np.random.default_rng(7)
    v = _random_bandlimited(grid, rng)
    assert wneg_alpha_infty_norm(forward_transform(v, grid), 0.0) == pytest.approx(np.max(np.abs(v)))
    with pytest.raises(ValueError):
        wneg_alpha_infty_norm(forward_transform(v, grid), -0.1)


def test_lp_norm_of_constant(grid):
    assert lp_norm(np.full((16, 16), 2.0), grid, 3) == pytest.approx(2.0 * (4 * np.pi**2) ** (1 / 3))
    assert lp_norm(np.full((16, 16), -2.0), grid, np.inf) == 2.0


def test_regrid_preserves_bandlimited_field():
    small, big = TorusGrid(16), TorusGrid(40)
    rng = np.random.default_rng(8)
    v = _random_bandlimited(small, rng, K=4)
    f = forward_transform(v, small)
    g = regrid(f, big)
    back = regrid(g, small)
    np.testing.assert_allclose(back.coeffs, f.coeffs, atol=1e-14)
    assert sobolev_norm(g, 1.0) == pytest.approx(sobolev_norm(f, 1.0), rel=1e-13)
