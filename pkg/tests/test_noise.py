import numpy as np
import pytest

from hypsg.noise import (
    NoiseStream,
    canonical_modes,
    half_lattice_size,
    nyquist_pairs,
    sample_increment,
    scatter_hermitian,
    shell_start,
    white_noise_field,
)
from hypsg.torus import TorusGrid, hermitian_residual


@pytest.mark.parametrize("K", [0, 1, 3, 17])
def test_canonical_modes_cover_half_lattice(K):
    modes = canonical_modes(K)
    assert len(modes) == half_lattice_size(K) == 1 + 2 * K * (K + 1)
    seen = {tuple(m) for m in modes}
    assert len(seen) == len(modes)
    # exactly one of n, -n appears, except for the origin
    for n1, n2 in seen:
        if (n1, n2) != (0, 0):
            assert (-n1, -n2) not in seen
    shells = np.max(np.abs(modes), axis=1)
    assert np.all(np.diff(shells) >= 0)
    for k in range(K + 1):
        assert np.argmax(shells == k) == shell_start(k)


def test_canonical_prefix_is_stable():
    np.testing.assert_array_equal(canonical_modes(20)[: half_lattice_size(5)], canonical_modes(5))


def test_stream_is_deterministic_and_keyed():
    s = NoiseStream(seed=3, experiment="abc", sample=1)
    a = s.normals(step=4, max_shell=5, width=2)
    np.testing.assert_array_equal(a, s.normals(step=4, max_shell=5, width=2))
    for other in (NoiseStream(4, "abc", 1), NoiseStream(3, "abd", 1), NoiseStream(3, "abc", 2)):
        assert not np.array_equal(a, other.normals(4, 5, 2))
    assert not np.array_equal(a, s.normals(5, 5, 2))


def test_stream_values_do_not_depend_on_truncation():
    s = NoiseStream(seed=11)
    small = s.normals(0, 7, 4)
    big = s.normals(0, 40, 4)
    np.testing.assert_array_equal(big[: len(small)], small)


def test_increment_is_hermitian_and_grid_independent():
    s = NoiseStream(seed=2, experiment="inc")
    a = sample_increment(TorusGrid(16), 0.1, s, step=3)
    b = sample_increment(TorusGrid(32), 0.1, s, step=3)
    assert hermitian_residual(a.coeffs) == 0.0
    assert hermitian_residual(b.coeffs) == 0.0
    for n in [(0, 0), (1, 0), (2, -3), (-5, 6), (0, 7)]:
        assert a.coeffs[n[0] % 16, n[1] % 16] == b.coeffs[n[0] % 32, n[1] % 32]


def test_increment_rejects_bad_step():
    with pytest.raises(ValueError):
        sample_increment(TorusGrid(8), 0.0, NoiseStream())


def test_increment_variance():
    grid = TorusGrid(8)
    h = 0.3
    draws = np.stack([sample_increment(grid, h, NoiseStream(seed=5, sample=k)).coeffs for k in range(4000)])
    # E|dB_n|^2 = h for every mode; real self-conjugate modes included
    var = np.mean(np.abs(draws) ** 2, axis=0)
    assert np.max(np.abs(var / h - 1)) < 0.15
    assert abs(np.mean(var) / h - 1) < 0.02
    # distinct non-conjugate modes are uncorrelated
    c = np.mean(draws[:, 1, 0] * np.conj(draws[:, 0, 1]))
    assert abs(c) / h < 0.08


def test_nyquist_pairs_partition_boundary():
    M = 8
    pairs, selfconj = nyquist_pairs(M)
    covered = [p for pair in pairs for p in pair] + list(selfconj)
    assert len(covered) == len(set(covered)) == 2 * M - 1
    assert sorted(selfconj) == [(0, 4), (4, 0), (4, 4)]


def test_scatter_places_conjugates():
    grid = TorusGrid(8)
    vals = np.arange(half_lattice_size(2), dtype=complex) * (1 + 1j)
    vals[0] = 1.0
    out = scatter_hermitian(grid, vals, 2)
    assert hermitian_residual(out) == 0.0
    modes = canonical_modes(2)
    k = 5
    n1, n2 = modes[k]
    assert out[n1 % 8, n2 % 8] == vals[k]
    assert out[-n1 % 8, -n2 % 8] == np.conj(vals[k])


def test_white_noise_field_is_real():
    inc = sample_increment(TorusGrid(16), 0.05, NoiseStream(seed=9))
    w = white_noise_field(inc)
    assert w.shape == (16, 16) and np.isrealobj(w) and np.all(np.isfinite(w))


def test_increment_variance_tight():
    # 1e5 draws: E|dB_n|^2 / h within [0.98, 1.02] for each mode of a 4 x 4 grid
    grid = TorusGrid(4)
    h = 0.3
    acc = np.zeros((4, 4))
    S = 100_000
    for k in range(S):
        acc += np.abs(sample_increment(grid, h, NoiseStream(seed=6, experiment="tight", sample=k)).coeffs) ** 2
    ratio = acc / S / h
    assert np.all((ratio > 0.98) & (ratio < 1.02))
