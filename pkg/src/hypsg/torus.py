"""Grids, Fourier transforms and Fourier multipliers on the 2-torus.

Coefficients follow the pairing with the orthonormal basis
``e_n(x) = exp(i n.x) / (2 pi)``, so that a band-limited field satisfies
``f(x) = sum_n coeffs[n] * e_n(x)`` exactly at the grid points.

Spectral arrays are stored in numpy FFT order: entry ``[i, j]`` holds the
frequency ``(grid.freqs[i], grid.freqs[j])`` and axis 0 is ``x_1``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``M x M`` grid on ``[0, 2 pi)^2``."""

    M: int

    def __post_init__(self):
        if not isinstance(self.M, (int, np.integer)) or self.M < 4 or self.M % 2:
            raise ValueError(f"grid size M must be an even integer >= 4, got {self.M!r}")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.M

    @property
    def nyquist(self) -> int:
        return self.M // 2

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @cached_property
    def freqs(self) -> np.ndarray:
        """Integer frequencies along one axis, FFT order, values in [-M/2, M/2)."""
        return np.fft.fftfreq(self.M, d=1.0 / self.M).round().astype(np.int64)

    @cached_property
    def n1(self) -> np.ndarray:
        return np.broadcast_to(self.freqs[:, None], (self.M, self.M))

    @cached_property
    def n2(self) -> np.ndarray:
        return np.broadcast_to(self.freqs[None, :], (self.M, self.M))

    @cached_property
    def norm_sq(self) -> np.ndarray:
        """|n|^2 on the lattice."""
        return (self.n1**2 + self.n2**2).astype(float)

    @cached_property
    def bracket(self) -> np.ndarray:
        """<n> = (1 + |n|^2)^(1/2)."""
        return np.sqrt(1.0 + self.norm_sq)

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.spacing * np.arange(self.M)
        return np.meshgrid(x, x, indexing="ij")

    @cached_property
    def signed_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid points as representatives in [-pi, pi)^2."""
        x = self.spacing * np.arange(self.M)
        x = np.where(x >= np.pi, x - TWO_PI, x)
        return np.meshgrid(x, x, indexing="ij")

    @cached_property
    def distance_to_origin(self) -> np.ndarray:
        """Flat torus distance |x| from each grid point to 0."""
        x1, x2 = self.signed_points
        return np.hypot(x1, x2)

    def resolves(self, N: float) -> bool:
        """True when the cutoff chi_N is fully representable (M >= 2N + 2)."""
        return self.M >= 2 * N + 2

    def require_resolved(self, N: float, what: str = "lattice sum") -> None:
        if not self.resolves(N):
            raise ValueError(
                f"{what}: grid M={self.M} does not resolve N={N} (need M >= 2N + 2 = {2 * N + 2})"
            )

    def __repr__(self) -> str:
        return f"TorusGrid(M={self.M})"


def grid_for(N: float, factor: float = 2.0) -> TorusGrid:
    """Smallest FFT-friendly even grid with M >= max(factor*N, 2N + 2)."""
    target = int(np.ceil(max(factor * N, 2 * N + 2, 4)))
    m = target
    while True:
        m = sfft.next_fast_len(m)
        if m % 2 == 0:
            return TorusGrid(m)
        m += 1


@dataclass
class SpectralField:
    """Fourier coefficients ``<f, e_n>`` on a grid's frequency lattice."""

    grid: TorusGrid
    coeffs: np.ndarray
    is_real: bool = True

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.grid.M, self.grid.M):
            raise ValueError(
                f"coefficient array has shape {self.coeffs.shape}, expected {(self.grid.M,) * 2}"
            )

    def coeff(self, n: tuple[int, int]) -> complex:
        M = self.grid.M
        return complex(self.coeffs[n[0] % M, n[1] % M])

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.is_real)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.is_real)


def regrid(f: SpectralField, grid: TorusGrid) -> SpectralField:
    """Move coefficients to another grid, keeping |n_i| < min(M, M')/2 and zeroing the rest."""
    if grid.M == f.grid.M:
        return f.copy()
    k = min(grid.M, f.grid.M) // 2
    r = np.r_[0:k, -k + 1 : 0]
    out = np.zeros((grid.M, grid.M), dtype=complex)
    out[np.ix_(r % grid.M, r % grid.M)] = f.coeffs[np.ix_(r % f.grid.M, r % f.grid.M)]
    return SpectralField(grid, out, f.is_real)


def reflect(coeffs: np.ndarray) -> np.ndarray:
    """Return ``c[-n]`` (indices taken modulo M) for each ``n``."""
    return np.roll(np.flip(coeffs, axis=(-2, -1)), 1, axis=(-2, -1))


def hermitian_residual(coeffs: np.ndarray) -> float:
    """max |c(n) - conj(c(-n))| relative to max |c|."""
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(coeffs - np.conj(reflect(coeffs)))) / scale)


def forward_transform(values: np.ndarray, grid: TorusGrid, is_real: bool | None = None) -> SpectralField:
    """Grid values -> coefficients of ``e_n``.

    The rectangle rule is exact for band-limited fields, so
    ``coeffs[n] = (2 pi / M^2) * sum_j f(x_j) exp(-i n.x_j)``.
    """
    values = np.asarray(values)
    if values.shape != (grid.M, grid.M):
        raise ValueError(f"field has shape {values.shape}, expected {(grid.M,) * 2}")
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise ValueError(f"forward_transform: {bad} non-finite grid values")
    if is_real is None:
        is_real = not np.iscomplexobj(values)
    coeffs = sfft.fft2(values) * (TWO_PI / grid.M**2)
    return SpectralField(grid, coeffs, bool(is_real))


def inverse_transform(field: SpectralField) -> np.ndarray:
    """Coefficients -> grid values, exact left inverse of :func:`forward_transform`."""
    c = field.coeffs
    if not np.all(np.isfinite(c)):
        raise ValueError("inverse_transform: non-finite coefficients")
    if field.is_real:
        res = hermitian_residual(c)
        if res > HERMITIAN_TOL:
            raise ValueError(f"field flagged real but Hermitian asymmetry is {res:.3e}")
    values = sfft.ifft2(c) * (field.grid.M**2 / TWO_PI)
    return values.real.copy() if field.is_real else values


# --- batched helpers (leading axes are samples) -------------------------------


def to_spectral(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return sfft.fft2(values, axes=(-2, -1)) * (TWO_PI / grid.M**2)


def to_physical(coeffs: np.ndarray, grid: TorusGrid, real: bool = True) -> np.ndarray:
    v = sfft.ifft2(coeffs, axes=(-2, -1)) * (grid.M**2 / TWO_PI)
    return v.real if real else v


# --- cutoff and multipliers ----------------------------------------------------


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def cutoff_radial(r) -> np.ndarray:
    """Radial profile of chi: 1 on r <= 1/2, 0 on r >= 1, C-infinity in between."""
    r = np.asarray(r, dtype=float)
    a = _bump(2.0 - 2.0 * r)
    b = _bump(2.0 * r - 1.0)
    out = np.where(r <= 0.5, 1.0, 0.0)
    mid = (r > 0.5) & (r < 1.0)
    out = np.where(mid, a / np.where(mid, a + b, 1.0), out)
    return out


def smooth_cutoff_eval(xi) -> float | np.ndarray:
    """chi(xi) for a 2-vector (or an array whose last axis has length 2)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 2:
        raise ValueError("xi must have a trailing axis of length 2")
    val = cutoff_radial(np.hypot(xi[..., 0], xi[..., 1]))
    return float(val) if val.ndim == 0 else val


def cutoff_multiplier(grid: TorusGrid, N: float) -> np.ndarray:
    """chi_N(n) = chi(n / N) on the grid lattice."""
    if N <= 0:
        raise ValueError(f"truncation N must be positive, got {N}")
    return cutoff_radial(np.sqrt(grid.norm_sq) / N)


def project(f: SpectralField, N: float) -> SpectralField:
    """Smooth frequency projector P_N."""
    if N <= 0:
        raise ValueError(f"truncation N must be positive, got {N}")
    if f.grid.nyquist < N:
        warnings.warn(
            f"projector P_{N} truncated by grid Nyquist {f.grid.nyquist}", RuntimeWarning, stacklevel=2
        )
    return f.with_coeffs(f.coeffs * cutoff_multiplier(f.grid, N))


def apply_bessel(f: SpectralField, s: float) -> SpectralField:
    """Bessel potential <nabla>^s, i.e. multiply coefficients by <n>^s."""
    if s == 0:
        return f.copy()
    return f.with_coeffs(f.coeffs * f.grid.bracket**s)


def sobolev_norm(f: SpectralField, s: float) -> float:
    """H^s norm: l^2 norm of <n>^s f_hat(n)."""
    w = f.grid.bracket ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def sobolev_norm_coeffs(coeffs: np.ndarray, grid: TorusGrid, s: float) -> np.ndarray:
    """Batched H^s norm over the trailing two axes."""
    w = grid.bracket ** (2.0 * s)
    return np.sqrt(np.sum(w * np.abs(coeffs) ** 2, axis=(-2, -1)))


def wneg_alpha_infty_norm(f: SpectralField, alpha: float) -> float:
    """Grid maximum of |<nabla>^(-alpha) f|."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    smoothed = apply_bessel(f, -alpha)
    return float(np.max(np.abs(inverse_transform(smoothed))))


def lp_norm(values: np.ndarray, grid: TorusGrid, p: float) -> float | np.ndarray:
    """Rectangle-rule L^p(T^2) norm over the trailing two axes."""
    a = np.abs(values)
    if np.isinf(p):
        return np.max(a, axis=(-2, -1))
    return (np.sum(a**p, axis=(-2, -1)) * grid.cell_area) ** (1.0 / p)
