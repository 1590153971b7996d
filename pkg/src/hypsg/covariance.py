"""Deterministic lattice kernels: truncated Green functions, the covariance
of Psi_N, Bessel potential kernels, and the lattice-sum log asymptotics.

Every kernel here is a lattice sum ``(1 / 4 pi^2) sum_n w(n) exp(i n.x)``
evaluated exactly at grid points by one inverse FFT.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .noise import NoiseStream
from .stochconv import advance, initial_state, mode_variance
from .torus import TWO_PI, TorusGrid, cutoff_multiplier, cutoff_radial, to_physical


@dataclass
class KernelTable:
    """Grid values of a real, even kernel together with its parameters."""

    grid: TorusGrid
    values: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def origin(self) -> float:
        return float(self.values[0, 0])

    def at(self, i: int, j: int) -> float:
        M = self.grid.M
        return float(self.values[i % M, j % M])

    def asymmetry(self) -> float:
        """max |K(x) - K(-x)| relative to max |K|."""
        v = self.values
        refl = np.roll(np.flip(v, axis=(0, 1)), 1, axis=(0, 1))
        scale = np.max(np.abs(v))
        return 0.0 if scale == 0 else float(np.max(np.abs(v - refl)) / scale)

    def to_csv(self, path) -> Path:
        """Write rows ``x1, x2, value`` with points in [-pi, pi)^2."""
        path = Path(path)
        x1, x2 = self.grid.signed_points
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "value"])
            for a, b, v in zip(x1.ravel(), x2.ravel(), self.values.ravel()):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
        return path


def lattice_kernel(weights: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """(1 / 4 pi^2) sum_n w(n) e^{i n.x} on the grid (real part)."""
    return to_physical(weights / TWO_PI, grid, real=True)


def _check_pair(N1: float, N2: float) -> None:
    if N1 < 1 or N2 < N1:
        raise ValueError(f"need N2 >= N1 >= 1, got N1={N1}, N2={N2}")


def truncated_green(N: float, grid: TorusGrid) -> KernelTable:
    """P_N^2 G, the smoothly truncated Green function of 1 - Laplacian."""
    grid.require_resolved(N, "truncated_green")
    w = cutoff_multiplier(grid, N) ** 2 / grid.bracket**2
    return KernelTable(grid, lattice_kernel(w, grid), "green", {"N": N})


def cross_green(N1: float, N2: float, grid: TorusGrid) -> KernelTable:
    """P_N1 P_N2 G."""
    _check_pair(N1, N2)
    grid.require_resolved(N2, "cross_green")
    w = cutoff_multiplier(grid, N1) * cutoff_multiplier(grid, N2) / grid.bracket**2
    return KernelTable(grid, lattice_kernel(w, grid), "cross_green", {"N1": N1, "N2": N2})


def covariance_weights(t: float, grid: TorusGrid, chi1: np.ndarray, chi2: np.ndarray) -> np.ndarray:
    """chi1(n) chi2(n) [t/(2<n>^2) - sin(2t<n>)/(4<n>^3)]."""
    return chi1 * chi2 * mode_variance(t, grid.bracket, 1.0)


@lru_cache(maxsize=4096)
def origin_sum(t: float, N1: float, N2: float, M: int) -> float:
    """(1/4 pi^2) sum_n chi_N1 chi_N2 [t/(2<n>^2) - sin(2t<n>)/(4<n>^3)], summed directly.

    Only |n| < min(N1, N2) carries weight, so just that block is summed.
    This is the single evaluation path for sigma_N(t) and for the origin value
    of the covariance kernels.
    """
    grid = TorusGrid(M)
    r = max(int(math.ceil(min(N1, N2))), 1)
    idx = np.r_[0:r, M - r + 1 : M] if 2 * r - 1 < M else np.arange(M)
    f = grid.freqs[idx]
    rad = np.hypot(f[:, None], f[None, :])
    w = cutoff_radial(rad / N1) * cutoff_radial(rad / N2) * mode_variance(t, grid.bracket[np.ix_(idx, idx)], 1.0)
    return float(np.sum(w) / (4.0 * np.pi**2))


def covariance_gamma(t: float, N: float, grid: TorusGrid) -> KernelTable:
    """Gamma_N(t, x) = E[Psi_N(t, x) Psi_N(t, 0)].

    The origin holds the direct lattice sum, so Gamma_N(t, 0) == sigma_N(t) bitwise.
    """
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    grid.require_resolved(N, "covariance_gamma")
    chi = cutoff_multiplier(grid, N)
    values = lattice_kernel(covariance_weights(t, grid, chi, chi), grid)
    values[0, 0] = origin_sum(float(t), float(N), float(N), grid.M)
    return KernelTable(grid, values, "gamma", {"t": t, "N": N})


def cross_gamma(t: float, N1: float, N2: float, grid: TorusGrid) -> KernelTable:
    """P_N1 P_N2 Gamma(t, x) = E[Psi_N1(t, x) Psi_N2(t, 0)] for coupled noise."""
    _check_pair(N1, N2)
    grid.require_resolved(N2, "cross_gamma")
    w = covariance_weights(t, grid, cutoff_multiplier(grid, N1), cutoff_multiplier(grid, N2))
    values = lattice_kernel(w, grid)
    values[0, 0] = origin_sum(float(t), float(N1), float(N2), grid.M)
    return KernelTable(grid, values, "cross_gamma", {"t": t, "N1": N1, "N2": N2})


def bessel_kernel(alpha: float, grid: TorusGrid, N_sum: float) -> KernelTable:
    """Truncated convolution kernel J_alpha of <nabla>^(-alpha), 0 < alpha < 2."""
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    grid.require_resolved(N_sum, "bessel_kernel")
    w = cutoff_multiplier(grid, N_sum) * grid.bracket ** (-alpha)
    return KernelTable(grid, lattice_kernel(w, grid), "bessel", {"alpha": alpha, "N_sum": N_sum})


def bessel_constant(alpha: float) -> float:
    """c_alpha in J_alpha(x) ~ c_alpha |x|^(alpha - 2) at the origin (planar kernel)."""
    return math.gamma(1.0 - alpha / 2.0) / (2.0**alpha * math.pi * math.gamma(alpha / 2.0))


def dyadic_probes(grid: TorusGrid, kmin: int = 0, kmax: int = 12) -> list[tuple[int, float]]:
    """Grid indices ``i`` on the x1 axis closest to radii 2^-k, with their |x|.

    Radii that round to the origin or duplicate an earlier index are dropped.
    """
    out, seen = [], set()
    for k in range(kmin, kmax + 1):
        i = int(round(2.0**-k / grid.spacing))
        if i <= 0 or i in seen or i >= grid.M // 2:
            continue
        seen.add(i)
        out.append((i, i * grid.spacing))
    return out


@dataclass
class CovarianceEstimate:
    shifts: list
    mean: np.ndarray
    se: np.ndarray
    exact: np.ndarray
    samples: int

    @property
    def z_scores(self) -> np.ndarray:
        return (self.mean - self.exact) / self.se


def mc_covariance(
    t: float,
    N: float,
    grid: TorusGrid,
    shifts,
    samples: int,
    stream: NoiseStream,
    chunk: int = 250,
) -> CovarianceEstimate:
    """Monte Carlo E[Psi_N(t, x + y) Psi_N(t, x)] for grid shifts ``y = (i, j)``.

    Each sample contributes its spatial average over ``x``; these averages are
    i.i.d. across samples, which is what the standard errors assume.
    """
    if not t > 0:
        raise ValueError("need t > 0")
    shifts = [tuple(int(v) for v in s) for s in shifts]
    vals = np.empty((samples, len(shifts)))
    for lo in range(0, samples, chunk):
        ids = list(range(lo, min(lo + chunk, samples)))
        state = advance(initial_state(N, grid, stream, samples=ids), t)
        psi = to_physical(state.a, grid, real=True)
        for k, (i, j) in enumerate(shifts):
            vals[lo : lo + len(ids), k] = np.mean(psi * np.roll(psi, (-i, -j), axis=(-2, -1)), axis=(-2, -1))
    gam = covariance_gamma(t, N, grid)
    exact = np.array([gam.at(i, j) for i, j in shifts])
    return CovarianceEstimate(
        shifts, vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(samples), exact, samples
    )


@dataclass
class HRWResult:
    a: float
    R: float
    lattice_sum: float
    log_term: float
    residual: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.residual / self.bound


def hrw_check(a: float, R: float) -> HRWResult:
    """Compare sum_{|n|<=R} 1/(a+|n|^2) with pi log(1 + R^2/a)."""
    if a < 1 or R < 1:
        raise ValueError(f"need a, R >= 1, got a={a}, R={R}")
    Rf = int(math.floor(R))
    total = 0.0
    n1 = np.arange(-Rf, Rf + 1)
    for lo in range(0, len(n1), 256):
        rows = n1[lo : lo + 256, None]
        n2 = np.arange(-Rf, Rf + 1)[None, :]
        sq = rows**2 + n2**2
        total += float(np.sum(np.where(sq <= R * R, 1.0 / (a + sq), 0.0)))
    log_term = math.pi * math.log1p(R * R / a)
    bound = min(1.0, R / math.sqrt(a)) / math.sqrt(a)
    return HRWResult(float(a), float(R), total, log_term, abs(total - log_term), bound)


def log_slope(Ns, values) -> tuple[float, float]:
    """Least-squares slope and intercept of ``values`` against ``log N``."""
    x = np.log(np.asarray(Ns, dtype=float))
    slope, intercept = np.polyfit(x, np.asarray(values, dtype=float), 1)
    return float(slope), float(intercept)
