"""Moment structure of the imaginary chaos Theta_N.

Two independent routes are provided for the second moment of
``<nabla>^(-alpha) Theta_N(t)``:

* a deterministic one, from the two-point identity
  ``E[Theta_N(t,x) conj Theta_N(t,y)] = exp(beta^2 Gamma_N(t, x-y))``,
  turned into Fourier weights by one FFT of the kernel;
* Monte Carlo over exact samples of ``Psi_N``.

The charged-point machinery checks the dipole cancellation bound that
controls the higher moments.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .covariance import covariance_gamma, cross_gamma
from .noise import NoiseStream
from .renorm import sigma_exact
from .stochconv import advance, initial_state
from .torus import TWO_PI, TorusGrid, grid_for, to_physical, to_spectral

# largest admissible exp(beta^2 sigma_N) before the kernel FFT loses all digits
DYNAMIC_RANGE_LOG = math.log(1e12)
MAX_BRUTE_FORCE_P = 8


# --- charged point sets --------------------------------------------------------


@dataclass
class ChargedPointSet:
    """2p points on the torus; 1-based index j carries charge +1 if j is even, -1 if odd."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or self.points.shape[0] % 2:
            raise ValueError("points must have shape (2p, 2)")

    @property
    def p(self) -> int:
        return self.points.shape[0] // 2

    @property
    def charges(self) -> np.ndarray:
        j = np.arange(1, 2 * self.p + 1)
        return np.where(j % 2 == 0, 1.0, -1.0)


def torus_distance(a, b) -> np.ndarray:
    """Flat distance on T^2 = [-pi, pi)^2, symmetric in its arguments."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % TWO_PI
    d = np.minimum(d, TWO_PI - d)
    return np.hypot(d[..., 0], d[..., 1])


def _offset(N: float) -> float:
    return 0.0 if math.isinf(N) else 1.0 / N


def _pairwise(points: np.ndarray) -> np.ndarray:
    return torus_distance(points[..., :, None, :], points[..., None, :, :])


def interaction_product(pts: ChargedPointSet, lam: float, N: float) -> float:
    """log of prod_{j<k} (|y_j - y_k| + 1/N)^(eps_j eps_k lam)."""
    if pts.p == 0:
        return 0.0
    eps = pts.charges
    d = _pairwise(pts.points)
    iu = np.triu_indices(2 * pts.p, k=1)
    with np.errstate(divide="ignore"):
        logs = np.log(d[iu] + _offset(N))
    signs = (eps[:, None] * eps[None, :])[iu]
    return float(lam * np.sum(signs * logs))


def _permutations(p: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(p))), dtype=np.int64).reshape(-1, p)


def dipole_bound(pts: ChargedPointSet, lam: float, N: float) -> float:
    """log of max_tau prod_j (|y_2j - y_{2 tau(j) - 1}| + 1/N)^(-lam)."""
    p = pts.p
    if p > MAX_BRUTE_FORCE_P:
        raise ValueError(f"brute force over permutations is limited to p <= {MAX_BRUTE_FORCE_P}")
    if p == 0:
        return 0.0
    pos = pts.points[1::2]  # y_2, y_4, ...
    neg = pts.points[0::2]  # y_1, y_3, ...
    with np.errstate(divide="ignore"):
        cost = -lam * np.log(torus_distance(pos[:, None, :], neg[None, :, :]) + _offset(N))
    perms = _permutations(p)
    return float(np.max(cost[np.arange(p), perms].sum(axis=1)))


def best_pairing(pts: ChargedPointSet, lam: float, N: float) -> tuple[int, ...]:
    """The maximizing permutation (0-based: positive j pairs with negative tau[j])."""
    p = pts.p
    pos, neg = pts.points[1::2], pts.points[0::2]
    cost = -lam * np.log(torus_distance(pos[:, None, :], neg[None, :, :]) + _offset(N))
    perms = _permutations(p)
    return tuple(int(k) for k in perms[np.argmax(cost[np.arange(p), perms].sum(axis=1))])


@dataclass
class ScanRow:
    p: int
    lam: float
    N: float
    trials: int
    max_ratio: float


def _log_ratio_batch(points: np.ndarray, lam: float, N: float) -> np.ndarray:
    """Vectorized log(interaction / dipole bound) over a batch of point sets."""
    trials, twop, _ = points.shape
    p = twop // 2
    off = _offset(N)
    eps = np.where(np.arange(1, twop + 1) % 2 == 0, 1.0, -1.0)
    d = _pairwise(points)
    iu = np.triu_indices(twop, k=1)
    signs = (eps[:, None] * eps[None, :])[iu]
    log_int = lam * np.sum(signs * np.log(d[:, iu[0], iu[1]] + off), axis=1)
    cost = -lam * np.log(d[:, 1::2, 0::2] + off)
    perms = _permutations(p)
    log_dip = np.max(cost[:, np.arange(p), perms].sum(axis=2), axis=1)
    return log_int - log_dip


def cancellation_ratio_scan(
    p_values=(1, 2, 3, 4),
    lambdas=(0.5, 1.0, 2.0),
    Ns=(1, 10, 100, 1000),
    trials: int = 1000,
    seed: int = 0,
) -> list[ScanRow]:
    """Max of interaction_product / dipole_bound over uniform random point sets.

    The same point sets are reused for every (lambda, N) at a given p.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for p in p_values:
        if p > MAX_BRUTE_FORCE_P:
            raise ValueError(f"p must be <= {MAX_BRUTE_FORCE_P}")
        rng = np.random.default_rng([seed, p])
        pts = rng.uniform(0.0, TWO_PI, size=(trials, 2 * p, 2))
        for lam in lambdas:
            for N in Ns:
                r = _log_ratio_batch(pts, lam, N)
                rows.append(ScanRow(p, float(lam), float(N), trials, float(np.exp(np.max(r)))))
    return rows


# --- exact second moments --------------------------------------------------------


def _check_dynamic_range(beta: float, sigma: float, t: float, N: float) -> None:
    if beta**2 * sigma > DYNAMIC_RANGE_LOG:
        raise ValueError(
            f"exp(beta^2 sigma_N(t)) = exp({beta**2 * sigma:.2f}) exceeds the grid dynamic range "
            f"exp({DYNAMIC_RANGE_LOG:.2f}); admissible envelope is beta^2 sigma_N(t) <= "
            f"{DYNAMIC_RANGE_LOG:.2f}, i.e. roughly beta^2 t log N / (4 pi) <= {DYNAMIC_RANGE_LOG:.1f} "
            f"(got t={t}, beta^2={beta**2}, N={N})"
        )


def _weighted_energy(kernel_coeffs: np.ndarray, grid: TorusGrid, alpha: float) -> float:
    """sum_n <n>^(-2 alpha) 2 pi K_hat(n)."""
    w = grid.bracket ** (-2.0 * alpha)
    return float(TWO_PI * np.sum(w * kernel_coeffs.real))


def second_moment_exact(t: float, alpha: float, beta: float, N: float, grid: TorusGrid | None = None) -> float:
    """E || <nabla>^(-alpha) Theta_N(t) ||_{L^2}^2 from the two-point kernel."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    grid = grid_for(N, 4) if grid is None else grid
    gam = covariance_gamma(t, N, grid).values
    sigma = gam[0, 0]
    _check_dynamic_range(beta, sigma, t, N)
    # exp(beta^2 Gamma) = exp(beta^2 (Gamma - sigma)) * exp(beta^2 sigma)
    k = np.exp(beta**2 * (gam - sigma))
    return math.exp(beta**2 * sigma) * _weighted_energy(to_spectral(k, grid), grid, alpha)


def second_moment_diff_exact(
    t: float, alpha: float, beta: float, N1: float, N2: float, grid: TorusGrid | None = None
) -> float:
    """E || <nabla>^(-alpha) (Theta_N1(t) - Theta_N2(t)) ||_{L^2}^2 for coupled noise."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if N2 < N1:
        raise ValueError(f"need N2 >= N1, got N1={N1}, N2={N2}")
    grid = grid_for(N2, 4) if grid is None else grid
    g1 = covariance_gamma(t, N1, grid).values
    g2 = covariance_gamma(t, N2, grid).values
    g12 = cross_gamma(t, N1, N2, grid).values
    top = max(g1[0, 0], g2[0, 0])
    _check_dynamic_range(beta, top, t, N2)
    b2 = beta**2
    d = np.exp(b2 * (g1 - top)) + np.exp(b2 * (g2 - top)) - 2.0 * np.exp(b2 * (g12 - top))
    return math.exp(b2 * top) * _weighted_energy(to_spectral(d, grid), grid, alpha)


# --- Monte Carlo -----------------------------------------------------------------


@dataclass
class MomentEstimate:
    """Ensemble estimates with standard errors."""

    mean: float
    se: float
    wmax_mean: float
    wmax_se: float
    samples: int
    p: int
    params: dict = field(default_factory=dict)


def chaos_samples(
    t: float,
    beta: float,
    N: float,
    grid: TorusGrid,
    stream: NoiseStream,
    sample_ids,
) -> np.ndarray:
    """Theta_N(t) on the grid for a batch of independent samples, shape (S, M, M)."""
    state = initial_state(N, grid, stream, samples=sample_ids)
    if t > 0:
        state = advance(state, t)
    psi = to_physical(state.a, grid, real=True)
    return math.exp(0.5 * beta**2 * sigma_exact(t, N, grid)) * np.exp(1j * beta * psi)


def moment_mc(
    t: float,
    alpha: float,
    p: int,
    beta: float,
    N: float,
    samples: int,
    stream: NoiseStream,
    grid: TorusGrid | None = None,
    chunk: int = 250,
    first_sample: int = 0,
) -> MomentEstimate:
    """Monte Carlo estimate of E || <nabla>^(-alpha) Theta_N(t) ||_{L^2}^(2p).

    Also reports the mean of the grid maximum of |<nabla>^(-alpha) Theta_N(t)|,
    a proxy for the W^(-alpha, infinity) norm.
    """
    if samples < 100:
        raise ValueError("moment_mc needs at least 100 samples")
    grid = grid_for(N, 4) if grid is None else grid
    w = grid.bracket ** (-2.0 * alpha)
    smooth = grid.bracket ** (-alpha)
    l2 = np.empty(samples)
    wmax = np.empty(samples)
    for lo in range(0, samples, chunk):
        ids = list(range(first_sample + lo, first_sample + min(lo + chunk, samples)))
        theta = chaos_samples(t, beta, N, grid, stream, ids)
        c = to_spectral(theta, grid)
        l2[lo : lo + len(ids)] = np.sum(w * np.abs(c) ** 2, axis=(-2, -1))
        wmax[lo : lo + len(ids)] = np.max(np.abs(to_physical(c * smooth, grid, real=False)), axis=(-2, -1))
    x = l2**p
    return MomentEstimate(
        float(np.mean(x)),
        float(np.std(x, ddof=1) / math.sqrt(samples)),
        float(np.mean(wmax)),
        float(np.std(wmax, ddof=1) / math.sqrt(samples)),
        samples,
        p,
        {"t": t, "alpha": alpha, "beta": beta, "N": N, "M": grid.M},
    )


def lq_time_statistic(
    times,
    alpha: float,
    q: float,
    beta: float,
    N: float,
    samples: int,
    stream: NoiseStream,
    grid: TorusGrid | None = None,
) -> tuple[float, float]:
    """Mean and SE of || Theta_N ||_{L^q([0,T]; W^(-alpha, inf))} by trapezoid in time.

    Each path is sampled exactly at the nodes of ``times`` (which must start at 0).
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase strictly")
    grid = grid_for(N, 4) if grid is None else grid
    smooth = grid.bracket ** (-alpha)
    state = initial_state(N, grid, stream, samples=list(range(samples)))
    vals = np.empty((len(times), samples))
    for k, t in enumerate(times):
        if k > 0:
            state = advance(state, float(t - times[k - 1]))
        psi = to_physical(state.a, grid, real=True)
        theta = math.exp(0.5 * beta**2 * sigma_exact(t, N, grid)) * np.exp(1j * beta * psi)
        c = to_spectral(theta, grid) * smooth
        vals[k] = np.max(np.abs(to_physical(c, grid, real=False)), axis=(-2, -1))
    norms = integrate.trapezoid(vals**q, times, axis=0) ** (1.0 / q)
    return float(np.mean(norms)), float(np.std(norms, ddof=1) / math.sqrt(samples))


# --- Cauchy rate -----------------------------------------------------------------


@dataclass
class CauchyRate:
    Ns: list
    diffs: list
    eps_hat: float
    residual: float
    monotone: bool

    @property
    def flagged(self) -> bool:
        return not self.monotone


def cauchy_rate(t: float, alpha: float, beta: float, Ns, grid_factor: float = 4.0) -> CauchyRate:
    """Fit second_moment_diff_exact(N, 2N) ~ C N^(-eps)."""
    Ns = [float(n) for n in Ns]
    if len(Ns) < 4:
        raise ValueError("cauchy_rate needs at least 4 values of N")
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("N list must be strictly increasing")
    diffs = [second_moment_diff_exact(t, alpha, beta, N, 2 * N, grid_for(2 * N, grid_factor)) for N in Ns]
    monotone = all(b < a for a, b in zip(diffs, diffs[1:]))
    x, y = np.log(Ns), np.log(np.maximum(diffs, 1e-300))
    slope, icept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icept)) ** 2)))
    return CauchyRate(Ns, [float(d) for d in diffs], float(-slope), resid, monotone)
