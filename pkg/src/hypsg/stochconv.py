"""Exact sampling of the truncated stochastic convolution Psi_N.

Each Fourier mode of ``Psi_N`` together with its time derivative is a
two-dimensional linear SDE

    da = b dt,    db = -<n>^2 a dt + chi_N(n) dB_n,

whose Gaussian transition over a step ``h`` is known in closed form.  We
advance the pair with the rotation of the homogeneous flow plus a correlated
Gaussian kick drawn through a 2x2 Cholesky factor, so sample values are exact
in law at every node of the time grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .noise import STREAM_RULE_VERSION, NoiseStream, canonical_modes, scatter_hermitian
from .torus import TorusGrid, cutoff_radial, to_physical


def _x_minus_sin(x: np.ndarray) -> np.ndarray:
    """x - sin(x) without cancellation for small x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, x, 0.0)
    series = xs**3 / 6.0 - xs**5 / 120.0 + xs**7 / 5040.0
    return np.where(small, series, x - np.sin(x))


def mode_variance(t, omega, chi):
    """Var of a_n(t) from zero data: chi^2 [t/(2w^2) - sin(2tw)/(4w^3)]."""
    omega = np.asarray(omega, dtype=float)
    return np.asarray(chi) ** 2 * _x_minus_sin(2.0 * t * omega) / (4.0 * omega**3)


def transition_covariance(h: float, omega, chi):
    """Covariance entries (Vaa, Vbb, Cab) of the noise kick over one step."""
    omega = np.asarray(omega, dtype=float)
    chi2 = np.asarray(chi, dtype=float) ** 2
    vaa = chi2 * _x_minus_sin(2.0 * h * omega) / (4.0 * omega**3)
    vbb = chi2 * (h / 2.0 + np.sin(2.0 * h * omega) / (4.0 * omega))
    cab = chi2 * np.sin(h * omega) ** 2 / (2.0 * omega**2)
    return vaa, vbb, cab


def max_shell_for(N: float) -> int:
    """Largest max-norm shell holding a mode with chi_N(n) > 0, i.e. |n| < N."""
    return max(int(math.ceil(N)) - 1, 0)


@dataclass
class ConvolutionState:
    """Spectral coefficients of (Psi_N, d/dt Psi_N) at time ``t``.

    ``a`` and ``b`` have shape ``(M, M)`` for one path, or ``(S, M, M)`` when
    ``samples`` lists the sample indices of a batch of independent paths.
    """

    grid: TorusGrid
    N: float
    t: float
    a: np.ndarray
    b: np.ndarray
    stream: NoiseStream
    step: int = 0
    samples: tuple[int, ...] | None = None
    clamped: int = 0
    log: list[str] = field(default_factory=list)

    @property
    def batch(self) -> int | None:
        return None if self.samples is None else len(self.samples)


def initial_state(
    N: float,
    grid: TorusGrid,
    stream: NoiseStream,
    samples=None,
) -> ConvolutionState:
    """Zero data at t = 0."""
    if N <= 0:
        raise ValueError(f"truncation N must be positive, got {N}")
    grid.require_resolved(N, "stochastic convolution")
    shape = (grid.M, grid.M) if samples is None else (len(samples), grid.M, grid.M)
    samples = None if samples is None else tuple(int(s) for s in samples)
    z = np.zeros(shape, dtype=complex)
    return ConvolutionState(grid, float(N), 0.0, z, z.copy(), stream, 0, samples)


@lru_cache(maxsize=32)
def _kick_factors(N: float, h: float):
    """Cholesky factors (l11, l21, l22) of the per-mode kick covariance, plus clamp count."""
    modes = canonical_modes(max_shell_for(N))
    omega = np.sqrt(1.0 + (modes**2).sum(axis=1))
    chi = cutoff_radial(np.hypot(modes[:, 0], modes[:, 1]) / N)
    vaa, vbb, cab = transition_covariance(h, omega, chi)
    # complex modes split their variance between real and imaginary parts
    half = np.full(len(modes), 0.5)
    half[0] = 1.0
    vaa, vbb, cab = vaa * half, vbb * half, cab * half

    live = (vaa > 0) & (vbb > 0)
    # product of square roots, since vaa * vbb underflows for tiny steps
    denom = np.where(live, np.sqrt(vaa) * np.sqrt(vbb), 1.0)
    rho = np.where(live, cab / denom, 0.0)
    clamped = int(np.count_nonzero(np.abs(rho) > 1.0))
    rho = np.clip(rho, -1.0, 1.0)
    factors = (np.sqrt(vaa), rho * np.sqrt(vbb), np.sqrt(vbb * (1.0 - rho**2)))
    for f in factors:
        f.setflags(write=False)
    return factors, clamped


def _kicks(state: ConvolutionState, h: float, stream: NoiseStream):
    """Correlated Gaussian kicks (xi_a, xi_b) on the grid, plus clamp count."""
    K = max_shell_for(state.N)
    (l11, l21, l22), clamped = _kick_factors(float(state.N), float(h))

    ids = [stream.sample] if state.samples is None else state.samples
    z = np.stack([stream.with_sample(s).normals(state.step, K, 4) for s in ids])
    xa = l11 * (z[..., 0] + 1j * z[..., 2])
    xb = l21 * (z[..., 0] + 1j * z[..., 2]) + l22 * (z[..., 1] + 1j * z[..., 3])
    xa[:, 0] = xa[:, 0].real
    xb[:, 0] = xb[:, 0].real
    ga = scatter_hermitian(state.grid, xa, K)
    gb = scatter_hermitian(state.grid, xb, K)
    if state.samples is None:
        ga, gb = ga[0], gb[0]
    return ga, gb, clamped


@lru_cache(maxsize=16)
def rotation_tables(M: int, h: float):
    """cos(h<n>) and sin(h<n>) on an M x M grid."""
    w = TorusGrid(M).bracket
    c, s = np.cos(h * w), np.sin(h * w)
    c.setflags(write=False)
    s.setflags(write=False)
    return c, s


def advance(state: ConvolutionState, h: float, stream: NoiseStream | None = None) -> ConvolutionState:
    """Exact-in-law update of the state from ``t`` to ``t + h``."""
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h}")
    stream = state.stream if stream is None else stream
    omega = state.grid.bracket
    c, s = rotation_tables(state.grid.M, float(h))
    xa, xb, clamped = _kicks(state, h, stream)
    a = c * state.a + (s / omega) * state.b + xa
    b = -omega * s * state.a + c * state.b + xb
    log = list(state.log)
    if clamped:
        log.append(f"step {state.step}: clamped {clamped} cross-correlations to +-1 (h={h})")
    return replace(
        state,
        t=state.t + h,
        a=a,
        b=b,
        stream=stream,
        step=state.step + 1,
        clamped=state.clamped + clamped,
        log=log,
    )


def psi_field(state: ConvolutionState) -> np.ndarray:
    """Psi_N(t, .) on the grid."""
    return to_physical(state.a, state.grid, real=True)


def dpsi_field(state: ConvolutionState) -> np.ndarray:
    """d/dt Psi_N(t, .) on the grid."""
    return to_physical(state.b, state.grid, real=True)


def sample_path(
    N: float,
    times,
    stream: NoiseStream,
    grid: TorusGrid,
    samples=None,
) -> list[ConvolutionState]:
    """Snapshots of Psi_N on a strictly increasing time grid starting at 0."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or times[0] != 0.0:
        raise ValueError("time grid must be one-dimensional and start at 0")
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    state = initial_state(N, grid, stream, samples)
    out = [state]
    for t_prev, t_next in zip(times[:-1], times[1:]):
        state = advance(state, float(t_next - t_prev))
        out.append(state)
    return out


# --- snapshot serialization ----------------------------------------------------


def save_snapshot(state: ConvolutionState, path) -> Path:
    """Write ``(t, N, coefficients)`` plus stream metadata as ``.npz``."""
    path = Path(path)
    np.savez(
        path,
        t=state.t,
        N=state.N,
        M=state.grid.M,
        step=state.step,
        a=state.a,
        b=state.b,
        seed=state.stream.seed,
        experiment=str(state.stream.experiment),
        sample=state.stream.sample,
        samples=np.array([] if state.samples is None else state.samples, dtype=np.int64),
        batched=state.samples is not None,
        stream_rule=STREAM_RULE_VERSION,
    )
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_snapshot(path) -> ConvolutionState:
    with np.load(path, allow_pickle=False) as d:
        experiment = str(d["experiment"])
        stream = NoiseStream(int(d["seed"]), int(experiment) if experiment.isdigit() else experiment, int(d["sample"]))
        samples = tuple(int(s) for s in d["samples"]) if bool(d["batched"]) else None
        return ConvolutionState(
            TorusGrid(int(d["M"])),
            float(d["N"]),
            float(d["t"]),
            d["a"].copy(),
            d["b"].copy(),
            stream,
            int(d["step"]),
            samples,
        )
