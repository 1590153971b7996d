"""Remainder dynamics for the truncated sine-Gordon wave equation.

We write ``u_N = Psi_N + v_N`` and solve

    v_tt + (1 - Delta) v = -Im(Theta_N(t) exp(i beta v)) + g(t),   (v, v_t)(0) = (u0, u1)

in the interaction picture.  ``g`` is an optional extra forcing used by
manufactured-solution tests.  The time discretization is a trapezoid rule on
the Duhamel integral with a Heun predictor, so the only approximation is in
time; the linear flow is exact per Fourier mode.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import integrate

from .noise import STREAM_RULE_VERSION, NoiseStream
from .renorm import sigma_exact
from .stochconv import advance, initial_state, rotation_tables
from .torus import (
    SpectralField,
    TorusGrid,
    grid_for,
    lp_norm,
    regrid,
    sobolev_norm_coeffs,
    to_physical,
    to_spectral,
)

log = logging.getLogger(__name__)

MODES = ("renormalized", "unrenormalized", "linear")
BLOWUP_FACTOR = 1e6
COMPARISON_EPS = 0.1


class SolverAbort(RuntimeError):
    """Raised when a run cannot continue (non-finite forcing)."""


# --- state -------------------------------------------------------------------


@dataclass
class WaveState:
    """Spectral coefficients of (v, v_t) at time ``t``."""

    grid: TorusGrid
    v_hat: np.ndarray
    vt_hat: np.ndarray
    t: float = 0.0
    s: float = 0.0

    @classmethod
    def from_fields(cls, grid: TorusGrid, v, vt, t: float = 0.0, s: float = 0.0) -> "WaveState":
        v, vt = np.asarray(v, dtype=float), np.asarray(vt, dtype=float)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(vt))):
            raise ValueError("initial fields must be finite")
        return cls(grid, to_spectral(v, grid), to_spectral(vt, grid), float(t), float(s))

    @classmethod
    def zero(cls, grid: TorusGrid, t: float = 0.0, s: float = 0.0) -> "WaveState":
        z = np.zeros((grid.M, grid.M), dtype=complex)
        return cls(grid, z, z.copy(), t, s)

    @property
    def v(self) -> np.ndarray:
        return to_physical(self.v_hat, self.grid, real=True)

    @property
    def vt(self) -> np.ndarray:
        return to_physical(self.vt_hat, self.grid, real=True)

    def energy(self) -> float:
        """||<nabla> v||^2 + ||v_t||^2, conserved by the free flow."""
        b2 = self.grid.norm_sq + 1.0
        return float(np.sum(b2 * np.abs(self.v_hat) ** 2 + np.abs(self.vt_hat) ** 2))


def _rotate(a: np.ndarray, b: np.ndarray, grid: TorusGrid, h: float):
    w = grid.bracket
    c, s = rotation_tables(grid.M, float(h))
    return c * a + (s / w) * b, -w * s * a + c * b


def linear_propagate(state: WaveState, h: float) -> WaveState:
    """Exact Klein-Gordon flow over time ``h`` (negative ``h`` runs backwards)."""
    a, b = _rotate(state.v_hat, state.vt_hat, state.grid, h)
    return replace(state, v_hat=a, vt_hat=b, t=state.t + h)


# --- one step ----------------------------------------------------------------


@dataclass
class StepForcing:
    """Forcing data at the two endpoints of a step.

    ``theta0``/``theta1`` are physical complex fields (or None for no
    nonlinearity); ``extra0``/``extra1`` optional real fields added to the
    right-hand side.
    """

    theta0: np.ndarray | None = None
    theta1: np.ndarray | None = None
    extra0: np.ndarray | None = None
    extra1: np.ndarray | None = None


def _net_forcing(theta, extra, v_phys: np.ndarray, beta: float, grid: TorusGrid) -> np.ndarray | None:
    """Spectral coefficients of extra - Im(theta exp(i beta v))."""
    g = None
    if theta is not None:
        if not np.all(np.isfinite(theta)):
            raise SolverAbort("forcing field Theta_N is not finite")
        g = -np.imag(theta * np.exp(1j * beta * v_phys))
    if extra is not None:
        if not np.all(np.isfinite(extra)):
            raise SolverAbort("extra forcing is not finite")
        g = extra if g is None else g + extra
    return None if g is None else to_spectral(g, grid)


def duhamel_step(
    state: WaveState,
    forcing: StepForcing,
    h: float,
    beta: float,
    v_end: np.ndarray | None = None,
) -> WaveState:
    """Advance ``(v, v_t)`` by ``h`` with the trapezoidal exponential integrator.

    The right end of the trapezoid needs ``v(t + h)``; it is taken from a
    forward-Euler (in the interaction picture) predictor unless ``v_end``
    supplies it as a physical field.
    """
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h}")
    grid = state.grid
    g0 = _net_forcing(forcing.theta0, forcing.extra0, state.v, beta, grid)
    a, b = state.v_hat, state.vt_hat
    if g0 is None and forcing.theta1 is None and forcing.extra1 is None:
        return linear_propagate(state, h)

    if v_end is None:
        bp = b if g0 is None else b + h * g0
        v_end = to_physical(_rotate(a, bp, grid, h)[0], grid, real=True)
    g1 = _net_forcing(forcing.theta1, forcing.extra1, v_end, beta, grid)

    bh = b if g0 is None else b + 0.5 * h * g0
    a1, b1 = _rotate(a, bh, grid, h)
    if g1 is not None:
        b1 = b1 + 0.5 * h * g1
    return replace(state, v_hat=a1, vt_hat=b1, t=state.t + h)


# --- configuration -------------------------------------------------------------


def single_mode_data(grid: TorusGrid, amplitude: float = 1.0, s: float = 1.0, n=(1, 0)):
    """(u0, u1) = (c cos(n.x), 0) scaled so that ||u0||_{H^s} = amplitude."""
    x1, x2 = grid.points
    u0 = np.cos(n[0] * x1 + n[1] * x2)
    norm = float(sobolev_norm_coeffs(to_spectral(u0, grid), grid, s))
    u0 = amplitude * u0 / norm if norm > 0 else u0
    return SpectralField(grid, to_spectral(u0, grid)), SpectralField(grid, np.zeros((grid.M, grid.M), complex))


def cosine_data(grid: TorusGrid):
    """(u0, u1) = (cos x1, 0), the default smooth data for experiments."""
    x1, _ = grid.points
    return SpectralField(grid, to_spectral(np.cos(x1), grid)), SpectralField(grid, np.zeros((grid.M, grid.M), complex))


@dataclass
class SolverConfig:
    """All parameters of one run.

    ``M`` defaults to the smallest FFT-friendly grid with ``M >= 2N + 2``.
    ``noise = False`` sets Psi_N to zero and Theta_N to one (times
    ``gamma_override`` if given).  ``theta_fn(t, grid)`` and
    ``extra_fn(t, grid)`` replace the stochastic forcing by deterministic
    fields; they exist for manufactured tests.
    """

    mode: str = "renormalized"
    N: float = 64
    beta: float = math.sqrt(math.pi)
    h: float = 0.005
    T: float = 0.1
    u0: SpectralField | None = None
    u1: SpectralField | None = None
    s: float = 1.0
    stream: NoiseStream = field(default_factory=NoiseStream)
    M: int | None = None
    alpha: float = 0.1
    eps: float = COMPARISON_EPS
    blowup_factor: float = BLOWUP_FACTOR
    gamma_override: float | None = None
    noise: bool = True
    theta_fn: Callable | None = None
    extra_fn: Callable | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.h > 0 or not self.T > 0:
            raise ValueError("h and T must be positive")
        if abs(self.T / self.h - round(self.T / self.h)) > 1e-9 * max(1.0, self.T / self.h):
            raise ValueError(f"T={self.T} is not a multiple of h={self.h}")
        self.grid.require_resolved(self.N, "solver")
        if self.mode == "renormalized" and self.beta**2 * self.T >= 8 * math.pi * self.alpha:
            warnings.warn(
                f"beta^2 T = {self.beta**2 * self.T:.4g} >= 8 pi alpha = {8 * math.pi * self.alpha:.4g}; "
                "outside the admissible regime for Theta_N in W^(-alpha, inf)",
                stacklevel=2,
            )

    @property
    def grid(self) -> TorusGrid:
        return grid_for(self.N) if self.M is None else TorusGrid(self.M)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.h))

    def times(self) -> np.ndarray:
        return self.h * np.arange(self.steps + 1)

    def manifest(self) -> dict:
        d = {
            k: v
            for k, v in asdict(self).items()
            if k not in ("u0", "u1", "stream", "theta_fn", "extra_fn")
        }
        d.update(
            M=self.grid.M,
            seed=self.stream.seed,
            experiment=self.stream.experiment,
            sample=self.stream.sample,
            stream_rule=STREAM_RULE_VERSION,
            steps=self.steps,
            data="custom" if self.u0 is not None or self.u1 is not None else "zero",
        )
        return d


def initial_wave(config: SolverConfig) -> WaveState:
    grid = config.grid
    z = np.zeros((grid.M, grid.M), dtype=complex)
    a = z if config.u0 is None else config.u0.coeffs.copy()
    b = z.copy() if config.u1 is None else config.u1.coeffs.copy()
    return WaveState(grid, a, b, 0.0, config.s)


# --- time marching -------------------------------------------------------------


@dataclass
class Node:
    """Everything known at one time node of a run."""

    k: int
    t: float
    psi_hat: np.ndarray | None
    theta: np.ndarray | None
    extra: np.ndarray | None
    wave: WaveState


def _theta(config: SolverConfig, t: float, psi_hat, grid: TorusGrid):
    if config.mode == "linear":
        return None
    if config.theta_fn is not None:
        return config.theta_fn(t, grid)
    phase = 1.0 if psi_hat is None else np.exp(1j * config.beta * to_physical(psi_hat, grid, real=True))
    if config.mode == "unrenormalized":
        # gamma_N^{-1} * Im(gamma_N e^{i beta Psi} e^{i beta v}) without forming gamma_N
        return np.broadcast_to(phase, (grid.M, grid.M)).astype(complex)
    if config.gamma_override is not None:
        gamma = float(config.gamma_override)
    elif psi_hat is None:
        gamma = 1.0
    else:
        lg = 0.5 * config.beta**2 * sigma_exact(t, config.N, grid)
        if lg > 700:
            raise SolverAbort(f"gamma_N overflows at t={t}: log gamma = {lg}")
        gamma = math.exp(lg)
    return gamma * np.broadcast_to(phase, (grid.M, grid.M)).astype(complex)


def march(config: SolverConfig, wave: WaveState | None = None) -> Iterator[Node]:
    """Yield the nodes of a run one at a time (node 0 is the initial data)."""
    grid = config.grid
    wave = initial_wave(config) if wave is None else wave
    psi = initial_state(config.N, grid, config.stream) if config.noise else None
    extra_at = (lambda t: config.extra_fn(t, grid)) if config.extra_fn is not None else (lambda t: None)
    t = 0.0
    psi_hat = None if psi is None else psi.a
    node = Node(0, t, psi_hat, _theta(config, t, psi_hat, grid), extra_at(t), wave)
    yield node
    for k in range(1, config.steps + 1):
        t = k * config.h
        if psi is not None:
            psi = advance(psi, config.h)
        psi_hat = None if psi is None else psi.a
        theta = _theta(config, t, psi_hat, grid)
        extra = extra_at(t)
        forcing = StepForcing(node.theta, theta, node.extra, extra)
        wave = duhamel_step(node.wave, forcing, config.h, config.beta)
        wave = replace(wave, t=t)
        node = Node(k, t, psi_hat, theta, extra, wave)
        yield node


@dataclass
class Trajectory:
    """Snapshots of one run plus a per-node norm table."""

    config: SolverConfig
    times: np.ndarray
    states: list
    psi: list
    norms: list
    halted: bool = False
    message: str = ""

    def u_hat(self, k: int) -> np.ndarray:
        p = self.psi[k]
        return self.states[k].v_hat if p is None else self.states[k].v_hat + p

    def u(self, k: int) -> np.ndarray:
        return to_physical(self.u_hat(k), self.config.grid, real=True)

    def manifest(self) -> dict:
        m = self.config.manifest()
        m.update(halted=self.halted, message=self.message, blowup_factor=self.config.blowup_factor)
        return m


def solve(config: SolverConfig, store: bool = True) -> Trajectory:
    """Run ``config`` to time T; halts if ||v||_{H^s} leaves the blow-up ball."""
    grid = config.grid
    times, states, psis, norms = [], [], [], []
    scale = None
    halted, message = False, ""
    for node in march(config):
        hs = float(sobolev_norm_coeffs(node.wave.v_hat, grid, config.s))
        if scale is None:
            scale = max(hs, 1.0)
        u_hat = node.wave.v_hat if node.psi_hat is None else node.wave.v_hat + node.psi_hat
        norms.append(
            {
                "t": node.t,
                "v_Hs": hs,
                "v_Hneg": float(sobolev_norm_coeffs(node.wave.v_hat, grid, -config.eps)),
                "u_Hneg": float(sobolev_norm_coeffs(u_hat, grid, -config.eps)),
            }
        )
        times.append(node.t)
        if store or node.k == 0:
            states.append(node.wave)
            psis.append(node.psi_hat)
        if hs > config.blowup_factor * scale:
            halted = True
            message = f"blow-up guard: ||v||_H^s = {hs:.3e} > {config.blowup_factor:g} x {scale:.3e} at t = {node.t}"
            log.warning(message)
            break
    if not store:
        states.append(node.wave)
        psis.append(node.psi_hat)
    return Trajectory(config, np.array(times), states, psis, norms, halted, message)


# --- Strichartz exponents and the X^s norm ---------------------------------------


@dataclass(frozen=True)
class StrichartzPair:
    """s-admissible (q, r) and dual s-admissible (qt, rt), all as exact rationals."""

    q: Fraction
    r: Fraction
    qt: Fraction
    rt: Fraction
    s: Fraction

    def constraints(self) -> dict[str, bool]:
        a, b, c, d, s = 1 / self.q, 1 / self.r, 1 / self.qt, 1 / self.rt, self.s
        return {
            "scaling": a + 2 * b == 1 - s,
            "dual_scaling": c + 2 * d - 2 == 1 - s,
            "admissible": 2 * a + b <= Fraction(1, 2),
            "dual_admissible": 2 * c + d >= Fraction(5, 2),
            "q_gt_2qt": self.q > 2 * self.qt,
            "r_gt_2rt": self.r > 2 * self.rt,
            "ranges": 1 <= self.qt <= 2 <= self.q and 1 < self.rt <= 2 <= self.r,
        }

    def feasible(self) -> bool:
        return all(self.constraints().values())


def strichartz_pairs(s: float, max_denominator: int = 120) -> StrichartzPair:
    """Exponents satisfying the scaling, admissibility and q > 2 qt, r > 2 rt conditions.

    1/q ranges over rationals with denominator up to ``max_denominator``;
    among feasible choices the lexicographically smallest (q, r) wins.  The
    dual pair takes qt = 1 when possible, else the midpoint of the feasible
    interval for 1/qt.
    """
    s = Fraction(str(s))
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    half = Fraction(1, 2)

    def dual_choice(a, b):
        # c = 1/qt with d = 1/rt = (3 - s - c)/2.  Closed bounds come from
        # 2c + d >= 5/2 and c in [1/2, 1]; open ones from d < 1, a < c/2, b < d/2.
        lo = max((2 + s) / 3, half)
        lo_open = max(1 - s, 2 * a)
        hi = Fraction(1)
        hi_open = 3 - s - 4 * b
        left, right = max(lo, lo_open), min(hi, hi_open)
        if left > right or (left == right and (lo_open >= lo or hi_open <= hi)):
            return None
        if hi < hi_open:
            return hi  # qt = 1
        return (left + right) / 2

    best = None
    for D in range(1, max_denominator + 1):
        for i in range(D // 2, -1, -1):
            a = Fraction(i, D)
            b = (1 - s - a) / 2
            if not (0 < b <= half and 2 * a + b <= half):
                continue
            c = dual_choice(a, b)
            if c is None:
                continue
            if best is None or a > best[0]:
                best = (a, b, c)
            break
    if best is None:
        raise ValueError(f"no Strichartz pair found for s = {s}")
    a, b, c = best
    d = (3 - s - c) / 2
    pair = StrichartzPair(1 / a if a else Fraction(10**9), 1 / b, 1 / c, 1 / d, s)
    if not pair.feasible():
        raise ValueError(f"no Strichartz pair found for s = {s}")
    return pair


def xs_norm(trajectory, s: float, T: float, pair: StrichartzPair) -> float:
    """Discrete X^s(T) norm of the v component of ``trajectory``.

    ``trajectory`` is a :class:`Trajectory` or a sequence of :class:`WaveState`
    snapshots with increasing times.  The L^q_T L^r_x part uses the trapezoid
    rule over the snapshot times.
    """
    states = trajectory.states if isinstance(trajectory, Trajectory) else list(trajectory)
    times = np.array([st.t for st in states])
    if len(states) == 0 or times[0] > 1e-12 or times[-1] < T - 1e-12:
        raise ValueError(f"trajectory does not cover [0, {T}]")
    keep = [i for i, t in enumerate(times) if t <= T + 1e-12]
    grid = states[0].grid
    q, r = float(pair.q), float(pair.r)
    hs = max(float(sobolev_norm_coeffs(states[i].v_hat, grid, s)) for i in keep)
    ht = max(float(sobolev_norm_coeffs(states[i].vt_hat, grid, s - 1)) for i in keep)
    lr = np.array([float(lp_norm(states[i].v, grid, r)) for i in keep])
    tt = times[keep]
    lq = float(integrate.trapezoid(lr**q, tt)) ** (1.0 / q) if len(keep) > 1 else 0.0
    return hs + ht + lq


# --- Picard iteration ------------------------------------------------------------


@dataclass
class PicardResult:
    diffs: list
    factors: list
    contracted: bool
    iterates: int
    message: str = ""


def _nodes_without_solve(config: SolverConfig):
    """Theta_N and extra forcing at every node, without solving for v."""
    grid = config.grid
    psi = initial_state(config.N, grid, config.stream) if config.noise else None
    out = []
    for k in range(config.steps + 1):
        t = k * config.h
        if k > 0 and psi is not None:
            psi = advance(psi, config.h)
        psi_hat = None if psi is None else psi.a
        extra = None if config.extra_fn is None else config.extra_fn(t, grid)
        out.append(Node(k, t, psi_hat, _theta(config, t, psi_hat, grid), extra, None))
    return out


def duhamel_map(config: SolverConfig, nodes: list[Node], traj: list[WaveState]) -> list[WaveState]:
    """Discrete Duhamel map: trapezoid rule with both endpoints taken from ``traj``."""
    out = [initial_wave(config)]
    for k in range(1, len(nodes)):
        forcing = StepForcing(nodes[k - 1].theta, nodes[k].theta, nodes[k - 1].extra, nodes[k].extra)
        out.append(_map_step(out[k - 1], traj[k - 1], traj[k], forcing, config))
    return out


def _map_step(prev: WaveState, left: WaveState, right: WaveState, forcing: StepForcing, config: SolverConfig):
    grid, h = prev.grid, config.h
    g0 = _net_forcing(forcing.theta0, forcing.extra0, left.v, config.beta, grid)
    g1 = _net_forcing(forcing.theta1, forcing.extra1, right.v, config.beta, grid)
    b = prev.vt_hat if g0 is None else prev.vt_hat + 0.5 * h * g0
    a1, b1 = _rotate(prev.v_hat, b, grid, h)
    if g1 is not None:
        b1 = b1 + 0.5 * h * g1
    return WaveState(grid, a1, b1, prev.t + h, prev.s)


def picard_iterate(
    config: SolverConfig,
    guess: list[WaveState] | None = None,
    iterations: int = 8,
    pair: StrichartzPair | None = None,
    floor: float = 1e-13,
) -> tuple[list[WaveState], PicardResult]:
    """Fixed-point iteration of the discrete Duhamel map.

    Returns the last iterate and the successive-difference norms in the
    discrete X^s(T) proxy.  Differences below ``floor`` times the iterate
    size are at rounding level and end the iteration.
    """
    if iterations < 2:
        raise ValueError("need at least 2 iterations")
    pair = strichartz_pairs(min(max(config.s, 0.05), 0.95)) if pair is None else pair
    nodes = _nodes_without_solve(config)
    if guess is None:
        w = initial_wave(config)
        guess = [w]
        for _ in range(config.steps):
            guess.append(linear_propagate(guess[-1], config.h))
    cur = guess
    diffs, factors = [], []
    streak, message = 0, ""
    for _ in range(iterations):
        nxt = duhamel_map(config, nodes, cur)
        delta = [WaveState(st.grid, st.v_hat - o.v_hat, st.vt_hat - o.vt_hat, st.t, st.s) for st, o in zip(nxt, cur)]
        d = xs_norm(delta, config.s, config.T, pair)
        size = xs_norm(nxt, config.s, config.T, pair)
        cur = nxt
        if diffs and diffs[-1] > 0:
            f = d / diffs[-1]
            factors.append(f)
            streak = streak + 1 if f > 1 else 0
            if streak >= 3:
                message = "not contracting: factor > 1 on 3 consecutive iterations"
                break
        diffs.append(d)
        if d <= floor * max(size, 1.0):
            break
    contracted = not message and bool(factors) and all(f < 1 for f in factors[:2])
    return cur, PicardResult(diffs, factors, contracted, len(diffs), message)


@dataclass
class FactorScan:
    Ts: list
    factors: list  # first contraction factor per T
    theta_hat: float  # empirical exponent in factor ~ C T^theta

    @property
    def monotone(self) -> bool:
        """Factors increase with T (Ts are sorted ascending)."""
        return all(b > a for a, b in zip(self.factors, self.factors[1:]))


def picard_factor_scan(config: SolverConfig, Ts: Sequence[float], iterations: int = 4) -> FactorScan:
    """First Picard contraction factor for each horizon T (same h, data and stream)."""
    Ts = sorted(float(T) for T in Ts)
    factors = []
    for T in Ts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = replace(config, T=T)
        _, res = picard_iterate(cfg, iterations=iterations)
        factors.append(res.factors[0] if res.factors else float("nan"))
    ok = [(T, f) for T, f in zip(Ts, factors) if f > 0 and math.isfinite(f)]
    theta = float(np.polyfit(np.log([T for T, _ in ok]), np.log([f for _, f in ok]), 1)[0]) if len(ok) > 1 else float("nan")
    return FactorScan(Ts, factors, theta)


def guard_failure_rates(config: SolverConfig, Ts: Sequence[float], realizations: int = 10) -> dict[float, float]:
    """Fraction of realizations halted by the blow-up guard before each horizon T.

    One run to max(Ts) per realization; a run halted at time t counts as a
    failure for every T >= t.
    """
    Ts = sorted(float(T) for T in Ts)
    halts = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for r in range(realizations):
            cfg = replace(config, T=Ts[-1], stream=config.stream.with_sample(config.stream.sample + r))
            traj = solve(cfg, store=False)
            halts.append(traj.times[-1] if traj.halted else math.inf)
    return {T: sum(h <= T + 1e-12 for h in halts) / realizations for T in Ts}


# --- experiments -----------------------------------------------------------------


@dataclass
class TrivialityResult:
    Ns: list
    errors: np.ndarray  # (realizations, len(Ns))
    mean_error: list
    slope: float
    intercept: float
    r2: float
    ratios: list
    excluded: list

    @property
    def strictly_decreasing(self) -> bool:
        e = self.mean_error
        return all(b < a for a, b in zip(e, e[1:]))


def _hneg_distance(a: WaveState, b: WaveState, eps: float) -> float:
    return float(sobolev_norm_coeffs(a.v_hat - b.v_hat, a.grid, -eps))


def default_triviality_config(N: float = 16, **kw) -> SolverConfig:
    kw.setdefault("beta", math.sqrt(math.pi))
    kw.setdefault("T", 0.25)
    kw.setdefault("h", 0.0125)
    kw.setdefault("s", 1.0)
    cfg = SolverConfig(mode="unrenormalized", N=N, **kw)
    if cfg.u0 is None:
        cfg.u0, cfg.u1 = cosine_data(cfg.grid)
    return cfg


def triviality_experiment(
    Ns: Sequence[float] = (16, 32, 64, 128, 256, 512),
    config: SolverConfig | None = None,
    realizations: int = 1,
) -> TrivialityResult:
    """e(N) = max_t ||u_N - u_lin||_{H^-eps} for the unrenormalized dynamics.

    Every N shares the noise streams of ``config.stream`` (sample index =
    realization), so the runs are coupled across N.  Each run uses the grid
    ``grid_for(N)`` unless ``config.M`` pins one.  e(N) is averaged over
    realizations and fitted as e = a + b / log N.
    """
    base = default_triviality_config() if config is None else config
    Ns = [float(n) for n in Ns]
    errs = np.full((realizations, len(Ns)), np.nan)
    excluded = []
    for r in range(realizations):
        stream = base.stream.with_sample(base.stream.sample + r)
        for j, N in enumerate(Ns):
            cfg = replace(base, N=N, mode="unrenormalized", stream=stream)
            grid = cfg.grid
            cfg.u0 = None if base.u0 is None else regrid(base.u0, grid)
            cfg.u1 = None if base.u1 is None else regrid(base.u1, grid)
            lin = replace(cfg, mode="linear")
            worst, scale = 0.0, None
            try:
                for nu, nl in zip(march(cfg), march(lin)):
                    hs = float(sobolev_norm_coeffs(nu.wave.v_hat, grid, cfg.s))
                    scale = max(hs, 1.0) if scale is None else scale
                    if hs > cfg.blowup_factor * scale:
                        raise SolverAbort("blow-up guard")
                    worst = max(worst, _hneg_distance(nu.wave, nl.wave, cfg.eps))
            except SolverAbort as exc:
                excluded.append((r, N, str(exc)))
                continue
            errs[r, j] = worst
    mean = np.nanmean(errs, axis=0)
    x = 1.0 / np.log(np.array(Ns))
    slope, icept = np.polyfit(x, mean, 1)
    pred = slope * x + icept
    ss_res = float(np.sum((mean - pred) ** 2))
    ss_tot = float(np.sum((mean - mean.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    ratios = [
        float((mean[j + 1] / mean[j]) / (math.log(Ns[j]) / math.log(Ns[j + 1])))
        for j in range(len(Ns) - 1)
        if mean[j] > 0
    ]
    return TrivialityResult(Ns, errs, [float(m) for m in mean], float(slope), float(icept), r2, ratios, excluded)


@dataclass
class CoupledResult:
    Ns: list
    diffs: np.ndarray  # (realizations, len(Ns) - 1): ||v_{2N} - v_N|| in C_T H^-eps
    M: int

    def majority_decreasing(self) -> list[bool]:
        out = []
        for row in self.diffs:
            dec = sum(b < a for a, b in zip(row, row[1:]))
            out.append(bool(dec * 2 > len(row) - 1))
        return out


def coupled_convergence(
    Ns: Sequence[float] = (32, 64, 128, 256),
    config: SolverConfig | None = None,
    realizations: int = 10,
) -> CoupledResult:
    """Renormalized runs at N and 2N on one noise realization and one grid.

    All truncations share the grid of the finest run, so ``v_N`` and
    ``v_2N`` are compared coefficient by coefficient.
    """
    Ns = [float(n) for n in Ns]
    ladder = sorted(set(Ns) | {2 * n for n in Ns})
    base = config or SolverConfig(mode="renormalized", T=0.1, h=0.01, N=ladder[-1])
    grid = grid_for(ladder[-1]) if base.M is None else TorusGrid(base.M)
    if base.u0 is None:
        u0, u1 = cosine_data(grid)
    else:
        u0, u1 = regrid(base.u0, grid), regrid(base.u1, grid)
    diffs = np.zeros((realizations, len(Ns)))
    for r in range(realizations):
        stream = base.stream.with_sample(base.stream.sample + r)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfgs = [replace(base, N=n, M=grid.M, stream=stream, u0=u0, u1=u1, mode="renormalized") for n in ladder]
        worst = np.zeros(len(Ns))
        for nodes in zip(*(march(c) for c in cfgs)):
            by_n = dict(zip(ladder, nodes))
            for j, n in enumerate(Ns):
                worst[j] = max(worst[j], _hneg_distance(by_n[2 * n].wave, by_n[n].wave, base.eps))
        diffs[r] = worst
    return CoupledResult(Ns, diffs, grid.M)


# --- manufactured solution -------------------------------------------------------


def manufactured_problem(beta: float = 1.0, M: int = 32, T: float = 1.0, h: float = 0.1):
    """Deterministic test with exact solution v*(t, x) = cos(t) cos(x1).

    Theta*(t, x) = (1 + sin(t) / 2) exp(i cos(x2)) is smooth; the extra
    forcing g = cos(t) cos(x1) + Im(Theta* exp(i beta v*)) makes v* exact.
    """
    grid = TorusGrid(M)
    x1, x2 = grid.points

    def theta_fn(t, g=grid):
        return (1.0 + 0.5 * math.sin(t)) * np.exp(1j * np.cos(x2))

    def extra_fn(t, g=grid):
        v = math.cos(t) * np.cos(x1)
        return math.cos(t) * np.cos(x1) + np.imag(theta_fn(t) * np.exp(1j * beta * v))

    u0 = SpectralField(grid, to_spectral(np.cos(x1), grid))
    u1 = SpectralField(grid, np.zeros((M, M), complex))
    cfg = SolverConfig(
        mode="renormalized", N=1, beta=beta, h=h, T=T, u0=u0, u1=u1, M=M,
        noise=False, theta_fn=theta_fn, extra_fn=extra_fn, alpha=1.0,
    )
    exact = math.cos(T) * np.cos(x1)
    return cfg, exact


def manufactured_errors(hs: Sequence[float], beta: float = 1.0, M: int = 32, T: float = 1.0) -> list[float]:
    """L^2 endpoint errors of the manufactured test for each step size."""
    out = []
    for h in hs:
        cfg, exact = manufactured_problem(beta, M, T, h)
        traj = solve(cfg, store=False)
        err = traj.states[-1].v - exact
        out.append(float(lp_norm(err, cfg.grid, 2)))
    return out
