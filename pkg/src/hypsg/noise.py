"""Cylindrical Wiener increments on the frequency lattice.

Stream rule (version 1)
-----------------------
Every Gaussian draw is keyed by ``(seed, experiment, sample, step, block)``:
a ``numpy.random.SeedSequence(seed, spawn_key=(crc32(experiment), sample,
step, block))`` seeds a Philox generator.  Modes are enumerated on the
half-lattice ``{n1 > 0} u {n1 = 0, n2 > 0}`` plus ``n = 0``, ordered by
max-norm shell ``max(|n1|, |n2|)`` and then lexicographically.  Block ``b``
holds shells ``[16 b, 16 b + 16)`` and always draws its full size, so the
normals attached to a mode never depend on the grid size or on the
truncation ``N``.  This is what lets runs at different ``N`` share one noise
realization.  Grid modes on the Nyquist boundary (a component equal to
``-M/2``) are not part of that enumeration; they use block ``NYQUIST_BLOCK``.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .torus import TorusGrid, to_physical

STREAM_RULE_VERSION = 1
BLOCK_SHELLS = 16
NYQUIST_BLOCK = 1_000_000


def shell_start(k: int) -> int:
    """Index of the first half-lattice mode of max-norm shell ``k``."""
    return 0 if k <= 0 else 1 + 2 * k * (k - 1)


def half_lattice_size(max_shell: int) -> int:
    return shell_start(max_shell + 1)


@lru_cache(maxsize=64)
def canonical_modes(max_shell: int) -> np.ndarray:
    """Half-lattice modes with shell <= max_shell in canonical order, shape (count, 2)."""
    r = np.arange(-max_shell, max_shell + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    n1, n2 = n1.ravel(), n2.ravel()
    keep = (n1 > 0) | ((n1 == 0) & (n2 >= 0))
    n1, n2 = n1[keep], n2[keep]
    shell = np.maximum(np.abs(n1), np.abs(n2))
    order = np.lexsort((n2, n1, shell))
    modes = np.stack([n1[order], n2[order]], axis=1)
    modes.setflags(write=False)
    return modes


def _experiment_key(experiment) -> int:
    if isinstance(experiment, (int, np.integer)):
        return int(experiment)
    return zlib.crc32(str(experiment).encode("utf-8"))


@dataclass(frozen=True)
class NoiseStream:
    """Value-like handle on a family of counter-keyed Gaussian streams."""

    seed: int = 0
    experiment: int | str = 0
    sample: int = 0

    def with_sample(self, sample: int) -> "NoiseStream":
        return replace(self, sample=int(sample))

    def generator(self, step: int, block: int) -> np.random.Generator:
        key = (_experiment_key(self.experiment), int(self.sample), int(step), int(block))
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(self.seed), spawn_key=key)))

    def normals(self, step: int, max_shell: int, width: int) -> np.ndarray:
        """Standard normals for the canonical modes up to ``max_shell``, shape (count, width)."""
        count = half_lattice_size(max_shell)
        chunks = []
        last_block = max_shell // BLOCK_SHELLS
        for b in range(last_block + 1):
            size = shell_start(BLOCK_SHELLS * (b + 1)) - shell_start(BLOCK_SHELLS * b)
            chunks.append(self.generator(step, b).standard_normal((size, width)))
        return np.concatenate(chunks, axis=0)[:count]


@lru_cache(maxsize=64)
def mode_indices(M: int, max_shell: int):
    """Grid indices of canonical modes ``n`` and of their reflections ``-n``."""
    if max_shell > M // 2 - 1:
        raise ValueError(f"shell {max_shell} is not fully representable on an M={M} grid")
    modes = canonical_modes(max_shell)
    idx = (modes[:, 0] % M, modes[:, 1] % M)
    neg = ((-modes[:, 0]) % M, (-modes[:, 1]) % M)
    return idx, neg


@lru_cache(maxsize=16)
def nyquist_pairs(M: int):
    """Boundary modes split into conjugate pairs and self-conjugate modes (mod M)."""
    h = M // 2
    seen = set()
    pairs, selfconj = [], []
    for i in range(M):
        for j in range(M):
            if i != h and j != h:
                continue
            if (i, j) in seen:
                continue
            partner = ((-i) % M, (-j) % M)
            seen.add((i, j))
            seen.add(partner)
            if partner == (i, j):
                selfconj.append((i, j))
            else:
                pairs.append(((i, j), partner))
    return pairs, selfconj


def scatter_hermitian(grid: TorusGrid, values: np.ndarray, max_shell: int) -> np.ndarray:
    """Place half-lattice values on the grid and mirror them as conjugates."""
    idx, neg = mode_indices(grid.M, max_shell)
    out = np.zeros(values.shape[:-1] + (grid.M, grid.M), dtype=complex)
    out[..., neg[0], neg[1]] = np.conj(values)
    out[..., idx[0], idx[1]] = values
    return out


@dataclass
class WienerIncrement:
    """Per-mode increments ``Delta B_n`` over a step of length ``h``."""

    grid: TorusGrid
    h: float
    coeffs: np.ndarray


def sample_increment(grid: TorusGrid, h: float, stream: NoiseStream, step: int = 0) -> WienerIncrement:
    """Draw ``B_n(t + h) - B_n(t)`` for every lattice mode of the grid.

    Non-self-conjugate modes get independent real and imaginary parts of
    variance ``h/2``; self-conjugate modes are real with variance ``h``.
    """
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h}")
    K = grid.M // 2 - 1
    z = stream.normals(step, K, 2)
    vals = np.sqrt(h / 2.0) * (z[:, 0] + 1j * z[:, 1])
    vals[0] = np.sqrt(h) * z[0, 0]
    coeffs = scatter_hermitian(grid, vals, K)

    pairs, selfconj = nyquist_pairs(grid.M)
    zn = stream.generator(step, NYQUIST_BLOCK).standard_normal((len(pairs) + len(selfconj), 2))
    for k, (a, b) in enumerate(pairs):
        v = np.sqrt(h / 2.0) * (zn[k, 0] + 1j * zn[k, 1])
        coeffs[a] = v
        coeffs[b] = np.conj(v)
    for k, a in enumerate(selfconj, start=len(pairs)):
        coeffs[a] = np.sqrt(h) * zn[k, 0]
    return WienerIncrement(grid, float(h), coeffs)


def white_noise_field(increment: WienerIncrement) -> np.ndarray:
    """Physical-space view ``sum_n Delta B_n e_n / h`` (a real field)."""
    return to_physical(increment.coeffs / increment.h, increment.grid, real=True)
