"""Truncated cylindrical Wiener process on a fine time grid.

Every path owns a Philox stream keyed by ``(master_seed, path_index)``, so a
path is reproducible regardless of which worker draws it. Coarse increments
are exact partial sums of the fine ones, which couples all step sizes of a
convergence study to one Brownian path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSpec:
    num_noise_modes: int = 64
    master_seed: int = 0

    def __post_init__(self):
        if self.num_noise_modes < 1:
            raise ValueError("num_noise_modes must be at least 1")


@dataclass(frozen=True, eq=False)
class WienerPath:
    increments: np.ndarray  # (N, J): beta_n(t_{j+1}) - beta_n(t_j)
    fine_step: float
    path_index: int = 0

    @property
    def num_modes(self) -> int:
        return self.increments.shape[0]

    @property
    def num_steps(self) -> int:
        return self.increments.shape[1]

    def values(self) -> np.ndarray:
        """Brownian values at all nodes, shape (N, J+1), starting from 0."""
        out = np.zeros((self.num_modes, self.num_steps + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out


def derive_path_stream(master_seed: int, path_index: int) -> np.random.Generator:
    """Independent counter-based stream for one Monte Carlo path."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_wiener_path(
    stream: np.random.Generator, num_modes: int, num_steps: int, fine_step: float,
    path_index: int = 0,
) -> WienerPath:
    """Draw an (N, J) increment matrix, mode-major with time ascending."""
    if fine_step <= 0:
        raise ValueError(f"fine_step must be positive, got {fine_step}")
    if num_steps < 1 or num_modes < 1:
        raise ValueError("need at least one mode and one step")
    z = stream.standard_normal((num_modes, num_steps))
    z *= np.sqrt(fine_step)
    return WienerPath(z, float(fine_step), path_index)


def sum_blocks(a: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` entries along the last axis.

    Power-of-two factors are reduced by repeated pairwise halving, so that
    ``sum_blocks(sum_blocks(a, 2), 2)`` is bit-identical to ``sum_blocks(a, 4)``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if factor < 1 or n % factor:
        raise ValueError(f"factor {factor} does not divide {n} steps")
    if factor & (factor - 1) == 0:
        while factor > 1:
            a = a[..., 0::2] + a[..., 1::2]
            factor //= 2
        return np.ascontiguousarray(a)
    blocks = a.reshape(a.shape[:-1] + (n // factor, factor))
    out = blocks[..., 0].copy()
    for i in range(1, factor):
        out += blocks[..., i]
    return out


def coarsen(path: WienerPath, factor: int) -> WienerPath:
    return WienerPath(
        sum_blocks(path.increments, factor), path.fine_step * factor, path.path_index
    )
