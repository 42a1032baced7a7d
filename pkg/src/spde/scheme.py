"""Implicit Euler for dY + AY dt = f dW, its fine-grid reference, and the backward dual scheme.

Forcings are rank one in (space, noise mode): component n of f is
``amplitude * n**(-decay) * profile``, optionally multiplied by a bounded
adapted scalar that is frozen on each coarse interval.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .noise import NoiseSpec, WienerPath, sum_blocks
from .spectral import SpectralBasis, resolvent_factors, to_spectral

FORCING_KINDS = ("deterministic_decay", "adapted_lagged")
PROFILES = ("eigenfield_1", "constant_one")


@dataclass(frozen=True)
class ForcingSpec:
    kind: str = "deterministic_decay"
    decay: float = 1.0
    profile: str | tuple = "eigenfield_1"
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}; expected one of {FORCING_KINDS}")
        if not self.decay > 0.5:
            raise ValueError(f"mode decay exponent must exceed 1/2, got {self.decay}")
        if isinstance(self.profile, str):
            if self.profile not in PROFILES:
                raise ValueError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        else:
            object.__setattr__(self, "profile", tuple(float(c) for c in self.profile))

    @property
    def adapted(self) -> bool:
        return self.kind == "adapted_lagged"


def profile_coefficients(profile, basis: SpectralBasis) -> np.ndarray:
    """Spectral coefficients of a spatial profile (name or explicit coefficients)."""
    if isinstance(profile, str):
        if profile == "eigenfield_1":
            c = np.zeros(basis.num_modes)
            c[0] = 1.0
            return c
        if profile == "constant_one":
            return to_spectral(np.ones(basis.grid.num_points), basis)
        raise ValueError(f"unknown profile {profile!r}")
    c = np.asarray(profile, dtype=float)
    if c.shape != (basis.num_modes,):
        raise ValueError(f"custom profile needs {basis.num_modes} coefficients, got {c.size}")
    return c


def mode_weights(spec: ForcingSpec, num_noise_modes: int) -> np.ndarray:
    n = np.arange(1, num_noise_modes + 1, dtype=float)
    return spec.amplitude * n ** (-spec.decay)


def forcing_matrix(spec: ForcingSpec, basis: SpectralBasis, num_noise_modes: int) -> np.ndarray:
    """(K, N) matrix; column n holds the spectral coefficients of component n."""
    return np.outer(profile_coefficients(spec.profile, basis), mode_weights(spec, num_noise_modes))


def brownian_at_nodes(first_mode_increments: np.ndarray, steps_per_interval: int) -> np.ndarray:
    """W_1 at coarse nodes t_0..t_J from fine increments of the first noise mode."""
    coarse = sum_blocks(first_mode_increments, steps_per_interval)
    out = np.zeros(coarse.shape[:-1] + (coarse.shape[-1] + 1,))
    np.cumsum(coarse, axis=-1, out=out[..., 1:])
    return out


def forcing_scales(spec: ForcingSpec, first_mode_increments, num_intervals: int) -> np.ndarray:
    """Per-interval scalar multiplying the deterministic forcing, shape (..., J)."""
    row = np.asarray(first_mode_increments, dtype=float)
    if not spec.adapted:
        return np.ones(row.shape[:-1] + (num_intervals,))
    if row.shape[-1] % num_intervals:
        raise ValueError("coarse intervals do not divide the path")
    w = brownian_at_nodes(row, row.shape[-1] // num_intervals)
    return np.tanh(w[..., :-1])


def evaluate_forcing(
    spec: ForcingSpec,
    basis: SpectralBasis,
    j: int,
    num_noise_modes: int,
    path: WienerPath | None = None,
    steps_per_interval: int = 1,
) -> np.ndarray:
    """f(t_j) as a (K, N) coefficient matrix.

    For the adapted kind only fine increments with index < j * steps_per_interval
    are read, so the value is F_{t_j}-measurable by construction.
    """
    if j < 0:
        raise ValueError("interval index must be nonnegative")
    F = forcing_matrix(spec, basis, num_noise_modes)
    if not spec.adapted:
        return F
    if path is None:
        raise ValueError("adapted forcing needs the Wiener path")
    past = path.increments[0, : j * steps_per_interval]
    if past.size != j * steps_per_interval:
        raise ValueError(f"interval {j} lies beyond the path")
    w = brownian_at_nodes(past, steps_per_interval)[-1] if j > 0 else 0.0
    return np.tanh(w) * F


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Coefficient vectors indexed by time node: ``coeffs[j]`` is Y_j (or Z_j).

    Forward trajectories start from zero at index 0; backward (dual) ones end
    at zero at the last index.
    """

    coeffs: np.ndarray  # (J+1, K)
    step: float
    path_index: int = 0
    backward: bool = False

    @property
    def num_steps(self) -> int:
        return self.coeffs.shape[0] - 1


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    basis: SpectralBasis
    T: float = 1.0
    J: int = 16
    refinement: int = 1
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        if self.J < 1 or self.refinement < 1:
            raise ValueError("J and refinement must be positive")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (2 <= v < np.inf):
                raise ValueError(f"{name} must lie in [2, inf), got {v}")

    @property
    def tau(self) -> float:
        return self.T / self.J

    @property
    def fine_steps(self) -> int:
        return self.J * self.refinement

    @property
    def fine_step(self) -> float:
        return self.T / self.fine_steps


def forward_step(Y, f_j, dW, tau: float, basis: SpectralBasis) -> np.ndarray:
    """Y_{j+1} = (I + tau A)^{-1} (Y_j + f_j dW_j)."""
    if not tau > 0:
        raise ValueError(f"time step must be positive, got {tau}")
    return (np.asarray(Y, dtype=float) + np.asarray(f_j) @ np.asarray(dW)) * resolvent_factors(
        basis, tau
    )


def simulate_batch(
    basis: SpectralBasis,
    spec: ForcingSpec,
    increments: np.ndarray,
    step: float,
    scales: np.ndarray,
) -> np.ndarray:
    """Run the scheme for a batch of paths.

    increments: (B, N, S) noise increments on the stepping grid.
    scales: (B, J) adapted multipliers on J coarse intervals, J dividing S.
    Returns (S+1, B, K) coefficients.
    """
    if not step > 0:
        raise ValueError(f"time step must be positive, got {step}")
    B, N, S = increments.shape
    drive = np.matmul(mode_weights(spec, N), increments)  # (B, S)
    J = scales.shape[-1]
    if S % J:
        raise ValueError(f"{J} forcing intervals do not divide {S} steps")
    drive = drive * np.repeat(scales, S // J, axis=-1)
    inputs = np.ascontiguousarray(drive.T[:, :, None] * profile_coefficients(spec.profile, basis))
    return kernels.forward_recursion(resolvent_factors(basis, step), inputs)


def run_forward(config: SchemeConfig, path: WienerPath) -> Trajectory:
    """Coarse scheme with step T/J driven by (coarsenings of) ``path``."""
    if path.num_steps % config.J:
        raise ValueError(
            f"path with {path.num_steps} steps cannot be coarsened to J={config.J}"
        )
    if path.num_modes != config.noise.num_noise_modes:
        raise ValueError("path noise modes do not match the configuration")
    m = path.num_steps // config.J
    dW = sum_blocks(path.increments, m)
    scales = forcing_scales(config.forcing, path.increments[0], config.J)
    Y = simulate_batch(config.basis, config.forcing, dW[None], config.tau, scales[None])
    return Trajectory(Y[:, 0], config.tau, path.path_index)


def run_reference(config: SchemeConfig, path: WienerPath) -> Trajectory:
    """Same scheme on the fine grid with forcing frozen on the coarse intervals."""
    if path.num_steps != config.fine_steps:
        raise ValueError(
            f"reference needs {config.fine_steps} fine increments, path has {path.num_steps}"
        )
    if path.num_modes != config.noise.num_noise_modes:
        raise ValueError("path noise modes do not match the configuration")
    scales = forcing_scales(config.forcing, path.increments[0], config.J)
    Y = simulate_batch(
        config.basis, config.forcing, path.increments[None], config.fine_step, scales[None]
    )
    return Trajectory(Y[:, 0], config.fine_step, path.path_index)


def dual_loads(
    profile_coeffs, T: float, steps: int, time_profile: str = "constant"
) -> np.ndarray:
    """Exact cell integrals of g(t, x) = h(t) * profile(x) over a uniform grid, shape (steps, K).

    ``time_profile`` is "constant" (h = 1) or "sine" (h = 1 + sin(2 pi t / T)).
    """
    c = np.asarray(profile_coeffs, dtype=float)
    t = np.linspace(0.0, T, steps + 1)
    if time_profile == "constant":
        w = np.full(steps, T / steps)
    elif time_profile == "sine":
        w = T / steps + T / (2 * np.pi) * (np.cos(2 * np.pi * t[:-1] / T) - np.cos(2 * np.pi * t[1:] / T))
    else:
        raise ValueError(f"unknown time profile {time_profile!r}")
    return np.outer(w, c)


def dual_backward_run(loads, tau: float, basis: SpectralBasis) -> Trajectory:
    """Z_J = 0, Z_j = (I + tau A)^{-1} (Z_{j+1} + int_{t_j}^{t_{j+1}} g); A is self-adjoint."""
    if not tau > 0:
        raise ValueError(f"time step must be positive, got {tau}")
    G = np.asarray(loads, dtype=float)
    if G.ndim != 2 or G.shape[1] != basis.num_modes:
        raise ValueError(f"loads must be (J, {basis.num_modes})")
    Z = kernels.backward_recursion(resolvent_factors(basis, tau), np.ascontiguousarray(G[:, None, :]))
    return Trajectory(Z[:, 0], tau, backward=True)


def solve_dual_continuous(fine_loads, basis: SpectralBasis, fine_step: float) -> Trajectory:
    """Reference for -z' + Az = g, z(T) = 0: the backward scheme on a fine grid."""
    return dual_backward_run(fine_loads, fine_step, basis)


def scalar_mode_oracle(lam: float, sigma: float, tau: float, j: int) -> float:
    """E|Y_j|^2 for Y_{j+1} = rho (Y_j + sigma dbeta_j), Y_0 = 0, rho = 1/(1 + tau lam)."""
    if not (lam > 0 and sigma > 0 and tau > 0):
        raise ValueError("lam, sigma and tau must be positive")
    rho2 = (1.0 / (1.0 + tau * lam)) ** 2
    return sigma**2 * tau * rho2 * (1.0 - rho2**j) / (1.0 - rho2)
