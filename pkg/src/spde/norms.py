"""Norms used by the regularity and error estimates.

Spatial norms are rectangle-rule quadratures on the interior grid; moments in
the probability variable are empirical averages over Monte Carlo paths.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .spectral import DomainGrid, SpectralBasis, to_grid


def _check_exponent(p: float, name: str = "p") -> float:
    p = float(p)
    if not p >= 2 or not np.isfinite(p):
        raise ValueError(f"{name} must lie in [2, inf), got {p}")
    return p


@dataclass(frozen=True, eq=False)
class HValuedField:
    """Grid field with values in H, stored as one spatial field per noise mode."""

    per_mode_fields: np.ndarray  # (N, P)
    grid: DomainGrid

    def __post_init__(self):
        f = np.asarray(self.per_mode_fields, dtype=float)
        if f.ndim != 2 or f.shape[1] != self.grid.num_points:
            raise ValueError(
                f"per_mode_fields must be (N, {self.grid.num_points}), got {f.shape}"
            )
        object.__setattr__(self, "per_mode_fields", f)

    @classmethod
    def from_coefficients(cls, coeffs, basis: SpectralBasis) -> "HValuedField":
        """Build from a (K, N) matrix whose column n holds the spectral coefficients of component n."""
        c = np.asarray(coeffs, dtype=float)
        return cls(to_grid(c.T, basis), basis.grid)

    def pointwise_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.per_mode_fields**2, axis=0))


@dataclass(frozen=True, eq=False)
class SampleSet:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("sample set is empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("samples must be finite")
        if np.any(v < 0):
            raise ValueError("samples must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def path_count(self) -> int:
        return self.values.size


class MomentEstimate(NamedTuple):
    value: float  # (mean of x^p)^(1/p)
    moment: float  # mean of x^p
    moment_stderr: float  # standard error of the mean of x^p
    p: float

    @property
    def stderr(self) -> float:
        """Delta-method standard error of ``value``."""
        if self.moment <= 0:
            return 0.0
        return self.value * self.moment_stderr / (self.p * self.moment)


def lq_norm(field_values, grid: DomainGrid, q: float) -> np.ndarray | float:
    q = _check_exponent(q, "q")
    v = np.abs(np.asarray(field_values, dtype=float))
    if v.shape[-1:] != (grid.num_points,):
        raise ValueError(f"field does not match grid with {grid.num_points} points")
    out = (grid.quadrature_weight * np.sum(v**q, axis=-1)) ** (1.0 / q)
    return float(out) if np.ndim(out) == 0 else out


def lq_H_norm(hfield: HValuedField, q: float) -> float:
    return lq_norm(hfield.pointwise_norm(), hfield.grid, q)


def _stderr_of_mean(x: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / np.sqrt(x.size))


def lp_over_paths(samples, p: float) -> MomentEstimate:
    p = _check_exponent(p)
    s = samples if isinstance(samples, SampleSet) else SampleSet(samples)
    powers = s.values**p
    m = float(np.mean(powers))
    return MomentEstimate(m ** (1.0 / p), m, _stderr_of_mean(powers), p)


def sequence_lp(values, p: float, weight: float | None = None) -> float:
    p = _check_exponent(p)
    w = 1.0
    if weight is not None:
        if weight <= 0:
            raise ValueError("weight must be positive")
        w = float(weight)
    v = np.abs(np.asarray(values, dtype=float))
    return float((w * np.sum(v**p)) ** (1.0 / p))


def mixed_error_norm(interval_values, p: float) -> float:
    """((1/M) sum_paths sum_j value^p)^(1/p) for an (M, J) matrix of interval norms."""
    p = _check_exponent(p)
    v = np.abs(np.asarray(interval_values, dtype=float))
    if v.ndim != 2 or v.size == 0:
        raise ValueError("need a nonempty (paths, intervals) matrix")
    return float(np.mean(np.sum(v**p, axis=1)) ** (1.0 / p))


def root_moment_stderr(per_path_moments: np.ndarray, p: float) -> tuple[float, float]:
    """Estimate (mean X)^(1/p) and its delta-method standard error from per-path X."""
    x = np.asarray(per_path_moments, dtype=float)
    m = float(np.mean(x))
    if m <= 0:
        return 0.0, 0.0
    est = m ** (1.0 / p)
    return est, est * _stderr_of_mean(x) / (p * m)
