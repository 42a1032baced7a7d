"""Dirichlet Laplacian on the unit interval / unit square via its exact eigensystem.

All operators act diagonally on spectral coefficient vectors, whose last axis
has length ``basis.num_modes``. Leading axes are treated as batch axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DomainGrid:
    """Uniform interior nodes x_i = i/(n+1), i = 1..n, on each axis."""

    dimension: int
    points_per_axis: int

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.points_per_axis < 1:
            raise ValueError("points_per_axis must be positive")

    @property
    def axis(self) -> np.ndarray:
        n = self.points_per_axis
        return np.arange(1, n + 1) / (n + 1)

    @property
    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (P,) in 1D and (P, 2) in 2D (x-major order)."""
        x = self.axis
        if self.dimension == 1:
            return x
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    @property
    def num_points(self) -> int:
        return self.points_per_axis**self.dimension

    @property
    def quadrature_weight(self) -> float:
        return float(self.points_per_axis + 1) ** (-self.dimension)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    eigenvalues: np.ndarray
    eigenfields: np.ndarray  # (K, P), rows normalized in discrete L2
    grid: DomainGrid
    mode_labels: tuple = field(default=())

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        phi = np.asarray(self.eigenfields, dtype=float)
        if lam.ndim != 1 or phi.shape != (lam.size, self.grid.num_points):
            raise ValueError(
                f"eigenfields shape {phi.shape} inconsistent with "
                f"{lam.size} modes on {self.grid.num_points} points"
            )
        if np.any(lam <= 0):
            raise ValueError("eigenvalues must be strictly positive")
        lam.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenfields", phi)

    @property
    def num_modes(self) -> int:
        return self.eigenvalues.size

    def gram(self) -> np.ndarray:
        """Quadrature Gram matrix of the eigenfields."""
        return self.grid.quadrature_weight * (self.eigenfields @ self.eigenfields.T)


def _sine_table(modes: int, n: int) -> np.ndarray:
    k = np.arange(1, modes + 1)[:, None]
    i = np.arange(1, n + 1)[None, :]
    return np.sqrt(2.0) * np.sin(np.pi * k * i / (n + 1))


def build_dirichlet_laplacian_1d(num_modes: int, points_per_axis: int) -> SpectralBasis:
    """Modes sqrt(2) sin(k pi x) with eigenvalues (k pi)^2, k = 1..K."""
    if num_modes < 1:
        raise ValueError("num_modes must be at least 1")
    if num_modes > points_per_axis:
        raise ValueError(
            f"num_modes={num_modes} exceeds points_per_axis={points_per_axis}: "
            "modes above n alias on the grid"
        )
    k = np.arange(1, num_modes + 1)
    return SpectralBasis(
        eigenvalues=(k * np.pi) ** 2,
        eigenfields=_sine_table(num_modes, points_per_axis),
        grid=DomainGrid(1, points_per_axis),
        mode_labels=tuple((int(kk),) for kk in k),
    )


def build_dirichlet_laplacian_2d(modes_per_axis: int, points_per_axis: int) -> SpectralBasis:
    """Tensor modes 2 sin(k pi x) sin(l pi y), sorted by k^2 + l^2 then (k, l)."""
    if modes_per_axis < 1:
        raise ValueError("modes_per_axis must be at least 1")
    if modes_per_axis > points_per_axis:
        raise ValueError(
            f"modes_per_axis={modes_per_axis} exceeds points_per_axis={points_per_axis}"
        )
    table = _sine_table(modes_per_axis, points_per_axis)
    labels = sorted(
        ((k, l) for k in range(1, modes_per_axis + 1) for l in range(1, modes_per_axis + 1)),
        key=lambda kl: (kl[0] ** 2 + kl[1] ** 2, kl[0], kl[1]),
    )
    fields = np.empty((len(labels), points_per_axis**2))
    for row, (k, l) in enumerate(labels):
        fields[row] = np.outer(table[k - 1], table[l - 1]).ravel()
    eig = np.array([np.pi**2 * (k * k + l * l) for k, l in labels])
    return SpectralBasis(eig, fields, DomainGrid(2, points_per_axis), tuple(labels))


def synthetic_basis(eigenvalues, points_per_axis: int | None = None) -> SpectralBasis:
    """1D sine eigenfields carrying arbitrary positive eigenvalues.

    Useful for scalar-mode checks (e.g. lambda = 1) where the spatial shape is
    irrelevant but orthonormality must still hold.
    """
    lam = np.atleast_1d(np.asarray(eigenvalues, dtype=float))
    n = points_per_axis if points_per_axis is not None else max(8, lam.size)
    if lam.size > n:
        raise ValueError("more eigenvalues than grid points")
    return SpectralBasis(
        eigenvalues=lam,
        eigenfields=_sine_table(lam.size, n),
        grid=DomainGrid(1, n),
        mode_labels=tuple((k,) for k in range(1, lam.size + 1)),
    )


def _check_coeffs(coeffs, basis: SpectralBasis) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1:] != (basis.num_modes,):
        raise ValueError(
            f"coefficient length {c.shape[-1] if c.ndim else 0} != num_modes {basis.num_modes}"
        )
    return c


def to_spectral(field_values, basis: SpectralBasis) -> np.ndarray:
    """Quadrature inner products of a grid field with every eigenfield."""
    v = np.asarray(field_values, dtype=float)
    if v.shape[-1:] != (basis.grid.num_points,):
        raise ValueError(
            f"field has {v.shape[-1] if v.ndim else 0} values, grid has {basis.grid.num_points}"
        )
    return basis.grid.quadrature_weight * (v @ basis.eigenfields.T)


def to_grid(coeffs, basis: SpectralBasis) -> np.ndarray:
    return _check_coeffs(coeffs, basis) @ basis.eigenfields


def apply_fractional_power(coeffs, basis: SpectralBasis, s: float) -> np.ndarray:
    """A^s, i.e. multiply coefficient k by lambda_k^s."""
    return _check_coeffs(coeffs, basis) * basis.eigenvalues**s


def resolvent_factors(basis: SpectralBasis, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError(f"time step must be nonnegative, got {tau}")
    return 1.0 / (1.0 + tau * basis.eigenvalues)


def resolvent_step(coeffs, basis: SpectralBasis, tau: float) -> np.ndarray:
    """(I + tau A)^{-1}."""
    return _check_coeffs(coeffs, basis) * resolvent_factors(basis, tau)


def semigroup_apply(coeffs, basis: SpectralBasis, t: float) -> np.ndarray:
    """S(t) = exp(-tA)."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return _check_coeffs(coeffs, basis) * np.exp(-t * basis.eigenvalues)
