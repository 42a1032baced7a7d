import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spde.spectral import (
    DomainGrid,
    apply_fractional_power,
    build_dirichlet_laplacian_1d,
    build_dirichlet_laplacian_2d,
    resolvent_step,
    semigroup_apply,
    synthetic_basis,
    to_grid,
    to_spectral,
)


@pytest.fixture(scope="module")
def basis1d():
    return build_dirichlet_laplacian_1d(8, 64)


@pytest.fixture(scope="module")
def basis2d():
    return build_dirichlet_laplacian_2d(4, 16)


def test_grid_nodes_interior_and_weights_cover_unit_volume():
    for d in (1, 2):
        g = DomainGrid(d, 9)
        c = g.coordinates
        assert np.all(c > 0) and np.all(c < 1)
        assert g.quadrature_weight == pytest.approx(0.1**d, rel=1e-15)
        # n interior cells plus one boundary cell per axis, where the Dirichlet value is zero
        assert (g.points_per_axis + 1) ** d * g.quadrature_weight == pytest.approx(1.0, abs=1e-15)


def test_1d_eigenvalues():
    b = build_dirichlet_laplacian_1d(2, 8)
    assert b.eigenvalues[0] == pytest.approx(math.pi**2)
    assert b.eigenvalues[0] == pytest.approx(9.8696, abs=1e-4)
    assert b.eigenvalues[1] == pytest.approx(4 * math.pi**2)


def test_1d_gram_matches_brute_force_sine_sum(basis1d):
    n = 64
    brute = np.empty((8, 8))
    for k in range(1, 9):
        for l in range(1, 9):
            brute[k - 1, l - 1] = sum(
                2 * math.sin(k * math.pi * i / (n + 1)) * math.sin(l * math.pi * i / (n + 1))
                for i in range(1, n + 1)
            ) / (n + 1)
    np.testing.assert_allclose(brute, np.eye(8), atol=1e-12)
    np.testing.assert_allclose(basis1d.gram(), np.eye(8), atol=1e-12)


def test_too_many_modes_rejected():
    with pytest.raises(ValueError, match="alias"):
        build_dirichlet_laplacian_1d(65, 64)
    with pytest.raises(ValueError):
        build_dirichlet_laplacian_2d(17, 16)


def test_2d_spectrum(basis2d):
    lam = basis2d.eigenvalues
    assert lam[0] == pytest.approx(2 * math.pi**2)
    assert lam.size == 16
    assert np.all(np.diff(lam) >= 0)
    i12 = basis2d.mode_labels.index((1, 2))
    i21 = basis2d.mode_labels.index((2, 1))
    assert i12 < i21  # lexicographic tie-break
    assert lam[i12] == lam[i21] == pytest.approx(5 * math.pi**2)
    np.testing.assert_allclose(basis2d.gram(), np.eye(16), atol=1e-10)


def test_2d_eigenfield_is_product_of_sines(basis2d):
    x = basis2d.grid.coordinates
    k, l = basis2d.mode_labels[3]
    expected = 2 * np.sin(k * np.pi * x[:, 0]) * np.sin(l * np.pi * x[:, 1])
    np.testing.assert_allclose(basis2d.eigenfields[3], expected, atol=1e-13)


def test_spectrum_lower_bounds(basis1d, basis2d):
    assert basis1d.eigenvalues.min() >= math.pi**2 * (1 - 1e-15)
    assert basis2d.eigenvalues.min() >= 2 * math.pi**2 * (1 - 1e-15)


def test_to_spectral_of_eigenfield_and_zero(basis1d):
    c = to_spectral(basis1d.eigenfields[0], basis1d)
    np.testing.assert_allclose(c, np.eye(8)[0], atol=1e-12)
    assert not np.any(to_spectral(np.zeros(64), basis1d))


def test_to_grid_unit_and_zero(basis1d):
    np.testing.assert_array_equal(to_grid(np.eye(8)[0], basis1d), basis1d.eigenfields[0])
    assert not np.any(to_grid(np.zeros(8), basis1d))


def test_shape_mismatch_rejected(basis1d):
    with pytest.raises(ValueError):
        to_spectral(np.zeros(63), basis1d)
    with pytest.raises(ValueError):
        to_grid(np.zeros(7), basis1d)
    with pytest.raises(ValueError):
        apply_fractional_power(np.zeros(9), basis1d, 0.5)


coeffs8 = st.lists(st.floats(-10, 10), min_size=8, max_size=8).map(np.array)


@settings(max_examples=50, deadline=None)
@given(coeffs8, coeffs8)
def test_to_grid_linear_and_roundtrip(a, b):
    basis = build_dirichlet_laplacian_1d(8, 64)
    # linearity is exact only up to rounding of the dot products
    np.testing.assert_allclose(to_grid(a + b, basis), to_grid(a, basis) + to_grid(b, basis), atol=1e-12)
    v = to_grid(a, basis)
    np.testing.assert_allclose(to_grid(to_spectral(v, basis), basis), v, atol=1e-10)


def test_fractional_powers(basis1d):
    v = np.arange(1.0, 9.0)
    np.testing.assert_array_equal(apply_fractional_power(v, basis1d, 0.0), v)
    assert apply_fractional_power(np.eye(8)[0], basis1d, 0.5)[0] == pytest.approx(math.pi, rel=1e-15)
    back = apply_fractional_power(apply_fractional_power(v, basis1d, 1.0), basis1d, -1.0)
    np.testing.assert_allclose(back, v, rtol=1e-12)


def test_resolvent_step(basis1d):
    v = np.linspace(-1, 1, 8)
    np.testing.assert_array_equal(resolvent_step(v, basis1d, 0.0), v)
    unit = synthetic_basis([1.0])
    assert resolvent_step([3.0], unit, 1.0)[0] == 1.5
    out = resolvent_step(v, basis1d, 0.3)
    assert np.all(np.abs(out) <= np.abs(v))
    with pytest.raises(ValueError):
        resolvent_step(v, basis1d, -0.1)


@settings(max_examples=30, deadline=None)
@given(coeffs8, st.floats(0, 5))
def test_resolvent_identity(v, tau):
    basis = build_dirichlet_laplacian_1d(8, 64)
    w = resolvent_step(v, basis, tau)
    back = w + tau * apply_fractional_power(w, basis, 1.0)
    np.testing.assert_allclose(back, v, rtol=1e-12, atol=1e-12)


def test_semigroup(basis1d):
    v = np.linspace(1, 2, 8)
    np.testing.assert_array_equal(semigroup_apply(v, basis1d, 0.0), v)
    np.testing.assert_allclose(
        semigroup_apply(semigroup_apply(v, basis1d, 0.01), basis1d, 0.02),
        semigroup_apply(v, basis1d, 0.03), rtol=1e-12,
    )
    factor = semigroup_apply(np.eye(8)[0], basis1d, 1 / math.pi**2)[0]
    assert factor == pytest.approx(math.exp(-1)) and factor == pytest.approx(0.3679, abs=1e-4)
    with pytest.raises(ValueError):
        semigroup_apply(v, basis1d, -1.0)


def test_resolvent_powers_approach_semigroup(basis1d):
    v = np.ones(8)
    tau, m = 0.01, 1000
    w = v.copy()
    for _ in range(m):
        w = resolvent_step(w, basis1d, tau / m)
    exact = semigroup_apply(v, basis1d, tau)
    assert np.linalg.norm(w - exact) < 0.01 * np.linalg.norm(exact)


def test_basis_is_immutable(basis1d):
    with pytest.raises(ValueError):
        basis1d.eigenvalues[0] = 1.0
