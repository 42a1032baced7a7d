import math

import numpy as np
import pytest

from spde import kernels
from spde.noise import NoiseSpec, WienerPath, coarsen, derive_path_stream, sample_wiener_path
from spde.scheme import (
    ForcingSpec,
    SchemeConfig,
    dual_backward_run,
    dual_loads,
    evaluate_forcing,
    forcing_matrix,
    forward_step,
    profile_coefficients,
    run_forward,
    run_reference,
    scalar_mode_oracle,
    solve_dual_continuous,
)
from spde.spectral import (
    apply_fractional_power,
    build_dirichlet_laplacian_1d,
    resolvent_step,
    synthetic_basis,
    to_grid,
)


@pytest.fixture(scope="module")
def basis():
    return build_dirichlet_laplacian_1d(16, 32)


def make_config(basis, J=8, refinement=1, **kw):
    noise = NoiseSpec(kw.pop("N", 4), kw.pop("seed", 0))
    return SchemeConfig(basis, 1.0, J, refinement, ForcingSpec(**kw), noise)


def fine_path(config, index=0):
    stream = derive_path_stream(config.noise.master_seed, index)
    return sample_wiener_path(stream, config.noise.num_noise_modes, config.fine_steps, config.fine_step, index)


# -- forcing -----------------------------------------------------------------

def test_deterministic_forcing_components(basis):
    F = evaluate_forcing(ForcingSpec(decay=1.0, amplitude=1.0, profile="eigenfield_1"), basis, 3, 5)
    expected = np.zeros((16, 5))
    expected[0] = 1.0 / np.arange(1, 6)
    np.testing.assert_allclose(F, expected, rtol=1e-15)


def test_constant_profile_is_projection_of_one(basis):
    c = profile_coefficients("constant_one", basis)
    k = np.arange(1, 17)
    # discrete sine sums of a constant, computed directly
    n = 32
    direct = [sum(math.sqrt(2) * math.sin(kk * math.pi * i / (n + 1)) for i in range(1, n + 1)) / (n + 1) for kk in k]
    np.testing.assert_allclose(c, direct, atol=1e-13)
    assert np.all(np.abs(c[1::2]) < 1e-13)  # even modes vanish


def test_forcing_spec_validation():
    with pytest.raises(ValueError):
        ForcingSpec(decay=0.5)
    with pytest.raises(ValueError):
        ForcingSpec(kind="colored")
    with pytest.raises(ValueError):
        ForcingSpec(profile="gaussian_bump")


def test_adapted_forcing_zero_at_start_and_needs_path(basis):
    spec = ForcingSpec(kind="adapted_lagged")
    path = WienerPath(np.ones((3, 8)), 0.125)
    assert not np.any(evaluate_forcing(spec, basis, 0, 3, path, 2))
    with pytest.raises(ValueError):
        evaluate_forcing(spec, basis, 1, 3)
    F1 = evaluate_forcing(spec, basis, 1, 3, path, 2)
    np.testing.assert_allclose(F1, np.tanh(2.0) * forcing_matrix(spec, basis, 3))


def test_adapted_forcing_ignores_future(basis):
    spec = ForcingSpec(kind="adapted_lagged")
    rng = np.random.default_rng(0)
    inc = rng.standard_normal((3, 16))
    a = evaluate_forcing(spec, basis, 2, 3, WienerPath(inc, 0.1), 4)
    inc2 = inc.copy()
    inc2[:, 8:] = 99.0
    b = evaluate_forcing(spec, basis, 2, 3, WienerPath(inc2, 0.1), 4)
    np.testing.assert_array_equal(a, b)


# -- forward scheme ----------------------------------------------------------

def test_forward_step_examples():
    unit = synthetic_basis([1.0])
    out = forward_step([1.0], np.zeros((1, 1)), [0.0], 1.0, unit)
    assert out[0] == 0.5
    lam, c, w, tau = 3.0, 0.7, -1.3, 0.2
    one = synthetic_basis([lam])
    out = forward_step([0.0], np.array([[c]]), [w], tau, one)
    assert out[0] == pytest.approx(c * w / (1 + tau * lam), rel=1e-15)
    with pytest.raises(ValueError):
        forward_step([0.0], np.array([[c]]), [w], 0.0, one)


def test_forward_step_is_linear(basis):
    rng = np.random.default_rng(3)
    Y1, Y2 = rng.standard_normal((2, 16))
    F1, F2 = rng.standard_normal((2, 16, 4))
    dW = rng.standard_normal(4)
    a, b = 0.3, -2.0
    lhs = forward_step(a * Y1 + b * Y2, a * F1 + b * F2, dW, 0.1, basis)
    rhs = a * forward_step(Y1, F1, dW, 0.1, basis) + b * forward_step(Y2, F2, dW, 0.1, basis)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_run_forward_zero_forcing(basis):
    cfg = make_config(basis, amplitude=0.0)
    traj = run_forward(cfg, fine_path(cfg))
    assert traj.coeffs.shape == (9, 16)
    assert not np.any(traj.coeffs)


def test_run_forward_single_step(basis):
    cfg = make_config(basis, J=1)
    path = fine_path(cfg)
    traj = run_forward(cfg, path)
    F = forcing_matrix(cfg.forcing, basis, 4)
    expected = resolvent_step(F @ path.increments[:, 0], basis, 1.0)
    np.testing.assert_array_equal(traj.coeffs[0], 0.0)
    np.testing.assert_allclose(traj.coeffs[1], expected, rtol=1e-14, atol=1e-16)


def test_run_forward_matches_repeated_forward_step(basis):
    cfg = make_config(basis, J=8, refinement=4, kind="adapted_lagged", profile="constant_one")
    path = fine_path(cfg)
    traj = run_forward(cfg, path)
    coarse = coarsen(path, 4)
    Y = np.zeros(16)
    for j in range(8):
        F = evaluate_forcing(cfg.forcing, basis, j, 4, path, 4)
        Y = forward_step(Y, F, coarse.increments[:, j], cfg.tau, basis)
        np.testing.assert_allclose(traj.coeffs[j + 1], Y, rtol=1e-12, atol=1e-15)


def test_run_forward_rejects_mismatched_path(basis):
    cfg = make_config(basis, J=8)
    with pytest.raises(ValueError):
        run_forward(cfg, WienerPath(np.zeros((4, 12)), 1 / 12))


def test_mode_decoupling_exact(basis):
    cfg = make_config(basis, J=16, profile="constant_one")
    path = fine_path(cfg)
    full = run_forward(cfg, path).coeffs
    prof = profile_coefficients("constant_one", basis)
    for k in (0, 4, 15):
        single = synthetic_basis([basis.eigenvalues[k]])
        scfg = SchemeConfig(single, 1.0, 16, 1, ForcingSpec(profile=(prof[k],)), cfg.noise)
        np.testing.assert_array_equal(run_forward(scfg, path).coeffs[:, 0], full[:, k])


def test_adaptedness_of_trajectory(basis):
    cfg = make_config(basis, J=8, refinement=4, kind="adapted_lagged")
    path = fine_path(cfg)
    base = run_reference(cfg, path).coeffs
    cut = 12  # fine index of t_3
    inc = path.increments.copy()
    inc[:, cut:] = np.random.default_rng(9).standard_normal(inc[:, cut:].shape)
    changed = run_reference(cfg, WienerPath(inc, path.fine_step)).coeffs
    np.testing.assert_array_equal(base[: cut + 1], changed[: cut + 1])
    assert not np.array_equal(base[cut + 1 :], changed[cut + 1 :])


def variance_by_recursion(lam, sigma, tau, j):
    rho = 1.0 / (1.0 + tau * lam)
    v = 0.0
    for _ in range(j):
        v = rho**2 * (v + sigma**2 * tau)
    return v


@pytest.mark.parametrize("lam,sigma,tau,j", [(1, 1, 1, 1), (2.5, 0.3, 0.1, 7), (100, 2, 0.01, 50), (1, 1, 1, 0)])
def test_scalar_oracle_matches_variance_recursion(lam, sigma, tau, j):
    assert scalar_mode_oracle(lam, sigma, tau, j) == pytest.approx(variance_by_recursion(lam, sigma, tau, j), rel=1e-12, abs=1e-300)


def test_scalar_oracle_examples():
    assert scalar_mode_oracle(1, 1, 1, 1) == pytest.approx(0.25)
    assert scalar_mode_oracle(1, 1, 1, 10**4) == pytest.approx(1 / 3)
    assert scalar_mode_oracle(1, 1, 1, 0) == 0.0
    with pytest.raises(ValueError):
        scalar_mode_oracle(0, 1, 1, 1)


def test_run_forward_second_moment_matches_oracle():
    lam, tau, J, M = math.pi**2, 1 / 16, 16, 4000
    single = synthetic_basis([lam])
    cfg = SchemeConfig(single, 1.0, J, 1, ForcingSpec(profile=(1.0,)), NoiseSpec(1, 5))
    finals = np.array([run_forward(cfg, fine_path(cfg, i)).coeffs[-1, 0] for i in range(M)])
    sq = finals**2
    assert abs(sq.mean() - scalar_mode_oracle(lam, 1.0, tau, J)) < 3 * sq.std(ddof=1) / np.sqrt(M)


# -- reference ---------------------------------------------------------------

def test_reference_with_refinement_one_is_forward(basis):
    cfg = make_config(basis, J=8, refinement=1, kind="adapted_lagged")
    path = fine_path(cfg)
    np.testing.assert_array_equal(run_reference(cfg, path).coeffs, run_forward(cfg, path).coeffs)


def test_reference_zero_forcing(basis):
    cfg = make_config(basis, J=4, refinement=8, amplitude=0.0)
    assert not np.any(run_reference(cfg, fine_path(cfg)).coeffs)


def test_reference_ladder_self_consistency(basis):
    """Refinement 64 vs 128 is much closer than the coarse run is to the reference."""
    J, M = 4, 24
    cfg128 = make_config(basis, J=J, refinement=128)
    cfg64 = make_config(basis, J=J, refinement=64)
    ref_gap = coarse_gap = 0.0
    for i in range(M):
        path = fine_path(cfg128, i)
        y128 = run_reference(cfg128, path).coeffs
        y64 = run_reference(cfg64, coarsen(path, 2)).coeffs
        Y = run_forward(cfg128, path).coeffs
        h = 1.0 / (J * 128)
        ref_gap += h * kernels.interval_power_sums(y128[:-1, None].copy(), y64[:-1, None].copy(), 2, 2, 1.0).sum()
        coarse_gap += h * kernels.interval_power_sums(y128[:-1, None].copy(), Y[:-1, None].copy(), 2, 2, 1.0).sum()
    assert math.sqrt(ref_gap / M) < math.sqrt(coarse_gap / M)


# -- dual scheme -------------------------------------------------------------

def test_dual_zero_load(basis):
    Z = dual_backward_run(np.zeros((5, 16)), 0.2, basis)
    assert Z.backward and not np.any(Z.coeffs)


def test_dual_single_step(basis):
    g = np.linspace(1, 2, 16)[None]
    Z = dual_backward_run(g, 1.0, basis)
    np.testing.assert_allclose(Z.coeffs[0], resolvent_step(g[0], basis, 1.0), rtol=1e-15)
    np.testing.assert_array_equal(Z.coeffs[1], 0.0)


def test_dual_geometric_closed_form():
    lam, c, T, J = 7.0, 1.3, 1.0, 10
    tau = T / J
    rho = 1.0 / (1.0 + tau * lam)
    Z = dual_backward_run(np.full((J, 1), c * tau), tau, synthetic_basis([lam])).coeffs[:, 0]
    for j in range(J + 1):
        closed = c * tau * sum(rho**m for m in range(1, J - j + 1))
        assert Z[j] == pytest.approx(closed, rel=1e-13, abs=1e-300)
    with pytest.raises(ValueError):
        dual_backward_run(np.zeros((J, 1)), 0.0, synthetic_basis([lam]))


def test_dual_continuous_first_order_convergence():
    lam, c, T = 9.0, 2.0, 1.0
    basis = synthetic_basis([lam])
    bound = lambda h: h * T * lam * abs(c) / 2  # h T max|z''| / 2
    errs = []
    for S in (64, 128, 256, 512):
        h = T / S
        z = solve_dual_continuous(dual_loads([c], T, S), basis, h).coeffs[:, 0]
        t = np.linspace(0, T, S + 1)
        exact = c / lam * (1 - np.exp(-lam * (T - t)))
        err = np.max(np.abs(z - exact))
        assert err <= 2 * bound(h)
        errs.append(err)
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 2.0, rtol=0.05)


def test_dual_continuous_stability(basis):
    T, S = 1.0, 200
    loads = dual_loads(profile_coefficients("constant_one", basis), T, S, "sine")
    z = solve_dual_continuous(loads, basis, T / S).coeffs
    zn = np.linalg.norm(z, axis=1)
    gmax = np.max(np.linalg.norm(loads, axis=1)) / (T / S)  # max_t ||g(t)|| up to the cell average
    assert zn.max() <= T * gmax * (1 + 1e-12)


def test_dual_loads_are_exact_integrals():
    T, S = 2.0, 8
    c = np.array([1.0, -0.5])
    loads = dual_loads(c, T, S, "sine")
    np.testing.assert_allclose(loads.sum(axis=0), T * c, rtol=1e-14)  # sine integrates to 0
    with pytest.raises(ValueError):
        dual_loads(c, T, S, "square")


def test_summation_by_parts_identity(basis):
    """sum <Y_j, Z_j - Z_{j+1} + tau A Z_j> = sum <Y_{j+1} - Y_j + tau A Y_{j+1}, Z_{j+1}> on the grid."""
    rng = np.random.default_rng(11)
    J, tau = 20, 0.05
    r = rng.standard_normal((J, 16))
    Y = np.zeros((J + 1, 16))
    for j in range(J):
        Y[j + 1] = resolvent_step(Y[j] + r[j], basis, tau)
    Z = dual_backward_run(rng.standard_normal((J, 16)), tau, basis).coeffs
    w = basis.grid.quadrature_weight

    def ip(a, b):
        return w * np.dot(to_grid(a, basis), to_grid(b, basis))

    lhs = sum(ip(Y[j], Z[j] - Z[j + 1] + tau * apply_fractional_power(Z[j], basis, 1.0)) for j in range(J))
    rhs = sum(ip(Y[j + 1] - Y[j] + tau * apply_fractional_power(Y[j + 1], basis, 1.0), Z[j + 1]) for j in range(J))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
