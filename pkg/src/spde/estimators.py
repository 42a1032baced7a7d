"""Monte Carlo estimators for strong rates, maximal regularity, and the isometry/duality identities.

All path loops go through :func:`map_paths`, which splits the path range into
fixed-size chunks. Chunk boundaries never depend on the worker count, so every
estimate is bit-identical however many threads run it.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import stats

from . import kernels
from .noise import derive_path_stream, sum_blocks
from .norms import lq_norm, mixed_error_norm, root_moment_stderr, sequence_lp
from .scheme import (
    ForcingSpec,
    SchemeConfig,
    dual_loads,
    forcing_matrix,
    forcing_scales,
    mode_weights,
    profile_coefficients,
    simulate_batch,
)
from .spectral import (
    SpectralBasis,
    apply_fractional_power,
    resolvent_factors,
    synthetic_basis,
    to_grid,
)

CHUNK = 8


def default_workers() -> int:
    env = os.environ.get("SPDE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_paths(fn: Callable[[np.ndarray], tuple], num_paths: int, workers: int | None = None,
              chunk: int = CHUNK) -> list[np.ndarray]:
    """Apply ``fn`` to consecutive chunks of path indices; concatenate outputs along axis 0."""
    starts = range(0, num_paths, chunk)
    blocks = [np.arange(s, min(s + chunk, num_paths)) for s in starts]
    workers = workers or default_workers()
    if workers == 1 or len(blocks) == 1:
        results = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, blocks))
    return [np.concatenate(parts, axis=0) for parts in zip(*results)]


def draw_increments(master_seed: int, indices, num_modes: int, num_steps: int, step: float) -> np.ndarray:
    """(B, N, S) increments; row b is exactly the path ``indices[b]`` of the study."""
    out = np.empty((len(indices), num_modes, num_steps))
    sd = np.sqrt(step)
    for b, i in enumerate(indices):
        out[b] = derive_path_stream(master_seed, int(i)).standard_normal((num_modes, num_steps))
        out[b] *= sd
    return out


def fit_loglog_slope(taus, estimates) -> tuple[float, float, float]:
    """Least-squares line through (log2 tau, log2 estimate).

    Returns (slope, intercept, 95% confidence halfwidth of the slope). The
    halfwidth is NaN with only two points. Estimates are normalized by the
    first one before taking logs, so rescaling all estimates by a power of two
    leaves the slope bit-identical.
    """
    t = np.asarray(taus, dtype=float)
    e = np.asarray(estimates, dtype=float)
    if t.size < 2 or t.shape != e.shape:
        raise ValueError("need at least two (tau, estimate) rows")
    if np.any(e <= 0) or np.any(t <= 0):
        raise ValueError("taus and estimates must be positive")
    x = np.log2(t)
    y = np.log2(e / e[0])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean() + np.log2(e[0]))
    if t.size > 2:
        resid = y - (y.mean() + slope * xc)
        se = np.sqrt(float(resid @ resid) / (t.size - 2) / sxx)
        halfwidth = float(stats.t.ppf(0.975, t.size - 2) * se)
    else:
        halfwidth = float("nan")
    return slope, intercept, halfwidth


@dataclass
class RateTable:
    taus: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    slope: float | None = None
    intercept: float | None = None
    halfwidth: float | None = None

    def __post_init__(self):
        order = np.argsort(-np.asarray(self.taus, dtype=float))
        self.taus = np.asarray(self.taus, dtype=float)[order]
        self.estimates = np.asarray(self.estimates, dtype=float)[order]
        self.stderrs = np.asarray(self.stderrs, dtype=float)[order]
        if self.slope is None and self.taus.size >= 2 and np.all(self.estimates > 0):
            self.slope, self.intercept, self.halfwidth = fit_loglog_slope(self.taus, self.estimates)

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.taus, self.estimates, self.stderrs)]


def _ladder_steps(T: float, taus) -> list[int]:
    steps = []
    for tau in taus:
        J = int(round(T / tau))
        if J < 1 or not np.isclose(J * tau, T, rtol=1e-12, atol=0):
            raise ValueError(f"tau={tau} does not divide T={T}")
        steps.append(J)
    if len(set(steps)) != len(steps):
        raise ValueError("duplicate step sizes in ladder")
    return steps


def _check_nested(steps: list[int], reference: int) -> None:
    for J in steps:
        ratio, rem = divmod(reference, J)
        if rem or ratio & (ratio - 1):
            raise ValueError(
                f"step count {J} is not a power-of-two divisor of the reference {reference}"
            )


def _error_points(basis: SpectralBasis, values: np.ndarray, q: float):
    """Map coefficients to the points used by the L^q sum (coefficients themselves when q = 2)."""
    if q == 2:
        return np.ascontiguousarray(values), 1.0
    return np.ascontiguousarray(values @ basis.eigenfields), basis.grid.quadrature_weight


def estimate_convergence(config: SchemeConfig, taus, paths: int, workers: int | None = None) -> RateTable:
    """Mixed L^p((t_j, t_{j+1}) x Omega; L^q) error of the coarse scheme against the coupled reference.

    The reference runs at step T / (J_max * config.refinement) where J_max is
    the finest ladder level. Adapted forcings are frozen on the coarsest level,
    which makes the continuous problem identical for every ladder entry.
    """
    if paths < 2:
        raise ValueError("need at least two paths")
    steps = _ladder_steps(config.T, taus)
    Jf = max(steps) * config.refinement
    _check_nested(steps, Jf)
    if config.refinement < 2 and Jf in steps:
        raise ValueError("reference must be finer than every ladder level")
    basis, spec, p, q = config.basis, config.forcing, config.p, config.q
    N = config.noise.num_noise_modes
    h = config.T / Jf
    J0 = min(steps)

    def work(idx):
        dW = draw_increments(config.noise.master_seed, idx, N, Jf, h)
        scales = forcing_scales(spec, dW[:, 0, :], J0)
        y = simulate_batch(basis, spec, dW, h, scales)
        fine, weight = _error_points(basis, y[:-1], q)
        out = []
        for J in steps:
            Y = simulate_batch(basis, spec, sum_blocks(dW, Jf // J), config.T / J, scales)
            coarse, _ = _error_points(basis, Y[:-1], q)
            out.append(h * kernels.interval_power_sums(fine, coarse, q, p, weight))
        return tuple(out)

    powered = map_paths(work, paths, workers)
    est, se = [], []
    for vals in powered:
        est.append(mixed_error_norm(vals ** (1.0 / p), p))
        se.append(root_moment_stderr(vals.sum(axis=1), p)[1])
    return RateTable(config.T / np.asarray(steps), est, se)


def estimate_dual_convergence(
    basis: SpectralBasis,
    g_profile,
    taus,
    T: float = 1.0,
    reference_steps: int = 2**15,
    p: float = 2.0,
    q: float = 2.0,
    time_profile: str = "constant",
) -> RateTable:
    """(sum_j tau ||z(t_j) - Z_j||_q^p)^(1/p) for the backward scheme; deterministic."""
    steps = _ladder_steps(T, taus)
    _check_nested(steps, reference_steps)
    c = profile_coefficients(g_profile, basis)
    fine_loads = dual_loads(c, T, reference_steps, time_profile)
    z = kernels.backward_recursion(
        resolvent_factors(basis, T / reference_steps), np.ascontiguousarray(fine_loads[:, None, :])
    )[:, 0]
    est = []
    for J in steps:
        m = reference_steps // J
        loads = sum_blocks(fine_loads.T, m).T
        Z = kernels.backward_recursion(resolvent_factors(basis, T / J), np.ascontiguousarray(loads[:, None, :]))[:, 0]
        err = lq_norm(to_grid(z[: reference_steps : m] - Z[:-1], basis), basis.grid, q)
        est.append(sequence_lp(err, p, weight=T / J))
    return RateTable(T / np.asarray(steps), est, np.zeros(len(steps)))


@dataclass
class RegularityReport:
    tau: float
    time_functional: float
    space_functional: float
    forcing_norm: float
    time_ratio: float | None
    space_ratio: float | None
    time_stderr: float = 0.0
    space_stderr: float = 0.0


@dataclass
class RegularitySweep:
    reports: list[RegularityReport]
    time_spread: float | None = None  # max / min time ratio over the ladder
    space_spread: float | None = None
    bound: float = 1.5
    uniform: bool | None = field(default=None)

    def __post_init__(self):
        t = [r.time_ratio for r in self.reports]
        s = [r.space_ratio for r in self.reports]
        if any(v is None for v in t + s) or not self.reports:
            return
        self.time_spread = max(t) / min(t)
        self.space_spread = max(s) / min(s)
        self.uniform = self.time_spread <= self.bound and self.space_spread <= self.bound


def _regularity_reports(config: SchemeConfig, steps: list[int], paths: int, workers) -> list[RegularityReport]:
    if paths < 2:
        raise ValueError("need at least two paths")
    basis, spec, p, q = config.basis, config.forcing, config.p, config.q
    N = config.noise.num_noise_modes
    Jmax = max(steps)
    _check_nested(steps, Jmax)
    F = forcing_matrix(spec, basis, N)
    fnorm = float(lq_norm(np.sqrt(np.sum(to_grid(F.T, basis) ** 2, axis=0)), basis.grid, q))

    def norms(values):
        pts, weight = _error_points(basis, values, q)
        return weight * np.sum(np.abs(pts) ** q, axis=-1)  # (S, B): ||.||_q^q

    def work(idx):
        dW = draw_increments(config.noise.master_seed, idx, N, Jmax, config.T / Jmax)
        out = []
        for J in steps:
            tau = config.T / J
            scales = forcing_scales(spec, dW[:, 0, :], J)
            Y = simulate_batch(basis, spec, sum_blocks(dW, Jmax // J), tau, scales)
            dt = norms((Y[1:] - Y[:-1]) / np.sqrt(tau)) ** (p / q)
            sp = norms(apply_fractional_power(Y[1:], basis, 0.5)) ** (p / q)
            fo = (np.abs(scales) * fnorm) ** p
            out.append(np.stack([dt.sum(axis=0), sp.sum(axis=0), fo.sum(axis=1)], axis=1))
        return tuple(out)

    reports = []
    for J, sums in zip(steps, map_paths(work, paths, workers)):
        t_est, t_se = root_moment_stderr(sums[:, 0], p)
        s_est, s_se = root_moment_stderr(sums[:, 1], p)
        f_est = float(np.mean(sums[:, 2]) ** (1.0 / p))
        ok = f_est > 0
        reports.append(
            RegularityReport(
                config.T / J, t_est, s_est, f_est,
                t_est / f_est if ok else None, s_est / f_est if ok else None, t_se, s_se,
            )
        )
    return reports


def estimate_regularity(config: SchemeConfig, tau: float, paths: int, workers: int | None = None) -> RegularityReport:
    """Discrete maximal-regularity functionals and the forcing norm at one step size (r = p)."""
    return _regularity_reports(config, _ladder_steps(config.T, [tau]), paths, workers)[0]


def regularity_sweep(config: SchemeConfig, taus, paths: int, workers: int | None = None,
                     bound: float = 1.5) -> RegularitySweep:
    """Regularity reports over a nested ladder; all levels share coarsenings of one path set."""
    return RegularitySweep(_regularity_reports(config, _ladder_steps(config.T, taus), paths, workers), bound=bound)


class IsometryCheck(NamedTuple):
    lhs_moment: float
    rhs_moment: float
    ratio: float | None
    stderr: float


def ito_isometry_check(
    basis: SpectralBasis, integrand, tau: float, p: float, q: float, paths: int,
    master_seed: int = 0, workers: int | None = None,
) -> IsometryCheck:
    """E||sum_j f_j dW_j||_q^p against ||f||^p in L^q(O; L^2(0,T; H)) for a deterministic step integrand.

    ``integrand`` is (J, K, N): spectral coefficients of component n on interval j.
    """
    for name, v in (("p", p), ("q", q)):
        if not (2 <= v < np.inf):
            raise ValueError(f"{name} must lie in [2, inf), got {v}")
    if not tau > 0:
        raise ValueError("tau must be positive")
    f = np.asarray(integrand, dtype=float)
    if f.ndim != 3 or f.shape[1] != basis.num_modes:
        raise ValueError(f"integrand must be (J, {basis.num_modes}, N)")
    J, _, N = f.shape
    fields = to_grid(np.swapaxes(f, 1, 2), basis)  # (J, N, P)
    pointwise = np.sqrt(tau * np.sum(fields**2, axis=(0, 1)))
    rhs = float(lq_norm(pointwise, basis.grid, q) ** p)

    def work(idx):
        dW = draw_increments(master_seed, idx, N, J, tau)  # (B, N, J)
        coeffs = np.einsum("jkn,bnj->bk", f, dW)
        return (lq_norm(to_grid(coeffs, basis), basis.grid, q) ** p,)

    (samples,) = map_paths(work, paths, workers)
    lhs = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / np.sqrt(samples.size)) if samples.size > 1 else 0.0
    if rhs == 0:
        return IsometryCheck(lhs, rhs, None, 0.0)
    return IsometryCheck(lhs, rhs, lhs / rhs, se / rhs)


class DualityCheck(NamedTuple):
    lhs: float
    rhs: float
    relative_gap: float
    stderr: float  # sqrt(se_lhs^2 + se_rhs^2)
    flagged: bool

    @property
    def passed(self) -> bool:
        return not self.flagged and abs(self.lhs - self.rhs) <= 3 * self.stderr


def duality_identity_check(
    config: SchemeConfig, paths: int, g_profile="eigenfield_1", time_profile: str = "sine",
    workers: int | None = None,
) -> DualityCheck:
    """Both sides of the pairing identity between y and -z' + Az on the fine grid, p = q = 2.

    lhs: sum_i <y(t_i), int_{t_i}^{t_{i+1}} g>.
    rhs: sum_j <f(t_j) dW_j, z(t_{j+1})> minus the Brownian-bridge term
    sum_j sum_{i in j} <f(t_j)(W(t_i) - W(t_j)), z(t_{i+1}) - z(t_i)>.
    Inner products are taken on coefficients, which equals the quadrature
    inner product because the discrete eigenfields are orthonormal.
    """
    if config.p != 2 or config.q != 2:
        raise ValueError("the duality pairing is implemented for p = q = 2 only")
    if paths < 2:
        raise ValueError("need at least two paths")
    basis, spec = config.basis, config.forcing
    N, J, m, Jf = config.noise.num_noise_modes, config.J, config.refinement, config.fine_steps
    h = config.fine_step
    G = dual_loads(profile_coefficients(g_profile, basis), config.T, Jf, time_profile)
    z = kernels.backward_recursion(resolvent_factors(basis, h), np.ascontiguousarray(G[:, None, :]))[:, 0]
    prof = profile_coefficients(spec.profile, basis)
    pz = z @ prof  # <profile, z(t_i)>
    dpz = (pz[1:] - pz[:-1]).reshape(J, m)
    w = mode_weights(spec, N)

    def work(idx):
        dW = draw_increments(config.noise.master_seed, idx, N, Jf, h)
        scales = forcing_scales(spec, dW[:, 0, :], J)
        y = simulate_batch(basis, spec, dW, h, scales)
        lhs = np.einsum("ibk,ik->b", y[:-1], G)
        xi = np.matmul(w, dW).reshape(len(idx), J, m)  # scalar drive per fine step
        bridge = np.cumsum(xi, axis=2) - xi  # W(t_i) - W(t_j) along the drive
        total = xi.sum(axis=2)
        per_interval = total * pz[m::m] - np.einsum("bjm,jm->bj", bridge, dpz)
        rhs = np.sum(scales * per_interval, axis=1)
        return lhs, rhs

    lhs_s, rhs_s = map_paths(work, paths, workers)
    lhs, rhs = float(np.mean(lhs_s)), float(np.mean(rhs_s))
    se = float(np.sqrt(np.var(lhs_s, ddof=1) / paths + np.var(rhs_s, ddof=1) / paths))
    gap = abs(lhs - rhs)
    scale = max(abs(lhs), se)
    if scale == 0:
        return DualityCheck(lhs, rhs, 0.0 if gap == 0 else float("inf"), se, gap != 0)
    return DualityCheck(lhs, rhs, gap / scale, se, False)


def single_mode_second_moments(lam: float, sigma: float, tau: float, J: int, paths: int,
                               master_seed: int = 0, workers: int | None = None):
    """MC estimate of E|Y_j|^2, j = 0..J, for one mode with eigenvalue ``lam`` and noise weight ``sigma``.

    Returns (moments, stderrs), each of length J + 1.
    """
    basis = synthetic_basis([lam])
    spec = ForcingSpec(profile=(1.0,), amplitude=sigma)

    def work(idx):
        dW = draw_increments(master_seed, idx, 1, J, tau)
        Y = simulate_batch(basis, spec, dW, tau, np.ones((len(idx), 1)))
        return (Y[:, :, 0].T ** 2,)

    (sq,) = map_paths(work, paths, workers)
    se = np.std(sq, axis=0, ddof=1) / np.sqrt(paths)
    return np.mean(sq, axis=0), se
