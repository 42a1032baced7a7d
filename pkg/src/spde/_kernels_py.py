"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def forward_recursion(rho, inputs):
    rho = np.asarray(rho, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 3 or rho.shape != inputs.shape[2:]:
        raise ValueError("rho length does not match the mode axis")
    out = np.zeros((inputs.shape[0] + 1,) + inputs.shape[1:])
    for i in range(inputs.shape[0]):
        np.multiply(rho, out[i] + inputs[i], out=out[i + 1])
    return out


def backward_recursion(rho, loads):
    rho = np.asarray(rho, dtype=float)
    loads = np.asarray(loads, dtype=float)
    if loads.ndim != 3 or rho.shape != loads.shape[2:]:
        raise ValueError("rho length does not match the mode axis")
    out = np.zeros((loads.shape[0] + 1,) + loads.shape[1:])
    for i in range(loads.shape[0] - 1, -1, -1):
        np.multiply(rho, out[i + 1] + loads[i], out=out[i])
    return out


def interval_power_sums(fine, coarse, q, p, weight):
    fine = np.asarray(fine, dtype=float)
    coarse = np.asarray(coarse, dtype=float)
    S, B, P = fine.shape
    if coarse.shape[1:] != (B, P):
        raise ValueError("fine and coarse arrays disagree on batch/point axes")
    nint = coarse.shape[0]
    if nint < 1 or S % nint:
        raise ValueError("coarse intervals do not divide the fine grid")
    m = S // nint
    diff = fine.reshape(nint, m, B, P) - coarse[:, None]
    s = weight * np.sum(np.abs(diff) ** q, axis=-1)  # (J, m, B)
    return np.sum(s ** (p / q), axis=1).T.copy()
