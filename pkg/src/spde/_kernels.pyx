# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping kernels. Semantics match ``_kernels_py`` exactly."""
import numpy as np

from libc.math cimport fabs, pow, sqrt


def forward_recursion(const double[::1] rho, const double[:, :, ::1] inputs):
    """out[0] = 0, out[i+1] = rho * (out[i] + inputs[i]); inputs (S, B, K)."""
    cdef Py_ssize_t S = inputs.shape[0], B = inputs.shape[1], K = inputs.shape[2]
    cdef Py_ssize_t i, b, k
    if rho.shape[0] != K:
        raise ValueError("rho length does not match the mode axis")
    out = np.zeros((S + 1, B, K))
    cdef double[:, :, ::1] y = out
    with nogil:
        for i in range(S):
            for b in range(B):
                for k in range(K):
                    y[i + 1, b, k] = rho[k] * (y[i, b, k] + inputs[i, b, k])
    return out


def backward_recursion(const double[::1] rho, const double[:, :, ::1] loads):
    """out[S] = 0, out[i] = rho * (out[i+1] + loads[i]); loads (S, B, K)."""
    cdef Py_ssize_t S = loads.shape[0], B = loads.shape[1], K = loads.shape[2]
    cdef Py_ssize_t i, b, k
    if rho.shape[0] != K:
        raise ValueError("rho length does not match the mode axis")
    out = np.zeros((S + 1, B, K))
    cdef double[:, :, ::1] z = out
    with nogil:
        for i in range(S - 1, -1, -1):
            for b in range(B):
                for k in range(K):
                    z[i, b, k] = rho[k] * (z[i + 1, b, k] + loads[i, b, k])
    return out


cdef inline double _abspow(double x, double q, int iq) noexcept nogil:
    cdef double a = fabs(x), r
    cdef int e
    if iq == 2:
        return a * a
    if iq > 0:
        r = 1.0
        for e in range(iq):
            r *= a
        return r
    return pow(a, q)


def interval_power_sums(const double[:, :, ::1] fine, const double[:, :, ::1] coarse,
                        double q, double p, double weight):
    """acc[b, j] = sum_k (weight * sum_x |fine[j m + k, b, x] - coarse[j, b, x]|^q)^(p/q).

    ``fine`` is (S, B, P) with S = m * J, ``coarse`` is (J, B, P).
    """
    cdef Py_ssize_t S = fine.shape[0], B = fine.shape[1], P = fine.shape[2]
    cdef Py_ssize_t J = coarse.shape[0]
    if coarse.shape[1] != B or coarse.shape[2] != P:
        raise ValueError("fine and coarse arrays disagree on batch/point axes")
    cdef Py_ssize_t nint = J
    if nint < 1 or S % nint != 0:
        raise ValueError("coarse intervals do not divide the fine grid")
    cdef Py_ssize_t m = S // nint
    cdef Py_ssize_t b, j, k, x, i
    cdef double s, ratio = p / q
    cdef int iq = <int>q if q <= 16 and q == <double>(<int>q) else -1
    cdef bint square_root = ratio == 0.5
    cdef bint unit = ratio == 1.0
    out = np.zeros((B, nint))
    cdef double[:, ::1] acc = out
    with nogil:
        for j in range(nint):
            for k in range(m):
                i = j * m + k
                for b in range(B):
                    s = 0.0
                    for x in range(P):
                        s += _abspow(fine[i, b, x] - coarse[j, b, x], q, iq)
                    s *= weight
                    if unit:
                        acc[b, j] += s
                    elif square_root:
                        acc[b, j] += sqrt(s)
                    else:
                        acc[b, j] += pow(s, ratio)
    return out
