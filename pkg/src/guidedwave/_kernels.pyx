# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-step vector kernels for the sampler hot loop.

Each function mirrors a NumPy expression in ``_kernels_py`` exactly,
including the order of floating-point operations, so swapping backends
never changes results bit for bit.
"""

import numpy as np


def lincomb(double a, double[::1] x, double b, double[::1] y):
    """a*x + b*y."""
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = a * x[i] + b * y[i]
    return out


def ddpm_update(double[::1] x_t, double[::1] x0_hat, double[::1] noise,
                double c0, double c1, double std):
    """c0*x0_hat + c1*x_t + std*noise."""
    cdef Py_ssize_t i, n = x_t.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = c0 * x0_hat[i] + c1 * x_t[i] + std * noise[i]
    return out


def scaled_diff(double[::1] x_t, double[::1] x0_hat, double alpha, double sigma):
    """(x_t - alpha*x0_hat) / sigma."""
    cdef Py_ssize_t i, n = x_t.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = (x_t[i] - alpha * x0_hat[i]) / sigma
    return out


def diag_posterior(double[::1] x, double[::1] mean, double[::1] gain, double alpha):
    """mean + gain*(x - alpha*mean); elementwise posterior mean, diagonal prior."""
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = mean[i] + gain[i] * (x[i] - alpha * mean[i])
    return out
