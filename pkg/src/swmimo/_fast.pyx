# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled censored-Gaussian kernels (hot loop of the estimator).

Mirrors swmimo.kernels' NumPy reference backend: log interval probabilities
and hazard weights of a Gaussian, stable far into the tails.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, erfc, exp, expm1, fabs, isinf, log, log1p, sqrt

cnp.import_array()

cdef double LOG_SQRT_2PI = 0.9189385332046727417803297364056176
cdef double LOG2 = 0.6931471805599453094172321214581766
cdef double SQRT1_2 = 0.7071067811865475244008443621048490


cdef double c_log_ndtr(double x) noexcept nogil:
    """log Phi(x); erfc in the bulk, Mills-type asymptotic series deep in the tail."""
    cdef double z, s
    if x > 6.0:
        return log1p(-0.5 * erfc(x * SQRT1_2))
    if x > -30.0:
        return log(0.5 * erfc(-x * SQRT1_2))
    if x == -INFINITY:
        return -INFINITY
    z = x * x
    s = 1.0 - 1.0 / z * (1.0 - 3.0 / z * (1.0 - 5.0 / z * (1.0 - 7.0 / z * (
        1.0 - 9.0 / z * (1.0 - 11.0 / z * (1.0 - 13.0 / z))))))
    return -0.5 * z - LOG_SQRT_2PI - log(-x) + log(s)


cdef double c_log_cdf_diff(double a, double b) noexcept nogil:
    """log(Phi(b) - Phi(a)) for standardized thresholds a <= b."""
    cdef double t, la, lb, d
    if a == -INFINITY and b == INFINITY:
        return 0.0
    if b == INFINITY or (a != -INFINITY and a + b > 0.0):
        t = a
        a = -b
        b = -t
    la = c_log_ndtr(a)
    lb = c_log_ndtr(b)
    d = la - lb
    if d >= 0.0:
        return -INFINITY
    if d > -LOG2:
        return lb + log(-expm1(d))
    return lb + log1p(-exp(d))


def log_cdf_diff(const double[::1] lo, const double[::1] up, const double[::1] mu, double sigma):
    cdef Py_ssize_t n = lo.shape[0]
    out_np = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef Py_ssize_t i
    cdef double a, b
    with nogil:
        for i in range(n):
            a = -INFINITY if lo[i] == -INFINITY else (lo[i] - mu[i]) / sigma
            b = INFINITY if up[i] == INFINITY else (up[i] - mu[i]) / sigma
            out[i] = c_log_cdf_diff(a, b)
    return out_np


def censored_moments(const double[::1] lo, const double[::1] up, const double[::1] mu, double sigma):
    """Per-entry (log P, w1, w2); see swmimo.kernels for the definitions."""
    cdef Py_ssize_t n = lo.shape[0]
    lp_np = np.empty(n, dtype=np.float64)
    w1_np = np.empty(n, dtype=np.float64)
    w2_np = np.empty(n, dtype=np.float64)
    cdef double[::1] lp = lp_np
    cdef double[::1] w1 = w1_np
    cdef double[::1] w2 = w2_np
    cdef Py_ssize_t i
    cdef double a, b, logp, ea, eb, mid
    with nogil:
        for i in range(n):
            a = -INFINITY if lo[i] == -INFINITY else (lo[i] - mu[i]) / sigma
            b = INFINITY if up[i] == INFINITY else (up[i] - mu[i]) / sigma
            logp = c_log_cdf_diff(a, b)
            lp[i] = logp
            if logp == -INFINITY:
                if isinf(a):
                    mid = b
                elif isinf(b):
                    mid = a
                else:
                    mid = 0.5 * (a + b)
                w1[i] = -mid
                w2[i] = mid * mid - 1.0
            else:
                ea = 0.0 if isinf(a) else exp(-0.5 * a * a - LOG_SQRT_2PI - logp)
                eb = 0.0 if isinf(b) else exp(-0.5 * b * b - LOG_SQRT_2PI - logp)
                w1[i] = eb - ea
                w2[i] = (0.0 if isinf(a) else a * ea) - (0.0 if isinf(b) else b * eb)
    return lp_np, w1_np, w2_np
