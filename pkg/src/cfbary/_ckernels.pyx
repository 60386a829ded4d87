# cython: language_level=3
"""Compiled kernels for step-quantile arithmetic.

Same contracts as ``cfbary._pykernels``; results agree to rounding of the
summation order.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _upper_bound(const double[::1] a, double x) noexcept nogil:
    # first index with a[i] > x
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _lower_bound(const double[::1] a, double x) noexcept nogil:
    # first index with a[i] >= x
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def w2_steps(const double[::1] ga, const double[::1] qa,
             const double[::1] gb, const double[::1] qb):
    """Integral of squared difference of two left-continuous step quantiles.

    ``ga``/``gb`` are the right ends of the probability pieces (strictly
    increasing, last entry 1.0), ``qa``/``qb`` the values on each piece.
    """
    cdef Py_ssize_t i = 0, j = 0
    cdef Py_ssize_t na = ga.shape[0], nb = gb.shape[0]
    cdef double prev = 0.0, nxt, d, acc = 0.0
    with nogil:
        while i < na and j < nb:
            nxt = ga[i] if ga[i] < gb[j] else gb[j]
            d = qa[i] - qb[j]
            acc += (nxt - prev) * d * d
            prev = nxt
            if ga[i] == nxt:
                i += 1
            if gb[j] == nxt:
                j += 1
    return acc


def transport(const double[::1] cdf_sorted, const double[::1] grid,
              const double[::1] q, const double[::1] z):
    """Map scores through the fold CDF, then through the step quantile table."""
    cdef Py_ssize_t n = cdf_sorted.shape[0], m = grid.shape[0]
    cdef Py_ssize_t k, c, idx, size = z.shape[0]
    cdef double u
    out = np.empty(size, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(size):
            c = _upper_bound(cdf_sorted, z[k])
            u = <double>c / <double>n
            idx = _lower_bound(grid, u)
            if idx >= m:
                idx = m - 1
            o[k] = q[idx]
    return out
