# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled basis-evaluation kernels. Semantics match numpy_backend exactly."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

NAME = "cython"


def bspline_basis(x, knots, int degree, bint want_deriv=False):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(knots, dtype=np.float64)
    cdef Py_ssize_t n_pts = xv.shape[0]
    cdef Py_ssize_t m = t.shape[0] - 1
    cdef Py_ssize_t nb = m - degree
    cdef cnp.ndarray[cnp.float64_t, ndim=2] vals = np.empty((n_pts, nb), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] derivs
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] prev = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t p, j, d
    cdef double xi, left, right
    if want_deriv:
        derivs = np.empty((n_pts, nb), dtype=np.float64)
    else:
        derivs = np.empty((0, 0), dtype=np.float64)
    for p in range(n_pts):
        xi = xv[p]
        for j in range(m):
            work[j] = 1.0 if (xi >= t[j] and xi < t[j + 1]) else 0.0
        for d in range(1, degree + 1):
            if d == degree:
                for j in range(m - d + 1):
                    prev[j] = work[j]
            for j in range(m - d):
                left = (xi - t[j]) / (t[j + d] - t[j])
                right = (t[j + d + 1] - xi) / (t[j + d + 1] - t[j + 1])
                work[j] = left * work[j] + right * work[j + 1]
        for j in range(nb):
            vals[p, j] = work[j]
        if want_deriv:
            if degree == 0:
                for j in range(nb):
                    derivs[p, j] = 0.0
            else:
                for j in range(nb):
                    derivs[p, j] = degree * (
                        prev[j] / (t[j + degree] - t[j])
                        - prev[j + 1] / (t[j + degree + 1] - t[j + 1])
                    )
    return vals, (derivs if want_deriv else None)


def rbf_basis(x, centers, double width, bint want_deriv=False):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t n_pts = xv.shape[0]
    cdef Py_ssize_t nc = c.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] vals = np.empty((n_pts, nc), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] derivs
    cdef Py_ssize_t p, j
    cdef double z, v
    if want_deriv:
        derivs = np.empty((n_pts, nc), dtype=np.float64)
    else:
        derivs = np.empty((0, 0), dtype=np.float64)
    for p in range(n_pts):
        for j in range(nc):
            z = (xv[p] - c[j]) / width
            v = exp(-z * z)
            vals[p, j] = v
            if want_deriv:
                derivs[p, j] = -2.0 * z / width * v
    return vals, (derivs if want_deriv else None)


def gram_basis(x, int degree, bint want_deriv=False):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n_pts = xv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] vals = np.empty((n_pts, degree + 1), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] derivs
    cdef Py_ssize_t p, n
    cdef double u
    if want_deriv:
        derivs = np.empty((n_pts, degree + 1), dtype=np.float64)
    else:
        derivs = np.empty((0, 0), dtype=np.float64)
    for p in range(n_pts):
        u = tanh(xv[p])
        vals[p, 0] = 1.0
        if degree >= 1:
            vals[p, 1] = u
        for n in range(1, degree):
            vals[p, n + 1] = ((2 * n + 1) * u * vals[p, n] - n * vals[p, n - 1]) / (n + 1)
        if want_deriv:
            derivs[p, 0] = 0.0
            if degree >= 1:
                derivs[p, 1] = 1.0
            for n in range(1, degree):
                derivs[p, n + 1] = derivs[p, n - 1] + (2 * n + 1) * vals[p, n]
            for n in range(degree + 1):
                derivs[p, n] = derivs[p, n] * (1.0 - u * u)
    return vals, (derivs if want_deriv else None)
