# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled core for batched Chebyshev tensor contraction.

The single hot loop of the package: given per-axis Chebyshev basis values
T_k(x_n) for a batch of N scattered points, contract them against a dense
coefficient tensor.  Specialized for 1..4 axes (m <= 2 Henon-like maps live
in at most 4 dimensions); higher ranks fall back to the numpy path.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def contract_batch(cnp.ndarray coeffs, list vanders):
    """Contract ``coeffs`` with per-axis Vandermonde tables.

    coeffs : C-contiguous float64 tensor of rank d, shape (n0, ..., nd-1)
    vanders : list of d float64 arrays, vanders[a] has shape (N, na)
    returns : float64 array of shape (N,)
    """
    cdef int rank = coeffs.ndim
    if rank < 1 or rank > 4:
        raise ValueError("compiled kernel supports rank 1..4")
    if rank == 1:
        return _contract1(coeffs, vanders[0])
    if rank == 2:
        return _contract2(coeffs, vanders[0], vanders[1])
    if rank == 3:
        return _contract3(coeffs, vanders[0], vanders[1], vanders[2])
    return _contract4(coeffs, vanders[0], vanders[1], vanders[2], vanders[3])


cdef _contract1(const double[::1] c, const double[:, ::1] v0):
    cdef Py_ssize_t n = v0.shape[0], d0 = c.shape[0]
    cdef Py_ssize_t p, i
    cdef double acc
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for p in range(n):
        acc = 0.0
        for i in range(d0):
            acc += c[i] * v0[p, i]
        out[p] = acc
    return out_arr


cdef _contract2(const double[:, ::1] c, const double[:, ::1] v0, const double[:, ::1] v1):
    cdef Py_ssize_t n = v0.shape[0], d0 = c.shape[0], d1 = c.shape[1]
    cdef Py_ssize_t p, i, j
    cdef double acc, row
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for p in range(n):
        acc = 0.0
        for i in range(d0):
            row = 0.0
            for j in range(d1):
                row += c[i, j] * v1[p, j]
            acc += row * v0[p, i]
        out[p] = acc
    return out_arr


cdef _contract3(const double[:, :, ::1] c, const double[:, ::1] v0, const double[:, ::1] v1,
                const double[:, ::1] v2):
    cdef Py_ssize_t n = v0.shape[0]
    cdef Py_ssize_t d0 = c.shape[0], d1 = c.shape[1], d2 = c.shape[2]
    cdef Py_ssize_t p, i, j, k
    cdef double acc, plane, row
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for p in range(n):
        acc = 0.0
        for i in range(d0):
            plane = 0.0
            for j in range(d1):
                row = 0.0
                for k in range(d2):
                    row += c[i, j, k] * v2[p, k]
                plane += row * v1[p, j]
            acc += plane * v0[p, i]
        out[p] = acc
    return out_arr


cdef _contract4(const double[:, :, :, ::1] c, const double[:, ::1] v0, const double[:, ::1] v1,
                const double[:, ::1] v2, const double[:, ::1] v3):
    cdef Py_ssize_t n = v0.shape[0]
    cdef Py_ssize_t d0 = c.shape[0], d1 = c.shape[1], d2 = c.shape[2], d3 = c.shape[3]
    cdef Py_ssize_t p, i, j, k, l
    cdef double acc, cube, plane, row
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for p in range(n):
        acc = 0.0
        for i in range(d0):
            cube = 0.0
            for j in range(d1):
                plane = 0.0
                for k in range(d2):
                    row = 0.0
                    for l in range(d3):
                        row += c[i, j, k, l] * v3[p, l]
                    plane += row * v2[p, k]
                cube += plane * v1[p, j]
            acc += cube * v0[p, i]
        out[p] = acc
    return out_arr
