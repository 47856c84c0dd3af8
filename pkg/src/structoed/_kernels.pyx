# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled log-determinant kernels for design enumeration.

Matrices are handed to LAPACK ``dpotrf`` in row-major storage; since they
are symmetric the factorization of the transpose is the same factorization.
Every kernel releases the GIL for its main loop.
"""
from math import comb

import numpy as np

from libc.math cimport log, NAN
from libc.string cimport memcpy
from scipy.linalg.cython_lapack cimport dpotrf


cdef double _chol_logdet(double* a, int n) noexcept nogil:
    cdef char uplo = b'L'
    cdef int info = 0
    cdef int lda = n
    cdef int i
    cdef double acc = 0.0
    if n == 0:
        return 0.0
    dpotrf(&uplo, &n, a, &lda, &info)
    if info != 0:
        return NAN
    for i in range(n):
        acc += log(a[i * n + i])
    return 2.0 * acc


def gram_subset_logdet(const double[:, ::1] gram, const Py_ssize_t[:, ::1] designs):
    """``logdet(I + gram[d][:, d])`` for every row ``d`` of ``designs``."""
    cdef Py_ssize_t n_designs = designs.shape[0]
    cdef int k = <int>designs.shape[1]
    cdef double[::1] out = np.empty(n_designs)
    cdef double[:, ::1] work = np.empty((max(k, 1), max(k, 1)))
    cdef Py_ssize_t t, i, j, ci
    with nogil:
        for t in range(n_designs):
            for i in range(k):
                ci = designs[t, i]
                for j in range(k):
                    work[i, j] = gram[ci, designs[t, j]]
                work[i, i] += 1.0
            out[t] = _chol_logdet(&work[0, 0], k)
    return np.asarray(out)


def block_combo_logdet(const double[:, :, ::1] blocks, int k, const double[:, ::1] base):
    """``logdet(base + sum(blocks[c]))`` over all ``k``-combinations ``c``.

    Combinations are visited in lexicographic order (the order of
    ``itertools.combinations``); partial sums are shared between
    combinations with a common prefix.
    """
    cdef Py_ssize_t m = blocks.shape[0]
    cdef int r = <int>blocks.shape[1]
    if k < 0 or k > m:
        raise ValueError(f"cannot choose {k} of {m} blocks")
    cdef Py_ssize_t n_out = comb(m, k)
    cdef double[::1] out = np.empty(n_out)
    cdef double[:, :, ::1] levels = np.empty((k + 1, r, r))
    cdef double[:, ::1] work = np.empty((max(r, 1), max(r, 1)))
    cdef Py_ssize_t[::1] idx = np.arange(max(k, 1), dtype=np.intp)
    cdef Py_ssize_t t, i, j, a, lev
    cdef Py_ssize_t start = 0
    cdef size_t nbytes = r * r * sizeof(double)
    levels[0, :, :] = base
    with nogil:
        for t in range(n_out):
            for lev in range(start, k):
                for i in range(r):
                    for j in range(i + 1):
                        levels[lev + 1, i, j] = levels[lev, i, j] + blocks[idx[lev], i, j]
            if r > 0:
                memcpy(&work[0, 0], &levels[k, 0, 0], nbytes)
            # dpotrf('L') on row-major storage reads the upper triangle; mirror it
            for i in range(r):
                for j in range(i):
                    work[j, i] = work[i, j]
            out[t] = _chol_logdet(&work[0, 0], r)
            a = k - 1
            while a >= 0 and idx[a] == m - k + a:
                a -= 1
            if a < 0:
                break
            idx[a] += 1
            for j in range(a + 1, k):
                idx[j] = idx[j - 1] + 1
            start = a
    return np.asarray(out)


def stack_logdet(const double[:, :, ::1] mats):
    """Log-determinant of each symmetric positive definite matrix in a stack."""
    cdef Py_ssize_t n = mats.shape[0]
    cdef int c = <int>mats.shape[1]
    cdef double[::1] out = np.empty(n)
    cdef double[:, ::1] work = np.empty((max(c, 1), max(c, 1)))
    cdef size_t nbytes = c * c * sizeof(double)
    cdef Py_ssize_t t
    with nogil:
        for t in range(n):
            if c > 0:
                memcpy(&work[0, 0], &mats[t, 0, 0], nbytes)
            out[t] = _chol_logdet(&work[0, 0], c)
    return np.asarray(out)
