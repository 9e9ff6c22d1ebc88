# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping and double-sum kernels.

Same contracts as :mod:`hoclab._kernels_py`; see that module for the system
being integrated.
"""

from libc.math cimport log

import numpy as np


cdef inline double _dot(const double[::1] c, double[::1] y, Py_ssize_t n) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        acc += c[i] * y[i]
    return acc


def etd2_advance(double[::1] y, const double[::1] E, const double[::1] K,
                 const double[::1] s, const double[::1] c, long nsteps, bint renorm):
    cdef Py_ssize_t n = y.shape[0], i
    cdef long k
    cdef double S0, S1, Sm, m, logacc = 0.0
    cdef double[::1] ys = np.empty(n)
    with nogil:
        for k in range(nsteps):
            S0 = _dot(c, y, n)
            for i in range(n):
                ys[i] = E[i] * y[i] + K[i] * s[i] * S0
            S1 = _dot(c, ys, n)
            Sm = 0.5 * (S0 + S1)
            for i in range(n):
                y[i] = E[i] * y[i] + K[i] * s[i] * Sm
            if renorm:
                m = _dot(c, y, n)
                for i in range(n):
                    y[i] /= m
                logacc += log(m)
    return logacc


def etd4_advance(double[::1] y, const double[::1] E, const double[::1] E2,
                 const double[::1] K2, const double[::1] f1, const double[::1] f2,
                 const double[::1] f3, const double[::1] s, const double[::1] c,
                 long nsteps, bint renorm):
    cdef Py_ssize_t n = y.shape[0], i
    cdef long k
    cdef double S0, Sa, Sb, Sc, Scs, m, logacc = 0.0
    cdef double[::1] ya = np.empty(n)
    cdef double[::1] yb = np.empty(n)
    cdef double[::1] yc = np.empty(n)
    with nogil:
        for k in range(nsteps):
            S0 = _dot(c, y, n)
            for i in range(n):
                ya[i] = E2[i] * y[i] + K2[i] * s[i] * S0
            Sa = _dot(c, ya, n)
            for i in range(n):
                yb[i] = E2[i] * y[i] + K2[i] * s[i] * Sa
            Sb = _dot(c, yb, n)
            Scs = 2.0 * Sb - S0
            for i in range(n):
                yc[i] = E2[i] * ya[i] + K2[i] * s[i] * Scs
            Sc = _dot(c, yc, n)
            for i in range(n):
                y[i] = E[i] * y[i] + s[i] * (f1[i] * S0 + 2.0 * f2[i] * (Sa + Sb) + f3[i] * Sc)
            if renorm:
                m = _dot(c, y, n)
                for i in range(n):
                    y[i] /= m
                logacc += log(m)
    return logacc


def bregman_sum(const double[::1] f, const double[::1] phi_f, const double[::1] dphi_f,
                const double[::1] q):
    cdef Py_ssize_t n = f.shape[0], i, j
    cdef double total = 0.0, row
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(n):
                row += q[j] * (phi_f[i] - phi_f[j] - dphi_f[j] * (f[i] - f[j]))
            total += q[i] * row
    return total
