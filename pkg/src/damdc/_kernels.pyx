# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network step kernels (real float64 data only)."""
from libc.math cimport exp, fabs

import numpy as np

NAME = "cython"

DEF NO_ATTRACTOR = 0
DEF RZA = 1
DEF L0 = 2


cdef inline void _gram_residual(const double[::1] h, const int[::1] indptr,
                                const int[::1] indices, const double[::1] data,
                                const double[::1] v, double[::1] out) noexcept nogil:
    cdef Py_ssize_t r, q
    cdef double s
    for r in range(h.shape[0]):
        s = 0.0
        for q in range(indptr[r], indptr[r + 1]):
            s += data[q] * v[indices[q]]
        out[r] = h[r] - s


cdef inline void _combine(const int[::1] indptr, const int[::1] indices, const double[::1] data,
                          const double[::1] phi, double[::1] out, Py_ssize_t n_taps) noexcept nogil:
    cdef Py_ssize_t k, q, m, src
    cdef double a
    for k in range(indptr.shape[0] - 1):
        for m in range(n_taps):
            out[k * n_taps + m] = 0.0
        for q in range(indptr[k], indptr[k + 1]):
            a = data[q]
            src = indices[q] * n_taps
            for m in range(n_taps):
                out[k * n_taps + m] += a * phi[src + m]


def damdc_step(ops, h, st, double mu, double eta, double tau,
               bint literal, bint project, bint use_agg):
    cdef Py_ssize_t n_taps = st.omega.shape[1]
    cdef double[::1] hv = h.reshape(-1)
    cdef double[::1] omega = st.omega.reshape(-1)
    cdef double[::1] agg = st.aggregate.reshape(-1)
    cdef double[::1] p_cont = st.p_cont.reshape(-1)
    cdef double[::1] p_disc = st.p_disc.reshape(-1)
    cdef double[::1] phi = st.phi.reshape(-1)
    cdef const int[::1] g_ptr = ops.g_indptr
    cdef const int[::1] g_idx = ops.g_indices
    cdef const double[::1] g_dat = ops.g_data
    cdef const int[::1] c_ptr = ops.c_indptr
    cdef const int[::1] c_idx = ops.c_indices
    cdef const double[::1] c_dat = ops.c_data
    cdef Py_ssize_t n = hv.shape[0], i
    cdef double[::1] v = np.empty(n)
    cdef double[::1] res = np.empty(n)
    cdef double w, pc, step = 2.0 * eta

    with nogil:
        for i in range(n):
            v[i] = omega[i] * p_disc[i]
        _gram_residual(hv, g_ptr, g_idx, g_dat, v, res)
        for i in range(n):
            w = agg[i] if use_agg else omega[i]
            if literal:
                pc = p_disc[i] + step * (w * res[i])
            else:
                pc = p_cont[i] + step * (w * res[i])
            p_disc[i] = 1.0 if pc >= tau else 0.0
            p_cont[i] = p_disc[i] if literal else pc
        for i in range(n):
            v[i] = p_disc[i] * omega[i]
        _gram_residual(hv, g_ptr, g_idx, g_dat, v, res)
        for i in range(n):
            phi[i] = omega[i] + mu * p_disc[i] * res[i]
        _combine(c_ptr, c_idx, c_dat, phi, agg, n_taps)
        for i in range(n):
            omega[i] = p_disc[i] * agg[i] if project else agg[i]


cdef inline double _sign(double x) noexcept nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return x


def lms_step(ops, h, st, mask, double mu, int attractor, double rho, double shape):
    cdef Py_ssize_t n_taps = st.omega.shape[1]
    cdef double[::1] hv = h.reshape(-1)
    cdef double[::1] omega = st.omega.reshape(-1)
    cdef double[::1] agg = st.aggregate.reshape(-1)
    cdef double[::1] phi = st.phi.reshape(-1)
    cdef const double[::1] mk = np.ascontiguousarray(np.broadcast_to(mask, st.omega.shape)).reshape(-1)
    cdef const int[::1] g_ptr = ops.g_indptr
    cdef const int[::1] g_idx = ops.g_indices
    cdef const double[::1] g_dat = ops.g_data
    cdef const int[::1] c_ptr = ops.c_indptr
    cdef const int[::1] c_idx = ops.c_indices
    cdef const double[::1] c_dat = ops.c_data
    cdef Py_ssize_t n = hv.shape[0], i
    cdef double[::1] v = np.empty(n)
    cdef double[::1] res = np.empty(n)
    cdef double w

    with nogil:
        for i in range(n):
            v[i] = omega[i] * mk[i]
        _gram_residual(hv, g_ptr, g_idx, g_dat, v, res)
        for i in range(n):
            w = omega[i]
            phi[i] = w + mu * mk[i] * res[i]
            if attractor == RZA:
                phi[i] = phi[i] - rho * _sign(w) / (1.0 + shape * fabs(w))
            elif attractor == L0:
                phi[i] = phi[i] - rho * shape * _sign(w) * exp(-shape * fabs(w))
        _combine(c_ptr, c_idx, c_dat, phi, agg, n_taps)
        for i in range(n):
            omega[i] = agg[i]
