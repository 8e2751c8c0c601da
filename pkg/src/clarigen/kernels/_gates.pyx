# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused LSTM gate kernels (compiled backend).

Same contract as _gates_py; one pass over the (B, 4H) block instead of a
dozen numpy temporaries. Gate layout: [input | forget | cell | output].
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double x) nogil:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


def lstm_forward(double[:, ::1] pre, double[:, ::1] c_prev,
                 double[:, ::1] h_prev, mask):
    cdef Py_ssize_t B = pre.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    cdef cnp.ndarray[double, ndim=2] h_arr = np.empty((B, H))
    cdef cnp.ndarray[double, ndim=2] c_arr = np.empty((B, H))
    cdef cnp.ndarray[double, ndim=2] gates_arr = np.empty((B, 4 * H))
    cdef cnp.ndarray[double, ndim=2] tc_arr = np.empty((B, H))
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] gates = gates_arr
    cdef double[:, ::1] tc = tc_arr
    cdef double[::1] m
    cdef bint has_mask = mask is not None
    if has_mask:
        m = mask
    cdef Py_ssize_t b, j
    cdef double i_, f_, g_, o_, cn, tcn, hn, mb

    with nogil:
        for b in range(B):
            mb = m[b] if has_mask else 1.0
            for j in range(H):
                i_ = _sig(pre[b, j])
                f_ = _sig(pre[b, H + j])
                g_ = tanh(pre[b, 2 * H + j])
                o_ = _sig(pre[b, 3 * H + j])
                gates[b, j] = i_
                gates[b, H + j] = f_
                gates[b, 2 * H + j] = g_
                gates[b, 3 * H + j] = o_
                cn = f_ * c_prev[b, j] + i_ * g_
                tcn = tanh(cn)
                hn = o_ * tcn
                tc[b, j] = tcn
                if mb == 1.0:
                    h[b, j] = hn
                    c[b, j] = cn
                else:
                    h[b, j] = mb * hn + (1.0 - mb) * h_prev[b, j]
                    c[b, j] = mb * cn + (1.0 - mb) * c_prev[b, j]
    return h_arr, c_arr, gates_arr, tc_arr


def lstm_backward(double[:, ::1] gates, double[:, ::1] c_prev,
                  double[:, ::1] tc, mask,
                  double[:, ::1] dh, double[:, ::1] dc):
    cdef Py_ssize_t B = gates.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    cdef cnp.ndarray[double, ndim=2] dpre_arr = np.empty((B, 4 * H))
    cdef cnp.ndarray[double, ndim=2] dc_prev_arr = np.empty((B, H))
    cdef cnp.ndarray[double, ndim=2] dh_prev_arr = np.zeros((B, H))
    cdef double[:, ::1] dpre = dpre_arr
    cdef double[:, ::1] dc_prev = dc_prev_arr
    cdef double[:, ::1] dh_prev = dh_prev_arr
    cdef double[::1] m
    cdef bint has_mask = mask is not None
    if has_mask:
        m = mask
    cdef Py_ssize_t b, j
    cdef double i_, f_, g_, o_, tcn, mb, dhn, dcn, do_, di, df, dg

    with nogil:
        for b in range(B):
            mb = m[b] if has_mask else 1.0
            for j in range(H):
                i_ = gates[b, j]
                f_ = gates[b, H + j]
                g_ = gates[b, 2 * H + j]
                o_ = gates[b, 3 * H + j]
                tcn = tc[b, j]
                dhn = dh[b, j] * mb
                dcn = dc[b, j] * mb + dhn * o_ * (1.0 - tcn * tcn)
                do_ = dhn * tcn
                di = dcn * g_
                df = dcn * c_prev[b, j]
                dg = dcn * i_
                dc_prev[b, j] = dcn * f_ + dc[b, j] * (1.0 - mb)
                if mb != 1.0:
                    dh_prev[b, j] = dh[b, j] * (1.0 - mb)
                dpre[b, j] = di * i_ * (1.0 - i_)
                dpre[b, H + j] = df * f_ * (1.0 - f_)
                dpre[b, 2 * H + j] = dg * (1.0 - g_ * g_)
                dpre[b, 3 * H + j] = do_ * o_ * (1.0 - o_)
    return dpre_arr, dc_prev_arr, dh_prev_arr
