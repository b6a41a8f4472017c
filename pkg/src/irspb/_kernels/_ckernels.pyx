# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CNN trunk kernels. Same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t F = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = H - kh + 1, Wo = W - kw + 1
    out = np.empty((B, F, Ho, Wo), dtype=np.float64)
    cdef double[:, :, :, ::1] y = out
    cdef Py_ssize_t n, f, c, i, j, p, q
    cdef double wv
    cdef double *yr
    cdef double *xr
    with nogil:
        for n in range(B):
            for f in range(F):
                for i in range(Ho):
                    for j in range(Wo):
                        y[n, f, i, j] = b[f]
                # one weight at a time; the inner loop walks a contiguous row
                for c in range(C):
                    for p in range(kh):
                        for q in range(kw):
                            wv = w[f, c, p, q]
                            for i in range(Ho):
                                yr = &y[n, f, i, 0]
                                xr = &x[n, c, i + p, q]
                                for j in range(Wo):
                                    yr[j] += wv * xr[j]
    return out


def conv2d_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[:, :, :, ::1] gy):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t F = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = gy.shape[2], Wo = gy.shape[3]
    gx_arr = np.zeros((B, C, H, W), dtype=np.float64)
    gw_arr = np.zeros((F, C, kh, kw), dtype=np.float64)
    gb_arr = np.zeros(F, dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t n, f, c, i, j, p, q
    cdef double wv, acc
    cdef double *gr
    cdef double *xr
    cdef double *gxr
    with nogil:
        for n in range(B):
            for f in range(F):
                for i in range(Ho):
                    gr = &gy[n, f, i, 0]
                    for j in range(Wo):
                        gb[f] += gr[j]
                for c in range(C):
                    for p in range(kh):
                        for q in range(kw):
                            wv = w[f, c, p, q]
                            acc = 0.0
                            for i in range(Ho):
                                gr = &gy[n, f, i, 0]
                                xr = &x[n, c, i + p, q]
                                gxr = &gx[n, c, i + p, q]
                                for j in range(Wo):
                                    acc += gr[j] * xr[j]
                                    gxr[j] += wv * gr[j]
                            gw[f, c, p, q] += acc
    return gx_arr, gw_arr, gb_arr


def maxpool2x2_forward(double[:, :, :, ::1] x):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = H // 2, Wo = W // 2
    out = np.empty((B, C, Ho, Wo), dtype=np.float64)
    idx_arr = np.empty((B, C, Ho, Wo), dtype=np.int64)
    cdef double[:, :, :, ::1] y = out
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t n, c, i, j, k
    cdef double best, val
    cdef cnp.int64_t arg
    with nogil:
        for n in range(B):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        best = x[n, c, 2 * i, 2 * j]
                        arg = 0
                        for k in range(1, 4):
                            val = x[n, c, 2 * i + k // 2, 2 * j + k % 2]
                            if val > best:
                                best = val
                                arg = k
                        y[n, c, i, j] = best
                        idx[n, c, i, j] = arg
    return out, idx_arr


def maxpool2x2_backward(double[:, :, :, ::1] gy, cnp.int64_t[:, :, :, ::1] idx, in_shape):
    cdef Py_ssize_t B = gy.shape[0], C = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    gx_arr = np.zeros(tuple(in_shape), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t n, c, i, j
    cdef cnp.int64_t k
    with nogil:
        for n in range(B):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        k = idx[n, c, i, j]
                        gx[n, c, 2 * i + k // 2, 2 * j + k % 2] += gy[n, c, i, j]
    return gx_arr
