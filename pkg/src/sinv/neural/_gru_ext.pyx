# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU time recurrences; same contract as ``_pykernels``.

The per-step hidden projection runs through BLAS gemm on row-major buffers
(passed to column-major BLAS as their transposes).
"""

import numpy as np

from libc.math cimport exp, expf
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef inline void _gemm(char* ta, char* tb, int m, int n, int k, real alpha,
                       real* a, int lda, real* b, int ldb, real beta,
                       real* c, int ldc) noexcept nogil:
    if real is float:
        sgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


cdef inline void _gates(real* gxp, real* ghp, real* hp, real* zp, real* rp,
                        real* np_, real* ghnp, real* hout, Py_ssize_t H) noexcept nogil:
    # Contiguous pointer loops so the compiler can vectorize exp.
    cdef Py_ssize_t j
    for j in range(H):
        if real is float:
            zp[j] = 1.0 / (1.0 + expf(-(gxp[j] + ghp[j])))
            rp[j] = 1.0 / (1.0 + expf(-(gxp[H + j] + ghp[H + j])))
        else:
            zp[j] = 1.0 / (1.0 + exp(-(gxp[j] + ghp[j])))
            rp[j] = 1.0 / (1.0 + exp(-(gxp[H + j] + ghp[H + j])))
    for j in range(H):
        ghnp[j] = ghp[2 * H + j]
        # tanh(a) = 2 * sigmoid(2a) - 1
        if real is float:
            np_[j] = 2.0 / (1.0 + expf(-2.0 * (gxp[2 * H + j] + rp[j] * ghnp[j]))) - 1.0
        else:
            np_[j] = 2.0 / (1.0 + exp(-2.0 * (gxp[2 * H + j] + rp[j] * ghnp[j]))) - 1.0
    for j in range(H):
        hout[j] = (1 - zp[j]) * hp[j] + zp[j] * np_[j]


def gru_forward(real[:, :, ::1] gx, real[:, ::1] U):
    cdef Py_ssize_t T = gx.shape[0], B = gx.shape[1], G = gx.shape[2]
    cdef Py_ssize_t H = G // 3
    dtype = np.float32 if real is float else np.float64
    hs_a = np.empty((T, B, H), dtype)
    z_a = np.empty((T, B, H), dtype)
    r_a = np.empty((T, B, H), dtype)
    n_a = np.empty((T, B, H), dtype)
    ghn_a = np.empty((T, B, H), dtype)
    gh_a = np.empty((B, G), dtype)
    h0_a = np.zeros((B, H), dtype)
    cdef real[:, :, ::1] hs = hs_a, z = z_a, r = r_a, n = n_a, ghn = ghn_a
    cdef real[:, ::1] gh = gh_a, h0 = h0_a
    cdef Py_ssize_t t, b, j
    cdef real* hp
    if T == 0 or B == 0 or H == 0:
        return hs_a, z_a, r_a, n_a, ghn_a
    with nogil:
        for t in range(T):
            hp = &h0[0, 0] if t == 0 else &hs[t - 1, 0, 0]
            _gemm(b"N", b"N", <int>G, <int>B, <int>H, 1.0, &U[0, 0], <int>G,
                  hp, <int>H, 0.0, &gh[0, 0], <int>G)
            for b in range(B):
                _gates(&gx[t, b, 0], &gh[b, 0], hp + b * H, &z[t, b, 0], &r[t, b, 0],
                       &n[t, b, 0], &ghn[t, b, 0], &hs[t, b, 0], H)
    return hs_a, z_a, r_a, n_a, ghn_a


def gru_backward(real[:, :, ::1] dhs, real[:, :, ::1] hs, real[:, :, ::1] z,
                 real[:, :, ::1] r, real[:, :, ::1] n, real[:, :, ::1] ghn,
                 real[:, ::1] U):
    cdef Py_ssize_t T = hs.shape[0], B = hs.shape[1], H = hs.shape[2]
    cdef Py_ssize_t G = 3 * H
    dtype = np.float32 if real is float else np.float64
    dgx_a = np.empty((T, B, G), dtype)
    dgh_a = np.empty((T, B, G), dtype)
    dh_next_a = np.zeros((B, H), dtype)
    cdef real[:, :, ::1] dgx = dgx_a, dgh = dgh_a
    cdef real[:, ::1] dh_next = dh_next_a
    cdef Py_ssize_t t, b, j
    cdef real dh, hp, zz, rr, nn, dan, dar, daz
    if T == 0 or B == 0 or H == 0:
        return dgx_a, dgh_a
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    dh = dhs[t, b, j] + dh_next[b, j]
                    hp = hs[t - 1, b, j] if t > 0 else 0.0
                    zz = z[t, b, j]
                    rr = r[t, b, j]
                    nn = n[t, b, j]
                    dan = dh * zz * (1 - nn * nn)
                    dar = dan * ghn[t, b, j] * rr * (1 - rr)
                    daz = dh * (nn - hp) * zz * (1 - zz)
                    dgx[t, b, j] = daz
                    dgx[t, b, H + j] = dar
                    dgx[t, b, 2 * H + j] = dan
                    dgh[t, b, j] = daz
                    dgh[t, b, H + j] = dar
                    dgh[t, b, 2 * H + j] = dan * rr
                    dh_next[b, j] = dh * (1 - zz)
            # dh_next += dgh[t] @ U.T
            _gemm(b"T", b"N", <int>H, <int>B, <int>G, 1.0, &U[0, 0], <int>G,
                  &dgh[t, 0, 0], <int>G, 1.0, &dh_next[0, 0], <int>H)
    return dgx_a, dgh_a
