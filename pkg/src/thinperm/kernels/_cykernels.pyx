# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled element-matrix batch kernels (hot assembly loops)."""
import numpy as np

cimport numpy as cnp

from . import _ref

cnp.import_array()

_RG = np.ascontiguousarray(_ref.REF_GRADS)
_W = np.ascontiguousarray(_ref.QUAD_WEIGHTS)
_P1 = np.ascontiguousarray(_ref.REF_P1)


def p2_scalar_stiffness(double[:, :, ::1] inv_j, double[::1] det):
    cdef double[:, :, ::1] rg = _RG
    cdef double[::1] w = _W
    cdef Py_ssize_t nt = det.shape[0]
    cdef Py_ssize_t nq = w.shape[0]
    out_arr = np.zeros((nt, 6, 6))
    cdef double[:, :, ::1] out = out_arr
    cdef double g[6][2]
    cdef Py_ssize_t e, q, a, b
    cdef double wq, acc
    for e in range(nt):
        for q in range(nq):
            for a in range(6):
                g[a][0] = rg[q, a, 0] * inv_j[e, 0, 0] + rg[q, a, 1] * inv_j[e, 1, 0]
                g[a][1] = rg[q, a, 0] * inv_j[e, 0, 1] + rg[q, a, 1] * inv_j[e, 1, 1]
            wq = w[q] * det[e]
            for a in range(6):
                for b in range(6):
                    acc = g[a][0] * g[b][0] + g[a][1] * g[b][1]
                    out[e, a, b] += wq * acc
    return out_arr


def p2_sym_grad_stiffness(double[:, :, ::1] inv_j, double[::1] det):
    cdef double[:, :, ::1] rg = _RG
    cdef double[::1] w = _W
    cdef Py_ssize_t nt = det.shape[0]
    cdef Py_ssize_t nq = w.shape[0]
    out_arr = np.zeros((nt, 12, 12))
    cdef double[:, :, ::1] out = out_arr
    cdef double g[6][2]
    cdef Py_ssize_t e, q, a, b, al, be
    cdef double wq, gg
    for e in range(nt):
        for q in range(nq):
            for a in range(6):
                g[a][0] = rg[q, a, 0] * inv_j[e, 0, 0] + rg[q, a, 1] * inv_j[e, 1, 0]
                g[a][1] = rg[q, a, 0] * inv_j[e, 0, 1] + rg[q, a, 1] * inv_j[e, 1, 1]
            wq = w[q] * det[e]
            for a in range(6):
                for b in range(6):
                    gg = g[a][0] * g[b][0] + g[a][1] * g[b][1]
                    for al in range(2):
                        for be in range(2):
                            out[e, 2 * a + al, 2 * b + be] += wq * (
                                (gg if al == be else 0.0) + g[a][be] * g[b][al]
                            )
    return out_arr


def p2_p1_divergence(double[:, :, ::1] inv_j, double[::1] det):
    cdef double[:, :, ::1] rg = _RG
    cdef double[::1] w = _W
    cdef double[:, ::1] p1 = _P1
    cdef Py_ssize_t nt = det.shape[0]
    cdef Py_ssize_t nq = w.shape[0]
    out_arr = np.zeros((nt, 3, 12))
    cdef double[:, :, ::1] out = out_arr
    cdef double g[6][2]
    cdef Py_ssize_t e, q, c, b, be
    cdef double wq
    for e in range(nt):
        for q in range(nq):
            for b in range(6):
                g[b][0] = rg[q, b, 0] * inv_j[e, 0, 0] + rg[q, b, 1] * inv_j[e, 1, 0]
                g[b][1] = rg[q, b, 0] * inv_j[e, 0, 1] + rg[q, b, 1] * inv_j[e, 1, 1]
            wq = w[q] * det[e]
            for c in range(3):
                for b in range(6):
                    for be in range(2):
                        out[e, c, 2 * b + be] += wq * p1[q, c] * g[b][be]
    return out_arr
