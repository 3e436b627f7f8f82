# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stencil assembly; same contract as ``_assembly_py.assemble_stencil``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef int INTERIOR = 1
cdef int EXTERIOR = 0


cdef inline Py_ssize_t _put(Py_ssize_t m, Py_ssize_t nb, double coef,
                            const signed char[:] kind, const long long[:] unk,
                            const double[:] bval, long long[:] rows, long long[:] cols,
                            double[:] vals, double[:] rhs, Py_ssize_t pos,
                            double cut) nogil:
    cdef int k = kind[nb]
    if k == INTERIOR:
        rows[pos] = m
        cols[pos] = unk[nb]
        vals[pos] = coef
        return pos + 1
    if k != EXTERIOR:
        rhs[m] -= coef * bval[nb]
    else:
        rhs[m] -= coef * cut
    return pos


def assemble_stencil(kind, theta, cutval, bval, B, g, nodes, unk, strides, double h):
    cdef const signed char[:] kind_v = np.ascontiguousarray(kind, dtype=np.int8)
    cdef const double[:, :, :] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[:, :, :] cv = np.ascontiguousarray(cutval, dtype=np.float64)
    cdef const double[:] bv = np.ascontiguousarray(bval, dtype=np.float64)
    cdef const double[:, :, :] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef const long long[:] nodes_v = np.ascontiguousarray(nodes, dtype=np.int64)
    cdef const long long[:] unk_v = np.ascontiguousarray(unk, dtype=np.int64)
    cdef const long long[:] st = np.ascontiguousarray(strides, dtype=np.int64)
    cdef Py_ssize_t M = nodes_v.shape[0]
    cdef Py_ssize_t n = st.shape[0]
    cdef Py_ssize_t cap = M * (1 + 2 * n + 2 * n * (n - 1))
    rows_a = np.empty(cap, dtype=np.int64)
    cols_a = np.empty(cap, dtype=np.int64)
    vals_a = np.empty(cap, dtype=np.float64)
    rhs_a = np.array(g, dtype=np.float64, copy=True)
    cdef long long[:] rows = rows_a
    cdef long long[:] cols = cols_a
    cdef double[:] vals = vals_a
    cdef double[:] rhs = rhs_a
    cdef Py_ssize_t m, k, l, pos = 0, node, dpos
    cdef int sk, sl
    cdef double hm, hp, bkk, diag, base
    with nogil:
        for m in range(M):
            node = nodes_v[m]
            dpos = pos
            pos += 1
            diag = 0.0
            for k in range(n):
                hm = th[node, k, 0] * h
                hp = th[node, k, 1] * h
                bkk = Bv[m, k, k]
                diag += 2.0 * bkk / (hm * hp)
                pos = _put(m, node - st[k], -2.0 * bkk / ((hm + hp) * hm),
                           kind_v, unk_v, bv, rows, cols, vals, rhs, pos, cv[node, k, 0])
                pos = _put(m, node + st[k], -2.0 * bkk / ((hm + hp) * hp),
                           kind_v, unk_v, bv, rows, cols, vals, rhs, pos, cv[node, k, 1])
            for k in range(n):
                for l in range(k + 1, n):
                    base = -Bv[m, k, l] / (2.0 * h * h)
                    for sk in range(-1, 2, 2):
                        for sl in range(-1, 2, 2):
                            pos = _put(m, node + sk * st[k] + sl * st[l], base * (sk * sl),
                                       kind_v, unk_v, bv, rows, cols, vals, rhs, pos, 0.0)
            rows[dpos] = m
            cols[dpos] = m
            vals[dpos] = diag
    return rows_a[:pos], cols_a[:pos], vals_a[:pos], rhs_a
