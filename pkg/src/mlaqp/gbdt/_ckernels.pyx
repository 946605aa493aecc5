# Compiled split search and batch prediction.
# Must stay operation-for-operation identical to _pykernels.py.

import numpy as np
cimport numpy as cnp
from libc.math cimport isnan, INFINITY

cnp.import_array()

DEF TIE_TOLERANCE = 1e-10


cdef inline double _gain(double GL, long nL, double G, long n) noexcept nogil:
    cdef double GR = G - GL
    cdef long nR = n - nL
    return GL * GL / <double>nL + GR * GR / <double>nR - G * G / <double>n


def best_splits(const double[:, ::1] X, const double[::1] g,
                const long[::1] order_flat, const long[::1] order_ptr,
                const long[::1] node_of, long n_nodes, long min_leaf):
    cdef Py_ssize_t N = X.shape[0], F = X.shape[1]
    cdef Py_ssize_t i, f, j, r
    cdef long k, nk, p, m, cl, nL
    cdef double v, thr, GL, gain, msum

    G_a = np.zeros(n_nodes)
    n_a = np.zeros(n_nodes, dtype=np.int64)
    gsq_a = np.zeros(n_nodes)
    tol_a = np.zeros(n_nodes)
    bg_a = np.zeros(n_nodes)
    bf_a = np.full(n_nodes, -1, dtype=np.int64)
    bt_a = np.zeros(n_nodes)
    bl_a = np.zeros(n_nodes, dtype=np.uint8)
    pc_a = np.zeros(n_nodes, dtype=np.int64)
    ps_a = np.zeros(n_nodes)
    lc_a = np.zeros(n_nodes, dtype=np.int64)
    ls_a = np.zeros(n_nodes)
    pv_a = np.zeros(n_nodes)

    cdef double[::1] G = G_a, gsq = gsq_a, tol = tol_a, bg = bg_a, bt = bt_a
    cdef double[::1] ps = ps_a, ls = ls_a, pv = pv_a
    cdef long[::1] n = n_a, bf = bf_a, pc = pc_a, lc = lc_a
    cdef unsigned char[::1] bl = bl_a

    with nogil:
        for i in range(N):
            k = node_of[i]
            if k >= 0:
                G[k] += g[i]
                n[k] += 1
                gsq[k] += g[i] * g[i]
        for k in range(n_nodes):
            tol[k] = TIE_TOLERANCE * gsq[k]

        for f in range(F):
            for k in range(n_nodes):
                pc[k] = 0
                ps[k] = 0.0
                lc[k] = 0
                ls[k] = 0.0
            for j in range(order_ptr[f], order_ptr[f + 1]):
                r = order_flat[j]
                k = node_of[r]
                if k >= 0:
                    pc[k] += 1
                    ps[k] += g[r]
            for j in range(order_ptr[f], order_ptr[f + 1]):
                r = order_flat[j]
                k = node_of[r]
                if k < 0 or n[k] < 2 * min_leaf:
                    continue
                v = X[r, f]
                cl = lc[k]
                if cl > 0 and v > pv[k]:
                    nk = n[k]
                    m = nk - pc[k]
                    thr = pv[k] * 0.5 + v * 0.5
                    if not thr > pv[k]:
                        thr = v
                    if m > 0:
                        msum = G[k] - ps[k]
                        nL = cl + m
                        GL = ls[k] + msum
                    else:
                        nL = cl
                        GL = ls[k]
                    if nL >= min_leaf and nk - nL >= min_leaf:
                        gain = _gain(GL, nL, G[k], nk)
                        if gain > bg[k] + tol[k]:
                            bg[k] = gain
                            bf[k] = f
                            bt[k] = thr
                            bl[k] = 1
                    if m > 0 and cl >= min_leaf and nk - cl >= min_leaf:
                        gain = _gain(ls[k], cl, G[k], nk)
                        if gain > bg[k] + tol[k]:
                            bg[k] = gain
                            bf[k] = f
                            bt[k] = thr
                            bl[k] = 0
                lc[k] = cl + 1
                ls[k] += g[r]
                pv[k] = v
            for k in range(n_nodes):
                nk = n[k]
                p = pc[k]
                m = nk - p
                if nk < 2 * min_leaf or m <= 0 or p <= 0:
                    continue
                if p >= min_leaf and m >= min_leaf:
                    gain = _gain(ps[k], p, G[k], nk)
                    if gain > bg[k] + tol[k]:
                        bg[k] = gain
                        bf[k] = f
                        bt[k] = INFINITY
                        bl[k] = 0
    return bf_a, bt_a, bl_a, bg_a


def predict_batch(const double[:, ::1] X, const long[::1] feat, const double[::1] thr,
                  const unsigned char[::1] dleft, const long[::1] left,
                  const long[::1] right, const double[::1] value,
                  const long[::1] roots, const double[::1] lrs, double base):
    cdef Py_ssize_t N = X.shape[0], T = roots.shape[0]
    cdef Py_ssize_t i, t
    cdef long nd
    cdef double acc, x
    out_a = np.empty(N)
    cdef double[::1] out = out_a
    with nogil:
        for i in range(N):
            acc = base
            for t in range(T):
                nd = roots[t]
                while feat[nd] >= 0:
                    x = X[i, feat[nd]]
                    if isnan(x):
                        nd = left[nd] if dleft[nd] else right[nd]
                    elif x < thr[nd]:
                        nd = left[nd]
                    else:
                        nd = right[nd]
                acc = acc + lrs[t] * value[nd]
            out[i] = acc
    return out_a
