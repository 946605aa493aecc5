"""NumPy reference kernels.

These perform the same floating-point operations in the same order as the
compiled kernels, so both backends produce bit-identical trees and
predictions.  Sequential sums use ``np.cumsum`` and ``np.bincount`` (both
accumulate left to right); ``np.sum`` is avoided because it sums pairwise.
"""

from __future__ import annotations

import math

import numpy as np

TIE_TOLERANCE = 1e-10


def node_totals(g, node_of, n_nodes):
    live = node_of >= 0
    idx = node_of[live]
    G = np.bincount(idx, weights=g[live], minlength=n_nodes)
    n = np.bincount(idx, minlength=n_nodes).astype(np.int64)
    gsq = np.bincount(idx, weights=g[live] * g[live], minlength=n_nodes)
    return G, n, gsq


def _gains(GL, nL, G, n):
    GR = G - GL
    nR = n - nL
    with np.errstate(divide="ignore", invalid="ignore"):
        return GL * GL / nL + GR * GR / nR - G * G / n


def best_splits(X, g, order_flat, order_ptr, node_of, n_nodes, min_leaf):
    """Best split per active node over all features.

    Candidates are visited feature by feature, thresholds ascending, the
    default-left routing before default-right, and the presence split
    (present left, missing right) last.  A candidate replaces the incumbent
    only when its gain beats it by more than ``TIE_TOLERANCE * sum(g**2)``,
    so near-ties go to the earliest candidate.
    """
    F = X.shape[1]
    G, n, gsq = node_totals(g, node_of, n_nodes)
    tol = TIE_TOLERANCE * gsq
    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    best_left = np.zeros(n_nodes, dtype=np.uint8)

    for f in range(F):
        seg = order_flat[order_ptr[f]:order_ptr[f + 1]]
        nd = node_of[seg]
        keep = nd >= 0
        seg, nd = seg[keep], nd[keep]
        for k in range(n_nodes):
            if n[k] < 2 * min_leaf:
                continue
            rows = seg[nd == k]
            p = rows.size
            nk, Gk = int(n[k]), G[k]
            if p:
                vals = X[rows, f]
                cs = np.cumsum(g[rows])
                psum = cs[-1]
            else:
                psum = 0.0
            m = nk - p
            msum = Gk - psum
            cand_gain, cand_thr, cand_left = [], [], []
            if p >= 2:
                b = np.flatnonzero(vals[1:] > vals[:-1]) + 1
                if b.size:
                    lo, hi = vals[b - 1], vals[b]
                    thr = lo * 0.5 + hi * 0.5
                    thr = np.where(thr > lo, thr, hi)
                    cl = b.astype(np.int64)
                    sl = cs[b - 1]
                    if m > 0:
                        nL = cl + m
                        GL = sl + msum
                    else:
                        nL = cl
                        GL = sl
                    gl = _gains(GL, nL, Gk, nk)
                    gl[(nL < min_leaf) | (nk - nL < min_leaf)] = -np.inf
                    if m > 0:
                        gr = _gains(sl, cl, Gk, nk)
                        gr[(cl < min_leaf) | (nk - cl < min_leaf)] = -np.inf
                        cand_gain.append(np.column_stack([gl, gr]).ravel())
                        cand_thr.append(np.repeat(thr, 2))
                        cand_left.append(np.tile(np.array([1, 0], dtype=np.uint8), b.size))
                    else:
                        cand_gain.append(gl)
                        cand_thr.append(thr)
                        cand_left.append(np.ones(b.size, dtype=np.uint8))
            if m > 0 and p > 0:
                if p >= min_leaf and m >= min_leaf:
                    pg = _gains(np.array([psum]), np.array([p]), Gk, nk)
                else:
                    pg = np.array([-np.inf])
                cand_gain.append(pg)
                cand_thr.append(np.array([np.inf]))
                cand_left.append(np.zeros(1, dtype=np.uint8))
            if not cand_gain:
                continue
            gains = np.concatenate(cand_gain)
            thrs = np.concatenate(cand_thr)
            lefts = np.concatenate(cand_left)
            # sequential "beats incumbent by more than tol" scan, done in jumps
            B = best_gain[k]
            start = 0
            while True:
                hit = np.flatnonzero(gains[start:] > B + tol[k])
                if not hit.size:
                    break
                j = start + int(hit[0])
                B = gains[j]
                best_gain[k] = B
                best_feat[k] = f
                best_thr[k] = thrs[j]
                best_left[k] = lefts[j]
                start = j + 1
    return best_feat, best_thr, best_left, best_gain


def predict_batch(X, feat, thr, dleft, left, right, value, roots, lrs, base):
    out = np.full(X.shape[0], base, dtype=np.float64)
    rows = np.arange(X.shape[0])
    for t in range(roots.size):
        pos = np.full(X.shape[0], roots[t], dtype=np.int64)
        while True:
            f = feat[pos]
            inner = f >= 0
            if not inner.any():
                break
            r, p = rows[inner], pos[inner]
            x = X[r, f[inner]]
            miss = np.isnan(x)
            go_left = np.where(miss, dleft[p] != 0, x < thr[p])
            pos[inner] = np.where(go_left, left[p], right[p])
        out += lrs[t] * value[pos]
    return out


def predict_one(x, feat, thr, dleft, left, right, value, roots, lrs, base):
    """Scalar traversal on Python lists; avoids NumPy call overhead per node."""
    acc = base
    for t in range(len(roots)):
        nd = roots[t]
        while feat[nd] >= 0:
            v = x[feat[nd]]
            if math.isnan(v):
                nd = left[nd] if dleft[nd] else right[nd]
            elif v < thr[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        acc += lrs[t] * value[nd]
    return acc
