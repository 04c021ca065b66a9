"""numba-compiled kernels. Loop-for-loop twins of ``_numpy``."""

import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # distro TBB builds are often too old and only produce a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

NAME = "numba"


@njit(cache=True)
def route(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        j = 0
        while feature[j] >= 0:
            if X[i, feature[j]] < threshold[j]:
                j = left[j]
            else:
                j = right[j]
        out[i] = j
    return out


@njit(cache=True)
def split_rows(idx, column, t):
    n = idx.shape[0]
    lo = np.empty(n, dtype=idx.dtype)
    hi = np.empty(n, dtype=idx.dtype)
    a = 0
    b = 0
    for k in range(n):
        i = idx[k]
        if column[i] < t:
            lo[a] = i
            a += 1
        else:
            hi[b] = i
            b += 1
    return lo[:a].copy(), hi[:b].copy()


@njit(cache=True)
def leaf_fail_masks(path_feature, path_threshold, path_left, path_bit, path_len, X):
    n = X.shape[0]
    L = path_len.shape[0]
    E = np.zeros((n, L), dtype=np.int64)
    for i in range(n):
        for j in range(L):
            acc = 0
            for s in range(path_len[j]):
                goes_left = X[i, path_feature[j, s]] < path_threshold[j, s]
                if goes_left != path_left[j, s]:
                    acc |= np.int64(1) << path_bit[j, s]
            E[i, j] = acc
    return E


@njit(cache=True)
def leaf_counts(E, widths, offsets):
    n, L = E.shape
    counts = np.zeros(offsets[L], dtype=np.int64)
    for i in range(n):
        for j in range(L):
            counts[offsets[j] + E[i, j]] += 1
    for j in range(L):
        base = offsets[j]
        size = np.int64(1) << widths[j]
        for p in range(widths[j]):
            b = np.int64(1) << p
            for m in range(size):
                if m & b:
                    counts[base + m] += counts[base + (m ^ b)]
    return counts


@njit(cache=True, parallel=True)
def accumulate(E, W, UL):
    n, L = E.shape
    K = W.shape[1]
    out = np.zeros((n, K))
    for i in prange(n):
        for j in range(L):
            e = E[i, j]
            for k in range(K):
                if e & UL[j, k] == 0:
                    out[i, k] += W[j, k]
                else:
                    out[i, k] += 0.0
    return out


@njit(cache=True)
def path_pd(feature, threshold, left, right, value, cover, X, in_s):
    n = X.shape[0]
    m = feature.shape[0]
    out = np.zeros(n)
    w = np.zeros(m)
    for i in range(n):
        w[:] = 0.0
        w[0] = 1.0
        acc = 0.0
        for j in range(m):
            f = feature[j]
            if f < 0:
                acc += w[j] * value[j]
                continue
            l = left[j]
            r = right[j]
            if in_s[f]:
                if X[i, f] < threshold[j]:
                    w[l] = w[j]
                    w[r] = 0.0
                else:
                    w[l] = 0.0
                    w[r] = w[j]
            elif cover[j] > 0:
                w[l] = w[j] * (cover[l] / cover[j])
                w[r] = w[j] * (cover[r] / cover[j])
        out[i] = acc
    return out


@njit(cache=True, parallel=True)
def vanilla_pd(feature, threshold, left, right, value, X, B, in_s):
    n = X.shape[0]
    nb = B.shape[0]
    out = np.empty(n)
    for i in prange(n):
        acc = 0.0
        for b in range(nb):
            j = 0
            while feature[j] >= 0:
                f = feature[j]
                v = X[i, f] if in_s[f] else B[b, f]
                if v < threshold[j]:
                    j = left[j]
                else:
                    j = right[j]
            acc += value[j]
        out[i] = acc / nb
    return out
