"""Pure-numpy kernels. Same signatures and summation order as ``_numba``."""

import numpy as np

NAME = "numpy"

# rows per block in the (eval x background) grid of vanilla_pd
_GRID_CELLS = 1 << 20


def route(feature, threshold, left, right, X):
    """Leaf index reached by every row of ``X`` (go left iff x < t)."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        nd = node[active]
        go_left = X[active, feature[nd]] < threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feature[node[active]] >= 0]
    return node


def split_rows(idx, column, t):
    """Split row indices by ``column[idx] < t``, preserving order."""
    m = column[idx] < t
    return idx[m], idx[~m]


def leaf_fail_masks(path_feature, path_threshold, path_left, path_bit, path_len, X):
    """Bitmask per (row, leaf) of the path features whose split ``x`` violates.

    Bits are leaf-local positions (``path_bit``). A leaf is reached under a
    subset ``U`` iff ``mask & U == 0``.
    """
    n = X.shape[0]
    L = path_len.shape[0]
    E = np.zeros((n, L), dtype=np.int64)
    for j in range(L):
        acc = np.zeros(n, dtype=np.int64)
        for s in range(path_len[j]):
            goes_left = X[:, path_feature[j, s]] < path_threshold[j, s]
            bad = goes_left != path_left[j, s]
            acc |= bad.astype(np.int64) << path_bit[j, s]
        E[:, j] = acc
    return E


def leaf_counts(E, widths, offsets):
    counts = np.zeros(int(offsets[-1]), dtype=np.int64)
    for j in range(E.shape[1]):
        size = 1 << int(widths[j])
        c = np.bincount(E[:, j], minlength=size)
        idx = np.arange(size)
        for p in range(int(widths[j])):
            hi = idx[(idx >> p) & 1 == 1]
            c[hi] += c[hi ^ (1 << p)]
        counts[offsets[j]:offsets[j] + size] = c
    return counts


def accumulate(E, W, UL):
    """``out[i, k] = sum_j W[j, k] * [E[i, j] & UL[j, k] == 0]``, summed over j in order."""
    n, L = E.shape
    K = W.shape[1]
    out = np.zeros((n, K))
    for j in range(L):
        hit = (E[:, j, None] & UL[j][None, :]) == 0
        out += np.where(hit, W[j][None, :], 0.0)
    return out


def path_pd(feature, threshold, left, right, value, cover, X, in_s):
    """Coverage-weighted path-dependent PD of one tree, top-down over nodes."""
    n = X.shape[0]
    m = feature.shape[0]
    w = np.zeros((m, n))
    w[0] = 1.0
    out = np.zeros(n)
    # nodes are in preorder, so every parent is visited before its children
    for j in range(m):
        f = feature[j]
        if f < 0:
            out += w[j] * value[j]
            continue
        l, r = left[j], right[j]
        if in_s[f]:
            go = X[:, f] < threshold[j]
            w[l] = np.where(go, w[j], 0.0)
            w[r] = np.where(go, 0.0, w[j])
        elif cover[j] > 0:
            w[l] = w[j] * (cover[l] / cover[j])
            w[r] = w[j] * (cover[r] / cover[j])
    return out


def vanilla_pd(feature, threshold, left, right, value, X, B, in_s):
    """Mean over background rows of the tree at hybrid points (x_S, b_not_S)."""
    n, nb = X.shape[0], B.shape[0]
    out = np.empty(n)
    rows = max(1, _GRID_CELLS // max(nb, 1))
    for lo in range(0, n, rows):
        hi = min(n, lo + rows)
        node = np.zeros((hi - lo, nb), dtype=np.int64)
        while True:
            f = feature[node]
            internal = f >= 0
            if not internal.any():
                break
            fs = np.where(internal, f, 0)
            take_x = in_s[fs]
            xv = np.take_along_axis(X[lo:hi], fs, axis=1)
            bv = B[np.arange(nb)[None, :], fs]
            v = np.where(take_x, xv, bv)
            nxt = np.where(v < threshold[node], left[node], right[node])
            node = np.where(internal, nxt, node)
        out[lo:hi] = value[node].mean(axis=1)
    return out
