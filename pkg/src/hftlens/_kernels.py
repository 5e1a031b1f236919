"""Numba kernels for tree growth and prediction.

RNG contract: SplitMix64 (64-bit wrapping arithmetic). Every tree owns one
stream whose initial state is derived from the ensemble seed and the tree
index (see forest.tree_stream_state); node-level draws consume the stream
in deterministic depth-first growth order, so results are bit-identical for
any thread count or schedule.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _next_u64(state):
    state = state + _GOLDEN
    return state, _mix64(state)


@njit(cache=True, inline="always")
def _next_unit(state):
    # double in [0, 1) from the top 53 bits
    state, z = _next_u64(state)
    return state, (z >> U64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def bootstrap_rows(n, state):
    """n draws with replacement from range(n); modulo bias is ~n/2^64."""
    rows = np.empty(n, np.int64)
    for i in range(n):
        state, z = _next_u64(state)
        rows[i] = np.int64(z % U64(n))
    return rows, state


@njit(cache=True, nogil=True)
def grow_tree(X, Y, rows, min_split, k_features, mode, state):
    """Grow one regression tree over X[rows] / Y[rows].

    mode 0 = extra (one uniform cut per candidate feature),
    mode 1 = forest (scan all midpoints between sorted distinct values).
    Candidate features are drawn without replacement, skipping features
    constant within the node (they do not count toward k). A node becomes a
    leaf when it has fewer than min_split samples, all targets are constant,
    or no candidate split has strictly positive variance reduction. The
    multi-target criterion is the unweighted sum of per-target reductions.

    Returns trimmed flat arrays:
    (feature, threshold, left, right, values, n_samples, gain, n_nodes);
    feature == -1 marks a leaf.
    """
    n_rows = rows.shape[0]
    p = X.shape[1]
    t = Y.shape[1]
    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    values = np.zeros((cap, t), np.float64)
    n_samples = np.zeros(cap, np.int32)
    gain_arr = np.zeros(cap, np.float64)

    idx = rows.copy()
    stack = np.zeros((cap, 3), np.int64)
    stack[0, 1] = 0
    stack[0, 2] = n_rows
    top = 1
    n_nodes = 1

    feat_order = np.empty(p, np.int64)
    sums = np.empty(t, np.float64)
    s_l = np.empty(t, np.float64)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        m = end - start

        for j in range(t):
            s = 0.0
            for i in range(start, end):
                s += Y[idx[i], j]
            sums[j] = s
            values[node, j] = s / m
        n_samples[node] = m

        if m < min_split:
            continue
        const_y = True
        for j in range(t):
            y0 = Y[idx[start], j]
            for i in range(start + 1, end):
                if Y[idx[i], j] != y0:
                    const_y = False
                    break
            if not const_y:
                break
        if const_y:
            continue

        for j in range(p):
            feat_order[j] = j
        n_avail = p
        n_cand = 0
        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        parent_term = 0.0
        for j in range(t):
            parent_term += sums[j] * sums[j] / m

        while n_avail > 0 and n_cand < k_features:
            state, z = _next_u64(state)
            pick = np.int64(z % U64(n_avail))
            f = feat_order[pick]
            feat_order[pick] = feat_order[n_avail - 1]
            feat_order[n_avail - 1] = f
            n_avail -= 1

            fmin = X[idx[start], f]
            fmax = fmin
            for i in range(start + 1, end):
                v = X[idx[i], f]
                if v < fmin:
                    fmin = v
                elif v > fmax:
                    fmax = v
            if fmin == fmax:
                continue
            n_cand += 1

            if mode == 0:
                state, u = _next_unit(state)
                cut = fmin + u * (fmax - fmin)
                if cut >= fmax:  # float rounding at u ~ 1
                    cut = fmin
                n_l = 0
                for j in range(t):
                    s_l[j] = 0.0
                for i in range(start, end):
                    if X[idx[i], f] <= cut:
                        n_l += 1
                        for j in range(t):
                            s_l[j] += Y[idx[i], j]
                n_r = m - n_l
                if n_l == 0 or n_r == 0:
                    continue
                g = -parent_term
                for j in range(t):
                    sr = sums[j] - s_l[j]
                    g += s_l[j] * s_l[j] / n_l + sr * sr / n_r
                g /= m
                if g > best_gain:
                    best_gain = g
                    best_feat = f
                    best_thr = cut
            else:
                vals = np.empty(m, np.float64)
                for i in range(m):
                    vals[i] = X[idx[start + i], f]
                order = np.argsort(vals, kind="mergesort")
                for j in range(t):
                    s_l[j] = 0.0
                n_l = 0
                for oi in range(m - 1):
                    r = idx[start + order[oi]]
                    for j in range(t):
                        s_l[j] += Y[r, j]
                    n_l += 1
                    v_here = vals[order[oi]]
                    v_next = vals[order[oi + 1]]
                    if v_here == v_next:
                        continue
                    g = -parent_term
                    for j in range(t):
                        sr = sums[j] - s_l[j]
                        g += s_l[j] * s_l[j] / n_l + sr * sr / (m - n_l)
                    g /= m
                    if g > best_gain:
                        best_gain = g
                        best_feat = f
                        best_thr = 0.5 * (v_here + v_next)

        if best_feat < 0 or best_gain <= 0.0:
            continue

        # stable partition by X[., best_feat] <= best_thr; left-goers compact
        # in place (the write position never passes the read position)
        tmp = np.empty(m, np.int64)
        n_l = 0
        n_r = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_feat] <= best_thr:
                idx[start + n_l] = r
                n_l += 1
            else:
                tmp[n_r] = r
                n_r += 1
        for i in range(n_r):
            idx[start + n_l + i] = tmp[i]

        feature[node] = best_feat
        threshold[node] = best_thr
        gain_arr[node] = best_gain
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = np.int32(left_id)
        right[node] = np.int32(right_id)
        stack[top, 0] = right_id
        stack[top, 1] = start + n_l
        stack[top, 2] = end
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + n_l
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        values[:n_nodes].copy(),
        n_samples[:n_nodes].copy(),
        gain_arr[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_into(X, feature, threshold, left, right, values, out):
    """Route rows to leaves and accumulate leaf values into out (n, t)."""
    n = X.shape[0]
    t = values.shape[1]
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        for j in range(t):
            out[i, j] += values[node, j]
