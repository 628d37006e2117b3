"""Compiled kernels for honest causal tree growth and forest prediction.

Growth works on binned structure rows: per tree and feature, candidate
thresholds are midpoints between distinct sample quantiles of the structure
part, and every structure row is coded by the number of thresholds below
its value. ``x <= threshold[c]`` is then ``code <= c`` for those rows.
"""

import numpy as np
from numba import njit

_G = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@njit(cache=True)
def _splitmix(state):
    state = state + _G
    z = state
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return state, z ^ (z >> _S31)


@njit(cache=True)
def bin_structure(sorted_x, order, struct_pos, n_struct, n_quantiles):
    """Per-feature candidate thresholds and bin codes for the structure rows.

    ``order[f]`` sorts all training rows by feature ``f`` and ``sorted_x[f]``
    holds the matching values; ``struct_pos[i]`` is the structure-local
    position of training row ``i`` or -1.
    """
    d, n = sorted_x.shape
    thr = np.zeros((d, n_quantiles - 1))
    nthr = np.zeros(d, dtype=np.int64)
    codes = np.zeros((d, n_struct), dtype=np.uint8)
    sv = np.empty(n_struct)
    sr = np.empty(n_struct, dtype=np.int64)
    uniq = np.empty(n_quantiles)
    for f in range(d):
        m = 0
        for k in range(n):
            p = struct_pos[order[f, k]]
            if p >= 0:
                sv[m] = sorted_x[f, k]
                sr[m] = p
                m += 1
        nu = 0
        for q in range(n_quantiles):
            v = sv[(q * (m - 1)) // (n_quantiles - 1)]
            if nu == 0 or v > uniq[nu - 1]:
                uniq[nu] = v
                nu += 1
        for c in range(nu - 1):
            thr[f, c] = 0.5 * (uniq[c] + uniq[c + 1])
        nt = max(nu - 1, 0)
        nthr[f] = nt
        c = 0
        for k in range(m):
            while c < nt and thr[f, c] < sv[k]:
                c += 1
            codes[f, sr[k]] = c
    return thr, nthr, codes


@njit(cache=True)
def grow_tree(codes, nthr, z, treated, mtry, min_node, arm_min, max_depth, seed):
    """Greedy growth on structure rows.

    Split score is sum over children of (sum z)^2 / n, i.e. n_c * effect_c^2
    with IPW leaf effects. A node splits only if the best admissible score
    beats the unsplit score. Returns (feature, code, left, right); leaves
    have feature -1.
    """
    d, n = codes.shape
    cap = 2 * (n // max(min_node, 1)) + 3
    feature = -np.ones(cap, dtype=np.int64)
    code = np.zeros(cap, dtype=np.int64)
    left = -np.ones(cap, dtype=np.int64)
    right = -np.ones(cap, dtype=np.int64)

    idx = np.arange(n)
    buf = np.empty(n, dtype=np.int64)
    perm = np.arange(d)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    state = np.uint64(seed)
    k_feat = min(mtry, d)
    nb = 256
    h_n = np.zeros(nb, dtype=np.int64)
    h_t = np.zeros(nb, dtype=np.int64)
    h_z = np.zeros(nb)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        m = hi - lo
        if (max_depth >= 0 and depth >= max_depth) or m < 2 * min_node:
            continue

        s_tot = 0.0
        t_tot = 0
        for i in range(lo, hi):
            s_tot += z[idx[i]]
            if treated[idx[i]]:
                t_tot += 1
        parent = s_tot * s_tot / m

        for k in range(d):
            perm[k] = k
        for k in range(k_feat):
            state, r = _splitmix(state)
            j = k + np.int64(r % np.uint64(d - k))
            tmp = perm[k]
            perm[k] = perm[j]
            perm[j] = tmp
        chosen = np.sort(perm[:k_feat])

        best = -1.0
        best_f = -1
        best_c = -1
        for fi in range(k_feat):
            f = chosen[fi]
            nt = nthr[f]
            if nt == 0:
                continue
            for c in range(nt + 1):
                h_n[c] = 0
                h_t[c] = 0
                h_z[c] = 0.0
            for i in range(lo, hi):
                r_ = idx[i]
                c = codes[f, r_]
                h_n[c] += 1
                h_z[c] += z[r_]
                if treated[r_]:
                    h_t[c] += 1
            nl = 0
            tl = 0
            sl = 0.0
            for c in range(nt):
                nl += h_n[c]
                tl += h_t[c]
                sl += h_z[c]
                nr = m - nl
                if nl < min_node or nr < min_node:
                    continue
                tr = t_tot - tl
                if tl < arm_min or tr < arm_min or nl - tl < arm_min or nr - tr < arm_min:
                    continue
                sr = s_tot - sl
                gain = sl * sl / nl + sr * sr / nr
                if gain > best:
                    best = gain
                    best_f = f
                    best_c = c

        if best_f < 0 or not best > parent:
            continue

        nl = 0
        nr = 0
        for i in range(lo, hi):
            r_ = idx[i]
            if codes[best_f, r_] <= best_c:
                idx[lo + nl] = r_
                nl += 1
            else:
                buf[nr] = r_
                nr += 1
        for i in range(nr):
            idx[lo + nl + i] = buf[i]

        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        code[node] = best_c
        left[node] = l_id
        right[node] = r_id
        st_node[sp] = r_id
        st_lo[sp] = lo + nl
        st_hi[sp] = hi
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = l_id
        st_lo[sp] = lo
        st_hi[sp] = lo + nl
        st_depth[sp] = depth + 1
        sp += 1

    return feature[:n_nodes], code[:n_nodes], left[:n_nodes], right[:n_nodes]


@njit(cache=True)
def honest_fill(x, rows, z, treated, feature, threshold, left, right, arm_min):
    """Route estimation rows, collapse splits whose children lack arm_min rows
    per arm, and compact. Returns compacted arrays plus leaf effects and
    per-arm counts; ``ok`` is False if the root itself is short of rows."""
    n_nodes = feature.shape[0]
    feature = feature.copy()
    cnt = np.zeros(n_nodes, dtype=np.int64)
    cnt_t = np.zeros(n_nodes, dtype=np.int64)
    sum_z = np.zeros(n_nodes)
    for k in range(rows.shape[0]):
        r_ = rows[k]
        node = 0
        while True:
            cnt[node] += 1
            sum_z[node] += z[r_]
            if treated[r_]:
                cnt_t[node] += 1
            if feature[node] < 0:
                break
            if x[r_, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]

    for i in range(n_nodes - 1, -1, -1):
        if feature[i] >= 0:
            a = left[i]
            b = right[i]
            if (cnt_t[a] < arm_min or cnt[a] - cnt_t[a] < arm_min
                    or cnt_t[b] < arm_min or cnt[b] - cnt_t[b] < arm_min):
                feature[i] = -1
    ok = cnt_t[0] >= arm_min and cnt[0] - cnt_t[0] >= arm_min

    new_id = -np.ones(n_nodes, dtype=np.int64)
    order = np.empty(n_nodes, dtype=np.int64)
    stack = np.empty(n_nodes + 1, dtype=np.int64)
    stack[0] = 0
    sp = 1
    m = 0
    while sp > 0:
        sp -= 1
        i = stack[sp]
        new_id[i] = m
        order[m] = i
        m += 1
        if feature[i] >= 0:
            stack[sp] = right[i]
            sp += 1
            stack[sp] = left[i]
            sp += 1

    f2 = np.empty(m, dtype=np.int64)
    t2 = np.zeros(m)
    l2 = -np.ones(m, dtype=np.int64)
    r2 = -np.ones(m, dtype=np.int64)
    v2 = np.zeros(m)
    nt2 = np.zeros(m, dtype=np.int64)
    nc2 = np.zeros(m, dtype=np.int64)
    for j in range(m):
        i = order[j]
        f2[j] = feature[i]
        nt2[j] = cnt_t[i]
        nc2[j] = cnt[i] - cnt_t[i]
        if feature[i] >= 0:
            t2[j] = threshold[i]
            l2[j] = new_id[left[i]]
            r2[j] = new_id[right[i]]
        else:
            v2[j] = sum_z[i] / cnt[i] if cnt[i] > 0 else 0.0
    return ok, f2, t2, l2, r2, v2, nt2, nc2


@njit(cache=True)
def apply_tree(x, feature, threshold, left, right):
    """Leaf index for every row of ``x``."""
    out = np.empty(x.shape[0], dtype=np.int64)
    for i in range(x.shape[0]):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def predict_forest(x, feature, threshold, left, right, value, offsets):
    n_trees = offsets.shape[0] - 1
    out = np.zeros(x.shape[0])
    for i in range(x.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if x[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[i] = acc / n_trees
    return out
