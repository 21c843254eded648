# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled linkage kernels: greedy merge sequences and pruned-tree utilities.

Mirror of pk.py (same arithmetic via the same libm calls, same state
updates, same tie rule), so both backends produce bit-identical output.
See pk.py for the shared conventions.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport INFINITY, exp, isinf, log, log1p

cnp.import_array()

MODE_MINMAX = 1
MODE_POWERSUM = 2
MODE_MAXLINK = 3
MODE_MINLINK = 4


cdef inline double _lae(double a, double b) noexcept nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a >= b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


cdef inline double _key(int mode, double alpha, double sa, double sb) noexcept nogil:
    if mode == 1:
        return _lae(alpha * sa, alpha * sb)
    if mode == 2:
        return sa - log(sb)
    if mode == 3:
        return sb
    return sa


cdef void _merge_core(double[:, ::1] u, double alpha, int mode,
                      double[:, ::1] sa, double[:, ::1] sb,
                      cnp.int32_t[::1] node_id, cnp.uint8_t[::1] active,
                      cnp.int32_t[:, ::1] merges, double[::1] heights) noexcept nogil:
    cdef int n = u.shape[0]
    cdef int i, j, c, t, si, sj, ia, ib, lo, hi
    cdef int best_lo, best_hi, best_si, best_sj
    cdef double key, skey, best_skey, best_key, v, w, direction

    for i in range(n):
        node_id[i] = i
        active[i] = 1
        for j in range(n):
            sa[i, j] = u[i, j]
            sb[i, j] = 1.0 if mode == 2 else u[i, j]
    direction = 1.0
    if (mode == 1 or mode == 2) and alpha < 0:
        direction = -1.0

    for t in range(n - 1):
        best_skey = INFINITY
        best_key = 0.0
        best_lo = -1
        best_hi = -1
        best_si = -1
        best_sj = -1
        for si in range(n):
            if active[si] == 0:
                continue
            for sj in range(si + 1, n):
                if active[sj] == 0:
                    continue
                key = _key(mode, alpha, sa[si, sj], sb[si, sj])
                skey = direction * key
                ia = node_id[si]
                ib = node_id[sj]
                if ia < ib:
                    lo = ia
                    hi = ib
                else:
                    lo = ib
                    hi = ia
                if skey < best_skey or (
                    skey == best_skey and (lo < best_lo or (lo == best_lo and hi < best_hi))
                ):
                    best_skey = skey
                    best_key = key
                    best_lo = lo
                    best_hi = hi
                    best_si = si
                    best_sj = sj
        if mode == 1 or mode == 2:
            heights[t] = exp(best_key / alpha)
        else:
            heights[t] = exp(best_key)
        merges[t, 0] = best_lo
        merges[t, 1] = best_hi
        i = best_si
        j = best_sj
        for c in range(n):
            if active[c] == 0 or c == i or c == j:
                continue
            if mode == 2:
                v = _lae(sa[i, c], sa[j, c])
                w = sb[i, c] + sb[j, c]
            elif mode == 3:
                v = sa[i, c] if sa[i, c] > sa[j, c] else sa[j, c]
                w = v
            elif mode == 4:
                v = sa[i, c] if sa[i, c] < sa[j, c] else sa[j, c]
                w = v
            else:
                v = sa[i, c] if sa[i, c] < sa[j, c] else sa[j, c]
                w = sb[i, c] if sb[i, c] > sb[j, c] else sb[j, c]
            sa[i, c] = v
            sa[c, i] = v
            sb[i, c] = w
            sb[c, i] = w
        active[j] = 0
        node_id[i] = n + t


cdef int _hamming_core(cnp.int32_t[:, ::1] merges, cnp.int32_t[::1] labels, int k,
                       cnp.int32_t[:, ::1] cnt, cnp.int32_t[::1] size,
                       cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                       cnp.int32_t[:, ::1] dp, cnp.int32_t[::1] popcnt) noexcept nogil:
    cdef int n = labels.shape[0]
    cdef int n_nodes = 2 * n - 1
    cdef int full = (1 << k) - 1
    cdef int i, j, t, node, a, b, S, s1, s2, pc, best, va, vb

    for node in range(n_nodes):
        size[node] = 0
        for j in range(k):
            cnt[node, j] = 0
    for i in range(n):
        cnt[i, labels[i]] = 1
        size[i] = 1
    for t in range(n - 1):
        node = n + t
        a = merges[t, 0]
        b = merges[t, 1]
        left[node] = a
        right[node] = b
        size[node] = size[a] + size[b]
        for j in range(k):
            cnt[node, j] = cnt[a, j] + cnt[b, j]

    for node in range(n_nodes):
        dp[node, 0] = -1
        for S in range(1, full + 1):
            dp[node, S] = -1
        for j in range(k):
            dp[node, 1 << j] = cnt[node, j]
        if node < n:
            continue
        a = left[node]
        b = right[node]
        for S in range(1, full + 1):
            pc = popcnt[S]
            if pc < 2 or pc > size[node]:
                continue
            best = -1
            s1 = (S - 1) & S
            while s1:
                s2 = S ^ s1
                va = dp[a, s1]
                if va >= 0:
                    vb = dp[b, s2]
                    if vb >= 0 and va + vb > best:
                        best = va + vb
                s1 = (s1 - 1) & S
            dp[node, S] = best
    return dp[n_nodes - 1, full]


def merge_sequence(u, double alpha, int mode):
    """See pk.merge_sequence; identical contract and output."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef int n = uu.shape[0]
    merges = np.empty((n - 1, 2), dtype=np.int32)
    heights = np.empty(n - 1, dtype=np.float64)
    sa = np.empty((n, n), dtype=np.float64)
    sb = np.empty((n, n), dtype=np.float64)
    node_id = np.empty(n, dtype=np.int32)
    active = np.empty(n, dtype=np.uint8)
    _merge_core(uu, alpha, mode, sa, sb, node_id, active, merges, heights)
    return merges, heights


def hamming_prune_value(merges, labels, int k):
    """See pk.hamming_prune_value; identical contract and output."""
    cdef cnp.ndarray[cnp.int32_t, ndim=2, mode="c"] mm = np.ascontiguousarray(merges, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] ll = np.ascontiguousarray(labels, dtype=np.int32)
    cdef int n = ll.shape[0]
    cdef int n_nodes = 2 * n - 1
    cdef long full = (1 << k) - 1
    if n_nodes * (full + 1) > 50_000_000:
        raise ValueError(f"hamming pruning table too large: k={k}, n={n}")
    cnt = np.empty((n_nodes, k), dtype=np.int32)
    size = np.empty(n_nodes, dtype=np.int32)
    left = np.empty(n_nodes, dtype=np.int32)
    right = np.empty(n_nodes, dtype=np.int32)
    dp = np.empty((n_nodes, full + 1), dtype=np.int32)
    popcnt = _popcounts(full)
    return _hamming_core(mm, ll, k, cnt, size, left, right, dp, popcnt)


def _popcounts(long full):
    out = np.empty(full + 1, dtype=np.int32)
    cdef cnp.int32_t[::1] o = out
    cdef long s, x
    cdef int c
    for s in range(full + 1):
        x = s
        c = 0
        while x:
            x &= x - 1
            c += 1
        o[s] = c
    return out


def utility_grid(logd, alphas, int family, labels, int k):
    """See pk.utility_grid; identical contract and output."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] ld = np.ascontiguousarray(logd, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] aa = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1, mode="c"] ll = np.ascontiguousarray(labels, dtype=np.int32)
    cdef int n = ld.shape[0]
    cdef int n_alpha = aa.shape[0]
    cdef int n_nodes = 2 * n - 1
    cdef long full = (1 << k) - 1
    if n_nodes * (full + 1) > 50_000_000:
        raise ValueError(f"hamming pruning table too large: k={k}, n={n}")

    out = np.empty(n_alpha, dtype=np.float64)
    u2 = np.empty((n, n), dtype=np.float64)
    sa = np.empty((n, n), dtype=np.float64)
    sb = np.empty((n, n), dtype=np.float64)
    node_id = np.empty(n, dtype=np.int32)
    active = np.empty(n, dtype=np.uint8)
    merges = np.empty((n - 1, 2), dtype=np.int32)
    heights = np.empty(n - 1, dtype=np.float64)
    cnt = np.empty((n_nodes, k), dtype=np.int32)
    size = np.empty(n_nodes, dtype=np.int32)
    left = np.empty(n_nodes, dtype=np.int32)
    right = np.empty(n_nodes, dtype=np.int32)
    dp = np.empty((n_nodes, full + 1), dtype=np.int32)
    popcnt = _popcounts(full)

    cdef double[::1] out_v = out
    cdef double[:, ::1] u2_v = u2
    cdef double[:, ::1] ld_v = ld
    cdef double[:, ::1] sa_v = sa
    cdef double[:, ::1] sb_v = sb
    cdef cnp.int32_t[::1] node_v = node_id
    cdef cnp.uint8_t[::1] act_v = active
    cdef cnp.int32_t[:, ::1] mrg_v = merges
    cdef double[::1] hgt_v = heights
    cdef cnp.int32_t[:, ::1] cnt_v = cnt
    cdef cnp.int32_t[::1] size_v = size
    cdef cnp.int32_t[::1] left_v = left
    cdef cnp.int32_t[::1] right_v = right
    cdef cnp.int32_t[:, ::1] dp_v = dp
    cdef cnp.int32_t[::1] pop_v = popcnt
    cdef cnp.int32_t[::1] ll_v = ll

    cdef int idx, mode, i, j, val
    cdef double alpha
    with nogil:
        for idx in range(n_alpha):
            alpha = aa[idx]
            if isinf(alpha):
                mode = 3 if alpha > 0 else 4
                for i in range(n):
                    for j in range(n):
                        u2_v[i, j] = ld_v[i, j]
            elif family == 1:
                mode = 1
                for i in range(n):
                    for j in range(n):
                        u2_v[i, j] = ld_v[i, j]
            else:
                mode = 2
                for i in range(n):
                    for j in range(n):
                        u2_v[i, j] = alpha * ld_v[i, j]
            _merge_core(u2_v, alpha, mode, sa_v, sb_v, node_v, act_v, mrg_v, hgt_v)
            val = _hamming_core(mrg_v, ll_v, k, cnt_v, size_v, left_v, right_v, dp_v, pop_v)
            out_v[idx] = val / (<double> n)
    return out
