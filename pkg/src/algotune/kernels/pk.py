"""Pure-Python mirror of the compiled linkage kernels.

Implements exactly the same algorithms as ``_ck.pyx``: same shifted
log-sum-exp formula, same state updates, same lexicographic tie rule on
node ids. Every accumulation uses scalar libm operations (math.log/exp/
log1p) so the two backends return bit-identical merge sequences, heights,
and utilities.

Conventions shared by both backends:

* input ``u`` is an n x n matrix of log pair values: ln(delta) for modes
  MINMAX/MAXLINK/MINLINK, already-scaled summands (alpha*ln(delta) or
  sum_i alpha_i*ln(delta_i)) for mode POWERSUM; -inf entries encode zero
  distances;
* cluster node ids are chronological: leaves 0..n-1, the t-th merge
  creates node n+t;
* ties in the merge objective are broken toward the lexicographically
  smallest (min node id, then second id) pair.
"""

import math

import numpy as np

MODE_MINMAX = 1    # key = logaddexp(alpha*min, alpha*max), value = exp(key/alpha)
MODE_POWERSUM = 2  # key = lse(u) - log(count),             value = exp(key/alpha)
MODE_MAXLINK = 3   # key = max(u),                          value = exp(key)
MODE_MINLINK = 4   # key = min(u),                          value = exp(key)

INF = math.inf


def _lae(a, b):
    """log(exp(a) + exp(b)), shifted; exact passthrough for -inf inputs."""
    if a == -INF:
        return b
    if b == -INF:
        return a
    if a >= b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def _exp_safe(x):
    # C exp() overflows to +inf; match that instead of raising.
    try:
        return math.exp(x)
    except OverflowError:
        return INF


def _key(mode, alpha, sa, sb):
    if mode == MODE_MINMAX:
        return _lae(alpha * sa, alpha * sb)
    if mode == MODE_POWERSUM:
        return sa - math.log(sb)
    if mode == MODE_MAXLINK:
        return sb
    return sa  # MODE_MINLINK


def merge_sequence(u, alpha, mode):
    """Greedy agglomeration of n singletons down to one cluster.

    Returns (merges, heights): merges is an (n-1, 2) int32 array of node-id
    pairs (lower id first), heights the corresponding merge values.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    rows = [list(map(float, row)) for row in u]
    # State per slot pair: sa/sb hold (min, max) of u for MINMAX, (lse
    # accumulator, pair count) for POWERSUM, and (min, max) again for the
    # pure min/max linkages.
    sa = [row[:] for row in rows]
    if mode == MODE_POWERSUM:
        sb = [[1.0] * n for _ in range(n)]
    else:
        sb = [row[:] for row in rows]
    node_id = list(range(n))
    active = [True] * n
    direction = -1.0 if ((mode == MODE_MINMAX or mode == MODE_POWERSUM) and alpha < 0) else 1.0

    merges = np.empty((n - 1, 2), dtype=np.int32)
    heights = np.empty(n - 1, dtype=np.float64)
    for t in range(n - 1):
        best_skey = INF
        best_lo = best_hi = -1
        best_si = best_sj = -1
        best_key = 0.0
        for si in range(n):
            if not active[si]:
                continue
            row_a, row_b = sa[si], sb[si]
            for sj in range(si + 1, n):
                if not active[sj]:
                    continue
                key = _key(mode, alpha, row_a[sj], row_b[sj])
                skey = direction * key
                ia, ib = node_id[si], node_id[sj]
                lo, hi = (ia, ib) if ia < ib else (ib, ia)
                if skey < best_skey or (
                    skey == best_skey and (lo < best_lo or (lo == best_lo and hi < best_hi))
                ):
                    best_skey, best_key = skey, key
                    best_lo, best_hi, best_si, best_sj = lo, hi, si, sj
        if mode == MODE_MINMAX or mode == MODE_POWERSUM:
            heights[t] = _exp_safe(best_key / alpha)
        else:
            heights[t] = _exp_safe(best_key)
        merges[t, 0], merges[t, 1] = best_lo, best_hi
        i, j = best_si, best_sj
        for c in range(n):
            if not active[c] or c == i or c == j:
                continue
            if mode == MODE_POWERSUM:
                v = _lae(sa[i][c], sa[j][c])
                w = sb[i][c] + sb[j][c]
            elif mode == MODE_MAXLINK:
                v = sa[i][c] if sa[i][c] > sa[j][c] else sa[j][c]
                w = v
            elif mode == MODE_MINLINK:
                v = sa[i][c] if sa[i][c] < sa[j][c] else sa[j][c]
                w = v
            else:
                v = sa[i][c] if sa[i][c] < sa[j][c] else sa[j][c]
                w = sb[i][c] if sb[i][c] > sb[j][c] else sb[j][c]
            sa[i][c] = sa[c][i] = v
            sb[i][c] = sb[c][i] = w
        active[j] = False
        node_id[i] = n + t
    return merges, heights


def hamming_prune_value(merges, labels, k):
    """Maximum total target overlap over all k-prunings of the merge tree.

    labels[i] is the target block (0..k-1) of point i. The produced k
    clusters are matched bijectively to target blocks; the return value is
    max over (pruning, matching) of the summed intersection sizes, so the
    optimal pruned Hamming loss is (n - value)/n.
    """
    merges = np.asarray(merges)
    labels = list(map(int, labels))
    n = len(labels)
    n_nodes = 2 * n - 1
    full = (1 << k) - 1
    if n_nodes * (full + 1) > 50_000_000:
        raise ValueError(f"hamming pruning table too large: k={k}, n={n}")
    cnt = [[0] * k for _ in range(n_nodes)]
    size = [0] * n_nodes
    left = [0] * n_nodes
    right = [0] * n_nodes
    for i in range(n):
        cnt[i][labels[i]] = 1
        size[i] = 1
    for t in range(n - 1):
        node = n + t
        a, b = int(merges[t, 0]), int(merges[t, 1])
        left[node], right[node] = a, b
        size[node] = size[a] + size[b]
        ca, cb, cn = cnt[a], cnt[b], cnt[node]
        for j in range(k):
            cn[j] = ca[j] + cb[j]
    # dp[node][S]: best overlap splitting node's subtree into |S| clusters
    # matched bijectively to the target blocks in S; -1 = infeasible.
    dp = [[-1] * (full + 1) for _ in range(n_nodes)]
    for node in range(n_nodes):
        row = dp[node]
        cn = cnt[node]
        for j in range(k):
            row[1 << j] = cn[j]
        if node < n:
            continue
        dl, dr = dp[left[node]], dp[right[node]]
        sz = size[node]
        for S in range(1, full + 1):
            pc = S.bit_count()
            if pc < 2 or pc > sz:
                continue
            best = -1
            s1 = (S - 1) & S
            while s1:
                s2 = S ^ s1
                a = dl[s1]
                if a >= 0:
                    b = dr[s2]
                    if b >= 0 and a + b > best:
                        best = a + b
                s1 = (s1 - 1) & S
            row[S] = best
    return dp[n_nodes - 1][full]


def utility_grid(logd, alphas, family, labels, k):
    """Clustering utility (1 - optimal pruned Hamming loss) for each alpha.

    family: 1 = M1 (min/max power sum), 2 = M2 (power mean). Infinite
    alphas select exact max/min linkage; callers snap |alpha| > 64 before
    the call. logd holds ln(delta_beta).
    """
    logd = np.asarray(logd, dtype=float)
    n = logd.shape[0]
    out = np.empty(len(alphas), dtype=np.float64)
    for idx, alpha in enumerate(alphas):
        alpha = float(alpha)
        if math.isinf(alpha):
            mode, u = (MODE_MAXLINK, logd) if alpha > 0 else (MODE_MINLINK, logd)
        elif family == 1:
            mode, u = MODE_MINMAX, logd
        else:
            mode, u = MODE_POWERSUM, alpha * logd
        merges, _ = merge_sequence(u, alpha, mode)
        out[idx] = hamming_prune_value(merges, labels, k) / n
    return out
