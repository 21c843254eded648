"""Merge-function families, agglomerative trees, pruning, and Hamming utility.

Three parameterized linkage families over a combined dissimilarity
delta_beta = sum_i beta_i delta_i (families M1/M2) or the raw matrices
(family M3):

* M1(alpha): (min^alpha + max^alpha)^(1/alpha) over cross-cluster pairs --
  interpolates between single (alpha -> -inf) and complete (alpha -> +inf)
  linkage;
* M2(alpha): the power mean ((1/|A||B|) sum delta^alpha)^(1/alpha) --
  single, average (alpha=1), and complete linkage live on one axis;
* M3(alpha_1..alpha_L): the normalized multi-metric product mean
  ((1/|A||B|) sum prod_i delta_i^alpha_i)^(1/sum_i alpha_i).

All powers are evaluated in the log domain (d^alpha = exp(alpha ln d),
sums via shifted log-sum-exp), so large |alpha| cannot overflow;
|alpha| > EXP_SNAP (= 64) is snapped to exact min/max linkage. Greedy
agglomeration breaks ties toward the lexicographically smallest
(min node id, second id) pair; one fixed global rule keeps every tree
reproducible.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from . import kernels
from .instances import ALPHA_GUARD, LinkageVectorParam, ValidationError, combine_distance

EXP_SNAP = 64.0
ROOT_TOL = 1e-10
DEDUPE_TOL = 1e-9
ENUM_MAX_N = 12


class DomainError(ValueError):
    """Raised when a merge value is undefined (zero distance, negative power)."""


# ---------------------------------------------------------------------------
# merge families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class M1:
    """Min/max power combination (min^a + max^a)^(1/a) of cross-cluster distances."""

    alpha: float

    def validate(self):
        if self.alpha == 0 or (math.isfinite(self.alpha) and abs(self.alpha) < ALPHA_GUARD):
            raise ValidationError("alpha", f"|alpha| >= {ALPHA_GUARD} required (got {self.alpha})")
        return self


@dataclass(frozen=True)
class M2:
    """Power mean (versatile linkage) of cross-cluster distances."""

    alpha: float

    def validate(self):
        if self.alpha == 0 or (math.isfinite(self.alpha) and abs(self.alpha) < ALPHA_GUARD):
            raise ValidationError("alpha", f"|alpha| >= {ALPHA_GUARD} required (got {self.alpha})")
        return self


@dataclass(frozen=True)
class M3:
    """Normalized product mean over L metrics with per-metric exponents."""

    alpha: tuple

    def validate(self):
        LinkageVectorParam(tuple(self.alpha)).validate()
        return self


def snap_alpha(alpha):
    """Exponents beyond +-EXP_SNAP collapse to exact min/max linkage."""
    alpha = float(alpha)
    if math.isfinite(alpha) and abs(alpha) > EXP_SNAP:
        return math.inf if alpha > 0 else -math.inf
    return alpha


@dataclass
class ClusterTree:
    """Agglomerative merge tree: leaves 0..n-1, merge t creates node n+t."""

    n: int
    merges: list      # (lo node id, hi node id), chronological, n-1 entries
    heights: list     # merge distance per entry

    def children(self, node):
        if node < self.n:
            raise ValueError(f"node {node} is a leaf")
        return self.merges[node - self.n]

    def points(self, node):
        """Sorted point ids in the subtree rooted at `node`."""
        out = []
        stack = [node]
        while stack:
            v = stack.pop()
            if v < self.n:
                out.append(v)
            else:
                stack.extend(self.merges[v - self.n])
        return sorted(out)

    @property
    def root(self):
        return 2 * self.n - 2

    def to_json(self):
        return {
            "n": self.n,
            "merges": [[int(a), int(b)] for a, b in self.merges],
            "heights": [float(h) for h in self.heights],
        }


# ---------------------------------------------------------------------------
# merge distances (direct, non-incremental evaluation)
# ---------------------------------------------------------------------------

def _cross_values(delta, A, B):
    A, B = sorted(A), sorted(B)
    if not A or not B:
        raise ValidationError("A", "clusters must be nonempty")
    if set(A) & set(B):
        raise ValidationError("A", "clusters must be disjoint")
    return np.asarray(delta)[np.ix_(A, B)].ravel()


def _log_values(vals, negative_power):
    if negative_power and np.any(vals == 0.0):
        raise DomainError("zero distance raised to a negative power")
    with np.errstate(divide="ignore"):
        return np.log(vals)


def merge_distance(family, A, B, delta):
    """Cluster-pair distance under the given family.

    delta is the combined n x n matrix for M1/M2 and the list of L raw
    matrices for M3. alpha = +inf gives max pairwise distance, -inf min.
    """
    if isinstance(family, M3):
        family.validate()
        alphas = [float(a) for a in family.alpha]
        if len(delta) != len(alphas):
            raise ValidationError("delta", f"{len(delta)} matrices != {len(alphas)} exponents")
        inf_axes = [i for i, a in enumerate(alphas) if math.isinf(a)]
        if inf_axes:
            vals = _cross_values(delta[inf_axes[0]], A, B)
            return float(vals.max() if alphas[inf_axes[0]] > 0 else vals.min())
        s = None
        for a, d in zip(alphas, delta):
            if a == 0:
                continue
            lv = a * _log_values(_cross_values(d, A, B), a < 0)
            s = lv if s is None else s + lv
        total = sum(alphas)
        return float(np.exp((logsumexp(s) - math.log(s.size)) / total))

    family.validate()
    alpha = snap_alpha(family.alpha)
    vals = _cross_values(delta, A, B)
    if math.isinf(alpha):
        return float(vals.max() if alpha > 0 else vals.min())
    lv = _log_values(vals, alpha < 0)
    if isinstance(family, M1):
        key = np.logaddexp(alpha * lv.min(), alpha * lv.max())
    elif isinstance(family, M2):
        key = logsumexp(alpha * lv) - math.log(lv.size)
    else:
        raise ValidationError("family", f"unknown family {type(family).__name__}")
    return float(np.exp(key / alpha))


# ---------------------------------------------------------------------------
# tree construction
# ---------------------------------------------------------------------------

def _kernel_inputs(instance, family, beta):
    """Map (family, beta) to the kernel's (u, alpha, mode) triple."""
    if isinstance(family, M3):
        family.validate()
        alphas = [float(a) for a in family.alpha]
        if len(alphas) != instance.L:
            raise ValidationError("alpha", f"{len(alphas)} exponents != L={instance.L}")
        inf_axes = [i for i, a in enumerate(alphas) if math.isinf(a)]
        off_diag = ~np.eye(instance.n, dtype=bool)
        if inf_axes:
            d = instance.distances[inf_axes[0]]
            with np.errstate(divide="ignore"):
                u = np.log(d)
            mode = kernels.MODE_MAXLINK if alphas[inf_axes[0]] > 0 else kernels.MODE_MINLINK
            return u, alphas[inf_axes[0]], mode
        u = np.zeros((instance.n, instance.n))
        for a, d in zip(alphas, instance.distances):
            if a == 0:
                continue
            if a < 0 and np.any(d[off_diag] == 0.0):
                raise DomainError("zero distance raised to a negative power")
            with np.errstate(divide="ignore", invalid="ignore"):
                u = u + a * np.log(d)
        np.fill_diagonal(u, -np.inf)
        return u, sum(alphas), kernels.MODE_POWERSUM

    family.validate()
    alpha = snap_alpha(family.alpha)
    if beta is None:
        beta = np.full(instance.L, 1.0 / instance.L)
    dmat = combine_distance(beta, instance.distances)
    if math.isfinite(alpha) and alpha < 0:
        off_diag = ~np.eye(instance.n, dtype=bool)
        if np.any(dmat[off_diag] == 0.0):
            raise DomainError("zero distance raised to a negative power")
    with np.errstate(divide="ignore"):
        logd = np.log(dmat)
    if math.isinf(alpha):
        mode = kernels.MODE_MAXLINK if alpha > 0 else kernels.MODE_MINLINK
        return logd, alpha, mode
    if isinstance(family, M1):
        return logd, alpha, kernels.MODE_MINMAX
    if isinstance(family, M2):
        return alpha * logd, alpha, kernels.MODE_POWERSUM
    raise ValidationError("family", f"unknown family {type(family).__name__}")


def build_tree(instance, family, beta=None):
    """Greedy agglomeration from n singletons; exactly n-1 merges.

    beta weighs the L metrics for M1/M2 (uniform when omitted) and is
    ignored for M3. Ties go to the lexicographically smallest node-id pair.
    """
    u, alpha, mode = _kernel_inputs(instance, family, beta)
    merges, heights = kernels.merge_sequence(np.ascontiguousarray(u), alpha, mode)
    return ClusterTree(n=instance.n,
                       merges=[(int(a), int(b)) for a, b in merges],
                       heights=[float(h) for h in heights])


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------

def _merge_keys(k1, k2):
    return tuple(sorted(k1 + k2))


def _prune_hamming(tree, k, target):
    """Subset DP: max target overlap over k-prunings with a bijective
    block matching; ties toward lexicographically smallest block-min ids."""
    n = tree.n
    kt = len(target)
    kp = max(k, kt)
    if kp > 16:
        raise ValidationError("k", f"hamming pruning supports at most 16 blocks (got {kp})")
    labels = {}
    for b, block in enumerate(target):
        for i in block:
            labels[i] = b
    n_nodes = 2 * n - 1
    full = (1 << kp) - 1
    cnt = np.zeros((n_nodes, kp), dtype=int)
    size = np.zeros(n_nodes, dtype=int)
    min_id = np.zeros(n_nodes, dtype=int)
    for i in range(n):
        cnt[i, labels[i]] = 1
        size[i] = 1
        min_id[i] = i
    for t, (a, b) in enumerate(tree.merges):
        node = n + t
        cnt[node] = cnt[a] + cnt[b]
        size[node] = size[a] + size[b]
        min_id[node] = min(min_id[a], min_id[b])

    # dp[node][S] = (-overlap, key, split) or None; split is the submask
    # assigned to the left child (None = subtree kept as one cluster).
    dp = [[None] * (full + 1) for _ in range(n_nodes)]
    for node in range(n_nodes):
        row = dp[node]
        for j in range(kp):
            row[1 << j] = (-int(cnt[node, j]), (int(min_id[node]),), None)
        if node < n:
            continue
        a, b = tree.merges[node - n]
        da, db = dp[a], dp[b]
        for S in range(1, full + 1):
            pc = S.bit_count()
            if pc < 2 or pc > size[node]:
                continue
            best = None
            s1 = (S - 1) & S
            while s1:
                s2 = S ^ s1
                ea, eb = da[s1], db[s2]
                if ea is not None and eb is not None:
                    cand = (ea[0] + eb[0], _merge_keys(ea[1], eb[1]), s1)
                    if best is None or cand[:2] < best[:2]:
                        best = cand
                s1 = (s1 - 1) & S
            row[S] = best

    root = n_nodes - 1
    if k == kp:
        choice, mask = dp[root][full], full
    else:
        # produced clusters fewer than target blocks: pick the best size-k
        # block subset (unmatched targets pair with padded empty clusters)
        choice, mask = None, None
        for S in range(1, full + 1):
            if S.bit_count() == k and dp[root][S] is not None:
                if choice is None or dp[root][S][:2] < choice[:2]:
                    choice, mask = dp[root][S], S
    if choice is None:
        raise ValidationError("k", f"cannot cut the tree into k={k} clusters")

    blocks = []

    def emit(node, S):
        entry = dp[node][S]
        if entry[2] is None:
            blocks.append(tree.points(node))
        else:
            a, b = tree.merges[node - n]
            emit(a, entry[2])
            emit(b, S ^ entry[2])

    emit(root, mask)
    return sorted(blocks, key=min)


def _prune_metric(tree, k, dmat, objective):
    """Count-indexed DP for the additive (k-median) / max (k-center) objectives."""
    n = tree.n

    def cost_single(pts):
        sub = dmat[np.ix_(pts, pts)]
        per_center = sub.sum(axis=1) if objective == "k-median" else sub.max(axis=1)
        return float(per_center.min())

    combine = (lambda x, y: x + y) if objective == "k-median" else max
    n_nodes = 2 * n - 1
    dp = [dict() for _ in range(n_nodes)]
    for node in range(n_nodes):
        pts = tree.points(node)
        dp[node][1] = (cost_single(pts), (min(pts),), None)
        if node < n:
            continue
        a, b = tree.merges[node - n]
        for ca, ea in dp[a].items():
            for cb, eb in dp[b].items():
                c = ca + cb
                if c > k:
                    continue
                cand = (combine(ea[0], eb[0]), _merge_keys(ea[1], eb[1]), ca)
                cur = dp[node].get(c)
                if cur is None or cand[:2] < cur[:2]:
                    dp[node][c] = cand

    root = n_nodes - 1
    if k not in dp[root]:
        raise ValidationError("k", f"cannot cut the tree into k={k} clusters")
    blocks = []

    def emit(node, c):
        entry = dp[node][c]
        if entry[2] is None:
            blocks.append(tree.points(node))
        else:
            a, b = tree.merges[node - n]
            emit(a, entry[2])
            emit(b, c - entry[2])

    emit(root, k)
    return sorted(blocks, key=min)


def prune_tree(tree, k, objective, instance, beta=None):
    """Best k-partition obtainable by cutting the tree into k subtrees.

    objective: "hamming" (uses instance.target; the pipeline default),
    "k-median", or "k-center" (both read delta_beta, uniform beta when
    omitted). Ties break toward the partition whose sorted block-min ids
    are lexicographically smallest.
    """
    if not (1 <= k <= tree.n):
        raise ValidationError("k", f"need 1 <= k <= n={tree.n} (got {k})")
    name = str(objective).split("(")[0].strip()
    if name == "hamming":
        return _prune_hamming(tree, k, instance.target)
    if name in ("k-median", "k-center"):
        if beta is None:
            beta = np.full(instance.L, 1.0 / instance.L)
        dmat = combine_distance(beta, instance.distances)
        return _prune_metric(tree, k, dmat, name)
    raise ValidationError("objective", f"unknown objective {objective!r}")


# ---------------------------------------------------------------------------
# Hamming loss and the utility pipeline
# ---------------------------------------------------------------------------

def hamming_loss(P, Y):
    """Exact min over block matchings of the misassigned-point fraction.

    Shorter partitions are padded with empty blocks; the minimum runs over
    permutations (enumerated for k <= 8, optimal assignment above). The
    value is a multiple of 1/n.
    """
    P = [frozenset(b) for b in P]
    Y = [frozenset(b) for b in Y]
    ground_p = set().union(*P) if P else set()
    ground_y = set().union(*Y) if Y else set()
    if ground_p != ground_y:
        raise ValidationError("P", "partitions cover different ground sets")
    if sum(len(b) for b in P) != len(ground_p) or sum(len(b) for b in Y) != len(ground_y):
        raise ValidationError("P", "blocks overlap")
    n = len(ground_p)
    if n == 0:
        raise ValidationError("P", "empty partition")
    kp = max(len(P), len(Y))
    P = P + [frozenset()] * (kp - len(P))
    Y = Y + [frozenset()] * (kp - len(Y))
    overlap = [[len(ci & pj) for pj in P] for ci in Y]
    if kp <= 8:
        best = max(sum(overlap[i][sigma[i]] for i in range(kp))
                   for sigma in itertools.permutations(range(kp)))
    else:
        rows, cols = linear_sum_assignment(-np.asarray(overlap))
        best = int(-(-np.asarray(overlap))[rows, cols].sum())
    return (n - best) / n


def clustering_utility(instance, family, beta=None, objective="hamming"):
    """1 - hamming_loss(prune_tree(build_tree(instance, family, beta), k), target)."""
    tree = build_tree(instance, family, beta)
    part = prune_tree(tree, instance.k, objective, instance, beta)
    return 1.0 - hamming_loss(part, instance.target)


def alpha_utility_curve(instance, beta=None, family="M1", objective="hamming"):
    """Vectorized alpha -> clustering utility map for the scalar families.

    Returns a callable accepting a scalar or array of alphas; evaluation
    runs through the compiled kernel grid (hamming objective only).
    alphas beyond +-EXP_SNAP are snapped to exact min/max linkage.
    """
    if objective != "hamming":
        raise ValidationError("objective", "fast curves support the hamming objective only")
    fam_code = {"M1": 1, "M2": 2}.get(family)
    if fam_code is None:
        raise ValidationError("family", f"scalar curve needs M1 or M2 (got {family!r})")
    if beta is None:
        beta = np.full(instance.L, 1.0 / instance.L)
    dmat = combine_distance(beta, instance.distances)
    with np.errstate(divide="ignore"):
        logd = np.ascontiguousarray(np.log(dmat))
    labels = np.empty(instance.n, dtype=np.int32)
    for b, block in enumerate(instance.target):
        for i in block:
            labels[i] = b
    k = len(instance.target)

    def curve(alpha):
        arr = np.atleast_1d(np.asarray(alpha, dtype=float))
        if np.any(arr == 0) or np.any(np.isfinite(arr) & (np.abs(arr) < ALPHA_GUARD)):
            raise ValidationError("alpha", f"|alpha| >= {ALPHA_GUARD} required")
        snapped = np.where(np.isfinite(arr) & (np.abs(arr) > EXP_SNAP),
                           np.copysign(np.inf, arr), arr)
        out = kernels.utility_grid(logd, snapped, fam_code, labels, k)
        return float(out[0]) if np.isscalar(alpha) or np.ndim(alpha) == 0 else out

    return curve


# ---------------------------------------------------------------------------
# boundary analysis for M1
# ---------------------------------------------------------------------------

def boundary_root_m1(d1, d2, d1p, d2p, alo, ahi):
    """Unique root of g(a) = d1^a + d2^a - d1p^a - d2p^a in (alo, ahi), or None.

    g has at most one positive root besides a=0 (generalized Descartes rule
    of signs), and any root is simple, so a sign change over the interval
    pins it; bisection stops at absolute width 1e-10. Multiset equality
    {d1,d2} == {d1p,d2p} makes g identically zero (the tie case) -> None.
    """
    ds = (float(d1), float(d2), float(d1p), float(d2p))
    if any(d <= 0 for d in ds):
        raise ValidationError("d", "distances must be positive")
    if not (0 < alo < ahi):
        raise ValidationError("alo", "need 0 < alo < ahi")
    if sorted(ds[:2]) == sorted(ds[2:]):
        return None
    ln = np.log(ds)

    def sign_g(a):
        # Shift by the largest exponent: sign-exact and overflow-free.
        u = a * ln
        s = np.exp(u - u.max())
        return (s[0] + s[1]) - (s[2] + s[3])

    glo, ghi = sign_g(alo), sign_g(ahi)
    if glo == 0.0 or ghi == 0.0 or (glo > 0) == (ghi > 0):
        return None
    lo, hi = alo, ahi
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        gm = sign_g(mid)
        if gm == 0.0:
            return mid
        if (gm > 0) == (glo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def enumerate_boundaries_m1(instance, beta, alo, ahi):
    """All roots in (alo, ahi) of the pairwise merge-comparison equations.

    Boundary equations compare two value multisets {v_a, v_b} vs {v_c, v_d}
    drawn from the pair distances of delta_beta, so enumerating multiset
    pairs covers every one of the <= n^8 point-tuple equations. Roots are
    sorted and deduplicated within 1e-9; the result is a superset of the
    true discontinuities of alpha -> clustering_utility on the interval.
    """
    if instance.n > ENUM_MAX_N:
        raise ValidationError(
            "n", f"n={instance.n} > {ENUM_MAX_N}: ~{instance.n ** 8:.2e} tuple equations")
    if not (0 < alo < ahi):
        raise ValidationError("alo", "need 0 < alo < ahi")
    if beta is None:
        beta = np.full(instance.L, 1.0 / instance.L)
    dmat = combine_distance(beta, instance.distances)
    iu = np.triu_indices(instance.n, k=1)
    vals = np.unique(dmat[iu])
    vals = vals[vals > 0]
    # Value multisets {v_i, v_j}, i <= j, each appearing exactly once.
    mi, mj = np.triu_indices(len(vals), k=0)
    pair_lo, pair_hi = np.log(vals[mi]), np.log(vals[mj])
    ci, cj = np.triu_indices(len(pair_lo), k=1)
    ln = np.stack([pair_lo[ci], pair_hi[ci], pair_lo[cj], pair_hi[cj]])

    def g_signs(a):
        u = a * ln
        s = np.exp(u - u.max(axis=0, keepdims=True))
        return (s[0] + s[1]) - (s[2] + s[3])

    glo, ghi = g_signs(alo), g_signs(ahi)
    hit = (glo > 0) != (ghi > 0)
    hit &= (glo != 0) & (ghi != 0)
    if not np.any(hit):
        return []
    ln_h = ln[:, hit]
    lo = np.full(ln_h.shape[1], alo)
    hi = np.full(ln_h.shape[1], ahi)
    sign_lo = g_signs(alo)[hit] > 0
    while np.max(hi - lo) > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        u = mid * ln_h
        s = np.exp(u - u.max(axis=0, keepdims=True))
        gm = (s[0] + s[1]) - (s[2] + s[3])
        same = (gm > 0) == sign_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    roots = np.sort(0.5 * (lo + hi))
    # Cluster roots closer than the dedupe tolerance; keep cluster means.
    out = []
    start = 0
    for i in range(1, len(roots) + 1):
        if i == len(roots) or roots[i] - roots[i - 1] > DEDUPE_TOL:
            out.append(float(roots[start:i].mean()))
            start = i
    return out
