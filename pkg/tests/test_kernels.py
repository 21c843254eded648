import itertools
import math

import numpy as np
import pytest
from scipy.cluster.hierarchy import linkage as scipy_linkage
from scipy.spatial.distance import squareform

from algotune import kernels
from algotune.kernels import pk

try:
    cython_backend = kernels.get_backend("cython")
except ImportError:
    cython_backend = None
py_backend = kernels.get_backend("python")

needs_ext = pytest.mark.skipif(cython_backend is None,
                               reason="compiled extension not built")


def rand_logd(rng, n):
    d = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    d[iu] = rng.uniform(0.05, 1.0, size=len(iu[0]))
    d = d + d.T
    with np.errstate(divide="ignore"):
        logd = np.log(d)
    return d, logd


def kernel_args(alpha, logd):
    """Same (u, alpha, mode) mapping the tree builder uses, for one family."""
    if math.isinf(alpha):
        mode = pk.MODE_MAXLINK if alpha > 0 else pk.MODE_MINLINK
        return logd, alpha, mode
    return logd, alpha, pk.MODE_MINMAX


@needs_ext
def test_backend_is_compiled():
    assert kernels.BACKEND == "cython"
    assert cython_backend is not py_backend


ALPHAS = [-math.inf, -8.0, -1.0, 0.5, 1.0, 3.0, 17.0, math.inf]


@needs_ext
@pytest.mark.parametrize("alpha", ALPHAS)
def test_backends_bit_identical_minmax(alpha):
    rng = np.random.default_rng(0)
    for trial in range(6):
        n = int(rng.integers(3, 12))
        _, logd = rand_logd(rng, n)
        u, a, mode = kernel_args(alpha, logd)
        mc, hc = cython_backend.merge_sequence(u, a, mode)
        mp, hp = py_backend.merge_sequence(u, a, mode)
        assert np.array_equal(mc, mp)
        # bit-exact: both sides run the same libm call sequence
        assert np.array_equal(hc, hp)


@needs_ext
@pytest.mark.parametrize("alpha", [a for a in ALPHAS if math.isfinite(a)])
def test_backends_bit_identical_powersum(alpha):
    rng = np.random.default_rng(1)
    for trial in range(6):
        n = int(rng.integers(3, 12))
        _, logd = rand_logd(rng, n)
        mc, hc = cython_backend.merge_sequence(alpha * logd, alpha, pk.MODE_POWERSUM)
        mp, hp = py_backend.merge_sequence(alpha * logd, alpha, pk.MODE_POWERSUM)
        assert np.array_equal(mc, mp)
        assert np.array_equal(hc, hp)


@needs_ext
def test_backends_bit_identical_grid():
    rng = np.random.default_rng(2)
    n, k = 10, 3
    _, logd = rand_logd(rng, n)
    labels = rng.integers(0, k, size=n).astype(np.int32)
    labels[:k] = np.arange(k)
    alphas = np.array([-math.inf, -5.0, -1.0, 0.5, 2.0, 9.0, math.inf])
    for fam in (1, 2):
        gc = cython_backend.utility_grid(logd, alphas, fam, labels, k)
        gp = py_backend.utility_grid(logd, alphas, fam, labels, k)
        assert np.array_equal(gc, gp)


def test_tie_rule_lexicographic():
    # all pairwise distances equal: merges must follow smallest (lo, hi) ids
    n = 4
    d = np.ones((n, n)) - np.eye(n)
    with np.errstate(divide="ignore"):
        logd = np.log(d)
    for mode in (pk.MODE_MINMAX, pk.MODE_MAXLINK, pk.MODE_MINLINK):
        merges, heights = kernels.merge_sequence(logd, 2.0, mode)
        assert [tuple(m) for m in merges] == [(0, 1), (2, 3), (4, 5)]
    merges, _ = kernels.merge_sequence(2.0 * logd, 2.0, pk.MODE_POWERSUM)
    assert [tuple(m) for m in merges] == [(0, 1), (2, 3), (4, 5)]


def test_min_max_linkage_match_scipy():
    rng = np.random.default_rng(3)
    for trial in range(8):
        n = int(rng.integers(4, 16))
        d, logd = rand_logd(rng, n)
        for alpha, method in ((math.inf, "complete"), (-math.inf, "single")):
            u, a, mode = kernel_args(alpha, logd)
            _, heights = kernels.merge_sequence(u, a, mode)
            ref = scipy_linkage(squareform(d), method=method)[:, 2]
            assert np.allclose(np.sort(heights), np.sort(ref), rtol=1e-12)


def test_average_linkage_matches_scipy():
    # power mean at alpha=1 is plain average linkage
    rng = np.random.default_rng(4)
    for trial in range(8):
        n = int(rng.integers(4, 16))
        d, logd = rand_logd(rng, n)
        _, heights = kernels.merge_sequence(1.0 * logd, 1.0, pk.MODE_POWERSUM)
        ref = scipy_linkage(squareform(d), method="average")[:, 2]
        assert np.allclose(np.sort(heights), np.sort(ref), rtol=1e-10)


def enumerate_prunings(merges, n, node, k):
    """All ways to split the subtree at `node` into k cluster point-sets."""
    if k == 1:
        pts = []
        stack = [node]
        while stack:
            v = stack.pop()
            if v < n:
                pts.append(v)
            else:
                stack.extend(merges[v - n])
        yield [tuple(sorted(pts))]
        return
    if node < n:
        return
    a, b = merges[node - n]
    for ka in range(1, k):
        for pa in enumerate_prunings(merges, n, a, ka):
            for pb in enumerate_prunings(merges, n, b, k - ka):
                yield pa + pb


def best_overlap_bruteforce(merges, n, labels, k):
    kt = int(labels.max()) + 1
    kp = max(k, kt)
    tgt = [set(np.flatnonzero(labels == j)) for j in range(kt)] + [set()] * (kp - kt)
    best = -1
    for parts in enumerate_prunings(merges, n, 2 * n - 2, k):
        padded = [set(b) for b in parts] + [set()] * (kp - k)
        v = max(sum(len(tgt[i] & padded[s[i]]) for i in range(kp))
                for s in itertools.permutations(range(kp)))
        best = max(best, v)
    return best


def test_prune_value_bruteforce():
    rng = np.random.default_rng(5)
    for trial in range(10):
        n = int(rng.integers(4, 9))
        k = int(rng.integers(2, 4))
        if k > n:
            continue
        _, logd = rand_logd(rng, n)
        labels = rng.integers(0, k, size=n).astype(np.int32)
        labels[:k] = np.arange(k)
        merges, _ = kernels.merge_sequence(logd, 2.0, pk.MODE_MINMAX)
        want = best_overlap_bruteforce([tuple(m) for m in merges], n, labels, k)
        assert py_backend.hamming_prune_value(merges, labels, k) == want
        if cython_backend is not None:
            assert cython_backend.hamming_prune_value(merges, labels, k) == want


def test_grid_matches_single_calls():
    rng = np.random.default_rng(6)
    n, k = 9, 3
    _, logd = rand_logd(rng, n)
    labels = rng.integers(0, k, size=n).astype(np.int32)
    labels[:k] = np.arange(k)
    alphas = np.array([-4.0, -1.0, 1.0, 2.0, 6.0])
    grid = kernels.utility_grid(logd, alphas, 2, labels, k)
    for a, util in zip(alphas, grid):
        merges, _ = kernels.merge_sequence(a * logd, a, pk.MODE_POWERSUM)
        v = kernels.hamming_prune_value(merges, labels, k)
        assert util == v / n
