"""Compare the compiled kernel backend against the pure-Python mirror.

Times the two hot entry points on representative workloads, verifies the
outputs are bit-identical (the backends promise the same arithmetic in
the same order), and prints a speedup table.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import sys
import time

import numpy as np

from algotune.instances import gen_clustering
from algotune.kernels import BACKEND, MODE_MINMAX, MODE_POWERSUM, get_backend


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _labels_and_logd(seed, n, k):
    ins = gen_clustering(seed=seed, n=n, L=1, k=k)
    with np.errstate(divide="ignore"):
        logd = np.ascontiguousarray(np.log(ins.distances[0]))
    labels = np.empty(n, dtype=np.int32)
    for b, block in enumerate(ins.target):
        for i in block:
            labels[i] = b
    return logd, labels


def workloads():
    rng = np.random.default_rng(7)
    for n in (30, 80, 150):
        d = rng.uniform(0.1, 3.0, size=(n, n))
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        logd = np.log(d, where=d > 0, out=np.full_like(d, -np.inf))
        yield (f"merge_sequence n={n} minmax",
               lambda b, u=d: b.merge_sequence(u, 1.7, MODE_MINMAX))
        yield (f"merge_sequence n={n} powersum",
               lambda b, u=logd: b.merge_sequence(u, 1.7, MODE_POWERSUM))

    for n, g in ((6, 2048), (12, 512)):
        logd, labels = _labels_and_logd(0, n, 2)
        alphas = np.linspace(0.5, 4.0, g)
        yield (f"utility_grid n={n} G={g}",
               lambda b, u=logd, a=alphas, l=labels:
               b.utility_grid(u, a, 1, l, 2))


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats per workload (best-of)")
    args = ap.parse_args(argv)

    try:
        ck = get_backend("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    pk = get_backend("python")
    print(f"active backend at import: {BACKEND}")
    print(f"{'workload':34} {'python':>10} {'cython':>10} "
          f"{'speedup':>8}  match")

    mismatched = False
    for name, call in workloads():
        t_py, out_py = _time(lambda: call(pk), args.repeats)
        t_ck, out_ck = _time(lambda: call(ck), args.repeats)
        ok = same(out_py, out_ck)
        mismatched |= not ok
        print(f"{name:34} {t_py * 1e3:9.2f}ms {t_ck * 1e3:9.2f}ms "
              f"{t_py / t_ck:7.1f}x  {'yes' if ok else 'NO'}")

    if mismatched:
        print("FAIL: backends disagree", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
