"""End-to-end acceptance checks exercising every module of the package.

Each criterion is a self-contained experiment with a single headline
measurement, a fixed threshold, and (where stated) a wall-clock budget.
``run_acceptance_suite`` executes any subset, never aborts on a failing
or crashing criterion, and is reproducible given its seed.

Where a criterion bundles several tolerances (e.g. the harmonic-solver
row checks a maximum principle, a residual, and a hand example), the
headline measurement is the worst deviation divided by its tolerance,
so the threshold is 1.0 and every sub-check binds.
"""

import math
import time
from dataclasses import dataclass
from decimal import Decimal, getcontext

import numpy as np

from . import __version__
from .bounds import family_params, pdim_pfaffian_gj, pdim_piecewise
from .instances import (
    LogRegInstance,
    SslInstance,
    gen_clustering,
    gen_logreg,
    gen_ssl,
)
from .linkage import (
    M2,
    alpha_utility_curve,
    boundary_root_m1,
    enumerate_boundaries_m1,
    merge_distance,
)
from .logreg import PathSegment, RegPath, approx_path, solve_rlr
from .online import estimate_dispersion, hedge_run, online_logreg_run
from .ssl import build_rbf_graph, harmonic_solve
from .tune import convergence_report


@dataclass(frozen=True)
class CriterionResult:
    """One acceptance-report row."""

    name: str
    measured: float
    threshold: float
    passed: bool
    seconds: float
    detail: str = ""

    def row(self):
        return {
            "name": self.name,
            "measured": repr(float(self.measured)),
            "threshold": repr(float(self.threshold)),
            "passed": int(self.passed),
            "seconds": f"{self.seconds:.3f}",
            "detail": self.detail,
        }

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        out = (f"{tag}  {self.name}: measured {self.measured:.6g} "
               f"vs threshold {self.threshold:.6g}  [{self.seconds:.1f}s]")
        if self.detail:
            out += f"  ({self.detail})"
        return out


# per-criterion wall-clock budgets in seconds, where stated
TIME_LIMITS = {
    "piecewise-constant-gaps": 60.0,
    "boundary-root-uniqueness": 10.0,
    "path-accuracy-quadratic": 120.0,
    "bound-formulas-exact": 5.0,
}


# ---------------------------------------------------------------------------
# criterion bodies
# ---------------------------------------------------------------------------

def _c1_piecewise_gaps(seed, path_builder):
    """Utility is exactly constant between consecutive enumerated roots."""
    rng = np.random.default_rng([seed, 1])
    bad_gaps = 0
    total_gaps = 0
    fracs = np.arange(1, 6) / 6.0
    for s in rng.integers(0, 2**63 - 1, size=20):
        ins = gen_clustering(seed=int(s), n=6, L=1, k=2)
        roots = enumerate_boundaries_m1(ins, (1.0,), 0.5, 4.0)
        edges = np.concatenate(([0.5], roots, [4.0]))
        lo, hi = edges[:-1], edges[1:]
        pts = lo[:, None] + (hi - lo)[:, None] * fracs[None, :]
        vals = alpha_utility_curve(ins)(pts.ravel()).reshape(len(lo), 5)
        bad_gaps += int(np.count_nonzero((vals != vals[:, :1]).any(axis=1)))
        total_gaps += len(lo)
    return bad_gaps, 0.0, bad_gaps == 0, f"{total_gaps} gaps, 5 points each"


def _c2_root_uniqueness(seed, path_builder):
    """Dense sign scan sees at most one crossing; the root finder nails it."""
    rng = np.random.default_rng([seed, 2])
    grid = 32.0 * np.arange(1, 10001) / 10001.0
    worst = 0.0
    multi = 0
    missed = 0
    n_roots = 0
    for _ in range(1000):
        d = rng.uniform(0.1, 10.0, size=4)
        g = d[0] ** grid + d[1] ** grid - d[2] ** grid - d[3] ** grid
        s = np.sign(g)
        s = s[s != 0]
        flips = np.flatnonzero(np.diff(s) != 0)
        if len(flips) > 1:
            multi += 1
            continue
        if len(flips) == 0:
            continue
        n_roots += 1
        i = int(np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0])
        lo, hi = grid[i], grid[i + 1]

        def gfun(a):
            return d[0] ** a + d[1] ** a - d[2] ** a - d[3] ** a

        glo = gfun(lo)
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            gm = gfun(mid)
            if gm == 0.0:
                lo = hi = mid
            elif (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid
        oracle = 0.5 * (lo + hi)
        found = boundary_root_m1(d[0], d[1], d[2], d[3], 1e-9, 32.0)
        if found is None:
            missed += 1
            continue
        worst = max(worst, abs(found - oracle))
    ok = multi == 0 and missed == 0 and worst <= 1e-8
    return worst, 1e-8, ok, (f"{n_roots} roots, {multi} multi-crossing, "
                             f"{missed} missed")


def _c3_linkage_limits(seed, path_builder):
    """Power-mean linkage at exponent +-64 sits within 5% of max/min."""
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(100):
        na, nb = rng.integers(1, 4, size=2)
        n = int(na + nb)
        delta = rng.uniform(0.1, 5.0, size=(n, n))
        delta = 0.5 * (delta + delta.T)
        np.fill_diagonal(delta, 0.0)
        A, B = list(range(na)), list(range(na, n))
        cross = delta[np.ix_(A, B)]
        hi = merge_distance(M2(64.0), A, B, delta)
        lo = merge_distance(M2(-64.0), A, B, delta)
        worst = max(worst,
                    abs(hi - cross.max()) / cross.max(),
                    abs(lo - cross.min()) / cross.min())
    return worst, 0.05, worst <= 0.05, "100 pairs, |A||B| <= 9"


def _c4_harmonic(seed, path_builder):
    rng = np.random.default_rng([seed, 4])
    mp_worst = 0.0
    res_worst = 0.0
    for s in rng.integers(0, 2**63 - 1, size=50):
        r2 = np.random.default_rng(int(s))
        nl = int(r2.integers(2, 21))
        nu = int(r2.integers(10, 181 - nl))
        ins = gen_ssl(seed=int(s), n_labeled=nl, n_unlabeled=nu, L=1)
        sigma = float(r2.uniform(0.5, 2.0))
        graph = build_rbf_graph(ins, sigma)
        f_L = np.array([y for _, y in ins.labeled], dtype=float)
        f_U = harmonic_solve(graph, f_L)
        mp_worst = max(mp_worst,
                       float(np.max(f_U) - np.max(f_L)),
                       float(np.min(f_L) - np.min(f_U)))
        W = graph.W
        nl = graph.n_labeled
        A = np.diag(W[nl:, nl:].sum(axis=1) + W[nl:, :nl].sum(axis=1)) - W[nl:, nl:]
        b = W[nl:, :nl] @ f_L
        res = np.linalg.norm(A @ f_U - b) / max(np.linalg.norm(b), 1e-300)
        res_worst = max(res_worst, float(res))

    # one labeled node with label 1: the harmonic scores are exactly 1
    dm = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])
    hand = SslInstance(labeled=[(0, 1)], unlabeled=[1, 2], distances=[dm],
                       eval_labels=[1, 1], R=2.0)
    f = harmonic_solve(build_rbf_graph(hand, 1.0), np.array([1.0]))
    hand_err = float(np.max(np.abs(f - 1.0)))

    measured = max(mp_worst / 1e-10, res_worst / 1e-8, hand_err / 1e-12)
    detail = (f"max-principle {mp_worst:.2e}/1e-10, residual {res_worst:.2e}/1e-8, "
              f"hand {hand_err:.2e}/1e-12")
    return measured, 1.0, measured <= 1.0, detail


def _c5_path_accuracy(seed, path_builder):
    """log-log slope of the dense-grid path error over eps is ~2."""
    base = gen_logreg(seed=0, m=50, p=5, m_val=30, signal=4.0)
    # widen the loss curvature so no l1 active-set change lands in the window
    ins = LogRegInstance(X=base.X * 6.0, y=base.y,
                         X_val=base.X_val * 6.0, y_val=base.y_val,
                         meta=dict(base.meta))
    eps_list = (0.2, 0.1, 0.05)
    lams = np.linspace(0.1, 1.1, 101)
    measured = 0.0
    parts = []
    for penalty in ("l2", "l1"):
        exact = [solve_rlr(ins.X, ins.y, l, penalty) for l in lams]
        errs = []
        for eps in eps_list:
            path = path_builder(ins, eps, 0.1, 1.1, penalty)
            e = max(float(np.max(np.abs(path.beta_at(l) - bx)))
                    for l, bx in zip(lams, exact))
            errs.append(e)
        slope = float(np.polyfit(np.log(eps_list), np.log(errs), 1)[0])
        ratio = errs[2] / errs[1]
        measured = max(measured, abs(slope - 2.0) / 0.5, abs(ratio - 0.3) / 0.15)
        parts.append(f"{penalty}: slope {slope:.3f}, E(.05)/E(.1) {ratio:.3f}")
    return measured, 1.0, measured <= 1.0, "; ".join(parts)


def _c6_convergence(seed, path_builder):
    """Sup-gap shrinks like 1/sqrt(N): quadrupling N halves it, roughly."""
    grid = np.linspace(0.5, 4.0, 100)
    in_window = 0
    ratios = []
    for rep in range(10):
        rows = convergence_report("clustering-M1", {"n": 6, "L": 1, "k": 2},
                                  [50, 200, 800], 1000, grid,
                                  seed=[seed, 6, rep])
        g = [r["sup_gap"] for r in rows]
        r1, r2 = g[1] / g[0], g[2] / g[1]
        ratio = math.sqrt(r1 * r2)
        ratios.append(ratio)
        if 0.35 <= ratio <= 0.8:
            in_window += 1
    detail = "per-replicate geo-mean ratios " + \
        " ".join(f"{r:.2f}" for r in ratios)
    return float(in_window), 8.0, in_window >= 8, detail


def _c7_hedge(seed, path_builder):
    rng = np.random.default_rng([seed, 7])
    grid = np.linspace(0.5, 4.0, 200)
    finals = []
    rates_250 = []
    rates_2000 = []
    for s in rng.integers(0, 2**63 - 1, size=10):
        r2 = np.random.default_rng(int(s))
        stream = [gen_clustering(seed=int(t), n=6, L=1, k=2)
                  for t in r2.integers(0, 2**63 - 1, size=2000)]
        run = hedge_run(stream, "clustering-M1", grid, seed=int(s))
        finals.append(run.regret_trace[-1])
        rates_250.append(run.regret_trace[249] / 250.0)
        rates_2000.append(run.regret_trace[1999] / 2000.0)
    bound = 2.0 * math.sqrt(2000.0 * math.log(200.0))
    mean_regret = float(np.mean(finals))
    halved = float(np.mean(rates_2000)) < 0.5 * float(np.mean(rates_250))
    ok = mean_regret <= bound and halved
    detail = (f"rate@250 {np.mean(rates_250):.4f}, "
              f"rate@2000 {np.mean(rates_2000):.4f}, halved={halved}")
    return mean_regret, bound, ok, detail


def _c8_online_logreg(seed, path_builder):
    rng = np.random.default_rng([seed, 8])
    finals = []
    audits_ok = 0
    for s in rng.integers(0, 2**63 - 1, size=10):
        r2 = np.random.default_rng(int(s))
        stream = [gen_logreg(seed=int(t), m=50, p=5, m_val=30)
                  for t in r2.integers(0, 2**63 - 1, size=500)]
        run = online_logreg_run(stream, 0.1, 1.1, T=500, seed=int(s))
        finals.append(run.regret_trace[-1])
        if run.audit["gap_within_quadratic"]:
            audits_ok += 1
    bound = 5.0 * math.sqrt(500.0 * math.log(1.0 * 500.0))
    mean_regret = float(np.mean(finals))
    ok = mean_regret <= bound and audits_ok == 10
    return mean_regret, bound, ok, f"{audits_ok}/10 audits within C*eps^2"


def _c9_dispersion(seed, path_builder):
    rng = np.random.default_rng([seed, 9])
    curves = [alpha_utility_curve(gen_clustering(seed=int(s), n=6, L=1, k=2))
              for s in rng.integers(0, 2**63 - 1, size=500)]
    rep = estimate_dispersion(curves, (0.01, 0.02, 0.04), 0.5, 4.0)
    measured = max(rep.ratios) / min(rep.ratios) if min(rep.ratios) > 0 \
        else float("inf")

    def jump(a):
        return (np.asarray(a, dtype=float) >= 1.7).astype(float)

    control = estimate_dispersion([jump] * 500, (0.01, 0.02, 0.04), 0.5, 4.0)
    control_ok = control.max_counts == (500, 500, 500)
    ok = measured < 3.0 and control_ok
    detail = (f"ratios {['%.3f' % r for r in rep.ratios]}, "
              f"fixed-jump counts {control.max_counts}")
    return measured, 3.0, ok, detail


def _dlog2(x):
    return Decimal(x).ln() / Decimal(2).ln()


def _gj_decimal(d, q, M, delta, K):
    """The same bound evaluated in 60-digit decimal arithmetic."""
    total = Decimal(d) ** 2 * Decimal(q) ** 2 + Decimal(16 * d)
    if d * q > 0:
        total += 2 * d * q * _dlog2(delta + M) + 4 * d * q * _dlog2(d)
    if d > 0:
        total += 2 * d * _dlog2(delta * K)
    return total


def _c10_bounds(seed, path_builder):
    getcontext().prec = 60
    exact_ok = (pdim_pfaffian_gj(1, 0, 0, 1, 2) == 18.0
                and pdim_pfaffian_gj(1, 0, 0, 1, 1) == 16.0)
    tuple_ok = family_params("H1", 3, 1).as_tuple() == (4, 6561, 27, 2, 1, 2)

    rng = np.random.default_rng([seed, 10])
    idents = 0
    worst = 0.0
    for i in range(10**4):
        d = int(rng.integers(0, 9))
        q = int(rng.integers(0, 9))
        M = int(rng.integers(0, 51))
        delta = int(rng.integers(1, 51))
        k_f = int(rng.integers(0, 101))
        k_g = int(rng.integers(1, 101))
        v = pdim_piecewise(d, q, M, delta, k_f, k_g)
        if v == pdim_pfaffian_gj(d, q, M, delta, k_f + k_g):
            idents += 1
        if i % 10 == 0:
            ref = _gj_decimal(d, q, M, delta, k_f + k_g)
            if ref > 0:
                worst = max(worst, abs(Decimal(v) - ref) / ref)
    worst = float(max(worst, abs(Decimal(pdim_pfaffian_gj(1, 0, 0, 1, 2))
                                 - _gj_decimal(1, 0, 0, 1, 2)) / 18))
    ok = exact_ok and tuple_ok and idents == 10**4 and worst <= 1e-9
    detail = (f"frozen={exact_ok}, H1-tuple={tuple_ok}, "
              f"identity {idents}/10000, decimal-checked 1001")
    return worst, 1e-9, ok, detail


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------

CRITERIA = (
    ("piecewise-constant-gaps", _c1_piecewise_gaps),
    ("boundary-root-uniqueness", _c2_root_uniqueness),
    ("linkage-power-mean-limits", _c3_linkage_limits),
    ("harmonic-solver", _c4_harmonic),
    ("path-accuracy-quadratic", _c5_path_accuracy),
    ("uniform-convergence-rate", _c6_convergence),
    ("hedge-regret", _c7_hedge),
    ("online-logreg-regret", _c8_online_logreg),
    ("dispersion-scaling", _c9_dispersion),
    ("bound-formulas-exact", _c10_bounds),
)

CRITERION_NAMES = tuple(name for name, _ in CRITERIA)


def mis_anchored_path(instance, eps, lam_min, lam_max, penalty):
    """Deliberately broken path builder for harness self-tests.

    Builds a correct path, then re-anchors segment t to claim
    [lam_min + 2*t*eps, lam_min + 2*(t+1)*eps): lookups read coefficients
    from the wrong segment, so the error no longer shrinks with eps and
    the path-accuracy criterion must fail.
    """
    path = approx_path(instance, eps, lam_min, lam_max, penalty)
    segs = [PathSegment(lam_lo=lam_min + 2.0 * (s.lam_lo - lam_min),
                        lam_hi=lam_min + 2.0 * (s.lam_hi - lam_min),
                        a=s.a, b=s.b, active_set=s.active_set)
            for s in path.segments]
    return RegPath(segments=segs, eps=path.eps, penalty=path.penalty,
                   lam_min=path.lam_min, lam_max=path.lam_max,
                   meta=dict(path.meta))


def run_acceptance_suite(seed=0, criteria=None, path_builder=None,
                         progress=None):
    """Run the named criteria (all by default) and return their rows.

    A crashing criterion is reported as failed with the exception in the
    detail column; the remaining criteria still run. ``path_builder``
    substitutes the approximate-path constructor inside the path-accuracy
    criterion (see ``mis_anchored_path``).
    """
    if path_builder is None:
        path_builder = approx_path
    if criteria is None:
        selected = CRITERIA
    else:
        wanted = set()
        for c in criteria:
            if isinstance(c, int):
                if not 1 <= c <= len(CRITERIA):
                    raise ValueError(f"criterion index {c} out of range")
                wanted.add(CRITERIA[c - 1][0])
            elif c in CRITERION_NAMES:
                wanted.add(c)
            else:
                raise ValueError(f"unknown criterion {c!r}")
        selected = tuple(c for c in CRITERIA if c[0] in wanted)

    results = []
    for name, fn in selected:
        t0 = time.perf_counter()
        try:
            measured, threshold, ok, detail = fn(seed, path_builder)
        except Exception as exc:
            measured, threshold, ok = float("nan"), float("nan"), False
            detail = f"{type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - t0
        limit = TIME_LIMITS.get(name)
        if limit is not None and elapsed >= limit:
            ok = False
            detail += f"; exceeded {limit:.0f}s budget"
        res = CriterionResult(name=name, measured=float(measured),
                              threshold=float(threshold), passed=bool(ok),
                              seconds=elapsed, detail=detail)
        results.append(res)
        if progress is not None:
            progress(res)
    return results


def report_rows(results):
    return [r.row() for r in results]
