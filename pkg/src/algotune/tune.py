"""Batch hyperparameter tuning: grid ERM over instance samples, 1-D
refinement that exploits piecewise-constant utilities, and empirical
uniform-convergence reports.

Utilities are maximized for the clustering and labeling tasks (values in
[0, 1]) and validation losses are minimized for regularized logistic
regression.  All reductions run over arrays in a fixed (grid x instance)
order with numpy's pairwise summation, so results are bit-identical for
any parallelism degree.  Ties between equally good parameters go to the
lexicographically smallest parameter key, for reproducibility.

An argmax over a continuum is not computable in general; the grid, the
refinement loop, and the exact single-exponent mode below are the
searchable stand-ins, and reports label which one produced a result.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .bounds import generalization_gap, pdim_for_family
from .instances import (
    ClusteringInstance,
    LinkageScalarParam,
    LinkageVectorParam,
    LogRegInstance,
    LogRegParam,
    SslInstance,
    SslParam,
    ValidationError,
)
from .linkage import (
    M1,
    M2,
    M3,
    alpha_utility_curve,
    clustering_utility,
    enumerate_boundaries_m1,
)
from .logreg import true_val_loss
from .ssl import NumericalError, ssl_loss

__all__ = [
    "GridSpec",
    "TuneConfig",
    "TuneResult",
    "erm_tune",
    "refine_1d",
    "convergence_report",
    "evaluate_param",
    "default_alpha_grid",
    "default_sigma_grid",
    "simplex_lattice",
]

TASKS = ("clustering-M1", "clustering-M2", "clustering-M3", "ssl", "logreg")
SCALAR_TASKS = ("clustering-M1", "clustering-M2", "ssl", "logreg")

# task -> (instance type, scalar parameter name, structural-family label)
_TASK_INFO = {
    "clustering-M1": (ClusteringInstance, "alpha", "H1"),
    "clustering-M2": (ClusteringInstance, "alpha", "H2"),
    "clustering-M3": (ClusteringInstance, "alpha", "H3"),
    "ssl": (SslInstance, "sigma", "G"),
    "logreg": (LogRegInstance, "lam", None),
}

REFINE_WIDTH = 1e-6


def default_alpha_grid(num_per_sign=50, lo=0.05, hi=20.0, include_limits=True):
    """Sign-symmetric log-spaced exponent grid, optionally with the
    exact min/max linkage limits appended as +-inf."""
    pos = np.geomspace(lo, hi, num_per_sign)
    alphas = np.concatenate([-pos[::-1], pos])
    if include_limits:
        alphas = np.concatenate([[-np.inf], alphas, [np.inf]])
    return alphas


def default_sigma_grid(num=50, lo=0.01, hi=10.0):
    return np.geomspace(lo, hi, num)


def simplex_lattice(L, subdivisions=10):
    """All weight vectors with entries i/subdivisions summing to 1."""
    if L < 1 or subdivisions < 1:
        raise ValidationError("L", "need L >= 1 and subdivisions >= 1")
    out = []
    # stars and bars over the integer compositions of `subdivisions`
    for cuts in combinations(range(subdivisions + L - 1), L - 1):
        parts = []
        prev = -1
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(subdivisions + L - 2 - prev)
        out.append(tuple(p / subdivisions for p in parts))
    return out


@dataclass(frozen=True)
class GridSpec:
    """One axis of a search grid: bounds, resolution, spacing."""

    lo: float
    hi: float
    num: int
    spacing: str = "linear"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValidationError("grid", f"need lo < hi (got [{self.lo}, {self.hi}])")
        if self.num < 1:
            raise ValidationError("grid", f"need num >= 1 (got {self.num})")
        if self.spacing not in ("linear", "log"):
            raise ValidationError("grid", f"spacing must be linear or log (got {self.spacing!r})")
        if self.spacing == "log" and not (self.lo * self.hi > 0):
            raise ValidationError("grid", "log spacing needs bounds of one sign excluding 0")

    def points(self):
        if self.num == 1:
            return np.array([self.lo])
        if self.spacing == "linear":
            return np.linspace(self.lo, self.hi, self.num)
        sign = 1.0 if self.lo > 0 else -1.0
        pts = sign * np.geomspace(abs(self.lo), abs(self.hi), self.num)
        return np.sort(pts)


def _axis_points(spec):
    if isinstance(spec, GridSpec):
        return spec.points()
    pts = np.asarray(list(spec), dtype=float)
    if pts.ndim != 1 or pts.size < 1:
        raise ValidationError("grid", "explicit grid must be a nonempty 1-D sequence")
    return pts


@dataclass(frozen=True)
class TuneConfig:
    """What to tune and how to search.

    grid maps the task's parameter name to a GridSpec or an explicit
    sequence of values ("alpha" for the clustering families, applied
    per-metric for the vector family; "sigma" for labeling; "lam" for
    logistic regression).  budget > 0 adds that many refinement
    evaluations around the best grid point (scalar tasks only).
    exact_m1 replaces grid search for the single-exponent two-point
    family with boundary enumeration, exact over the grid bounds.
    """

    task: str
    grid: dict
    budget: int = 0
    seed: int = 0
    beta: tuple | None = None
    penalty: str = "l2"
    objective: str = "hamming"
    exact_m1: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValidationError("task", f"unknown task {self.task!r}; expected one of {TASKS}")
        pname = _TASK_INFO[self.task][1]
        if set(self.grid) != {pname}:
            raise ValidationError("grid", f"task {self.task} takes exactly the {pname!r} axis")
        if self.budget < 0:
            raise ValidationError("budget", f"need budget >= 0 (got {self.budget})")
        if self.budget > 0 and self.task not in SCALAR_TASKS:
            raise ValidationError("budget", "refinement needs a scalar-parameter task")
        if self.n_jobs < 1:
            raise ValidationError("n_jobs", f"need n_jobs >= 1 (got {self.n_jobs})")
        if self.exact_m1 and self.task != "clustering-M1":
            raise ValidationError("exact_m1", "exact mode exists only for clustering-M1")


@dataclass(frozen=True)
class TuneResult:
    """Grid search outcome: the winning parameter and the full table."""

    task: str
    best_param: object
    train_utility: float
    maximize: bool
    utility_table: tuple  # rows (param, mean, per-instance tuple)
    holdout_utility: float | None = None
    bound_report: object | None = None
    notes: tuple = ()


def _beta_for(instances, beta):
    L = instances[0].L
    if beta is None:
        return tuple([1.0 / L] * L)
    beta = tuple(float(b) for b in beta)
    if len(beta) != L:
        raise ValidationError("beta", f"length {len(beta)} != L={L}")
    return beta


def _check_homogeneous(instances, task):
    cls, _, _ = _TASK_INFO[task]
    if len(instances) == 0:
        raise ValidationError("instances", "need at least one instance")
    shapes = set()
    for i, ins in enumerate(instances):
        if not isinstance(ins, cls):
            raise ValidationError(
                "instances", f"instance {i} is {type(ins).__name__}, task {task} needs {cls.__name__}")
        if task == "logreg":
            shapes.add((ins.m, ins.p, ins.m_val))
        elif task == "ssl":
            shapes.add((len(ins.labeled), len(ins.unlabeled), ins.L))
        else:
            shapes.add((ins.n, ins.L, ins.k))
    if len(shapes) > 1:
        raise ValidationError("instances", f"heterogeneous instance shapes {sorted(shapes)}")


def _materialize(task, grid, beta, L):
    """Grid spec -> validated parameter points, sorted by key."""
    pname = _TASK_INFO[task][1]
    pts = _axis_points(grid[pname])
    params = []
    if task in ("clustering-M1", "clustering-M2"):
        params = [LinkageScalarParam(alpha=float(a), beta=beta).validate() for a in pts]
    elif task == "clustering-M3":
        skipped = 0
        for combo in product(pts, repeat=L):
            try:
                params.append(LinkageVectorParam(alpha=tuple(float(a) for a in combo)).validate())
            except ValidationError:
                skipped += 1  # e.g. exponent vectors summing to ~0
        if not params:
            raise ValidationError("grid", "no valid exponent vectors in the product grid")
    elif task == "ssl":
        params = [SslParam(sigma=float(s), beta=beta).validate() for s in pts]
    else:
        params = [LogRegParam(lam=float(l)).validate() for l in pts]
    params.sort(key=lambda p: p.key())
    return params


def evaluate_param(task, instance, param, objective="hamming", penalty="l2"):
    """One utility/loss evaluation; pure function of its arguments."""
    if task == "clustering-M1":
        return clustering_utility(instance, M1(param.alpha), beta=param.beta, objective=objective)
    if task == "clustering-M2":
        return clustering_utility(instance, M2(param.alpha), beta=param.beta, objective=objective)
    if task == "clustering-M3":
        return clustering_utility(instance, M3(param.alpha), objective=objective)
    if task == "ssl":
        try:
            return 1.0 - ssl_loss(instance, param.sigma, beta=param.beta)
        except NumericalError:
            # bandwidths that starve the graph of weight (singular
            # harmonic system) score as total disagreement
            return 0.0
    if task == "logreg":
        return true_val_loss(instance, param.lam, penalty)
    raise ValidationError("task", f"unknown task {task!r}")


class _Evaluator:
    """Caches utility evaluations by (instance index, parameter key)."""

    def __init__(self, task, instances, objective, penalty):
        self.task = task
        self.instances = instances
        self.objective = objective
        self.penalty = penalty
        self.cache = {}
        self.n_evals = 0

    def __call__(self, i, param):
        key = (i, param.key())
        if key not in self.cache:
            self.cache[key] = evaluate_param(
                self.task, self.instances[i], param,
                objective=self.objective, penalty=self.penalty)
            self.n_evals += 1
        return self.cache[key]

    def row(self, param, n_jobs=1):
        """Per-instance values for one parameter, in instance order."""
        idx = range(len(self.instances))
        if n_jobs == 1:
            vals = [self(i, param) for i in idx]
        else:
            with ThreadPoolExecutor(max_workers=n_jobs) as ex:
                vals = list(ex.map(lambda i: self(i, param), idx))
        return np.asarray(vals, dtype=float)


def _best_index(means, params, maximize):
    target = means.max() if maximize else means.min()
    ties = np.flatnonzero(means == target)
    return min(ties, key=lambda i: params[i].key())


def _table(params, rows):
    return tuple((p, float(np.mean(r)), tuple(float(v) for v in r)) for p, r in zip(params, rows))


def _exact_m1_params(instances, grid, beta):
    """Gap midpoints of the pooled merge-comparison roots: one candidate
    per constancy interval of the mean utility, so the argmax over the
    open gaps is exact (values exactly at a root fall to either side)."""
    spec = grid["alpha"]
    if isinstance(spec, GridSpec):
        lo, hi = spec.lo, spec.hi
    else:
        pts = _axis_points(spec)
        lo, hi = float(pts.min()), float(pts.max())
    if not (0 < lo < hi):
        raise ValidationError("grid", f"exact mode needs 0 < lo < hi (got [{lo}, {hi}])")
    cuts = set()
    for ins in instances:
        cuts.update(enumerate_boundaries_m1(ins, beta, lo, hi))
    edges = np.array(sorted({lo, hi} | cuts))
    mids = 0.5 * (edges[:-1] + edges[1:])
    return [LinkageScalarParam(alpha=float(a), beta=beta).validate() for a in mids]


def erm_tune(instances, config, holdout=None):
    """Evaluate every grid point on every instance and pick the best mean.

    Returns a TuneResult whose utility_table covers every evaluated
    parameter (grid plus any refinement points).  With exact_m1 the
    grid is replaced by one candidate per piecewise-constant gap of the
    pooled boundary roots, which is globally optimal over the bounds.
    """
    _check_homogeneous(instances, config.task)
    maximize = config.task != "logreg"
    beta = None
    L = 1
    if config.task != "logreg":
        beta = _beta_for(instances, config.beta)
        L = instances[0].L

    if config.exact_m1:
        ref = instances[0]
        if ref.L != 1:
            raise ValidationError("exact_m1", f"exact mode needs L=1 (got L={ref.L})")
        params = _exact_m1_params(instances, config.grid, beta)
        notes = ("exact single-exponent mode: boundary enumeration, one candidate per gap",)
    else:
        params = _materialize(config.task, config.grid, beta, L)
        notes = ()

    ev = _Evaluator(config.task, instances, config.objective, config.penalty)
    rows = [ev.row(p, n_jobs=config.n_jobs) for p in params]

    if config.budget > 0:
        params, rows = _refine_around_best(
            ev, params, rows, config.budget, maximize, config, beta)

    means = np.array([np.mean(r) for r in rows])
    best = _best_index(means, params, maximize)

    holdout_utility = None
    if holdout is not None:
        _check_homogeneous(holdout, config.task)
        hev = _Evaluator(config.task, holdout, config.objective, config.penalty)
        holdout_utility = float(np.mean(hev.row(params[best], n_jobs=config.n_jobs)))

    return TuneResult(
        task=config.task,
        best_param=params[best],
        train_utility=float(means[best]),
        maximize=maximize,
        utility_table=_table(params, rows),
        holdout_utility=holdout_utility,
        bound_report=_attach_bound(config.task, instances),
        notes=notes,
    )


def _attach_bound(task, instances):
    family = _TASK_INFO[task][2]
    if family is None:
        return None
    ref = instances[0]
    if task == "ssl":
        return pdim_for_family(family, ref.n, L=1, n_unlabeled=len(ref.unlabeled))
    return pdim_for_family(family, ref.n, L=ref.L)


def _scalar_param_maker(task, beta):
    if task in ("clustering-M1", "clustering-M2"):
        return lambda x: LinkageScalarParam(alpha=float(x), beta=beta).validate()
    if task == "ssl":
        return lambda x: SslParam(sigma=float(x), beta=beta).validate()
    if task == "logreg":
        return lambda x: LogRegParam(lam=float(x)).validate()
    raise ValidationError("task", f"task {task} has no scalar parameter")


def _refine_loop(mean_at, xs, budget, spent):
    """Bisect intervals whose endpoint values differ until they are
    narrower than REFINE_WIDTH or the budget runs out.  Widest interval
    first; ties toward the leftmost.  Returns the sorted sample dict."""
    samples = {x: mean_at(x) for x in xs}
    spent += len(xs)
    while spent < budget:
        pts = sorted(samples)
        gaps = [
            (pts[i + 1] - pts[i], pts[i])
            for i in range(len(pts) - 1)
            if samples[pts[i]] != samples[pts[i + 1]] and pts[i + 1] - pts[i] > REFINE_WIDTH
        ]
        if not gaps:
            break
        width, left = max(gaps, key=lambda g: (g[0], -g[1]))
        mid = left + width / 2.0
        samples[mid] = mean_at(mid)
        spent += 1
    return samples, spent


def _refine_around_best(ev, params, rows, budget, maximize, config, beta):
    """Spend the refinement budget inside the best point's bracketing
    grid interval; all new evaluations join the table."""
    make = _scalar_param_maker(config.task, beta)
    means = np.array([np.mean(r) for r in rows])
    best = _best_index(means, params, maximize)
    xs = [p.key()[0] for p in params]
    lo = xs[best - 1] if best > 0 else xs[best]
    hi = xs[best + 1] if best + 1 < len(xs) else xs[best]
    if not np.isfinite(lo) or not np.isfinite(hi) or lo == hi:
        return params, rows

    known = {p.key()[0]: r for p, r in zip(params, rows)}

    def mean_at(x):
        if x not in known:
            known[x] = ev.row(make(x), n_jobs=config.n_jobs)
        return float(np.mean(known[x]))

    samples, _ = _refine_loop(mean_at, [lo, (lo + hi) / 2.0, hi], budget, spent=0)
    new_xs = sorted(set(xs) | set(samples))
    new_params = [make(x) for x in new_xs]
    new_rows = [known[x] for x in new_xs]
    return new_params, new_rows


def refine_1d(instances, task, lo, hi, budget, beta=None, penalty="l2", objective="hamming"):
    """Adaptive scalar search on [lo, hi] exploiting piecewise-constancy.

    Samples the endpoints and midpoint, then repeatedly bisects the
    widest interval whose endpoint values differ, stopping at `budget`
    total evaluations of the instance-mean or when every differing
    interval is narrower than 1e-6.  A constant utility costs exactly 3
    evaluations.  Returns (sorted sample locations, TuneResult).
    """
    if budget < 3:
        raise ValidationError("budget", f"need budget >= 3 (got {budget})")
    if task not in SCALAR_TASKS:
        raise ValidationError("task", f"refine_1d needs a scalar-parameter task (got {task!r})")
    if not lo < hi:
        raise ValidationError("lo", f"need lo < hi (got [{lo}, {hi}])")
    _check_homogeneous(instances, task)
    maximize = task != "logreg"
    if task != "logreg":
        beta = _beta_for(instances, beta)
    make = _scalar_param_maker(task, beta)
    ev = _Evaluator(task, instances, objective, penalty)

    cache = {}

    def mean_at(x):
        if x not in cache:
            cache[x] = ev.row(make(x))
        return float(np.mean(cache[x]))

    samples, _ = _refine_loop(mean_at, [lo, (lo + hi) / 2.0, hi], budget, spent=0)
    xs = sorted(samples)
    params = [make(x) for x in xs]
    rows = [cache[x] for x in xs]
    means = np.array([samples[x] for x in xs])
    best = _best_index(means, params, maximize)
    result = TuneResult(
        task=task,
        best_param=params[best],
        train_utility=float(means[best]),
        maximize=maximize,
        utility_table=_table(params, rows),
        bound_report=_attach_bound(task, instances),
        notes=("adaptive bisection of value changes; plateaus are runs of >= 2 equal samples",),
    )
    return np.array(xs), result


def _fast_alpha_table(instances, grid, task, beta, objective):
    """Vectorized per-instance utility rows for the scalar linkage
    families; identical values to evaluate_param, computed via the
    kernel grid."""
    family = "M1" if task == "clustering-M1" else "M2"
    cols = []
    for ins in instances:
        curve = alpha_utility_curve(ins, beta=beta, family=family, objective=objective)
        cols.append(curve(grid))
    return np.column_stack(cols)  # shape (grid, instances)


def convergence_report(task, gen_config, N_list, fresh_M, grid,
                       seed=0, delta=0.05, train_instances=None, fresh_instances=None):
    """Sup-gap over the grid between training means and fresh means.

    Draws max(N_list) training instances and fresh_M fresh instances
    (unless both sets are supplied), evaluates the full utility table
    once, and reports per N the sup over grid points of
    |mean over first N - fresh mean| next to the unit-constant
    theoretical gap for the cataloged family at confidence 1 - delta.
    """
    if list(N_list) != sorted(N_list) or len(N_list) == 0:
        raise ValidationError("N_list", f"need a nondecreasing nonempty list (got {N_list})")
    from .instances import gen_clustering, gen_logreg, gen_ssl

    rng = np.random.default_rng(seed)
    if train_instances is None or fresh_instances is None:
        n_train = int(max(N_list))
        seeds = rng.integers(0, 2**63 - 1, size=n_train + int(fresh_M))
        if task.startswith("clustering"):
            gen = lambda s: gen_clustering(seed=int(s), **gen_config)
        elif task == "ssl":
            gen = lambda s: gen_ssl(seed=int(s), **gen_config)
        else:
            gen = lambda s: gen_logreg(seed=int(s), **gen_config)
        train_instances = [gen(s) for s in seeds[:n_train]]
        fresh_instances = [gen(s) for s in seeds[n_train:]]
    if max(N_list) > len(train_instances):
        raise ValidationError("N_list", "max(N_list) exceeds the training sample")

    grid = np.asarray(grid, dtype=float)
    beta = None
    if task != "logreg":
        beta = _beta_for(train_instances, None)
    if task in ("clustering-M1", "clustering-M2"):
        train_tab = _fast_alpha_table(train_instances, grid, task, beta, "hamming")
        fresh_tab = _fast_alpha_table(fresh_instances, grid, task, beta, "hamming")
    else:
        make = _scalar_param_maker(task, beta)
        params = [make(x) for x in grid]
        tr = _Evaluator(task, train_instances, "hamming", "l2")
        fr = _Evaluator(task, fresh_instances, "hamming", "l2")
        train_tab = np.vstack([tr.row(p) for p in params])
        fresh_tab = np.vstack([fr.row(p) for p in params])

    fresh_mean = fresh_tab.mean(axis=1)
    bound = _attach_bound(task, train_instances)
    rows = []
    for N in N_list:
        train_mean = train_tab[:, :int(N)].mean(axis=1)
        sup_gap = float(np.max(np.abs(train_mean - fresh_mean)))
        theory = None
        if bound is not None:
            theory = generalization_gap(bound.pdim_bound, 1.0, int(N), delta)
        rows.append({"N": int(N), "sup_gap": sup_gap, "theory_gap": theory})
    return rows
