"""Online hyperparameter tuning with full-information feedback, regret
accounting, and empirical dispersion estimation.

The forecaster is the standard exponentially-weighted scheme: every
round it samples a grid point from the current weight distribution,
then observes the utility (or loss) of every grid point and reweights.
Regret is measured against the single best-in-hindsight grid point.
Expected-regret statements in reports are means over seeds; single runs
are random but deterministic given their seed.

Dispersion is estimated from located discontinuities of the per-round
loss curves: pool the jump locations over rounds, slide a width-eps
window, and report the max count and the count/(eps*T) ratio per eps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .instances import LogRegParam, ValidationError
from .linkage import alpha_utility_curve
from .logreg import online_surrogate, true_val_loss
from .tune import SCALAR_TASKS, TASKS, _beta_for, _scalar_param_maker, evaluate_param

__all__ = [
    "OnlineRun",
    "DispersionReport",
    "hedge_run",
    "online_logreg_run",
    "locate_discontinuities",
    "estimate_dispersion",
    "H_LOSS_DEFAULT",
]

H_LOSS_DEFAULT = 4.0  # loss clip for the unbounded logistic task
JUMP_TOL = 1e-8       # bisection width for discontinuity localization
AUDIT_ROUNDS = 32     # true-loss oracle budget per online logreg run
AUDIT_LAMBDAS = 21


@dataclass(frozen=True)
class OnlineRun:
    """One forecaster trajectory and its regret accounting."""

    task: str
    T: int
    params: tuple            # the grid, in play order
    maximize: bool
    choice_indices: tuple    # grid index sampled each round
    chosen_values: np.ndarray
    grid_values: np.ndarray  # shape (T, |grid|): every round, every point
    regret_trace: np.ndarray
    eta: float
    seed: int
    H: float
    clip_count: int = 0
    audit: dict | None = None

    @property
    def choices(self):
        return tuple(self.params[i] for i in self.choice_indices)

    @property
    def regret(self):
        return float(self.regret_trace[-1])


def _round_values(task, instance, params, beta, objective, penalty):
    """Utilities/losses of every grid point on one instance."""
    if task in ("clustering-M1", "clustering-M2") and objective == "hamming":
        family = "M1" if task == "clustering-M1" else "M2"
        curve = alpha_utility_curve(instance, beta=beta, family=family)
        return np.asarray(curve(np.array([p.alpha for p in params])), dtype=float)
    return np.array(
        [evaluate_param(task, instance, p, objective=objective, penalty=penalty)
         for p in params], dtype=float)


def _regret_trace(grid_values, choice_indices, maximize):
    """Cumulative gap to the best-in-hindsight grid point after each round."""
    cum = np.cumsum(grid_values, axis=0)
    chosen = np.cumsum(grid_values[np.arange(len(choice_indices)), choice_indices])
    if maximize:
        return cum.max(axis=1) - chosen
    return chosen - cum.min(axis=1)


def _play_hedge(values_of_round, T, G, eta, H, rng, maximize):
    """Run the weight loop; values_of_round(t) yields the round's vector."""
    weights = np.full(G, 1.0 / G)
    grid_values = np.empty((T, G))
    choice_indices = np.empty(T, dtype=int)
    for t in range(T):
        choice_indices[t] = rng.choice(G, p=weights)
        vals = values_of_round(t)
        grid_values[t] = vals
        signed = vals if maximize else -vals
        weights = weights * np.exp(eta * signed / H)
        weights /= weights.sum()
    return grid_values, choice_indices


def hedge_run(instance_stream, task, grid, eta=None, seed=0, beta=None,
              objective="hamming", penalty="l2", H=None):
    """Exponentially-weighted forecaster over a fixed parameter grid.

    instance_stream is the round sequence (one instance per round); the
    grid may be parameter points or raw scalars for the scalar tasks.
    Utilities are bounded in [0, H] (H=1 for clustering/ssl); logistic
    losses are clipped at H (default 4.0) with clips counted in
    clip_count.  eta defaults to sqrt(8 ln|grid| / T); eta=0 plays
    uniformly forever.
    """
    if task not in TASKS:
        raise ValidationError("task", f"unknown task {task!r}; expected one of {TASKS}")
    instances = list(instance_stream)
    T = len(instances)
    if T < 1:
        raise ValidationError("instance_stream", "need at least one round")
    if task != "logreg":
        beta = _beta_for(instances, beta)
    params = list(grid)
    if params and not hasattr(params[0], "key"):
        if task not in SCALAR_TASKS:
            raise ValidationError("grid", f"task {task} needs explicit parameter points")
        make = _scalar_param_maker(task, beta)
        params = [make(x) for x in params]
    if not params:
        raise ValidationError("grid", "need a nonempty grid")
    G = len(params)
    maximize = task != "logreg"
    if H is None:
        H = 1.0 if maximize else H_LOSS_DEFAULT
    if not H > 0:
        raise ValidationError("H", f"need H > 0 (got {H})")
    if eta is None:
        eta = float(np.sqrt(8.0 * np.log(G) / T))
    if eta < 0:
        raise ValidationError("eta", f"need eta >= 0 (got {eta})")

    rng = np.random.default_rng(seed)
    clip_count = 0

    def values_of_round(t):
        nonlocal clip_count
        vals = _round_values(task, instances[t], params, beta, objective, penalty)
        if not maximize:
            over = vals > H
            clip_count += int(np.count_nonzero(over))
            vals = np.minimum(vals, H)
        return vals

    grid_values, choice_indices = _play_hedge(
        values_of_round, T, G, eta, H, rng, maximize)
    trace = _regret_trace(grid_values, choice_indices, maximize)
    return OnlineRun(
        task=task, T=T, params=tuple(params), maximize=maximize,
        choice_indices=tuple(int(i) for i in choice_indices),
        chosen_values=grid_values[np.arange(T), choice_indices],
        grid_values=grid_values, regret_trace=trace,
        eta=float(eta), seed=seed, H=float(H), clip_count=clip_count)


def online_logreg_run(instance_stream, lam_min, lam_max, T=None, seed=0,
                      penalty="l2", eta=None, coarse_eps=0.2):
    """Online regularization tuning against per-round surrogate paths.

    Each round t draws a fresh surrogate of that round's validation-loss
    curve (one random knot per eps-interval, eps = T^(-1/4)) and plays
    the exponentially-weighted forecaster on a lambda grid of spacing
    r = T^(-3/4).  Regret is accounted against the surrogate losses; an
    audit subsample compares surrogate to the exact solver's loss and
    fits the quadratic gap constant at coarse_eps, checking the
    per-round gap <= C * eps^2 and the regret decomposition
    true <= surrogate + 2 C eps^2 T on the audited rounds.
    """
    instances = list(instance_stream)
    if T is None:
        T = len(instances)
    if T < 16:
        raise ValidationError("T", f"need T >= 16 (got {T})")
    if len(instances) < T:
        raise ValidationError("instance_stream", f"stream shorter than T={T}")
    instances = instances[:T]
    if not (0 < lam_min < lam_max):
        raise ValidationError("lam_min", f"need 0 < lam_min < lam_max (got [{lam_min}, {lam_max}])")

    eps = T ** (-0.25)
    r = T ** (-0.75)
    lams = np.arange(lam_min, lam_max + r / 2.0, r)
    lams[-1] = min(lams[-1], lam_max)
    params = [LogRegParam(lam=float(l)).validate() for l in lams]
    G = len(params)
    if eta is None:
        eta = float(np.sqrt(8.0 * np.log(G) / T))
    rng = np.random.default_rng(seed)
    H = H_LOSS_DEFAULT

    surrogates = []
    clip_count = 0

    def values_of_round(t):
        nonlocal clip_count
        surr = online_surrogate(instances[t], eps, rng, lam_min, lam_max, penalty=penalty)
        surrogates.append(surr)
        vals = surr(lams)
        over = vals > H
        clip_count += int(np.count_nonzero(over))
        return np.minimum(vals, H)

    grid_values, choice_indices = _play_hedge(
        values_of_round, T, G, eta, H, rng, maximize=False)
    trace = _regret_trace(grid_values, choice_indices, maximize=False)

    audit = _audit_logreg(instances, surrogates, lams, grid_values, choice_indices,
                          eps, coarse_eps, penalty, rng)
    return OnlineRun(
        task="logreg", T=T, params=tuple(params), maximize=False,
        choice_indices=tuple(int(i) for i in choice_indices),
        chosen_values=grid_values[np.arange(T), choice_indices],
        grid_values=grid_values, regret_trace=trace,
        eta=float(eta), seed=seed, H=float(H), clip_count=clip_count,
        audit=audit)


def _audit_logreg(instances, surrogates, lams, grid_values, choice_indices,
                  eps, coarse_eps, penalty, rng):
    """Exact-solver spot check of the surrogate play."""
    T, G = grid_values.shape
    if T <= AUDIT_ROUNDS:
        rounds = np.arange(T)
    else:
        rounds = np.sort(rng.choice(T, size=AUDIT_ROUNDS, replace=False))
    lam_idx = np.unique(np.linspace(0, G - 1, min(AUDIT_LAMBDAS, G)).astype(int))
    audit_lams = lams[lam_idx]

    true_vals = np.empty((len(rounds), len(audit_lams)))
    surr_vals = np.empty_like(true_vals)
    coarse_gap = 0.0
    for i, t in enumerate(rounds):
        ins = instances[t]
        coarse = online_surrogate(ins, coarse_eps, rng, lams[0], lams[-1], penalty=penalty)
        for j, lam in enumerate(audit_lams):
            tv = true_val_loss(ins, float(lam), penalty)
            true_vals[i, j] = tv
            surr_vals[i, j] = surrogates[t](lam)
            coarse_gap = max(coarse_gap, abs(coarse(lam) - tv))
    C_fit = 1.5 * coarse_gap / coarse_eps**2
    max_gap = float(np.abs(surr_vals - true_vals).max())

    # regret decomposition on the audited rounds, over the audited grid
    chosen_true = np.array([
        true_val_loss(instances[t], float(lams[choice_indices[t]]), penalty)
        for t in rounds])
    chosen_surr = grid_values[rounds, choice_indices[rounds]]
    true_regret = float(chosen_true.sum() - true_vals.sum(axis=0).min())
    surr_regret = float(chosen_surr.sum() - surr_vals.sum(axis=0).min())
    slack = 2.0 * C_fit * eps**2 * len(rounds)
    return {
        "rounds": rounds.tolist(),
        "lambdas": audit_lams.tolist(),
        "eps": float(eps),
        "C_fit": float(C_fit),
        "max_surrogate_gap": max_gap,
        "gap_within_quadratic": bool(max_gap <= C_fit * eps**2),
        "true_regret_audit": true_regret,
        "surrogate_regret_audit": surr_regret,
        "decomposition_ok": bool(true_regret <= surr_regret + slack + 1e-9),
        "decomposition_slack": float(slack),
    }


def _curve_values(curve, xs):
    try:
        vals = np.asarray(curve(xs), dtype=float)
        if vals.shape == xs.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([float(curve(x)) for x in xs], dtype=float)


def locate_discontinuities(loss_curve, lo, hi, resolution=2048, L_lip=0.0):
    """Jump locations of a scalar curve on [lo, hi], to within 1e-8.

    Scans `resolution` points; wherever adjacent values differ by more
    than the Lipschitz allowance L_lip * step + 1e-9, bisects the cell
    down to width 1e-8 and records the cell midpoint.  Jumps closer
    together than the scan step may merge into one; an empty result is
    valid (no discontinuities).
    """
    if not lo < hi:
        raise ValidationError("lo", f"need lo < hi (got [{lo}, {hi}])")
    if resolution < 2:
        raise ValidationError("resolution", f"need >= 2 scan points (got {resolution})")
    xs = np.linspace(lo, hi, resolution)
    vals = _curve_values(loss_curve, xs)
    step = xs[1] - xs[0]
    allow = L_lip * step + 1e-9
    jumps = []
    for i in np.flatnonzero(np.abs(np.diff(vals)) > allow):
        a, b = xs[i], xs[i + 1]
        fa = vals[i]
        while b - a > JUMP_TOL:
            mid = 0.5 * (a + b)
            fm = float(loss_curve(mid))
            if abs(fm - fa) > L_lip * (mid - a) + 1e-9:
                b = mid
            else:
                a, fa = mid, fm
        jumps.append(0.5 * (a + b))
    return np.array(jumps)


@dataclass(frozen=True)
class DispersionReport:
    """Worst-window discontinuity counts at each probe width."""

    T: int
    lo: float
    hi: float
    eps_list: tuple
    max_counts: tuple      # per eps: max jumps in any width-eps window
    ratios: tuple          # per eps: max_count / (eps * T)
    locations_per_round: tuple

    def rows(self):
        return [
            {"eps": e, "max_count": c, "ratio": r}
            for e, c, r in zip(self.eps_list, self.max_counts, self.ratios)
        ]


def estimate_dispersion(loss_sequence, eps_list, lo, hi, resolution=2048, L_lip=0.0):
    """Pool per-round jump locations and report worst-window counts.

    loss_sequence is one curve per round (callables on [lo, hi]).  For
    each eps the window [s, s+eps] sweeps over all anchor points; counts
    are nondecreasing in eps by construction.
    """
    eps_list = tuple(float(e) for e in eps_list)
    if any(e <= 0 for e in eps_list) or len(eps_list) == 0:
        raise ValidationError("eps_list", f"need positive widths (got {eps_list})")
    per_round = tuple(
        tuple(float(x) for x in locate_discontinuities(c, lo, hi, resolution, L_lip))
        for c in loss_sequence)
    T = len(per_round)
    pooled = np.sort(np.concatenate([np.array(r) for r in per_round])
                     if per_round else np.array([]))
    max_counts = []
    for eps in eps_list:
        if pooled.size == 0:
            max_counts.append(0)
            continue
        hi_idx = np.searchsorted(pooled, pooled + eps, side="right")
        max_counts.append(int((hi_idx - np.arange(pooled.size)).max()))
    ratios = tuple(c / (e * T) if T else 0.0 for c, e in zip(max_counts, eps_list))
    return DispersionReport(
        T=T, lo=float(lo), hi=float(hi), eps_list=eps_list,
        max_counts=tuple(max_counts), ratios=ratios,
        locations_per_round=per_round)
