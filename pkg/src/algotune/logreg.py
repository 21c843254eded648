"""Regularized logistic regression: exact solvers, approximate regularization
paths, and surrogate validation losses.

The exact solvers are the expensive oracles: damped Newton for the l2
penalty (gradient sup-norm 1e-10) and accelerated proximal gradient for l1
(subgradient residual 1e-8). The path builder walks the grid
lambda_t = lambda_min + t*eps and replaces each exact solve with one
quadratic (Newton) update whose result is affine in lambda, so the whole
path is piecewise linear with a uniform O(eps^2) coefficient error against
the exact solution. Validation losses evaluated through the path underlie
the surrogate tuning losses; two surrogates coexist and callers say which
they use:

* surrogate_val_loss -- coefficient-path surrogate: logistic validation
  loss of the affine path model at lambda (batch tuning);
* online_surrogate -- loss-interpolation surrogate: the path loss sampled
  at one uniform-random knot per eps-interval, linearly interpolated
  (online tuning; its critical points sit at the random knots).
"""

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from .instances import ValidationError

log = logging.getLogger(__name__)

MAX_ITER = 10 ** 4
L2_TOL = 1e-10       # gradient sup-norm at the l2 optimum
L1_TOL = 1e-8        # subgradient-optimality residual at the l1 optimum
DELTA_DROP = 1e-6    # active-set drop threshold |beta_j| < delta
HESS_RIDGE = 1e-10   # damping added when the active-set Hessian is singular


class ConvergenceError(RuntimeError):
    """Solver hit the iteration cap; carries the final residual."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


def logistic_loss(beta, X, y):
    """(1/m) sum log(1 + exp(-y_i x_i^T beta)), stable for any margin size."""
    margins = np.asarray(y, dtype=float) * (np.asarray(X, dtype=float) @ beta)
    return float(np.logaddexp(0.0, -margins).mean())


def _grad(beta, X, y):
    margins = y * (X @ beta)
    return -(X.T @ (y * expit(-margins))) / len(y)


def _hess(beta, X, y):
    margins = y * (X @ beta)
    w = expit(margins) * expit(-margins)
    return (X.T * w) @ X / len(y)


def _l1_residual(beta, g, lam):
    on = beta != 0
    r_on = np.abs(g[on] + lam * np.sign(beta[on])).max(initial=0.0)
    r_off = np.maximum(np.abs(g[~on]) - lam, 0.0).max(initial=0.0)
    return max(r_on, r_off)


def _solve_l2(X, y, lam):
    p = X.shape[1]
    beta = np.zeros(p)
    eye = np.eye(p)

    def obj(b):
        return logistic_loss(b, X, y) + lam * float(b @ b)

    for _ in range(MAX_ITER):
        g = _grad(beta, X, y) + 2.0 * lam * beta
        res = float(np.abs(g).max())
        if res <= L2_TOL:
            return beta
        H = _hess(beta, X, y) + 2.0 * lam * eye
        d = -np.linalg.solve(H, g)
        f0, slope = obj(beta), float(g @ d)
        # absolute slack keeps the test meaningful once the decrease drops
        # below float resolution (final Newton steps near the optimum)
        slack = 1e-15 * max(1.0, abs(f0))
        step = 1.0
        while step > 1e-12 and obj(beta + step * d) > f0 + 1e-4 * step * slope + slack:
            step *= 0.5
        beta = beta + step * d
    raise ConvergenceError("l2 Newton did not converge", res)


def _solve_l1(X, y, lam):
    """FISTA with backtracking and gradient-based adaptive restart."""
    p = X.shape[1]
    beta = np.zeros(p)
    z = beta.copy()
    t_acc = 1.0
    lip = 1.0

    def soft(v, thr):
        return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)

    res = math.inf
    for _ in range(MAX_ITER):
        gz = _grad(z, X, y)
        fz = logistic_loss(z, X, y)
        while True:
            cand = soft(z - gz / lip, lam / lip)
            diff = cand - z
            bound = fz + float(gz @ diff) + 0.5 * lip * float(diff @ diff)
            if logistic_loss(cand, X, y) <= bound + 1e-15:
                break
            lip *= 2.0
        res = _l1_residual(cand, _grad(cand, X, y), lam)
        if res <= L1_TOL:
            return cand
        if float((z - cand) @ (cand - beta)) > 0.0:   # momentum fighting descent
            t_acc = 1.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
        z = cand + ((t_acc - 1.0) / t_next) * (cand - beta)
        beta, t_acc = cand, t_next
    raise ConvergenceError("l1 proximal gradient did not converge", res)


def solve_rlr(X, y, lam, penalty):
    """Exact minimizer of logistic_loss + lam * R(beta), R = ||.||_1 or ||.||_2^2.

    Deterministic from the zero start; raises ConvergenceError with the
    final residual if the iteration cap is exceeded.
    """
    if not lam > 0:
        raise ValidationError("lam", f"need lam > 0 (got {lam})")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if penalty == "l2":
        return _solve_l2(X, y, lam)
    if penalty == "l1":
        return _solve_l1(X, y, lam)
    raise ValidationError("penalty", f"unknown penalty {penalty!r}")


# ---------------------------------------------------------------------------
# approximate regularization paths
# ---------------------------------------------------------------------------

@dataclass
class PathSegment:
    """Affine model beta(lam) = a*lam + b on [lam_lo, lam_hi]."""

    lam_lo: float
    lam_hi: float
    a: np.ndarray
    b: np.ndarray
    active_set: tuple = None    # l1 only; coordinates outside have a = b = 0


@dataclass
class RegPath:
    """Contiguous segments covering [lam_min, lam_max] on the eps-grid."""

    segments: list
    eps: float
    penalty: str
    lam_min: float
    lam_max: float
    meta: dict = field(default_factory=dict)

    def beta_at(self, lam):
        """Affine interpolation within the segment containing lam."""
        lam = float(lam)
        if not (self.lam_min - 1e-12 <= lam <= self.lam_max + 1e-12):
            raise ValidationError(
                "lam", f"{lam} outside path domain [{self.lam_min}, {self.lam_max}]")
        lam = min(max(lam, self.lam_min), self.lam_max)
        idx = bisect_right([s.lam_lo for s in self.segments], lam) - 1
        idx = min(max(idx, 0), len(self.segments) - 1)
        seg = self.segments[idx]
        return seg.a * lam + seg.b


def _grid(lam_min, lam_max, eps, t):
    return lam_min + t * eps


def approx_path(instance, eps, lam_min, lam_max, penalty, delta_drop=DELTA_DROP):
    """Piecewise-linear coefficient path on the grid lambda_t = lambda_min + t*eps.

    Seeds with the exact solution at lambda_min, then takes one quadratic
    update per grid step; each segment's model is affine in lambda and the
    final (partial) segment is clamped at lambda_max while its update still
    targets the grid point. Singular active-set Hessians fall back to a
    ridge-damped solve (counted in meta["ridge_fallbacks"]).
    """
    if not eps > 0:
        raise ValidationError("eps", f"need eps > 0 (got {eps})")
    if not 0 < lam_min < lam_max:
        raise ValidationError("lam_min", "need 0 < lam_min < lam_max")
    X = np.asarray(instance.X, dtype=float)
    y = np.asarray(instance.y, dtype=float)
    p = X.shape[1]
    beta = solve_rlr(X, y, lam_min, penalty)
    active = set(np.flatnonzero(beta).tolist())
    segments = []
    fallbacks = 0
    eye = np.eye(p)
    t = 0
    lam_t = lam_min
    while lam_t < lam_max - 1e-12:
        lam_next = _grid(lam_min, lam_max, eps, t + 1)
        g = _grad(beta, X, y)
        if penalty == "l2":
            H = _hess(beta, X, y) + 2.0 * lam_next * eye
            factor = cho_factor(H, lower=True)
            a = -2.0 * cho_solve(factor, beta)
            b = beta - cho_solve(factor, g)
        else:
            a = np.zeros(p)
            b = np.zeros(p)
            if active:
                idx = sorted(active)
                H_A = _hess(beta, X, y)[np.ix_(idx, idx)]
                s_A = np.sign(beta[idx])
                try:
                    factor = cho_factor(H_A, lower=True)
                except LinAlgError:
                    fallbacks += 1
                    log.warning("singular active-set Hessian at t=%d; ridge-damped", t)
                    factor = cho_factor(H_A + HESS_RIDGE * np.eye(len(idx)), lower=True)
                a[idx] = -cho_solve(factor, s_A)
                b[idx] = beta[idx] - cho_solve(factor, g[idx])
        segments.append(PathSegment(lam_lo=lam_t, lam_hi=min(lam_next, lam_max),
                                    a=a, b=b,
                                    active_set=tuple(sorted(active)) if penalty == "l1" else None))
        beta_prev = beta
        beta = a * lam_next + b
        if penalty == "l1":
            g_next = _grad(beta, X, y)
            # drop applies to the step's own active set; activation would
            # otherwise be undone immediately (new coordinates enter at 0).
            # A coordinate whose sign flips crossed zero inside the step and
            # leaves the active set there; chasing the sign-flipped branch
            # has no stationary point and diverges.
            dropped = {j for j in active
                       if abs(beta[j]) < delta_drop or beta[j] * beta_prev[j] < 0}
            added = {j for j in range(p)
                     if j not in active and abs(g_next[j]) > lam_next}
            beta[sorted(dropped)] = 0.0
            active = (active - dropped) | added
        t += 1
        lam_t = lam_next
    return RegPath(segments=segments, eps=eps, penalty=penalty,
                   lam_min=lam_min, lam_max=lam_max,
                   meta={"ridge_fallbacks": fallbacks})


def surrogate_val_loss(path, lam, instance):
    """Validation logistic loss of the path model at lam (coefficient-path
    surrogate)."""
    beta = path.beta_at(lam)
    return logistic_loss(beta, instance.X_val, instance.y_val)


def true_val_loss(instance, lam, penalty):
    """Validation logistic loss of the exact solver at lam (the oracle the
    surrogates approximate)."""
    beta = solve_rlr(instance.X, instance.y, lam, penalty)
    return logistic_loss(beta, instance.X_val, instance.y_val)


@dataclass
class PiecewiseLinear:
    """Linear interpolation through (knot, value) pairs, clamped outside."""

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, lam):
        out = np.interp(lam, self.knots, self.values)
        return float(out) if np.ndim(lam) == 0 else out


def online_surrogate(instance, eps, rng, lam_min, lam_max, penalty):
    """Loss-interpolation surrogate: one uniform-random knot per eps-interval,
    path loss at the knots, linear in between (clamped at the ends)."""
    path = approx_path(instance, eps, lam_min, lam_max, penalty)
    knots = []
    k = 0
    while True:
        lo = lam_min + k * eps
        hi = min(lo + eps, lam_max)
        knots.append(float(rng.uniform(lo, hi)) if hi > lo else float(lam_max))
        if hi >= lam_max:
            break
        k += 1
    knots = np.array(knots)
    values = np.array([surrogate_val_loss(path, x, instance) for x in knots])
    return PiecewiseLinear(knots=knots, values=values)
