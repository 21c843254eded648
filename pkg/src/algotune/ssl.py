"""Gaussian RBF graphs over combined metrics and harmonic label propagation.

Pipeline: combine the L metrics with simplex weights beta, build the dense
RBF graph W_uv = exp(-delta_beta(u, v) / sigma^2), solve the harmonic system
(D_UU - W_UU) f_U = W_UL f_L for the unlabeled scores, round at 1/2, and
score the 0-1 disagreement against the held-out labels. The system matrix
is strictly diagonally dominant (every unlabeled node has positive RBF
weight to a labeled one), so a Cholesky factorization applies; solves with
a reciprocal condition estimate below 1e-14 raise instead of returning
garbage, which happens when sigma is small enough that W underflows.

Held-out eval_labels are read only by ssl_loss, never by the solver.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.linalg.lapack import dpocon

from .instances import ValidationError, check_simplex, combine_distance

RCOND_MIN = 1e-14


class NumericalError(RuntimeError):
    """Structured failure of a linear solve (singular / ill-conditioned)."""


@dataclass
class WeightedGraph:
    """Symmetric edge weights with labeled nodes ordered first."""

    W: np.ndarray        # n x n symmetric, zero diagonal
    n_labeled: int
    order: list          # original instance index of each row

    @property
    def n(self):
        return self.W.shape[0]


def build_rbf_graph(instance, sigma, beta=None):
    """RBF weights exp(-delta_beta(u,v) / sigma^2), labeled indices first."""
    sigma = float(sigma)
    if not sigma > 0:
        raise ValidationError("sigma", f"need sigma > 0 (got {sigma})")
    if beta is None:
        beta = np.full(instance.L, 1.0 / instance.L)
    beta = check_simplex(beta, L=instance.L)
    order = [i for i, _ in instance.labeled] + list(instance.unlabeled)
    dmat = combine_distance(beta, instance.distances)
    W = np.exp(-dmat[np.ix_(order, order)] / sigma ** 2)
    np.fill_diagonal(W, 0.0)
    return WeightedGraph(W=W, n_labeled=len(instance.labeled), order=order)


def harmonic_solve(graph, f_L):
    """Unlabeled scores f_U solving (D_UU - W_UU) f_U = W_UL f_L.

    Direct Cholesky factorization (no explicit inverse); raises
    NumericalError when the factorization fails or the reciprocal condition
    estimate drops below 1e-14. The exact solution obeys the maximum
    principle min f_L <= f_u <= max f_L.
    """
    nl = graph.n_labeled
    if nl < 1:
        raise ValidationError("f_L", "need at least one labeled node")
    f_L = np.asarray(f_L, dtype=float)
    if f_L.shape != (nl,):
        raise ValidationError("f_L", f"shape {f_L.shape} != ({nl},)")
    W = graph.W
    nu = graph.n - nl
    if nu == 0:
        return np.zeros(0)
    deg = W.sum(axis=1)
    A = np.diag(deg[nl:]) - W[nl:, nl:]
    b = W[nl:, :nl] @ f_L
    try:
        factor = cho_factor(A, lower=True)
    except LinAlgError as e:
        raise NumericalError(f"harmonic system not positive definite: {e}") from None
    anorm = np.linalg.norm(A, 1)
    rcond, info = dpocon(factor[0], anorm, uplo=b"L")
    if info != 0 or rcond < RCOND_MIN:
        raise NumericalError(
            f"harmonic system ill-conditioned: rcond={rcond:.3e} (< {RCOND_MIN})")
    return cho_solve(factor, b)


def ssl_predict(f_U):
    """Round scores at 1/2; the tie f_u = 1/2 goes to label 1."""
    return (np.asarray(f_U, dtype=float) >= 0.5).astype(int)


def ssl_loss(instance, sigma, beta=None):
    """Fraction of unlabeled nodes whose rounded score disagrees with the
    held-out labels; a multiple of 1/|U|."""
    graph = build_rbf_graph(instance, sigma, beta)
    f_L = np.array([y for _, y in instance.labeled], dtype=float)
    f_U = harmonic_solve(graph, f_L)
    pred = ssl_predict(f_U)
    truth = np.asarray(instance.eval_labels)
    return float(np.mean(pred != truth))
