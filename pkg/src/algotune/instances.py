"""Problem-instance data types, seeded random generators, and JSON file I/O.

Three instance kinds are supported:

* clustering -- a point set with L dissimilarity matrices and a target
  partition the produced clustering is scored against;
* ssl -- a labeled/unlabeled split with L dissimilarity matrices and
  held-out evaluation labels for the unlabeled nodes;
* logreg -- train/validation design matrices with labels in {-1, +1}.

Generators draw "smooth" instances: every off-diagonal distance entry is
i.i.d. Uniform[0, R], so each entry has density 1/R <= kappa. kappa = 1/R is
recorded in the instance metadata; R defaults to 1 as configuration, not
ground truth. Distances are not required to satisfy the triangle inequality.

File format is JSON with schema {"kind", "n", "L", "distances", "target",
"R", ...}; floats are written as shortest round-tripping decimals (at most
17 significant digits), so load(save(x)) == x bit-exactly.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-12
ALPHA_GUARD = 1e-6


class ValidationError(ValueError):
    """Structured validation/parse error naming the offending field."""

    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"field '{field_name}': {message}")


def check_simplex(beta, L=None, field_name="beta"):
    """Validate a simplex point: entries >= 0, sum within 1e-12 of 1."""
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1:
        raise ValidationError(field_name, "must be a 1-D weight vector")
    if L is not None and beta.shape[0] != L:
        raise ValidationError(field_name, f"length {beta.shape[0]} != L={L}")
    if np.any(beta < 0):
        raise ValidationError(field_name, "negative entry")
    if abs(float(beta.sum()) - 1.0) > SIMPLEX_TOL:
        raise ValidationError(field_name, f"entries sum to {beta.sum()!r}, not 1")
    return beta


def _check_matrices(distances, R, field_name="distances"):
    """Symmetry, zero diagonal, range [0, R], shared dimension."""
    if len(distances) == 0:
        raise ValidationError(field_name, "need at least one matrix")
    n = distances[0].shape[0]
    for l, d in enumerate(distances):
        name = f"{field_name}[{l}]"
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError(name, f"not square: shape {d.shape}")
        if d.shape[0] != n:
            raise ValidationError(name, f"dimension {d.shape[0]} != {n}")
        ij = _first_asymmetry(d)
        if ij is not None:
            raise ValidationError(name, f"symmetry violated at {ij}")
        if np.any(np.diagonal(d) != 0.0):
            i = int(np.nonzero(np.diagonal(d))[0][0])
            raise ValidationError(name, f"nonzero diagonal at ({i},{i})")
        if np.any(d < 0) or np.any(d > R):
            i, j = np.unravel_index(int(np.argmax(np.abs(d - R / 2.0))), d.shape)
            raise ValidationError(name, f"entry ({i},{j}) outside [0, {R}]")
    return n


def _first_asymmetry(d):
    bad = np.argwhere(d != d.T)
    if bad.size:
        i, j = bad[0]
        return int(i), int(j)
    return None


def _check_partition(blocks, n, field_name="target"):
    seen = set()
    for b, block in enumerate(blocks):
        if len(block) == 0:
            raise ValidationError(f"{field_name}[{b}]", "empty block")
        for i in block:
            if not (0 <= i < n):
                raise ValidationError(f"{field_name}[{b}]", f"point {i} out of range")
            if i in seen:
                raise ValidationError(f"{field_name}[{b}]", f"point {i} repeated")
            seen.add(i)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)[0]
        raise ValidationError(field_name, f"point {missing} not covered")


# ---------------------------------------------------------------------------
# instance types
# ---------------------------------------------------------------------------

@dataclass
class ClusteringInstance:
    """Point set {0..n-1} with L dissimilarity matrices and a k-block target."""

    n: int
    L: int
    distances: list          # L symmetric n x n float64 arrays, entries in [0, R]
    target: list             # k disjoint nonempty blocks covering {0..n-1}
    k: int
    R: float = 1.0
    meta: dict = field(default_factory=dict)

    def validate(self):
        if self.n < 2:
            raise ValidationError("n", "need n >= 2")
        if len(self.distances) != self.L:
            raise ValidationError("distances", f"{len(self.distances)} matrices != L={self.L}")
        n = _check_matrices(self.distances, self.R)
        if n != self.n:
            raise ValidationError("distances", f"matrix dimension {n} != n={self.n}")
        if self.k != len(self.target):
            raise ValidationError("k", f"k={self.k} but target has {len(self.target)} blocks")
        _check_partition(self.target, self.n)
        return self


@dataclass
class SslInstance:
    """Labeled/unlabeled node split with held-out evaluation labels.

    eval_labels carry the ground truth for the unlabeled nodes and are read
    only by the 0-1 evaluation loss, never by the solver.
    """

    labeled: list            # (node index, label in {0,1}) pairs, nonempty
    unlabeled: list          # node indices
    distances: list          # L symmetric n x n float64 arrays
    eval_labels: list        # ground-truth {0,1} labels, aligned with `unlabeled`
    R: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.labeled) + len(self.unlabeled)

    @property
    def L(self):
        return len(self.distances)

    def validate(self):
        if len(self.labeled) == 0:
            raise ValidationError("labeled", "need at least one labeled node")
        n = _check_matrices(self.distances, self.R)
        idx = [i for i, _ in self.labeled] + list(self.unlabeled)
        if sorted(idx) != list(range(n)):
            raise ValidationError("labeled/unlabeled", f"must partition 0..{n - 1}")
        for i, (_, y) in enumerate(self.labeled):
            if y not in (0, 1):
                raise ValidationError(f"labeled[{i}]", f"label {y} not in {{0,1}}")
        if len(self.eval_labels) != len(self.unlabeled):
            raise ValidationError("eval_labels", "length != number of unlabeled nodes")
        for i, y in enumerate(self.eval_labels):
            if y not in (0, 1):
                raise ValidationError(f"eval_labels[{i}]", f"label {y} not in {{0,1}}")
        return self


@dataclass
class LogRegInstance:
    """Train/validation split for regularized logistic regression."""

    X: np.ndarray            # m x p
    y: np.ndarray            # m, entries in {-1, +1}
    X_val: np.ndarray        # m' x p
    y_val: np.ndarray        # m'
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def m_val(self):
        return self.X_val.shape[0]

    def validate(self):
        if self.X.ndim != 2 or self.X_val.ndim != 2:
            raise ValidationError("X", "design matrices must be 2-D")
        if self.X.shape[1] != self.X_val.shape[1]:
            raise ValidationError("X_val", f"p={self.X_val.shape[1]} != train p={self.X.shape[1]}")
        if self.X.shape[0] < 1 or self.X_val.shape[0] < 1:
            raise ValidationError("X", "need m, m' >= 1")
        for name, yy, mm in (("y", self.y, self.m), ("y_val", self.y_val, self.m_val)):
            if yy.shape != (mm,):
                raise ValidationError(name, f"shape {yy.shape} != ({mm},)")
            if not np.all(np.isin(yy, (-1.0, 1.0))):
                raise ValidationError(name, "labels must be in {-1,+1}")
        return self


# ---------------------------------------------------------------------------
# hyperparameter points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkageScalarParam:
    """Scalar-exponent linkage parameter (families M1/M2): alpha plus metric weights."""

    alpha: float
    beta: tuple = (1.0,)

    def validate(self):
        if self.alpha == 0 or (math.isfinite(self.alpha) and abs(self.alpha) < ALPHA_GUARD):
            raise ValidationError("alpha", f"|alpha| >= {ALPHA_GUARD} required (got {self.alpha})")
        check_simplex(self.beta)
        return self

    def key(self):
        return (self.alpha,) + tuple(self.beta)


@dataclass(frozen=True)
class LinkageVectorParam:
    """Per-metric exponent vector for family M3."""

    alpha: tuple

    def validate(self):
        finite = [a for a in self.alpha if math.isfinite(a)]
        infinite = [a for a in self.alpha if math.isinf(a)]
        if infinite:
            # Only the axis-aligned limits are defined: exactly one +-inf
            # entry, every other entry 0.
            if len(infinite) > 1 or any(a != 0 for a in finite):
                raise ValidationError("alpha", "mixed-infinite exponent vectors are rejected")
        elif abs(sum(finite)) < ALPHA_GUARD:
            raise ValidationError("alpha", f"|sum(alpha)| >= {ALPHA_GUARD} required")
        return self

    def key(self):
        return tuple(self.alpha)


@dataclass(frozen=True)
class SslParam:
    """RBF bandwidth sigma (parameterized directly, not squared) plus metric weights."""

    sigma: float
    beta: tuple = (1.0,)

    def validate(self):
        if not (self.sigma > 0):
            raise ValidationError("sigma", f"must be positive (got {self.sigma})")
        check_simplex(self.beta)
        return self

    def key(self):
        return (self.sigma,) + tuple(self.beta)


@dataclass(frozen=True)
class LogRegParam:
    """Regularization strength lambda."""

    lam: float

    def validate(self):
        if not (self.lam > 0):
            raise ValidationError("lam", f"must be positive (got {self.lam})")
        return self

    def key(self):
        return (self.lam,)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def combine_distance(beta, distances):
    """Convex combination of the L distance matrices: entrywise sum beta_i * delta_i.

    Linear in beta; the output inherits symmetry, zero diagonal, and the
    [0, R] range from its inputs.
    """
    beta = check_simplex(beta, L=len(distances))
    n = distances[0].shape[0]
    for l, d in enumerate(distances):
        if d.shape != (n, n):
            raise ValidationError(f"distances[{l}]", f"shape {d.shape} != ({n},{n})")
    out = np.zeros((n, n))
    for b, d in zip(beta, distances):
        out += b * d
    return out


def _uniform_matrices(rng, n, L, R):
    mats = []
    for _ in range(L):
        d = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        d[iu] = rng.uniform(0.0, R, size=len(iu[0]))
        d = d + d.T
        mats.append(d)
    return mats


def _block_assignment(rng, n, k):
    # First k points pin one block each so every block is nonempty.
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    return labels


def _blob_points(rng, n, L, k, labels):
    """k unit-variance Gaussian blobs in R^L with well-separated centers."""
    centers = rng.normal(size=(k, L))
    if k > 1:
        gaps = [np.linalg.norm(centers[i] - centers[j])
                for i in range(k) for j in range(i + 1, k)]
        # Rescale centers so blobs are >= ~8 sigma apart (separable targets).
        centers *= 8.0 / max(min(gaps), 1e-9)
    return centers[labels] + rng.normal(size=(n, L))


def _coordinate_metrics(points, R):
    """L per-coordinate |x_i - x_j| matrices, jointly rescaled into [0, R]."""
    n, L = points.shape
    mats = [np.abs(points[:, l][:, None] - points[:, l][None, :]) for l in range(L)]
    gmax = max(float(d.max()) for d in mats)
    if gmax > 0:
        mats = [d * (R / gmax) for d in mats]
    for d in mats:
        np.fill_diagonal(d, 0.0)
    return mats


def gen_clustering(seed, n, L, k, R=1.0, generator="uniform-smooth"):
    """Draw a ClusteringInstance; deterministic given the seed.

    uniform-smooth: every off-diagonal entry i.i.d. Uniform[0, R] (density
    1/R), with a random k-block target. planted-blobs: k Gaussian clusters
    in R^L, one per-coordinate absolute-difference metric per dimension,
    target = blob membership.
    """
    if n < 2:
        raise ValidationError("n", "need n >= 2")
    if not (1 <= k <= n):
        raise ValidationError("k", f"need 1 <= k <= n (got k={k}, n={n})")
    if L < 1:
        raise ValidationError("L", "need L >= 1")
    rng = np.random.default_rng(seed)
    labels = _block_assignment(rng, n, k)
    if generator == "uniform-smooth":
        mats = _uniform_matrices(rng, n, L, R)
    elif generator == "planted-blobs":
        mats = _coordinate_metrics(_blob_points(rng, n, L, k, labels), R)
    else:
        raise ValidationError("generator", f"unknown generator {generator!r}")
    target = [[int(i) for i in np.flatnonzero(labels == b)] for b in range(k)]
    meta = {"kappa": 1.0 / R, "generator": generator, "seed": seed}
    return ClusteringInstance(n=n, L=L, distances=mats, target=target, k=k,
                              R=R, meta=meta).validate()


def gen_ssl(seed, n_labeled, n_unlabeled, L, R=1.0, generator="uniform-smooth"):
    """Draw an SslInstance; deterministic given the seed.

    uniform-smooth draws Uniform[0, R] distances and i.i.d. fair-coin node
    labels; planted-blobs places two separated Gaussian blobs and labels
    nodes by blob membership.
    """
    if n_labeled < 1 or n_unlabeled < 1:
        raise ValidationError("n_labeled", "need n_labeled >= 1 and n_unlabeled >= 1")
    if L < 1:
        raise ValidationError("L", "need L >= 1")
    n = n_labeled + n_unlabeled
    rng = np.random.default_rng(seed)
    if generator == "uniform-smooth":
        y = rng.integers(0, 2, size=n)
        mats = _uniform_matrices(rng, n, L, R)
    elif generator == "planted-blobs":
        y = np.arange(n) % 2
        mats = _coordinate_metrics(_blob_points(rng, n, L, 2, y), R)
    else:
        raise ValidationError("generator", f"unknown generator {generator!r}")
    labeled = [(int(i), int(y[i])) for i in range(n_labeled)]
    unlabeled = list(range(n_labeled, n))
    eval_labels = [int(y[i]) for i in unlabeled]
    meta = {"kappa": 1.0 / R, "generator": generator, "seed": seed}
    return SslInstance(labeled=labeled, unlabeled=unlabeled, distances=mats,
                       eval_labels=eval_labels, R=R, meta=meta).validate()


def gen_logreg(seed, m, p, m_val, signal=2.0):
    """Draw a LogRegInstance: Gaussian features, Bernoulli labels via the
    logistic link around a planted weight vector of norm `signal`."""
    if m < 1 or m_val < 1 or p < 1:
        raise ValidationError("m", "need m, m', p >= 1")
    rng = np.random.default_rng(seed)
    w = rng.normal(size=p)
    w *= signal / max(np.linalg.norm(w), 1e-12)

    def draw(count):
        X = rng.normal(size=(count, p))
        prob = 1.0 / (1.0 + np.exp(-X @ w))
        y = np.where(rng.random(count) < prob, 1.0, -1.0)
        return X, y

    X, y = draw(m)
    X_val, y_val = draw(m_val)
    meta = {"signal": signal, "seed": seed}
    return LogRegInstance(X=X, y=y, X_val=X_val, y_val=y_val, meta=meta).validate()


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def _instance_to_dict(instance):
    if isinstance(instance, ClusteringInstance):
        return {
            "kind": "clustering",
            "n": instance.n,
            "L": instance.L,
            "distances": [d.tolist() for d in instance.distances],
            "target": [list(map(int, b)) for b in instance.target],
            "k": instance.k,
            "R": instance.R,
            "meta": instance.meta,
        }
    if isinstance(instance, SslInstance):
        return {
            "kind": "ssl",
            "n": instance.n,
            "L": instance.L,
            "labeled": [[int(i), int(y)] for i, y in instance.labeled],
            "unlabeled": list(map(int, instance.unlabeled)),
            "distances": [d.tolist() for d in instance.distances],
            "eval_labels": list(map(int, instance.eval_labels)),
            "R": instance.R,
            "meta": instance.meta,
        }
    if isinstance(instance, LogRegInstance):
        return {
            "kind": "logreg",
            "X": instance.X.tolist(),
            "y": instance.y.tolist(),
            "X_val": instance.X_val.tolist(),
            "y_val": instance.y_val.tolist(),
            "meta": instance.meta,
        }
    raise ValidationError("instance", f"unknown instance type {type(instance).__name__}")


def save_instance(instance, path):
    """Write an instance as JSON. Floats round-trip bit-exactly."""
    with open(path, "w") as fh:
        json.dump(_instance_to_dict(instance), fh, indent=1)
        fh.write("\n")


def _require(data, field_name):
    if field_name not in data:
        raise ValidationError(field_name, "missing")
    return data[field_name]


def load_instance(path):
    """Read an instance written by save_instance; validates every invariant
    and raises ValidationError naming the offending field on malformed input."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError("<file>", f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("<file>", "top level must be an object")
    kind = data.get("kind", "clustering")
    meta = data.get("meta", {})
    if kind == "clustering":
        mats = [np.asarray(d, dtype=float) for d in _require(data, "distances")]
        inst = ClusteringInstance(
            n=int(_require(data, "n")), L=int(_require(data, "L")),
            distances=mats, target=_require(data, "target"),
            k=int(data.get("k", len(data.get("target", [])))),
            R=float(_require(data, "R")), meta=meta)
    elif kind == "ssl":
        mats = [np.asarray(d, dtype=float) for d in _require(data, "distances")]
        inst = SslInstance(
            labeled=[(int(i), int(y)) for i, y in _require(data, "labeled")],
            unlabeled=[int(i) for i in _require(data, "unlabeled")],
            distances=mats,
            eval_labels=[int(y) for y in _require(data, "eval_labels")],
            R=float(_require(data, "R")), meta=meta)
    elif kind == "logreg":
        inst = LogRegInstance(
            X=np.asarray(_require(data, "X"), dtype=float),
            y=np.asarray(_require(data, "y"), dtype=float),
            X_val=np.asarray(_require(data, "X_val"), dtype=float),
            y_val=np.asarray(_require(data, "y_val"), dtype=float),
            meta=meta)
    else:
        raise ValidationError("kind", f"unknown instance kind {kind!r}")
    return inst.validate()


def instance_equal(a, b):
    """Exact (bitwise) equality of two instances of the same kind."""
    if type(a) is not type(b):
        return False
    da, db = _instance_to_dict(a), _instance_to_dict(b)
    return da == db
