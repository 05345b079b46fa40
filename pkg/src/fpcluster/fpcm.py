"""Fuzzy-possibilistic c-means by alternating optimization.

The solver minimizes

    J(U, T, V) = sum_i sum_j (t_ij**eta + u_ij**m) * ||x_j - v_i||**2

with every column of the membership matrix ``U`` summing to one (over
clusters) and every row of the typicality matrix ``T`` summing to one (over
points). Matrices are stored cluster-major: ``U`` and ``T`` are ``(c, N)``,
centers ``V`` are ``(c, d)``.

Plain fuzzy c-means is the same loop with the typicality terms dropped.
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import Dataset
from .exceptions import DataError, DegenerateClusterError, NumericalError

__all__ = [
    "SolverConfig",
    "Partition",
    "derive_seed",
    "pairwise_distances",
    "init_centers",
    "update_memberships",
    "update_typicalities",
    "update_centers",
    "fpcm_objective",
    "run_fpcm",
    "run_fcm",
    "FuzzyPossibilisticCMeans",
    "FuzzyCMeans",
]

INIT_METHODS = ("kmeans++", "random-points")


def _points(data):
    if isinstance(data, Dataset):
        return data.points
    X = np.asarray(data, dtype=float)
    return X[:, None] if X.ndim == 1 else X


@dataclass(frozen=True)
class SolverConfig:
    c: int = 2
    m: float = 2.0
    eta: float = 2.0
    max_iter: int = 300
    tol: float = 1e-6
    seed: int = 0
    init: str = "kmeans++"
    zero_dist_epsilon: float = 1e-12

    def __post_init__(self):
        if int(self.c) < 2:
            raise DataError(f"c must be at least 2, got {self.c}")
        if not self.m > 1:
            raise DataError(f"m must be > 1, got {self.m}")
        if not self.eta > 1:
            raise DataError(f"eta must be > 1, got {self.eta}")
        if int(self.max_iter) < 1:
            raise DataError("max_iter must be positive")
        if not self.tol > 0:
            raise DataError("tol must be positive")
        if not self.zero_dist_epsilon > 0:
            raise DataError("zero_dist_epsilon must be positive")
        if self.init not in INIT_METHODS:
            raise DataError(f"init must be one of {INIT_METHODS}, got {self.init!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise DataError("seed must be a 64-bit unsigned integer")

    def check_for(self, n):
        if self.c > n:
            raise DataError(f"c={self.c} exceeds the number of points n={n}")

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {
            "c": int(self.c), "m": float(self.m), "eta": float(self.eta),
            "max_iter": int(self.max_iter), "tol": float(self.tol), "seed": int(self.seed),
            "init": self.init, "zero_dist_epsilon": float(self.zero_dist_epsilon),
        }


@dataclass(frozen=True, eq=False)
class Partition:
    """Result of one solver run.

    ``T`` is ``None`` for plain FCM runs. ``objective_trace[k]`` is the
    objective after iteration ``k + 1``.
    """

    U: np.ndarray
    T: np.ndarray | None
    V: np.ndarray
    objective_trace: tuple = ()
    iterations: int = 0
    converged: bool = False
    config: SolverConfig | None = None
    algorithm: str = "fpcm"
    meta: dict = field(default_factory=dict)

    @property
    def c(self):
        return self.V.shape[0]

    @property
    def labels(self):
        """Hard assignment by maximum membership; ties go to the lower index."""
        return np.argmax(self.U, axis=0)

    @property
    def objective(self):
        return self.objective_trace[-1] if self.objective_trace else float("nan")

    def constraint_sums(self, eta=None):
        """Diagnostics for both readings of the typicality row constraint."""
        out = {"membership_columns": self.U.sum(axis=0)}
        if self.T is not None:
            out["typicality_rows"] = self.T.sum(axis=1)
            if eta is not None:
                out["typicality_rows_pow_eta"] = (self.T ** eta).sum(axis=1)
        return out

    def to_dict(self):
        return {
            "algorithm": self.algorithm,
            "config": self.config.to_dict() if self.config else None,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "objective_trace": [float(v) for v in self.objective_trace],
            "U": self.U.tolist(),
            "T": None if self.T is None else self.T.tolist(),
            "V": self.V.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, obj):
        cfg = obj.get("config")
        return cls(
            U=np.array(obj["U"], dtype=float),
            T=None if obj.get("T") is None else np.array(obj["T"], dtype=float),
            V=np.array(obj["V"], dtype=float),
            objective_trace=tuple(obj.get("objective_trace", ())),
            iterations=int(obj.get("iterations", 0)),
            converged=bool(obj.get("converged", False)),
            config=SolverConfig(**cfg) if cfg else None,
            algorithm=obj.get("algorithm", "fpcm"),
            meta=obj.get("meta") or {},
        )

    def save_json(self, path):
        # json renders floats with repr(), which round-trips exactly
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")
        tmp.replace(path)
        return path

    @classmethod
    def load_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save_csv(self, prefix):
        """Write ``<prefix>_U.csv``, ``_T.csv``, ``_V.csv`` with a ``#`` metadata header."""
        prefix = Path(prefix)
        header = json.dumps({k: v for k, v in self.to_dict().items() if k not in ("U", "T", "V")})
        written = []
        for key, mat in (("U", self.U), ("T", self.T), ("V", self.V)):
            if mat is None:
                continue
            path = prefix.with_name(f"{prefix.name}_{key}.csv")
            lines = ["# " + header]
            lines += [",".join(repr(float(v)) for v in row) for row in mat]
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
            tmp.replace(path)
            written.append(path)
        return written

    @classmethod
    def load_csv(cls, prefix):
        prefix = Path(prefix)
        mats = {}
        header = None
        for key in ("U", "T", "V"):
            path = prefix.with_name(f"{prefix.name}_{key}.csv")
            if not path.exists():
                mats[key] = None
                continue
            lines = path.read_text(encoding="utf-8").splitlines()
            header = json.loads(lines[0][2:])
            mats[key] = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln],
                                 dtype=float)
        header["U"], header["T"], header["V"] = mats["U"], mats["T"], mats["V"]
        return cls.from_dict(header)


def derive_seed(base_seed, m, eta, c):
    """Stable 64-bit sub-seed for one ``(m, eta, c)`` run.

    Mixes the base seed with ``c`` and the exponents rounded to 1e-9, via
    numpy's SeedSequence, so the seed of a run never depends on scheduling.
    """
    key = [int(base_seed) % 2**64, int(c), int(round(float(m) * 1e9)), int(round(float(eta) * 1e9))]
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0])


def pairwise_distances(X, V):
    """Euclidean distances, shape ``(c, N)``."""
    diff = X[None, :, :] - V[:, None, :]
    return np.sqrt(np.einsum("cnd,cnd->cn", diff, diff))


def init_centers(data, config):
    """Pick ``config.c`` distinct data points as starting centers.

    Works on the distinct rows of the data (sorted, with multiplicities), so
    the result does not depend on the order of the points. ``kmeans++`` is
    D**2 seeding with duplicates counted by multiplicity; ``random-points``
    draws distinct rows uniformly.
    """
    X = _points(data)
    config.check_for(X.shape[0])
    uniq, counts = np.unique(X, axis=0, return_counts=True)
    c = int(config.c)
    if c > uniq.shape[0]:
        raise DataError(f"c={c} exceeds the number of distinct points ({uniq.shape[0]})")
    rng = np.random.default_rng(int(config.seed))
    if config.init == "random-points":
        idx = rng.choice(uniq.shape[0], size=c, replace=False)
        return uniq[idx].copy()
    weights = counts.astype(float)
    chosen = [int(rng.choice(uniq.shape[0], p=weights / weights.sum()))]
    with np.errstate(over="ignore", invalid="ignore"):
        closest = ((uniq - uniq[chosen[0]]) ** 2).sum(axis=1)
    if not np.all(np.isfinite(closest)):
        raise NumericalError("squared distances overflow during initialization", iteration=0)
    for _ in range(1, c):
        p = weights * closest
        # already-chosen rows have zero distance, so they can't be picked again
        idx = int(rng.choice(uniq.shape[0], p=p / p.sum()))
        chosen.append(idx)
        closest = np.minimum(closest, ((uniq - uniq[idx]) ** 2).sum(axis=1))
    return uniq[chosen].copy()


def _normalized_inverse_powers(D, power, axis):
    """``D**-power`` normalized to sum to one along ``axis``, computed in log space."""
    with np.errstate(divide="ignore"):
        logw = -power * np.log(D)
    logw -= logw.max(axis=axis, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=axis, keepdims=True)


def update_memberships(data, centers, m, zero_dist_epsilon=1e-12, distances=None):
    """Membership of each point relative to all clusters; columns sum to one.

    A point lying on a center (distance <= ``zero_dist_epsilon``) gets full
    membership in the nearest such center and zero elsewhere.
    """
    X = _points(data)
    D = pairwise_distances(X, np.asarray(centers, dtype=float)) if distances is None else distances
    zero = D <= zero_dist_epsilon
    hit = zero.any(axis=0)
    U = np.empty_like(D)
    if not hit.all():
        U[:, ~hit] = _normalized_inverse_powers(D[:, ~hit], 2.0 / (m - 1.0), axis=0)
    if hit.any():
        cols = np.flatnonzero(hit)
        U[:, cols] = 0.0
        U[np.argmin(D[:, cols], axis=0), cols] = 1.0
    return U


def update_typicalities(data, centers, eta, zero_dist_epsilon=1e-12, distances=None):
    """Typicality of each point relative to all points; rows sum to one.

    When some points sit on center ``i`` (distance <= ``zero_dist_epsilon``)
    row ``i`` splits its unit mass equally among them.
    """
    X = _points(data)
    D = pairwise_distances(X, np.asarray(centers, dtype=float)) if distances is None else distances
    zero = D <= zero_dist_epsilon
    hit = zero.any(axis=1)
    T = np.empty_like(D)
    if not hit.all():
        T[~hit] = _normalized_inverse_powers(D[~hit], 2.0 / (eta - 1.0), axis=1)
    if hit.any():
        z = zero[hit].astype(float)
        T[hit] = z / z.sum(axis=1, keepdims=True)
    return T


def _weights(U, T, m, eta):
    W = U ** m
    if T is not None:
        W = W + T ** eta
    return W


def update_centers(data, U, T, m, eta):
    """Weighted means with weights ``t**eta + u**m`` (``u**m`` alone if ``T`` is None)."""
    X = _points(data)
    W = _weights(U, T, m, eta)
    totals = W.sum(axis=1)
    if np.any(totals <= 0):
        bad = int(np.flatnonzero(totals <= 0)[0])
        raise DegenerateClusterError(f"cluster {bad} has zero total weight")
    return (W @ X) / totals[:, None]


def fpcm_objective(data, U, T, V, m, eta):
    """``sum (t**eta + u**m) * D**2``; with ``T=None`` this is the FCM objective."""
    X = _points(data)
    D2 = pairwise_distances(X, np.asarray(V, dtype=float)) ** 2
    return float((_weights(U, T, m, eta) * D2).sum())


def _iterate(X, config, with_typicality, callback):
    n = X.shape[0]
    config.check_for(n)
    V = init_centers(X, config)
    m, eta, eps = float(config.m), float(config.eta), float(config.zero_dist_epsilon)
    trace = []
    converged = False
    U = T = None
    it = 0
    D = pairwise_distances(X, V)
    for it in range(1, int(config.max_iter) + 1):
        U = update_memberships(X, V, m, eps, distances=D)
        T = update_typicalities(X, V, eta, eps, distances=D) if with_typicality else None
        W = _weights(U, T, m, eta)
        totals = W.sum(axis=1)
        if np.any(totals <= 0):
            bad = int(np.flatnonzero(totals <= 0)[0])
            raise DegenerateClusterError(f"cluster {bad} has zero total weight (iteration {it})")
        V_new = (W @ X) / totals[:, None]
        D = pairwise_distances(X, V_new)
        J = float((W * D ** 2).sum())
        if not (np.isfinite(J) and np.all(np.isfinite(V_new))):
            raise NumericalError(f"non-finite value at iteration {it}", iteration=it)
        trace.append(J)
        if callback is not None:
            callback(it, U, T, V_new)
        shift = float(np.max(np.abs(V_new - V)))
        V = V_new
        if shift < config.tol:
            converged = True
            break
    return Partition(
        U=U, T=T, V=V, objective_trace=tuple(trace), iterations=it, converged=converged,
        config=config, algorithm="fpcm" if with_typicality else "fcm",
    )


def run_fpcm(data, config, callback=None):
    """Run FPCM from seeded initial centers.

    Each iteration updates memberships, then typicalities (both from the
    current centers), then the centers. It stops once no center coordinate
    moves by ``config.tol`` or more, or after ``config.max_iter`` iterations.

    ``callback(iteration, U, T, V)`` is invoked after every iteration; ``U`` and
    ``T`` are the matrices that produced the new centers ``V``.

    Raises:
        DegenerateClusterError: a cluster lost all its weight.
        NumericalError: a non-finite value appeared; carries the iteration.
    """
    return _iterate(_points(data), config, True, callback)


def run_fcm(data, config, callback=None):
    """Plain fuzzy c-means: :func:`run_fpcm` without typicalities (``T`` is None)."""
    return _iterate(_points(data), config, False, callback)


def _seed_from_random_state(random_state):
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    if isinstance(random_state, np.random.RandomState):
        return int(random_state.randint(0, 2**63 - 1))
    raise ValueError(f"random_state must be an int or None, got {random_state!r}")


class FuzzyPossibilisticCMeans(BaseEstimator, ClusterMixin, TransformerMixin):
    """Fuzzy-possibilistic c-means with a scikit-learn interface.

    Parameters
    ----------
    n_clusters : int, default=2
    m : float, default=2.0
        Degree of fuzziness of the memberships, > 1.
    eta : float, default=2.0
        Degree of typicality, > 1.
    max_iter : int, default=300
    tol : float, default=1e-6
        Stop when no center coordinate moves more than this.
    init : {"kmeans++", "random-points"}, default="kmeans++"
    zero_dist_epsilon : float, default=1e-12
    random_state : int or None, default=0

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
    labels_ : ndarray of shape (n_samples,)
    memberships_ : ndarray of shape (n_samples, n_clusters)
    typicalities_ : ndarray of shape (n_samples, n_clusters)
    partition_ : Partition
    n_iter_ : int
    objective_ : float
    """

    _algorithm = "fpcm"

    def __init__(self, n_clusters=2, m=2.0, eta=2.0, max_iter=300, tol=1e-6,
                 init="kmeans++", zero_dist_epsilon=1e-12, random_state=0):
        self.n_clusters = n_clusters
        self.m = m
        self.eta = eta
        self.max_iter = max_iter
        self.tol = tol
        self.init = init
        self.zero_dist_epsilon = zero_dist_epsilon
        self.random_state = random_state

    def _config(self):
        return SolverConfig(
            c=self.n_clusters, m=self.m, eta=self.eta, max_iter=self.max_iter, tol=self.tol,
            seed=_seed_from_random_state(self.random_state), init=self.init,
            zero_dist_epsilon=self.zero_dist_epsilon,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        runner = run_fpcm if self._algorithm == "fpcm" else run_fcm
        part = runner(X, self._config())
        self.partition_ = part
        self.cluster_centers_ = part.V
        self.memberships_ = part.U.T
        if part.T is not None:
            self.typicalities_ = part.T.T
        self.labels_ = part.labels
        self.n_iter_ = part.iterations
        self.objective_ = part.objective
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Memberships of ``X`` with respect to the fitted centers."""
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=float)
        return update_memberships(X, self.cluster_centers_, self.m, self.zero_dist_epsilon).T

    def predict(self, X):
        return np.argmax(self.transform(X), axis=1)


class FuzzyCMeans(FuzzyPossibilisticCMeans):
    """Plain fuzzy c-means; ``eta`` is accepted but unused."""

    _algorithm = "fcm"
