"""Cluster validity: the fuzzy-possibilistic (FP) index and classical comparators.

The FP index of a partition has two parts:

* compactness, ``sum_i (1 / tr F_i) * sum_j w_ij ||x_j - v_i||**2`` where
  ``w_ij = t_ij**eta + u_ij**m`` and ``F_i`` is the ``w``-weighted scatter
  matrix of cluster ``i``;
* separation, ``sum_i W_i * exp(-min_{k != i} (||v_i - v_k|| / ||v_i - vbar||)**m)``
  with ``W_i = sum_j w_ij`` and ``vbar`` the mean of the centers.

Both are computed for every ``c`` in a range, divided by their maximum over
that range, and added; the best ``c`` maximizes the sum, so the index lies in
``(0, 2]``.

Comparators (all fed the same FPCM memberships and centers):

=======  =========  ===========================================
name     direction  definition
=======  =========  ===========================================
PC       max        Bezdek partition coefficient
PE       min        Bezdek partition entropy
FS       min        Fukuyama-Sugeno
XB       min        Xie-Beni
K        min        Kwon
FHV      min        Gath-Geva fuzzy hypervolume
PCAES    max        Wu-Yang partition coefficient and exp. separation
W        min        Zhang et al. variation / separation ratio
SC       min        Rezaee
ECAS     max        exponential compactness and separation
=======  =========  ===========================================
"""
import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .dataset import Dataset
from .exceptions import DataError, DegenerateClusterError, SolverError
from .fpcm import SolverConfig, derive_seed, run_fpcm

__all__ = [
    "FpCovariance",
    "ValidityCurve",
    "fp_covariance",
    "fp_compactness",
    "fp_separation",
    "normalize_by_max",
    "fp_curve",
    "select_c",
    "comparator_indices",
    "INDEX_DIRECTIONS",
    "COMPARATORS",
    "partition_coefficient",
    "partition_entropy",
    "fukuyama_sugeno",
    "xie_beni",
    "kwon",
    "fuzzy_hypervolume",
    "pcaes",
    "zhang_parts",
    "rezaee_parts",
    "ecas_parts",
]

logger = logging.getLogger(__name__)

TRACE_EPSILON = 1e-12
CENTER_EPSILON = 1e-12
LOG_CLAMP = 1e-15

INDEX_DIRECTIONS = {
    "FP": "max", "PC": "max", "PCAES": "max", "ECAS": "max",
    "PE": "min", "FS": "min", "XB": "min", "K": "min", "FHV": "min", "W": "min", "SC": "min",
}
COMPARATORS = ("PC", "PE", "FS", "XB", "K", "FHV", "PCAES", "W", "SC", "ECAS")


def _points(data):
    return data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def _weights(U, T, m, eta):
    W = U ** m
    if T is not None:
        W = W + T ** eta
    return W


def _sq_dist(X, V):
    diff = X[None, :, :] - V[:, None, :]
    return np.einsum("cnd,cnd->cn", diff, diff)


def _center_sq_dist(V):
    diff = V[:, None, :] - V[None, :, :]
    return np.einsum("ijd,ijd->ij", diff, diff)


@dataclass(frozen=True, eq=False)
class FpCovariance:
    matrix: np.ndarray
    trace: float


def fp_covariance(data, U, T, V, i, m, eta):
    """Scatter of cluster ``i`` around ``v_i`` weighted by ``t**eta + u**m``.

    Pass ``T=None`` for the memberships-only (Gath-Geva) covariance.
    """
    X = _points(data)
    w = _weights(U[i], None if T is None else T[i], m, eta)
    total = w.sum()
    if not total > 0:
        raise DegenerateClusterError(f"cluster {i} has zero total weight")
    diff = X - V[i]
    F = (w[:, None] * diff).T @ diff / total
    F = 0.5 * (F + F.T)
    return FpCovariance(matrix=F, trace=float(np.trace(F)))


def fp_compactness(data, U, T, V, m, eta, trace_epsilon=TRACE_EPSILON):
    X = _points(data)
    W = _weights(U, T, m, eta)
    D2 = _sq_dist(X, V)
    comp = 0.0
    for i in range(V.shape[0]):
        tr = fp_covariance(X, U, T, V, i, m, eta).trace
        if tr <= trace_epsilon:
            raise DegenerateClusterError(
                f"cluster {i}: covariance trace {tr:.3g} <= {trace_epsilon:g} "
                "(single-point or duplicate-point cluster)"
            )
        comp += (W[i] * D2[i]).sum() / tr
    return float(comp)


def fp_separation(U, T, V, m, eta, center_epsilon=CENTER_EPSILON):
    """Exponential separation; needs at least two centers, none on the center mean."""
    c = V.shape[0]
    if c < 2:
        raise DataError("separation needs at least two clusters")
    W = _weights(U, T, m, eta).sum(axis=1)
    vbar = V.mean(axis=0)
    to_mean = np.linalg.norm(V - vbar, axis=1)
    if np.any(to_mean <= center_epsilon):
        bad = int(np.flatnonzero(to_mean <= center_epsilon)[0])
        raise DegenerateClusterError(f"center {bad} coincides with the mean of all centers")
    dist = np.sqrt(_center_sq_dist(V))
    np.fill_diagonal(dist, np.inf)
    ratio = dist.min(axis=1) / to_mean
    return float((W * np.exp(-ratio ** m)).sum())


def normalize_by_max(values):
    """Divide by the largest finite entry; NaN entries stay NaN."""
    values = np.asarray(values, dtype=float)
    return values / np.nanmax(values)


# -- comparators -----------------------------------------------------------

def partition_coefficient(U):
    return float((U ** 2).sum() / U.shape[1])


def partition_entropy(U):
    Uc = np.maximum(U, LOG_CLAMP)
    return float(-(U * np.log(Uc)).sum() / U.shape[1])


def _min_center_sq_dist(V):
    d = _center_sq_dist(V)
    np.fill_diagonal(d, np.inf)
    out = d.min()
    if out <= 0:
        raise DegenerateClusterError("two centers coincide")
    return out


def fukuyama_sugeno(data, U, V, m):
    X = _points(data)
    Um = U ** m
    vbar = V.mean(axis=0)
    within = (Um * _sq_dist(X, V)).sum()
    between = (Um.sum(axis=1) * ((V - vbar) ** 2).sum(axis=1)).sum()
    return float(within - between)


def xie_beni(data, U, V, m):
    X = _points(data)
    return float((U ** m * _sq_dist(X, V)).sum() / (X.shape[0] * _min_center_sq_dist(V)))


def kwon(data, U, V):
    X = _points(data)
    xbar = X.mean(axis=0)
    num = (U ** 2 * _sq_dist(X, V)).sum() + ((V - xbar) ** 2).sum() / V.shape[0]
    return float(num / _min_center_sq_dist(V))


def fuzzy_hypervolume(data, U, V, m):
    X = _points(data)
    total = 0.0
    for i in range(V.shape[0]):
        F = fp_covariance(X, U, None, V, i, m, 1.0).matrix
        det = np.linalg.det(F)
        # tiny negative determinants are round-off on singular scatter
        total += np.sqrt(max(det, 0.0))
    return float(total)


def pcaes(data, U, V):
    """Wu-Yang index; ``u_M`` uses squared memberships like the first term."""
    X = _points(data)
    c = V.shape[0]
    u_m = (U ** 2).sum(axis=1).min()
    if not u_m > 0:
        raise DegenerateClusterError("a cluster has zero membership mass")
    xbar = X.mean(axis=0)
    b_t = ((V - xbar) ** 2).sum() / c
    if not b_t > 0:
        raise DegenerateClusterError("all centers coincide with the data mean")
    d = _center_sq_dist(V)
    np.fill_diagonal(d, np.inf)
    return float((U ** 2).sum() / u_m - np.exp(-d.min(axis=1) / b_t).sum())


def _hard_counts(U):
    return np.bincount(np.argmax(U, axis=0), minlength=U.shape[0])


def zhang_parts(data, U, V):
    """``(Var, Sep)`` before normalization over ``c``."""
    X = _points(data)
    c = V.shape[0]
    counts = _hard_counts(U)
    if np.any(counts == 0):
        raise DegenerateClusterError("a cluster has no hard-assigned points")
    var = ((U * _sq_dist(X, V)).sum(axis=1) / counts).sum() * np.sqrt((c + 1) / (c - 1))
    overlap = 0.0
    for i in range(c):
        for k in range(c):
            if i != k:
                overlap = max(overlap, float(np.minimum(U[i], U[k]).max()))
    return float(var), 1.0 - overlap


def rezaee_parts(data, U, V):
    """``(Sep, Comp)`` before normalization over ``c``; natural log in the entropy."""
    X = _points(data)
    c = V.shape[0]
    comp = (U ** 2 * _sq_dist(X, V)).sum()
    h = -(U * np.log(np.maximum(U, LOG_CLAMP))).sum(axis=0)
    sep = 0.0
    for p in range(c):
        for q in range(p + 1, c):
            sep += (np.minimum(U[p], U[q]) * h).sum()
    return float(2.0 * sep / (c * (c - 1))), float(comp)


def ecas_parts(data, U, V, m):
    """``(EC_comp, ES_sep)`` before normalization over ``c``."""
    X = _points(data)
    c = V.shape[0]
    counts = _hard_counts(U)
    if np.any(counts == 0):
        raise DegenerateClusterError("a cluster has no hard-assigned points")
    xbar = X.mean(axis=0)
    beta_comp = ((X - xbar) ** 2).sum() / counts
    if np.any(beta_comp <= 0):
        raise DegenerateClusterError("zero total scatter")
    ec = (U ** m * np.exp(-(_sq_dist(X, V) / beta_comp[:, None] + 1.0 / (c + 1)))).sum()
    vbar = V.mean(axis=0)
    beta_sep = ((V - vbar) ** 2).sum() / c
    if not beta_sep > 0:
        raise DegenerateClusterError("all centers coincide")
    d = _center_sq_dist(V)
    np.fill_diagonal(d, np.inf)
    es = np.exp(-(c - 1) * d.min(axis=1) / beta_sep).sum()
    return float(ec), float(es)


def _per_c_comparators(X, U, V, m, names):
    """Values for one ``c``. Failures are recorded, not raised."""
    values, errors = {}, {}
    single = {
        "PC": lambda: partition_coefficient(U),
        "PE": lambda: partition_entropy(U),
        "FS": lambda: fukuyama_sugeno(X, U, V, m),
        "XB": lambda: xie_beni(X, U, V, m),
        "K": lambda: kwon(X, U, V),
        "FHV": lambda: fuzzy_hypervolume(X, U, V, m),
        "PCAES": lambda: pcaes(X, U, V),
        "W": lambda: zhang_parts(X, U, V),
        "SC": lambda: rezaee_parts(X, U, V),
        "ECAS": lambda: ecas_parts(X, U, V, m),
    }
    for name in names:
        try:
            with np.errstate(divide="raise", invalid="raise", over="ignore", under="ignore"):
                values[name] = single[name]()
        except (SolverError, FloatingPointError, ZeroDivisionError) as exc:
            values[name] = None
            errors[name] = str(exc)
    return values, errors


def _finalize_comparators(raw, names):
    """Second pass: W, SC and ECAS normalize by their maximum over ``c``."""
    out = {}
    for name in names:
        col = raw[name]
        if name in ("W", "SC", "ECAS"):
            ok = [v is not None for v in col]
            a = np.array([v[0] if v is not None else np.nan for v in col])
            b = np.array([v[1] if v is not None else np.nan for v in col])
            if not any(ok):
                out[name] = np.full(len(col), np.nan)
                continue
            a_n = a / np.nanmax(a)
            b_n = b / np.nanmax(b)
            if name == "W":
                out[name] = a_n / b_n
            elif name == "SC":
                out[name] = a_n + b_n
            else:
                out[name] = a_n - b_n
        else:
            out[name] = np.array([np.nan if v is None else v for v in col], dtype=float)
    return out


def comparator_indices(data, partitions, m, names=COMPARATORS):
    """Comparator values for a list of partitions (one per ``c``, ascending).

    Returns ``(values, errors)``: ``values[name]`` is an array aligned with
    ``partitions`` (NaN where the index failed) and ``errors[name]`` maps ``c``
    to the failure message.
    """
    X = _points(data)
    unknown = set(names) - set(COMPARATORS)
    if unknown:
        raise DataError(f"unknown index name(s): {sorted(unknown)}")
    raw = {name: [] for name in names}
    errors = {}
    for part in partitions:
        vals, errs = _per_c_comparators(X, part.U, part.V, m, names)
        for name in names:
            raw[name].append(vals[name])
        for name, msg in errs.items():
            errors.setdefault(name, {})[int(part.c)] = msg
    return _finalize_comparators(raw, names), errors


# -- curves ----------------------------------------------------------------

@dataclass(eq=False)
class ValidityCurve:
    c_values: np.ndarray
    comp_raw: np.ndarray
    sep_raw: np.ndarray
    comp_norm: np.ndarray
    sep_norm: np.ndarray
    v_fp: np.ndarray
    comparator_values: dict = field(default_factory=dict)
    index_errors: dict = field(default_factory=dict)
    partitions: list = field(default_factory=list, repr=False)
    m: float = 2.0
    eta: float = 2.0
    seeds: list = field(default_factory=list)

    def values(self, index):
        if index == "FP":
            return self.v_fp
        if index not in self.comparator_values:
            raise DataError(f"index {index!r} was not computed for this curve")
        return self.comparator_values[index]

    @property
    def indices(self):
        return ["FP"] + list(self.comparator_values)

    def selections(self):
        """``{index: selected c}``; ``None`` for an index that failed at every ``c``."""
        out = {}
        for name in self.indices:
            try:
                out[name] = select_c(self, name)
            except SolverError:
                out[name] = None
        return out

    def long_rows(self):
        rows = []
        series = [("comp_raw", self.comp_raw), ("sep_raw", self.sep_raw),
                  ("comp_norm", self.comp_norm), ("sep_norm", self.sep_norm), ("FP", self.v_fp)]
        series += list(self.comparator_values.items())
        for name, vals in series:
            for c, v in zip(self.c_values, vals):
                rows.append((int(c), name, float(v)))
        return rows

    def to_long_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["c", "index_name", "value"])
        for c, name, v in self.long_rows():
            w.writerow([c, name, repr(v)])
        return buf.getvalue()

    def plot_data_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["c", "v_fp", "comp_norm", "sep_norm"])
        for row in zip(self.c_values, self.v_fp, self.comp_norm, self.sep_norm):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()

    def summary_json(self):
        return json.dumps(self.selections(), indent=2, sort_keys=True) + "\n"

    def to_dict(self):
        return {
            "m": float(self.m),
            "eta": float(self.eta),
            "c_values": [int(c) for c in self.c_values],
            "comp_raw": _json_floats(self.comp_raw),
            "sep_raw": _json_floats(self.sep_raw),
            "comp_norm": _json_floats(self.comp_norm),
            "sep_norm": _json_floats(self.sep_norm),
            "v_fp": _json_floats(self.v_fp),
            "comparators": {k: _json_floats(vals)
                            for k, vals in self.comparator_values.items()},
            "index_errors": {k: {str(c): msg for c, msg in errs.items()}
                             for k, errs in self.index_errors.items()},
            "seeds": [int(s) for s in self.seeds],
            "iterations": [int(p.iterations) for p in self.partitions],
            "converged": [bool(p.converged) for p in self.partitions],
        }


def _json_floats(values):
    return [None if np.isnan(v) else float(v) for v in values]


def _solve_one(X, template, c, m, eta, seed):
    cfg = template.with_(c=int(c), m=float(m), eta=float(eta), seed=int(seed))
    try:
        part = run_fpcm(X, cfg)
    except SolverError as exc:
        raise type(exc)(f"c={c}: {exc}") from exc
    # An FP failure at one c (e.g. a zero-scatter cluster) must not sink the curve.
    try:
        comp = fp_compactness(X, part.U, part.T, part.V, m, eta)
        sep = fp_separation(part.U, part.T, part.V, m, eta)
    except (DegenerateClusterError, DataError) as exc:
        return part, np.nan, np.nan, str(exc)
    return part, comp, sep, None


def _c_values(c_range, n):
    if isinstance(c_range, int):
        c_values = list(range(2, c_range + 1))
    else:
        c_values = sorted(int(c) for c in c_range)
    if not c_values:
        raise DataError("empty c range")
    if c_values[0] < 2:
        raise DataError("cluster counts must be >= 2")
    if c_values[-1] > n:
        raise DataError(f"c_max={c_values[-1]} exceeds n={n}")
    return c_values


def fp_curve(data, c_range, m, eta, template=None, indices=COMPARATORS, n_jobs=1):
    """Run FPCM for every ``c`` and evaluate the FP index and comparators.

    Args:
        data: Dataset or ``(N, d)`` array.
        c_range: ``c_max`` (meaning ``2..c_max``) or an explicit iterable.
        m, eta: solver exponents, shared by all runs and by the indices.
        template: :class:`SolverConfig` supplying tolerances, init method and
            the base seed; ``c``, ``m``, ``eta`` and ``seed`` are overridden.
            Each run is seeded with ``derive_seed(template.seed, m, eta, c)``.
        indices: comparator names to compute alongside FP.
        n_jobs: joblib worker count; results do not depend on it.
    """
    X = _points(data)
    c_values = _c_values(c_range, X.shape[0])
    template = template or SolverConfig()
    seeds = [derive_seed(template.seed, m, eta, c) for c in c_values]
    jobs = (delayed(_solve_one)(X, template, c, m, eta, s) for c, s in zip(c_values, seeds))
    if n_jobs == 1:
        results = [fn(*a, **kw) for fn, a, kw in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(jobs)
    parts = [r[0] for r in results]
    comp = np.array([r[1] for r in results])
    sep = np.array([r[2] for r in results])
    if np.all(np.isnan(comp)):
        raise DegenerateClusterError(
            "FP index undefined at every c: " + "; ".join(f"c={c}: {r[3]}" for c, r in zip(c_values, results)))
    comp_n = normalize_by_max(comp)
    sep_n = normalize_by_max(sep)
    values, errors = comparator_indices(X, parts, m, names=tuple(indices))
    fp_errors = {int(c): r[3] for c, r in zip(c_values, results) if r[3] is not None}
    if fp_errors:
        errors = {"FP": fp_errors, **errors}
    for name, errs in errors.items():
        logger.warning("index %s failed at c=%s", name, sorted(errs))
    return ValidityCurve(
        c_values=np.array(c_values), comp_raw=comp, sep_raw=sep, comp_norm=comp_n,
        sep_norm=sep_n, v_fp=comp_n + sep_n, comparator_values=values,
        index_errors=errors, partitions=parts, m=float(m), eta=float(eta), seeds=seeds,
    )


def select_c(curve, index="FP"):
    """Best ``c`` for ``index``; exact ties go to the smallest ``c``."""
    if index not in INDEX_DIRECTIONS:
        raise DataError(f"unknown index name {index!r}")
    vals = np.asarray(curve.values(index), dtype=float)
    if np.all(np.isnan(vals)):
        raise SolverError(f"index {index} failed at every c")
    if INDEX_DIRECTIONS[index] == "max":
        pos = int(np.nanargmax(vals))
    else:
        pos = int(np.nanargmin(vals))
    return int(curve.c_values[pos])
