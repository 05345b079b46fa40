"""Choosing the fuzziness ``m``, the typicality exponent ``eta`` and ``c``.

For each ``(m, eta)`` on a grid, FPCM is run for ``c = 2..c_max`` and the data
are rebuilt from the result twice: once as ``U.T @ V`` (memberships) and once
as ``Tn.T @ V`` with ``Tn`` the typicalities normalized per point. The two
root-mean-square reconstruction errors are added and summed over ``c`` into a
cumulative error (CRMSE). The grid cell with the smallest CRMSE fixes
``(m, eta)``; the FP validity curve at those values then picks ``c``.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import Dataset
from .exceptions import DataError, SolverError
from .fpcm import FuzzyPossibilisticCMeans, SolverConfig, derive_seed, run_fpcm
from .validity import COMPARATORS, fp_curve, select_c

__all__ = [
    "TABLE2_VALUES",
    "ParamGrid",
    "CrmseSurface",
    "Algorithm1Result",
    "reconstruct_from_memberships",
    "normalize_typicality",
    "reconstruct_from_typicalities",
    "rmse",
    "crmse_surface",
    "select_params",
    "run_algorithm1",
    "read_surface_csv",
    "FPCMModelSelector",
]

TABLE2_VALUES = (1.2, 1.6, 2.0, 2.2, 2.6, 3.0, 3.4, 3.8, 4.2, 4.4, 4.6, 5.0)


def _points(data):
    return data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def default_c_max(n):
    return max(2, math.ceil(math.sqrt(n)))


@dataclass(frozen=True)
class ParamGrid:
    m_values: tuple = TABLE2_VALUES
    eta_values: tuple = TABLE2_VALUES
    c_values: tuple = ()

    def __post_init__(self):
        m = tuple(float(v) for v in self.m_values)
        e = tuple(float(v) for v in self.eta_values)
        if not m or not e:
            raise DataError("m and eta grids must be non-empty")
        for label, vals in (("m", m), ("eta", e)):
            if any(not v > 1 for v in vals):
                raise DataError(f"all {label} values must be > 1")
            if list(vals) != sorted(set(vals)):
                raise DataError(f"{label} values must be strictly ascending")
        c = tuple(int(v) for v in self.c_values)
        if c and (c != tuple(sorted(set(c))) or c[0] < 2):
            raise DataError("c values must be ascending integers >= 2")
        object.__setattr__(self, "m_values", m)
        object.__setattr__(self, "eta_values", e)
        object.__setattr__(self, "c_values", c)

    @classmethod
    def with_c_max(cls, c_max, m_values=TABLE2_VALUES, eta_values=TABLE2_VALUES):
        if c_max < 2:
            raise DataError("c_max must be at least 2")
        return cls(m_values, eta_values, tuple(range(2, int(c_max) + 1)))

    @classmethod
    def stepped(cls, c_max, m_max=5.0, eta_max=5.0, start=1.1, step=0.1):
        """Evenly stepped grid from ``start`` up to the maxima (inclusive)."""
        def axis(hi):
            k = int(math.floor((hi - start) / step + 1e-9))
            return tuple(round(start + i * step, 10) for i in range(k + 1))
        return cls.with_c_max(c_max, axis(m_max), axis(eta_max))

    def resolved(self, n):
        """Grid with ``c_values`` filled in (default ``2..ceil(sqrt(n))``) and checked against ``n``."""
        c = self.c_values or tuple(range(2, default_c_max(n) + 1))
        if c[-1] > n:
            raise DataError(f"c_max={c[-1]} exceeds n={n}")
        return ParamGrid(self.m_values, self.eta_values, c)

    def to_dict(self):
        return {"m_values": list(self.m_values), "eta_values": list(self.eta_values),
                "c_values": list(self.c_values)}


def reconstruct_from_memberships(V, U):
    """Predicted points ``sum_i u_ij v_i``, shape ``(N, d)``."""
    return np.asarray(U, dtype=float).T @ np.asarray(V, dtype=float)


def normalize_typicality(T):
    """Divide each column (point) of ``T`` by its sum over clusters."""
    T = np.asarray(T, dtype=float)
    sums = T.sum(axis=0)
    if np.any(sums <= 0):
        raise DataError(f"typicality column {int(np.flatnonzero(sums <= 0)[0])} sums to zero")
    return T / sums


def reconstruct_from_typicalities(V, Tn):
    return reconstruct_from_memberships(V, Tn)


def rmse(X, X_hat):
    """``sqrt(sum_j ||x_j - xhat_j||**2 / N)``."""
    X = np.asarray(X, dtype=float)
    X_hat = np.asarray(X_hat, dtype=float)
    if X.shape != X_hat.shape:
        raise DataError(f"shape mismatch: {X.shape} vs {X_hat.shape}")
    return float(np.sqrt(((X - X_hat) ** 2).sum() / X.shape[0]))


@dataclass(eq=False)
class CrmseSurface:
    """CRMSE per grid cell; ``values[i, k]`` belongs to ``m_values[i]``, ``eta_values[k]``.

    ``rmse_u`` and ``rmse_t`` have shape ``(n_m, n_eta, n_c)``; invalid cells
    are NaN and listed in ``errors``.
    """

    grid: ParamGrid
    values: np.ndarray
    rmse_u: np.ndarray | None = None
    rmse_t: np.ndarray | None = None
    errors: dict = field(default_factory=dict)
    base_seed: int | None = None

    @property
    def valid(self):
        return np.isfinite(self.values)

    @property
    def argmin(self):
        return select_params(self, allow_partial=True)

    def to_csv(self):
        """Matrix layout: one row per eta, one column per m."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eta\\m"] + [repr(v) for v in self.grid.m_values])
        for k, eta in enumerate(self.grid.eta_values):
            w.writerow([repr(eta)] + ["nan" if np.isnan(v) else repr(float(v))
                                      for v in self.values[:, k]])
        return buf.getvalue()

    def summary(self, allow_partial=False):
        m_star, eta_star = select_params(self, allow_partial=allow_partial)
        i = self.grid.m_values.index(m_star)
        k = self.grid.eta_values.index(eta_star)
        return {
            "m_star": m_star,
            "eta_star": eta_star,
            "crmse_min": float(self.values[i, k]),
            "grid": self.grid.to_dict(),
            "seeds": {"base_seed": self.base_seed,
                      "derivation": "SeedSequence([base_seed, c, round(m*1e9), round(eta*1e9)])"},
            "invalid_cells": [{"m": m, "eta": e, "error": msg}
                              for (m, e), msg in sorted(self.errors.items())],
        }


def read_surface_csv(text_or_path):
    """Parse a surface written in the matrix layout (eta rows, m columns)."""
    text = text_or_path
    if "\n" not in str(text_or_path):
        with open(text_or_path, encoding="utf-8") as fh:
            text = fh.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise DataError("surface file needs a header row and at least one data row")
    try:
        m_values = [float(v) for v in rows[0][1:]]
        eta_values = [float(r[0]) for r in rows[1:]]
        mat = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"malformed surface file: {exc}") from None
    if mat.shape != (len(eta_values), len(m_values)):
        raise DataError("surface file is ragged")
    grid = ParamGrid(tuple(m_values), tuple(eta_values))
    return CrmseSurface(grid=grid, values=mat.T.copy())


def _cell(X, template, m, eta, c_values, base_seed):
    """RMSE_U and RMSE_T for every c at one (m, eta); returns an error string on failure."""
    ru, rt = [], []
    try:
        for c in c_values:
            cfg = template.with_(c=c, m=m, eta=eta, seed=derive_seed(base_seed, m, eta, c))
            part = run_fpcm(X, cfg)
            ru.append(rmse(X, reconstruct_from_memberships(part.V, part.U)))
            rt.append(rmse(X, reconstruct_from_typicalities(part.V, normalize_typicality(part.T))))
    except (SolverError, DataError) as exc:
        return None, None, f"c={c}: {exc}"
    return ru, rt, None


def crmse_surface(data, grid, template=None, n_jobs=1):
    """Evaluate CRMSE over the whole grid.

    Every ``(m, eta, c)`` run is seeded independently from
    ``template.seed``, so the result is the same for any ``n_jobs``.
    """
    X = _points(data)
    grid = grid.resolved(X.shape[0])
    template = template or SolverConfig()
    cells = [(i, k, m, e) for i, m in enumerate(grid.m_values)
             for k, e in enumerate(grid.eta_values)]
    tasks = (delayed(_cell)(X, template, m, e, grid.c_values, template.seed) for _, _, m, e in cells)
    if n_jobs == 1:
        results = [fn(*a, **kw) for fn, a, kw in tasks]
    else:
        results = Parallel(n_jobs=n_jobs)(tasks)
    shape = (len(grid.m_values), len(grid.eta_values), len(grid.c_values))
    rmse_u = np.full(shape, np.nan)
    rmse_t = np.full(shape, np.nan)
    errors = {}
    for (i, k, m, e), (ru, rt, err) in zip(cells, results):
        if err is not None:
            errors[(m, e)] = err
            continue
        rmse_u[i, k] = ru
        rmse_t[i, k] = rt
    values = (rmse_u + rmse_t).sum(axis=2)
    return CrmseSurface(grid=grid, values=values, rmse_u=rmse_u, rmse_t=rmse_t,
                        errors=errors, base_seed=int(template.seed))


def select_params(surface, allow_partial=False):
    """Grid cell with the least CRMSE; ties go to smaller ``m``, then smaller ``eta``.

    Raises:
        SolverError: some cells are invalid and ``allow_partial`` is false, or
            no cell is valid.
    """
    vals = np.asarray(surface.values, dtype=float)
    bad = ~np.isfinite(vals)
    if bad.all():
        raise SolverError("no valid cells in the CRMSE surface")
    if bad.any() and not allow_partial:
        raise SolverError(f"{int(bad.sum())} invalid cell(s) in the CRMSE surface; "
                          "rerun with allow_partial to exclude them")
    flat = np.where(bad, np.inf, vals).ravel()
    i, k = np.unravel_index(int(np.argmin(flat)), vals.shape)
    return surface.grid.m_values[i], surface.grid.eta_values[k]


@dataclass(eq=False)
class Algorithm1Result:
    m_star: float
    eta_star: float
    c_star: int
    curve: object
    surface: CrmseSurface

    def to_dict(self, allow_partial=False):
        return {
            "m_star": self.m_star,
            "eta_star": self.eta_star,
            "c_star": self.c_star,
            "surface": self.surface.summary(allow_partial=allow_partial),
            "curve": self.curve.to_dict(),
            "selections": self.curve.selections(),
        }


def run_algorithm1(data, grid=None, template=None, n_jobs=1, allow_partial=False,
                   indices=COMPARATORS):
    """Grid search on CRMSE, then the FP curve at the winning ``(m, eta)``."""
    X = _points(data)
    grid = (grid or ParamGrid()).resolved(X.shape[0])
    template = template or SolverConfig()
    surface = crmse_surface(X, grid, template, n_jobs=n_jobs)
    m_star, eta_star = select_params(surface, allow_partial=allow_partial)
    curve = fp_curve(X, grid.c_values, m_star, eta_star, template, indices=indices, n_jobs=n_jobs)
    return Algorithm1Result(m_star, eta_star, select_c(curve, "FP"), curve, surface)


class FPCMModelSelector(BaseEstimator, ClusterMixin):
    """Pick ``m``, ``eta`` and the number of clusters, then fit FPCM.

    Parameters
    ----------
    m_values, eta_values : sequence of float
        Grid axes; defaults to the 12-point grid 1.2 ... 5.0.
    c_max : int or None
        Largest candidate ``c``; ``None`` means ``ceil(sqrt(n_samples))``.
    max_iter, tol, init : solver settings shared by every run.
    random_state : int
        Base seed; each run derives its own.
    n_jobs : int
    allow_partial : bool
        Ignore grid cells where the solver failed instead of raising.

    Attributes
    ----------
    m_, eta_, n_clusters_ : selected parameters
    surface_ : CrmseSurface
    curve_ : ValidityCurve
    best_estimator_ : FuzzyPossibilisticCMeans
    labels_, cluster_centers_
    """

    def __init__(self, m_values=TABLE2_VALUES, eta_values=TABLE2_VALUES, c_max=None,
                 max_iter=300, tol=1e-6, init="kmeans++", random_state=0, n_jobs=1,
                 allow_partial=False):
        self.m_values = m_values
        self.eta_values = eta_values
        self.c_max = c_max
        self.max_iter = max_iter
        self.tol = tol
        self.init = init
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.allow_partial = allow_partial

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        c_max = self.c_max or default_c_max(X.shape[0])
        grid = ParamGrid.with_c_max(c_max, self.m_values, self.eta_values)
        template = SolverConfig(max_iter=self.max_iter, tol=self.tol, init=self.init,
                                seed=int(self.random_state))
        res = run_algorithm1(X, grid, template, n_jobs=self.n_jobs,
                             allow_partial=self.allow_partial)
        self.m_, self.eta_, self.n_clusters_ = res.m_star, res.eta_star, res.c_star
        self.surface_ = res.surface
        self.curve_ = res.curve
        self.best_estimator_ = FuzzyPossibilisticCMeans(
            n_clusters=res.c_star, m=res.m_star, eta=res.eta_star, max_iter=self.max_iter,
            tol=self.tol, init=self.init,
            random_state=derive_seed(template.seed, res.m_star, res.eta_star, res.c_star),
        ).fit(X)
        self.labels_ = self.best_estimator_.labels_
        self.cluster_centers_ = self.best_estimator_.cluster_centers_
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict(X)

    def summary(self):
        check_is_fitted(self, "best_estimator_")
        return json.dumps({"m": self.m_, "eta": self.eta_, "c": self.n_clusters_})
