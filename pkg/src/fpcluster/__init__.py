"""Fuzzy-possibilistic c-means, the FP validity index, and (m, eta, c) selection."""
from .dataset import Dataset, MixtureSpec, load_bundled, load_csv
from .exceptions import DataError, DegenerateClusterError, FPClusterError, NumericalError, SolverError
from .fpcm import FuzzyCMeans, FuzzyPossibilisticCMeans, Partition, SolverConfig, run_fcm, run_fpcm
from .validity import ValidityCurve, fp_curve, select_c

__version__ = "0.1.0"

__all__ = [
    "Dataset", "MixtureSpec", "load_bundled", "load_csv",
    "DataError", "DegenerateClusterError", "FPClusterError", "NumericalError", "SolverError",
    "FuzzyCMeans", "FuzzyPossibilisticCMeans", "Partition", "SolverConfig", "run_fcm", "run_fpcm",
    "ValidityCurve", "fp_curve", "select_c",
]
