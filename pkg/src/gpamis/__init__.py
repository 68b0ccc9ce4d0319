"""Importance sampling and MCMC for Gaussian-process covariance parameters.

Samplers are compared by the number of cubic-cost linear-algebra operations
(Cholesky factorizations and inversions) they spend, tracked by
:class:`OpCounter`.
"""

from .errors import GPAmisError
from .gp import Dataset, KernelSpec
from .importance import Schedule, WeightedSampleStore, amis_mamis_run, amis_run, mamis_run
from .linalg import OpCounter
from .targets import TargetDensity, classification_target, gaussian_target, regression_target

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "GPAmisError",
    "KernelSpec",
    "OpCounter",
    "Schedule",
    "TargetDensity",
    "WeightedSampleStore",
    "amis_mamis_run",
    "amis_run",
    "classification_target",
    "gaussian_target",
    "mamis_run",
    "regression_target",
]
