"""Squared-exponential covariance functions over log-space parameters.

Parameter layout (all natural logs)::

    RBF:  [ln sigma, ln tau]            (+ ln lambda for regression)
    ARD:  [ln sigma, ln tau_1..tau_d]   (+ ln lambda for regression)

``sigma`` is the marginal variance and the exponent carries no factor 1/2:
k(x, x') = sigma * exp(-sum_r (x_r - x'_r)^2 / tau_r^2).
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import DimensionMismatch

RBF = "rbf"
ARD = "ard"


@dataclass(frozen=True)
class KernelSpec:
    family: str
    input_dim: int

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in (RBF, ARD):
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")

    @property
    def n_kernel_params(self):
        return 2 if self.family == RBF else self.input_dim + 1

    def n_params(self, regression):
        return self.n_kernel_params + (1 if regression else 0)

    def param_names(self, regression):
        names = ["log_sigma"]
        if self.family == RBF:
            names.append("log_tau")
        else:
            names += [f"log_tau_{r + 1}" for r in range(self.input_dim)]
        if regression:
            names.append("log_lambda")
        return names


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str = "regression"
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]}")
        if self.task == "classification" and not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("classification labels must be -1 or +1")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @cached_property
    def sq_diffs(self):
        """Per-feature squared differences, shape (d, n, n)."""
        diff = self.X[:, None, :] - self.X[None, :, :]
        return np.ascontiguousarray(np.moveaxis(diff * diff, -1, 0))

    @cached_property
    def sq_dist(self):
        return self.sq_diffs.sum(axis=0)


def split_params(spec, log_theta, regression):
    """Return (sigma, tau array, lambda or None) from a log-space vector."""
    log_theta = np.asarray(log_theta, dtype=float)
    expected = spec.n_params(regression)
    if log_theta.shape != (expected,):
        raise DimensionMismatch(f"{spec.family} kernel expects {expected} parameters, got {log_theta.shape}")
    vals = np.exp(log_theta)
    sigma = vals[0]
    tau = vals[1 : spec.n_kernel_params]
    lam = vals[-1] if regression else None
    return sigma, tau, lam


def kernel_eval(spec, log_theta, xi, xj):
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if xi.shape != (spec.input_dim,) or xj.shape != (spec.input_dim,):
        raise DimensionMismatch(f"inputs must have length {spec.input_dim}")
    log_theta = np.asarray(log_theta, dtype=float)
    sigma = np.exp(log_theta[0])
    if spec.family == RBF:
        tau = np.exp(log_theta[1])
        return float(sigma * np.exp(-np.sum((xi - xj) ** 2) / tau**2))
    tau = np.exp(log_theta[1 : spec.input_dim + 1])
    return float(sigma * np.exp(-np.sum((xi - xj) ** 2 / tau**2)))


def scaled_sq_dist(spec, tau, data):
    if spec.family == RBF:
        return data.sq_dist / tau[0] ** 2
    return np.tensordot(1.0 / tau**2, data.sq_diffs, axes=1)


def kernel_matrix(spec, log_theta, data, regression=False):
    """K for the kernel part of ``log_theta``; no cubic cost."""
    sigma, tau, _ = split_params(spec, log_theta, regression)
    return sigma * np.exp(-scaled_sq_dist(spec, tau, data))


def covariance_matrix(spec, log_theta, data, add_noise, counter=None):
    """K, or C = K + lambda I when ``add_noise``; assembly is O(n^2 d) so ``counter`` is untouched."""
    K = kernel_matrix(spec, log_theta, data, regression=add_noise)
    if add_noise:
        K[np.diag_indices_from(K)] += np.exp(log_theta[-1])
    return K


def kernel_derivatives(spec, log_theta, data, K, regression):
    """dC/d(log theta_j) for every parameter, as a list of n x n arrays."""
    _, tau, lam = split_params(spec, log_theta, regression)
    derivs = [K]
    if spec.family == RBF:
        derivs.append(K * (2.0 * data.sq_dist / tau[0] ** 2))
    else:
        for r in range(spec.input_dim):
            derivs.append(K * (2.0 * data.sq_diffs[r] / tau[r] ** 2))
    if regression:
        derivs.append(lam * np.eye(data.n))
    return derivs
