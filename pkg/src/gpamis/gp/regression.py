"""Exact GP regression marginal likelihood and its log-space gradient."""

import math

import numpy as np

from ..linalg import LOG_2PI, cholesky_with_jitter, inverse_from_chol, log_det_from_chol
from .kernels import covariance_matrix, kernel_derivatives


def _factor(spec, log_theta, data, counter):
    C = covariance_matrix(spec, log_theta, data, add_noise=True)
    chol, _ = cholesky_with_jitter(C, counter)
    return C, chol


def log_marginal_regression(spec, log_theta, data, counter):
    """ln N(y | 0, K + lambda I), constant included.  One Cholesky."""
    _, chol = _factor(spec, log_theta, data, counter)
    alpha = chol.solve(data.y)
    return float(-0.5 * log_det_from_chol(chol) - 0.5 * data.y @ alpha - 0.5 * data.n * LOG_2PI)


def value_and_grad_regression(spec, log_theta, data, counter):
    """Log marginal likelihood and its gradient w.r.t. log parameters.

    Charges 1 (Cholesky) + 2 (explicit inverse) = 3 cubic ops.
    """
    log_theta = np.asarray(log_theta, dtype=float)
    C, chol = _factor(spec, log_theta, data, counter)
    alpha = chol.solve(data.y)
    value = float(-0.5 * log_det_from_chol(chol) - 0.5 * data.y @ alpha - 0.5 * data.n * LOG_2PI)
    C_inv = inverse_from_chol(chol, counter)
    K = C.copy()
    K[np.diag_indices_from(K)] -= math.exp(log_theta[-1])
    # 0.5 * tr((alpha alpha^T - C^{-1}) dC), elementwise since both are symmetric
    inner = np.outer(alpha, alpha) - C_inv
    grad = np.array([0.5 * np.sum(inner * dC) for dC in kernel_derivatives(spec, log_theta, data, K, True)])
    return value, grad


def grad_log_marginal_regression(spec, log_theta, data, counter):
    return value_and_grad_regression(spec, log_theta, data, counter)[1]
