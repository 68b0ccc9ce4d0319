from dataclasses import dataclass

import numpy as np

from ..linalg import FREE, cholesky

IDENTITY = "identity"
DIAG_INVERSE = "diag_inverse_approx_cov"
FULL_INVERSE = "inverse_approx_cov"
MASS_VARIANTS = (IDENTITY, DIAG_INVERSE, FULL_INVERSE)


@dataclass
class ChainState:
    """Current position with its cached log target (and gradient, if any).

    For pseudo-marginal chains ``log_target`` is the noisy estimate drawn when
    the state was accepted; it is reused verbatim until the next move.
    """

    theta: np.ndarray
    log_target: float
    grad: np.ndarray = None

    def copy(self):
        return ChainState(self.theta.copy(), self.log_target, None if self.grad is None else self.grad.copy())


def initial_state(target, theta, rng=None, counter=None, with_grad=False):
    theta = np.asarray(theta, dtype=float).copy()
    if with_grad:
        value, grad = target.value_and_grad(theta, counter)
        return ChainState(theta, value, grad)
    return ChainState(theta, target.log_f(theta, rng, counter))


class MassMatrix:
    """Momentum covariance M (kinetic energy p^T M^{-1} p / 2)."""

    def __init__(self, M, variant="custom", alpha=1.0):
        M = np.atleast_2d(np.asarray(M, dtype=float)) * alpha
        self.variant = variant
        self.alpha = alpha
        self.M = M
        self.chol = cholesky(M, FREE)
        self.inv = np.linalg.inv(M)
        self.inv = 0.5 * (self.inv + self.inv.T)

    @classmethod
    def build(cls, variant, approx_cov=None, dim=None, alpha=1.0):
        """identity / inverse of diag(approx cov) / inverse of approx cov."""
        if variant == IDENTITY:
            d = dim if dim is not None else np.atleast_2d(approx_cov).shape[0]
            return cls(np.eye(d), variant, alpha)
        cov = np.atleast_2d(np.asarray(approx_cov, dtype=float))
        if variant == DIAG_INVERSE:
            return cls(np.diag(1.0 / np.diag(cov)), variant, alpha)
        if variant == FULL_INVERSE:
            return cls(np.linalg.inv(cov), variant, alpha)
        raise ValueError(f"unknown mass-matrix variant {variant!r}; expected one of {MASS_VARIANTS}")

    @property
    def dim(self):
        return self.M.shape[0]

    def sample_momentum(self, rng):
        return self.chol.L @ rng.standard_normal(self.dim)

    def kinetic(self, p):
        return 0.5 * float(p @ self.inv @ p)

    def velocity(self, p):
        return self.inv @ p
