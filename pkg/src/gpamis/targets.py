"""Unnormalized log-posterior targets over log-space covariance parameters.

A :class:`TargetDensity` bundles ``log_f(theta, rng, counter)``, which returns
ln f(theta) or, for noisy targets, ln of an unbiased estimate of f(theta).
Exact targets may also provide ``value_and_grad(theta, counter)``.
Evaluation failures at extreme parameters (no SPD factor even with jitter,
non-converging EP) are reported as a log density of -inf.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import GPAmisError
from .gp.probit import approximate, pseudo_marginal_estimate
from .gp.regression import log_marginal_regression, value_and_grad_regression
from .linalg import FREE, LOG_2PI, cholesky

DEFAULT_PRIOR_SD = 3.0


@dataclass(frozen=True)
class LogSpacePrior:
    """Independent N(0, sd^2) on every log-parameter."""

    dim: int
    sd: float = DEFAULT_PRIOR_SD

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(-0.5 * np.sum(theta**2) / self.sd**2 - self.dim * (math.log(self.sd) + 0.5 * LOG_2PI))

    def grad(self, theta):
        return -np.asarray(theta, dtype=float) / self.sd**2


@dataclass
class TargetDensity:
    dim: int
    log_f: Callable
    is_noisy: bool = False
    value_and_grad: Optional[Callable] = None
    name: str = "target"

    def __call__(self, theta, rng=None, counter=None):
        return self.log_f(theta, rng, counter)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            with np.errstate(all="ignore"):
                value = fn(*args, **kwargs)
        except GPAmisError:
            return -math.inf
        return value if np.isfinite(value) else -math.inf

    return wrapper


def _guarded_grad(fn, dim):
    def wrapper(*args, **kwargs):
        try:
            with np.errstate(all="ignore"):
                value, grad = fn(*args, **kwargs)
        except GPAmisError:
            return -math.inf, np.full(dim, np.nan)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return -math.inf, np.full(dim, np.nan)
        return value, grad

    return wrapper


def regression_target(spec, data, prior_sd=DEFAULT_PRIOR_SD):
    """Exact GP-regression posterior: 1 cubic op per value, 3 per value+gradient."""
    dim = spec.n_params(regression=True)
    prior = LogSpacePrior(dim, prior_sd)

    @_guarded
    def log_f(theta, rng=None, counter=None):
        return log_marginal_regression(spec, theta, data, counter or FREE) + prior.log_density(theta)

    def vg(theta, counter=None):
        counter = counter or FREE
        value, grad = value_and_grad_regression(spec, theta, data, counter)
        return value + prior.log_density(theta), grad + prior.grad(theta)

    return TargetDensity(dim, log_f, False, _guarded_grad(vg, dim), name=f"gp-regression-{spec.family}")


def approx_evidence_target(spec, data, approx="ep", prior_sd=DEFAULT_PRIOR_SD):
    """Deterministic surrogate: LA/EP log-evidence plus log prior (for mode finding)."""
    dim = spec.n_params(regression=False)
    prior = LogSpacePrior(dim, prior_sd)

    @_guarded
    def log_f(theta, rng=None, counter=None):
        return approximate(approx, spec, theta, data, counter or FREE).log_evidence + prior.log_density(theta)

    return TargetDensity(dim, log_f, False, None, name=f"gp-probit-{approx}-evidence")


def classification_target(spec, data, approx="ep", n_imp=64, prior_sd=DEFAULT_PRIOR_SD):
    """Noisy probit posterior: exp(log_f) is unbiased for p(y|theta) p(theta)."""
    dim = spec.n_params(regression=False)
    prior = LogSpacePrior(dim, prior_sd)

    @_guarded
    def log_f(theta, rng, counter=None):
        counter = counter or FREE
        q = approximate(approx, spec, theta, data, counter)
        return pseudo_marginal_estimate(spec, theta, data, q, n_imp, rng, counter) + prior.log_density(theta)

    return TargetDensity(dim, log_f, True, None, name=f"gp-probit-{approx}-pm{n_imp}")


def gaussian_target(mean, cov, value_cost=1, grad_cost=3):
    """Multivariate normal test target that charges the regression op costs."""
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    dim = mean.shape[0]
    chol = cholesky(cov, FREE)
    prec = np.linalg.inv(cov)
    prec = 0.5 * (prec + prec.T)
    const = -0.5 * dim * LOG_2PI - float(np.sum(np.log(np.diag(chol.L))))

    def log_f(theta, rng=None, counter=None):
        if counter is not None:
            counter.add(value_cost)
        d = np.asarray(theta, dtype=float) - mean
        return const - 0.5 * float(d @ prec @ d)

    def vg(theta, counter=None):
        if counter is not None:
            counter.add(grad_cost)
        d = np.asarray(theta, dtype=float) - mean
        g = prec @ d
        return const - 0.5 * float(d @ g), -g

    return TargetDensity(dim, log_f, False, vg, name="gaussian")
