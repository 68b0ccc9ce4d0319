"""Probit GP classification: likelihood, Laplace and EP approximations, and the
importance-sampling estimate of the marginal likelihood p(y | theta).

Cubic-op accounting per call::

    laplace_approx  2 upfront + 1 per Newton iteration + 2 for the covariance
    ep_approx       2 upfront + 3 per sweep (posterior recomputed from sites)
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, logsumexp

from ..errors import AllWeightsDegenerate, NoConvergence, OscillationDetected
from ..linalg import (
    LOG_2PI,
    CholeskyFactor,
    cholesky,
    cholesky_with_jitter,
    mvn_log_density,
    mvn_sample,
    tri_solve,
)
from .kernels import kernel_matrix

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn

LOG_SQRT_2PI = 0.5 * LOG_2PI
SQRT2 = math.sqrt(2.0)
TAIL = -8.0


@dataclass
class GaussianApprox:
    mean: np.ndarray
    chol_cov: CholeskyFactor
    log_evidence: float
    prior_chol: CholeskyFactor
    iterations: int = 0
    method: str = ""


# ---------------------------------------------------------------- ln Phi


@njit(cache=True)
def _tail_log_ndtr(z):
    # asymptotic expansion of Phi(z) for z << 0; stop at the smallest term
    z2 = z * z
    total = 1.0
    term = 1.0
    for k in range(1, 40):
        nxt = -term * (2 * k - 1) / z2
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
    return -0.5 * z2 - math.log(-z) - 0.9189385332046727 + math.log(total)


@njit(cache=True)
def log_ndtr_scalar(z):
    if z > 0.0:
        return math.log1p(-0.5 * math.erfc(z / 1.4142135623730951))
    if z >= -8.0:
        return math.log(0.5 * math.erfc(-z / 1.4142135623730951))
    return _tail_log_ndtr(z)


def log_ndtr(z):
    """ln Phi(z), elementwise, stable far into the lower tail."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    hi = z > 0.0
    mid = (z <= 0.0) & (z >= TAIL)
    lo = z < TAIL
    out[hi] = np.log1p(-0.5 * erfc(z[hi] / SQRT2))
    out[mid] = np.log(0.5 * erfc(-z[mid] / SQRT2))
    if np.any(lo):
        out[lo] = [_tail_log_ndtr(float(v)) for v in z[lo]]
    return out if out.ndim else float(out)


def probit_log_likelihood(y, f):
    """ln Phi(y f) for labels in {-1, +1}."""
    return log_ndtr(np.asarray(y, dtype=float) * np.asarray(f, dtype=float))


def _mills(z):
    """phi(z) / Phi(z) computed in log space."""
    return np.exp(-0.5 * z * z - LOG_SQRT_2PI - log_ndtr(z))


def _probit_derivs(y, f):
    z = y * f
    r = _mills(z)
    grad = y * r
    W = r * r + z * r
    return grad, W


# ---------------------------------------------------------------- Laplace


def laplace_approx(spec, log_theta, data, counter, tol=1e-8, max_iter=50):
    """Newton mode-finding for p(f | y, theta) and the Laplace evidence."""
    y = data.y
    n = data.n
    K = kernel_matrix(spec, log_theta, data)
    prior_chol, _ = cholesky_with_jitter(K, counter)

    eye = np.eye(n)

    def factor_B(f):
        grad, W = _probit_derivs(y, f)
        sW = np.sqrt(W)
        L_B = cholesky(eye + sW[:, None] * K * sW[None, :], counter)
        return grad, W, sW, L_B

    def psi(a, f):
        return -0.5 * a @ f + float(np.sum(log_ndtr(y * f)))

    f = np.zeros(n)
    a = np.zeros(n)
    grad, W, sW, L_B = factor_B(f)
    obj = psi(a, f)
    iters = 0
    while True:
        b = W * f + grad
        a_new = b - sW * L_B.solve(sW * (K @ b))
        f_new = K @ a_new
        obj_new = psi(a_new, f_new)
        halvings = 0
        while obj_new < obj - 1e-12 * abs(obj) and halvings < 30:
            a_new = 0.5 * (a + a_new)
            f_new = K @ a_new
            obj_new = psi(a_new, f_new)
            halvings += 1
        iters += 1
        change = float(np.max(np.abs(f_new - f)))
        f, a, obj = f_new, a_new, obj_new
        grad, W, sW, L_B = factor_B(f)
        if change < tol:
            break
        if iters >= max_iter:
            raise NoConvergence(f"Laplace Newton iteration did not converge in {max_iter} iterations (last change {change:.2e})")

    log_evidence = obj - float(np.sum(np.log(np.diag(L_B.L))))
    # Sigma = K - K sW B^{-1} sW K, via V = L_B^{-1} (sW K): one cubic op for the
    # matrix solve, one for factorizing Sigma
    counter.add(1)
    V = tri_solve(L_B, sW[:, None] * K)
    Sigma = K - V.T @ V
    chol_cov, _ = cholesky_with_jitter(0.5 * (Sigma + Sigma.T), counter)
    return GaussianApprox(f, chol_cov, float(log_evidence), prior_chol, iters, "la")


# ---------------------------------------------------------------- EP


@njit(cache=True)
def _ep_sweep(Sigma, mu, ttau, tnu, y):
    n = y.shape[0]
    for i in range(n):
        sii = Sigma[i, i]
        tau_c = 1.0 / sii - ttau[i]
        if tau_c <= 0.0:
            continue
        nu_c = mu[i] / sii - tnu[i]
        s2 = 1.0 / tau_c
        m = nu_c * s2
        denom = math.sqrt(1.0 + s2)
        z = y[i] * m / denom
        r = math.exp(-0.5 * z * z - 0.9189385332046727 - log_ndtr_scalar(z))
        mu_hat = m + y[i] * s2 * r / denom
        s2_hat = s2 - s2 * s2 * r * (z + r) / (1.0 + s2)
        if s2_hat <= 0.0:
            continue
        ttau_new = 1.0 / s2_hat - tau_c
        if ttau_new < 0.0:
            continue
        dtau = ttau_new - ttau[i]
        ttau[i] = ttau_new
        tnu[i] = mu_hat / s2_hat - nu_c
        c = dtau / (1.0 + dtau * sii)
        si = Sigma[:, i].copy()
        for a in range(n):
            for b in range(n):
                Sigma[a, b] -= c * si[a] * si[b]
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += Sigma[a, b] * tnu[b]
            mu[a] = acc


def _ep_posterior(K, ttau, tnu, counter):
    n = K.shape[0]
    sW = np.sqrt(ttau)
    L = cholesky(np.eye(n) + sW[:, None] * K * sW[None, :], counter)
    counter.add(1)  # V = L^{-1} sW K
    V = tri_solve(L, sW[:, None] * K)
    counter.add(1)  # Sigma = K - V^T V
    Sigma = K - V.T @ V
    Sigma = 0.5 * (Sigma + Sigma.T)
    return L, Sigma, Sigma @ tnu


def _ep_log_evidence(L, Sigma, mu, ttau, tnu, y):
    diag = np.diag(Sigma)
    tau_c = 1.0 / diag - ttau
    nu_c = mu / diag - tnu
    s2 = 1.0 / tau_c
    m = nu_c * s2
    log_zhat = log_ndtr(y * m / np.sqrt(1.0 + s2))
    log_site_const = (
        log_zhat
        + 0.5 * np.log1p(ttau * s2)
        - 0.5 * (tnu + nu_c) ** 2 / (ttau + tau_c)
        + 0.5 * nu_c**2 / tau_c
    )
    return float(np.sum(log_site_const) - np.sum(np.log(np.diag(L.L))) + 0.5 * tnu @ Sigma @ tnu)


def ep_approx(spec, log_theta, data, counter, tol=1e-6, max_sweeps=50):
    """Sequential-site EP for the probit likelihood.

    Sites with a negative candidate precision are left unchanged for that
    sweep.  After every sweep the posterior is rebuilt from the sites.
    """
    y = np.ascontiguousarray(data.y, dtype=float)
    n = data.n
    K = kernel_matrix(spec, log_theta, data)
    prior_chol, _ = cholesky_with_jitter(K, counter)

    ttau = np.zeros(n)
    tnu = np.zeros(n)
    Sigma = K.copy()
    mu = np.zeros(n)
    history = []
    sweeps = 0
    while True:
        old_tau = ttau.copy()
        old_nu = tnu.copy()
        _ep_sweep(Sigma, mu, ttau, tnu, y)
        sweeps += 1
        L, Sigma, mu = _ep_posterior(K, ttau, tnu, counter)
        delta_tau = ttau - old_tau
        change = max(float(np.max(np.abs(delta_tau))), float(np.max(np.abs(tnu - old_nu))))
        if change < tol:
            break
        history.append(delta_tau)
        if _oscillating(history):
            raise OscillationDetected(f"EP site precisions oscillate after {sweeps} sweeps")
        if sweeps >= max_sweeps:
            raise NoConvergence(f"EP did not converge in {max_sweeps} sweeps (last change {change:.2e})")

    log_evidence = _ep_log_evidence(L, Sigma, mu, ttau, tnu, y)
    chol_cov, _ = cholesky_with_jitter(Sigma, counter)
    return GaussianApprox(mu, chol_cov, log_evidence, prior_chol, sweeps, "ep")


def _oscillating(history, window=6):
    """True when some site's update flips sign every sweep without shrinking."""
    if len(history) < window:
        return False
    recent = np.array(history[-window:])
    flips = np.all(recent[1:] * recent[:-1] < 0.0, axis=0)
    steady = np.all(np.abs(recent[2:]) >= 0.99 * np.abs(recent[:-2]), axis=0)
    return bool(np.any(flips & steady))


APPROXIMATIONS = {"la": laplace_approx, "ep": ep_approx}


def approximate(method, spec, log_theta, data, counter):
    try:
        fn = APPROXIMATIONS[method.lower()]
    except KeyError:
        raise ValueError(f"unknown latent approximation {method!r}; expected 'la' or 'ep'") from None
    return fn(spec, log_theta, data, counter)


# ---------------------------------------------------------------- pseudo-marginal


def pseudo_marginal_log_weights(data, approx, n_imp, rng, log_likelihood=None):
    """Log importance weights p(y|f) p(f|theta) / q(f) for ``n_imp`` draws f ~ q."""
    if n_imp < 1:
        raise ValueError("n_imp must be at least 1")
    F = mvn_sample(approx.mean, approx.chol_cov, rng, size=n_imp)
    if log_likelihood is None:
        log_lik = log_ndtr(F * data.y[None, :]).sum(axis=1)
    else:
        log_lik = np.asarray(log_likelihood(F), dtype=float)
    zero = np.zeros(data.n)
    log_prior = np.atleast_1d(mvn_log_density(F, zero, approx.prior_chol))
    log_q = np.atleast_1d(mvn_log_density(F, approx.mean, approx.chol_cov))
    return log_lik + log_prior - log_q


def pseudo_marginal_estimate(spec, log_theta, data, approx, n_imp, rng, counter=None, log_likelihood=None):
    """ln of the unbiased importance-sampling estimate of p(y | theta).

    ``approx`` must have been built at ``log_theta``; the draws reuse its
    factors so no further cubic ops are charged.
    """
    lw = pseudo_marginal_log_weights(data, approx, n_imp, rng, log_likelihood)
    if not np.any(np.isfinite(lw)):
        raise AllWeightsDegenerate("every latent importance weight is zero or non-finite")
    return float(logsumexp(lw) - math.log(n_imp))
