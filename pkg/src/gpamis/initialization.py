"""Mode finding, Hessian at the mode, and the Gaussian proposal families
N(m, a I), N(m, a (-H)^{-1}) and N(m, a diag((-H)^{-1})).
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import NoConvergence, NonFiniteObjective, NotNegativeDefinite
from .importance import ProposalParams
from .linalg import FREE

log = logging.getLogger(__name__)

IDENTITY = "identity"
FULL = "full"
DIAG = "diag"

FD_STEP = 1e-4
EIGEN_FLOOR = 1e-6


@dataclass
class ModeResult:
    m: np.ndarray
    H: np.ndarray
    op_cost: int
    log_target: float = float("nan")
    iterations: int = 0

    @property
    def approx_cov(self):
        return np.linalg.inv(-self.H)


def fd_gradient(fn, theta, h=FD_STEP):
    """Central differences of a scalar function."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for j in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (fn(theta + e) - fn(theta - e)) / (2.0 * h)
    return g


def find_mode(target, theta0=None, tol=1e-5, max_iter=200, counter=None, h=FD_STEP):
    """Quasi-Newton (BFGS) ascent of ``target`` to ||grad||_inf <= tol.

    Uses ``target.value_and_grad`` when available and central finite
    differences of ``target.log_f`` otherwise.  Every evaluation is charged to
    ``counter``.  Returns the mode; the Hessian slot is left empty.
    """
    counter = counter if counter is not None else FREE
    start = counter.cubic_ops
    theta0 = np.zeros(target.dim) if theta0 is None else np.asarray(theta0, dtype=float)

    if target.value_and_grad is not None:
        def objective(theta):
            value, grad = target.value_and_grad(theta, counter)
            return value, grad
    else:
        def value(theta):
            return target.log_f(theta, None, counter)

        def objective(theta):
            return value(theta), fd_gradient(value, theta, h)

    def negated(theta):
        v, g = objective(theta)
        if not np.isfinite(v) or not np.all(np.isfinite(g)):
            raise NonFiniteObjective(f"non-finite objective at {theta}")
        return -v, -g

    v0, g0 = negated(theta0)
    if np.max(np.abs(g0)) <= tol:
        return ModeResult(theta0.copy(), np.full((target.dim, target.dim), np.nan), counter.cubic_ops - start, -v0, 0)
    res = minimize(negated, theta0, jac=True, method="BFGS",
                   options={"gtol": tol, "maxiter": max_iter, "norm": np.inf})
    gmax = float(np.max(np.abs(res.jac)))
    if gmax > tol:
        if res.nit >= max_iter:
            raise NoConvergence(f"BFGS did not reach ||grad|| <= {tol} in {max_iter} iterations (||grad|| = {gmax:.2e})")
        if gmax > 100 * tol:
            raise NoConvergence(f"BFGS stopped early: {res.message} (||grad|| = {gmax:.2e})")
        log.warning("BFGS stopped with ||grad||_inf = %.2e (%s)", gmax, res.message)
    return ModeResult(np.asarray(res.x), np.full((target.dim, target.dim), np.nan), counter.cubic_ops - start, -float(res.fun), int(res.nit))


def repair_negative_definite(H):
    """Floor the eigenvalues of -H at EIGEN_FLOOR * max eigenvalue."""
    A = -0.5 * (H + H.T)
    vals, vecs = np.linalg.eigh(A)
    top = vals.max()
    if not np.isfinite(top) or top <= 0.0:
        raise NotNegativeDefinite("Hessian has no negative curvature direction")
    floor = EIGEN_FLOOR * top
    if np.all(vals > floor):
        return 0.5 * (H + H.T)
    log.warning("flooring %d Hessian eigenvalue(s) at %.2e", int(np.sum(vals <= floor)), floor)
    vals = np.maximum(vals, floor)
    A = (vecs * vals) @ vecs.T
    return -0.5 * (A + A.T)


def hessian_at_mode(target, m, h=FD_STEP, counter=None, use_gradient=True):
    """Central finite-difference Hessian of ``target`` at ``m``, symmetrized and repaired.

    Differences the analytic gradient when the target has one (and
    ``use_gradient``), otherwise uses the four-point value stencil.
    """
    counter = counter if counter is not None else FREE
    m = np.asarray(m, dtype=float)
    d = m.shape[0]
    H = np.empty((d, d))
    eye = np.eye(d) * h
    if use_gradient and target.value_and_grad is not None:
        for j in range(d):
            gp = target.value_and_grad(m + eye[j], counter)[1]
            gm = target.value_and_grad(m - eye[j], counter)[1]
            H[:, j] = (gp - gm) / (2.0 * h)
    else:
        def f(x):
            return target.log_f(x, None, counter)

        f0 = f(m)
        for i in range(d):
            H[i, i] = (f(m + eye[i]) - 2.0 * f0 + f(m - eye[i])) / h**2
            for j in range(i):
                val = (f(m + eye[i] + eye[j]) - f(m + eye[i] - eye[j])
                       - f(m - eye[i] + eye[j]) + f(m - eye[i] - eye[j])) / (4.0 * h * h)
                H[i, j] = H[j, i] = val
    if not np.all(np.isfinite(H)):
        raise NotNegativeDefinite("finite-difference Hessian is not finite")
    return repair_negative_definite(0.5 * (H + H.T))


def initialize(target, theta0=None, counter=None, tol=1e-5, max_iter=200, h=FD_STEP):
    """Mode plus repaired Hessian, with the total op cost of both."""
    counter = counter if counter is not None else FREE
    start = counter.cubic_ops
    mode = find_mode(target, theta0, tol, max_iter, counter, h)
    mode.H = hessian_at_mode(target, mode.m, h, counter)
    mode.op_cost = counter.cubic_ops - start
    return mode


def build_proposal(variant, m, H, alpha=1.0):
    """N(m, alpha I), N(m, alpha (-H)^{-1}) or N(m, alpha diag((-H)^{-1}))."""
    m = np.asarray(m, dtype=float)
    d = m.shape[0]
    if variant == IDENTITY:
        cov = alpha * np.eye(d)
    else:
        full = np.linalg.inv(-np.asarray(H, dtype=float))
        full = 0.5 * (full + full.T)
        if variant == FULL:
            cov = alpha * full
        elif variant == DIAG:
            cov = alpha * np.diag(np.diag(full))
        else:
            raise ValueError(f"unknown proposal variant {variant!r}")
    return ProposalParams.from_cov(m, cov)
