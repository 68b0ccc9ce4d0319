"""Desk-scale oracle checks run by ``gpamis check``.

Each check returns ``(passed, detail)``.  The oracles are independent of the
code under test: finite differences, tensor Gauss-Hermite quadrature, a
from-scratch loop over mixture components, and the exact n=1 probit
marginal of 1/2.
"""

import math
from collections import OrderedDict

import numpy as np
from scipy.special import log_ndtr as scipy_log_ndtr
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from .gp.kernels import Dataset, KernelSpec, covariance_matrix
from .gp.probit import ep_approx, laplace_approx, log_ndtr, pseudo_marginal_log_weights
from .gp.regression import log_marginal_regression, value_and_grad_regression
from .harness.traces import ConvergenceTrace, iqr_aggregate
from .importance import ProposalParams, Schedule, amis_run
from .initialization import fd_gradient
from .linalg import FREE, OpCounter, make_rng
from .targets import gaussian_target


def random_regression_instance(rng, family=None):
    n = int(rng.integers(2, 11))
    d = int(rng.integers(1, 4))
    family = family or ("rbf" if rng.random() < 0.5 else "ard")
    spec = KernelSpec(family, d)
    data = Dataset(rng.normal(size=(n, d)), rng.normal(size=n))
    theta = rng.uniform(-1.0, 1.0, size=spec.n_params(True))
    return spec, data, theta


def gradient_errors(rng, instances=100, h=1e-5):
    """Worst per-component relative error of the analytic gradient."""
    worst = 0.0
    for k in range(instances):
        spec, data, theta = random_regression_instance(rng, "rbf" if k % 2 == 0 else "ard")
        _, grad = value_and_grad_regression(spec, theta, data, FREE)
        fd = fd_gradient(lambda t: log_marginal_regression(spec, t, data, FREE), theta, h)
        scale = np.maximum(np.abs(fd), 1.0)
        worst = max(worst, float(np.max(np.abs(grad - fd) / scale)))
    return worst


def probit_quadrature_log_evidence(spec, theta, data, nodes=64):
    """ln p(y|theta) for small n by tensor Gauss-Hermite quadrature."""
    K = covariance_matrix(spec, theta, data, add_noise=False)
    L = np.linalg.cholesky(K + 1e-12 * np.eye(data.n))
    x, w = np.polynomial.hermite.hermgauss(nodes)
    grids = np.meshgrid(*([x] * data.n), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1) * math.sqrt(2.0)
    W = np.ones(Z.shape[0])
    for g in np.meshgrid(*([w] * data.n), indexing="ij"):
        W = W * g.ravel()
    F = Z @ L.T
    log_terms = scipy_log_ndtr(F * data.y).sum(axis=1) + np.log(W)
    return float(logsumexp(log_terms) - 0.5 * data.n * math.log(math.pi))


def random_probit_instance(rng, n=2):
    d = 1
    spec = KernelSpec("rbf", d)
    data = Dataset(rng.normal(size=(n, d)), rng.choice([-1.0, 1.0], size=n), task="classification")
    theta = rng.uniform(-1.0, 1.0, size=2)
    return spec, data, theta


def la_ep_errors(rng, instances=20):
    la_err = ep_err = 0.0
    for _ in range(instances):
        spec, data, theta = random_probit_instance(rng)
        truth = probit_quadrature_log_evidence(spec, theta, data)
        la_err = max(la_err, abs(laplace_approx(spec, theta, data, FREE).log_evidence - truth))
        ep_err = max(ep_err, abs(ep_approx(spec, theta, data, FREE).log_evidence - truth))
    return la_err, ep_err


def single_point_probit():
    """n=1 probit with unit prior variance; its marginal likelihood is exactly 1/2."""
    spec = KernelSpec("rbf", 1)
    data = Dataset(np.zeros((1, 1)), np.ones(1), task="classification")
    return spec, data, np.zeros(2)


def pm_mean_and_se(method, replications, n_imp, rng):
    """Mean and standard error of exp(ln p-hat) over independent replications."""
    spec, data, theta = single_point_probit()
    approx = (laplace_approx if method == "la" else ep_approx)(spec, theta, data, FREE)
    est = np.empty(replications)
    chunk = max(1, 200000 // n_imp)
    for start in range(0, replications, chunk):
        m = min(chunk, replications - start)
        lw = pseudo_marginal_log_weights(data, approx, n_imp * m, rng).reshape(m, n_imp)
        est[start:start + m] = np.exp(logsumexp(lw, axis=1) - math.log(n_imp))
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(replications))


def scratch_log_delta(thetas, proposals, sizes):
    """ln sum_m N_m q_m(theta_i), looping over components with scipy densities."""
    out = np.empty(thetas.shape[0])
    for i, x in enumerate(thetas):
        total = 0.0
        for q, n in zip(proposals, sizes):
            total += n * multivariate_normal(q.mean, q.cov).pdf(x)
        out[i] = math.log(total)
    return out


def toy_amis(rng, T=4, n=30):
    target = gaussian_target(np.array([0.5, -0.3]), np.array([[1.0, 0.6], [0.6, 2.0]]))
    gamma0 = ProposalParams.from_cov(np.zeros(2), 4.0 * np.eye(2))
    return amis_run(target, gamma0, Schedule(T, n), rng=rng)


def mixture_error(rng, T=4):
    store = toy_amis(rng, T)
    scratch = scratch_log_delta(store.thetas, store.proposals, store.sizes)
    return float(np.max(np.abs(np.exp(store.log_delta - scratch) - 1.0)))


def check_gradient_fd(seed=0):
    err = gradient_errors(make_rng(seed), instances=20)
    return err <= 1e-5, f"max relative gradient error {err:.2e} (tol 1e-5)"


def check_la_ep_quadrature(seed=0):
    la, ep = la_ep_errors(make_rng(seed), instances=5)
    return la <= 0.05 and ep <= 0.01, f"max |LA - quad| {la:.4f} (tol 0.05), max |EP - quad| {ep:.4f} (tol 0.01)"


def check_pm_unbiasedness(seed=0, replications=20000):
    rng = make_rng(seed)
    parts, ok = [], True
    for method in ("la", "ep"):
        mean, se = pm_mean_and_se(method, replications, 64, rng)
        ok &= abs(mean - 0.5) <= 3.0 * se
        parts.append(f"{method.upper()} mean {mean:.5f} +/- {se:.5f}")
    return ok, "; ".join(parts) + " (truth 0.5, 3 SE)"


def check_mixture_oracle(seed=0):
    err = mixture_error(make_rng(seed))
    store = toy_amis(make_rng(seed + 1), T=1)
    classical, _ = store.classical_log_weights(0)
    same = np.array_equal(store.log_weights, classical)
    return err <= 1e-10 and same, f"incremental vs scratch delta rel. error {err:.2e} (tol 1e-10); T=1 classical weights equal: {same}"


def check_op_accounting(seed=0):
    rng = make_rng(seed)
    spec, data, theta = random_regression_instance(rng)
    c = OpCounter()
    log_marginal_regression(spec, theta, data, c)
    reg_value = c.cubic_ops
    c = OpCounter()
    value_and_grad_regression(spec, theta, data, c)
    reg_grad = c.cubic_ops
    pspec, pdata, ptheta = random_probit_instance(rng, n=8)
    c = OpCounter()
    la = laplace_approx(pspec, ptheta, pdata, c)
    la_ok = c.cubic_ops == 2 + la.iterations + 2
    c = OpCounter()
    ep = ep_approx(pspec, ptheta, pdata, c)
    ep_ok = c.cubic_ops == 2 + 3 * ep.iterations
    ok = reg_value == 1 and reg_grad == 3 and la_ok and ep_ok
    return ok, f"value {reg_value}, value+grad {reg_grad}, LA ok {la_ok}, EP ok {ep_ok}"


def check_iqr_quantiles(seed=0):
    traces = []
    for v in (3.0, 1.0, 5.0, 2.0, 4.0):
        t = ConvergenceTrace()
        t.record(1, v)
        traces.append(t)
    c = iqr_aggregate(traces, [1.0, 10.0])
    ok = np.allclose([c.q1[0], c.median[0], c.q3[0]], [2.0, 3.0, 4.0])
    return ok, f"Q1/median/Q3 of 1..5 = {c.q1[0]:g}/{c.median[0]:g}/{c.q3[0]:g}"


def check_log_ndtr(seed=0):
    z = np.concatenate([np.linspace(-40.0, 10.0, 2001), [-1e3, 0.0]])
    err = float(np.max(np.abs(log_ndtr(z) - scipy_log_ndtr(z)) / np.maximum(1.0, np.abs(scipy_log_ndtr(z)))))
    return err <= 1e-12, f"max relative error vs scipy {err:.2e}"


CHECKS = OrderedDict(
    [
        ("gradient-fd", check_gradient_fd),
        ("la-ep-quadrature", check_la_ep_quadrature),
        ("pm-unbiasedness", check_pm_unbiasedness),
        ("mixture-oracle", check_mixture_oracle),
        ("op-accounting", check_op_accounting),
        ("iqr-quantiles", check_iqr_quantiles),
        ("log-ndtr", check_log_ndtr),
    ]
)


def run_checks(only=None, seed=0):
    """Run the named checks (all by default); returns [(name, passed, detail)]."""
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}; available: {', '.join(CHECKS)}")
    results = []
    for name in names:
        try:
            ok, detail = CHECKS[name](seed)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
