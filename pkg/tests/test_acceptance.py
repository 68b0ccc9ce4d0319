"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict in ``REPORT``; the
conftest hook prints them in the terminal summary.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from gpamis.checks import (
    la_ep_errors,
    mixture_error,
    pm_mean_and_se,
    random_probit_instance,
    random_regression_instance,
    toy_amis,
)
from gpamis.config import default_config
from gpamis.gp import Dataset
from gpamis.gp.probit import ep_approx, laplace_approx
from gpamis.gp.regression import log_marginal_regression, value_and_grad_regression
from gpamis.harness import iqr_aggregate, load_dataset, stabilization_point, synthetic_regression
from gpamis.harness.experiment import prepare, run_experiment, run_sweep, write_run
from gpamis.linalg import FREE, OpCounter, cholesky, make_rng
from gpamis.mcmc import (
    FULL_INVERSE,
    ChainState,
    DualAveragingParams,
    MassMatrix,
    hmc_step,
    initial_state,
    min_ess,
    nuts_step,
    nutsda_run,
    run_mh,
    slice_step,
    tune_scale,
)
from gpamis.targets import gaussian_target

REPORT = {}
GLASS = Path(__file__).resolve().parents[1] / "data" / "glass2.csv"


def verdict(number, ok, detail):
    REPORT[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(REPORT[number])
    return ok


# ----------------------------------------------------------------------------- 1


def test_criterion_1_gradient_correctness():
    start = time.perf_counter()
    rng = make_rng(101)
    h = 1e-5
    worst = 0.0
    for k in range(100):
        spec, data, theta = random_regression_instance(rng, "rbf" if k % 2 == 0 else "ard")
        _, grad = value_and_grad_regression(spec, theta, data, FREE)
        fd = np.empty_like(theta)
        for j in range(theta.size):
            e = np.zeros_like(theta)
            e[j] = h
            fd[j] = (log_marginal_regression(spec, theta + e, data, FREE)
                     - log_marginal_regression(spec, theta - e, data, FREE)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1.0))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 10
    verdict(1, ok, f"max relative error {worst:.2e} (tol 1e-5) over 100 instances, {elapsed:.1f}s (< 10s)")
    assert ok


# ----------------------------------------------------------------------------- 2


def test_criterion_2_pseudo_marginal_unbiasedness():
    start = time.perf_counter()
    rng = make_rng(202)
    parts, ok = [], True
    for method in ("la", "ep"):
        mean, se = pm_mean_and_se(method, 100000, 64, rng)
        ok &= abs(mean - 0.5) <= 3 * se
        parts.append(f"{method.upper()} {mean:.5f} +/- {se:.5f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    verdict(2, ok, f"{'; '.join(parts)} vs 0.5 within 3 SE, 1e5 replications, {elapsed:.1f}s (< 60s)")
    assert ok


# ----------------------------------------------------------------------------- 3


def test_criterion_3_la_ep_accuracy():
    start = time.perf_counter()
    la, ep = la_ep_errors(make_rng(303), instances=20)
    elapsed = time.perf_counter() - start
    ok = la <= 0.05 and ep <= 0.01 and elapsed < 60
    verdict(3, ok, f"max |LA - quadrature| {la:.4f} (tol 0.05), max |EP - quadrature| {ep:.5f} (tol 0.01), "
                   f"{elapsed:.1f}s")
    assert ok


# ----------------------------------------------------------------------------- 4


def test_criterion_4_mixture_fidelity():
    worst = max(mixture_error(make_rng(400 + T), T) for T in range(1, 6))
    same = True
    for seed in range(5):
        store = toy_amis(make_rng(410 + seed), T=1)
        classical, _ = store.classical_log_weights(0)
        same &= bool(np.array_equal(store.log_weights, classical))
    ok = worst <= 1e-10 and same
    verdict(4, ok, f"incremental vs scratch delta max rel. error {worst:.2e} (tol 1e-10) for T=1..5; "
                   f"T=1 weights identical to classical IS: {same}")
    assert ok


# ----------------------------------------------------------------------------- 5

MEAN5 = np.array([1.0, -0.5])
COV5 = np.array([[1.0, 0.7], [0.7, 2.0]])
ESS_TARGET = 100000


def _collect(step, chunk):
    """Run ``step`` in chunks until every coordinate has ESS >= ESS_TARGET."""
    draws = []
    while True:
        draws.extend(step() for _ in range(chunk))
        X = np.asarray(draws)
        if min_ess(X) >= ESS_TARGET:
            return X


def _mh_chain(target, rng):
    shape = cholesky(COV5, FREE)
    box = {"s": initial_state(target, MEAN5)}

    def pilot(alpha, n):
        box["s"], rate = run_mh(box["s"], type(shape)(math.sqrt(alpha) * shape.L), target, n, rng)
        return rate

    alpha = tune_scale(pilot, 0.25).alpha
    chol = type(shape)(math.sqrt(alpha) * shape.L)
    acc = [0, 0]

    def step():
        box["s"], ok = run_mh(box["s"], chol, target, 1, rng)
        acc[0] += ok
        acc[1] += 1
        return box["s"].theta

    X = _collect(step, 100000)
    return X, acc[0] / acc[1]


def _hmc_chain(target, rng, mass):
    box = {"s": initial_state(target, MEAN5, with_grad=True)}

    def pilot(eps, n):
        hits = 0
        for _ in range(n):
            box["s"], ok, _ = hmc_step(box["s"], mass, eps, 10, target, rng)
            hits += ok
        return hits / n

    eps = tune_scale(pilot, 0.65, alpha0=0.1).alpha
    acc = [0, 0]

    def step():
        box["s"], ok, _ = hmc_step(box["s"], mass, eps, 10, target, rng)
        acc[0] += ok
        acc[1] += 1
        return box["s"].theta

    X = _collect(step, 20000)
    return X, acc[0] / acc[1]


def _nuts_chain(target, rng, mass, eps):
    box = {"s": initial_state(target, MEAN5, with_grad=True)}
    stats = []

    def step():
        box["s"], info = nuts_step(box["s"], mass, eps, target, rng)
        stats.append(info.accept_stat)
        return box["s"].theta

    return _collect(step, 20000), float(np.mean(stats))


def _nutsda_chain(target, rng, mass):
    first = nutsda_run(initial_state(target, MEAN5, with_grad=True), mass, DualAveragingParams(), 1000, 20000,
                       target, rng)
    draws = list(first.samples)
    stats = list(first.accept_stats)
    state = first.state
    while min_ess(np.asarray(draws)) < ESS_TARGET:
        for _ in range(20000):
            state, info = nuts_step(state, mass, first.eps_final, target, rng)
            draws.append(state.theta)
            stats.append(info.accept_stat)
    return np.asarray(draws), float(np.mean(stats))


def _slice_chain(target, rng):
    box = {"s": initial_state(target, MEAN5)}

    def step():
        box["s"] = slice_step(box["s"], 1.5, target, rng)
        return box["s"].theta

    return _collect(step, 50000), None


def test_criterion_5_sampler_agreement():
    start = time.perf_counter()
    target = gaussian_target(MEAN5, COV5)
    mass = MassMatrix.build(FULL_INVERSE, COV5)
    chains = {
        "MH": _mh_chain(target, make_rng(501)),
        "HMC": _hmc_chain(target, make_rng(502), mass),
        "NUTS": _nuts_chain(target, make_rng(503), mass, 0.3),
        "NUTSDA": _nutsda_chain(target, make_rng(504), mass),
        "SS": _slice_chain(target, make_rng(505)),
    }
    bands = {"MH": (0.20, 0.30), "HMC": (0.55, 0.75), "NUTSDA": (0.55, 0.75)}
    scale = np.sqrt(np.outer(np.diag(COV5), np.diag(COV5)))
    ok, parts = True, []
    for name, (X, rate) in chains.items():
        mean_err = float(np.max(np.abs(X.mean(axis=0) - MEAN5)))
        cov_err = float(np.max(np.abs(np.cov(X.T) - COV5) / scale))
        good = mean_err <= 0.03 and cov_err <= 0.05 and min_ess(X) >= ESS_TARGET
        text = f"{name} n={len(X)} mean err {mean_err:.4f} cov err {100 * cov_err:.2f}%"
        if name in bands:
            lo, hi = bands[name]
            good &= lo <= rate <= hi
            text += f" rate {rate:.3f} in [{lo}, {hi}]"
        elif rate is not None:
            text += f" mean accept stat {rate:.3f}"
        ok &= good
        parts.append(text)
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    verdict(5, ok, "; ".join(parts) + f"; {elapsed:.0f}s (< 300s)")
    assert ok


# ----------------------------------------------------------------------------- 6

# posterior mean of ||theta|| by 44^3-point grid quadrature on this data set
TRUTH6 = 2.3377


def test_criterion_6_cross_method_consistency():
    start = time.perf_counter()
    X, y = synthetic_regression(100, 2, seed=11)
    data = Dataset(X, y - y.mean(), name="synthetic100")
    config = default_config()
    for key, value in {"amis.iterations": 100, "amis.samples": 25, "run.replicates": 20, "run.budget": 20000,
                       "run.seed": 6, "sweep.samplers": "amis,mamis,mh-h,nuts-h,ss"}.items():
        config[key] = value
    results, errors = run_sweep(config, data)
    finals = {name: float(r.curve.median[-1]) for name, r in results.items()}
    spread = (max(finals.values()) - min(finals.values())) / min(finals.values()) if finals else math.inf

    def iqr_at(name, ops):
        c = iqr_aggregate(results[name].traces, np.array([float(ops)]))
        return float(c.q3[0] - c.q1[0])

    amis_iqr, mh_iqr = iqr_at("amis", 5000), iqr_at("mh-h", 5000)
    elapsed = time.perf_counter() - start
    ok = (not errors and len(finals) == 5 and spread <= 0.02 and amis_iqr <= mh_iqr and elapsed < 900
          and all(not r.failures for r in results.values()))
    medians = ", ".join(f"{k} {v:.4f}" for k, v in finals.items())
    verdict(6, ok, f"medians at 2e4 ops: {medians} (quadrature {TRUTH6}); spread {100 * spread:.2f}% (tol 2%); "
                   f"IQR at 5e3 AMIS {amis_iqr:.4f} <= MH-H {mh_iqr:.4f}; {elapsed:.0f}s (< 900s)")
    assert ok


# ----------------------------------------------------------------------------- 7

BUDGET7 = 100000
# posterior mean of ||theta|| under the EP-evidence posterior, 181 x 161 grid
TRUTH7 = 2.5986


def test_criterion_7_pm_amis_vs_pm_mh():
    start = time.perf_counter()
    base = default_config()
    for key, value in {"data.path": str(GLASS), "data.task": "classification", "data.subsample": 60,
                       "data.positive_class": "1", "model.approx": "ep", "pm_amis.iterations": 60,
                       "pm_amis.samples": 70, "run.replicates": 20, "run.budget": BUDGET7, "run.seed": 7}.items():
        base[key] = value
    data = load_dataset(GLASS, "classification", 60, 7, positive_class=1)
    stable, median_only, curves, failures = {}, {}, {}, {}
    for n_imp in (1, 64):
        config = base.copy()
        config["model.n_imp"] = n_imp
        problem = prepare(config, data)
        for name in ("pm-amis", "pm-mh"):
            result = run_experiment(config, problem=problem, sampler=name)
            curves[name, n_imp] = result.curve
            stable[name, n_imp] = stabilization_point(result.curve)
            median_only[name, n_imp] = stabilization_point(result.curve, band=False)
            failures[name, n_imp] = len(result.failures)
    faster = all(stable[name, 64] < stable[name, 1] for name in ("pm-amis", "pm-mh"))
    amis, mh = curves["pm-amis", 64], curves["pm-mh", 64]
    inside = bool(mh.q1[-1] <= amis.median[-1] <= mh.q3[-1])
    elapsed = time.perf_counter() - start
    ok = faster and inside and elapsed < 1800
    stab = ", ".join(f"{n} Nimp={k}: {stable[n, k]:.0f} (median alone {median_only[n, k]:.0f})"
                     for n, k in sorted(stable))
    fails = sum(failures.values())
    verdict(7, ok, f"2%-stable band at ({stab}) ops; PM-AMIS median {amis.median[-1]:.4f} in PM-MH IQR "
                   f"[{mh.q1[-1]:.4f}, {mh.q3[-1]:.4f}]: {inside} (grid value {TRUTH7}); "
                   f"{fails} failed replicate(s); {elapsed:.0f}s (< 1800s)")
    assert ok


# ----------------------------------------------------------------------------- 8


def test_criterion_8_op_accounting(monkeypatch):
    factorizations = []
    real = np.linalg.cholesky

    def counting(M):
        try:
            out = real(M)
        except np.linalg.LinAlgError:
            factorizations.append(False)
            raise
        factorizations.append(True)
        return out

    def failed():
        return factorizations.count(False)

    monkeypatch.setattr(np.linalg, "cholesky", counting)
    rng = make_rng(808)
    ok, notes = True, []
    for _ in range(20):
        spec, data, theta = random_regression_instance(rng)
        c = OpCounter()
        factorizations.clear()
        log_marginal_regression(spec, theta, data, c)
        ok &= c.cubic_ops == 1 and len(factorizations) == 1
        c = OpCounter()
        value_and_grad_regression(spec, theta, data, c)
        ok &= c.cubic_ops == 3
    notes.append(f"regression value 1 / value+grad 3: {ok}")
    la_ok = ep_ok = True
    retries = 0
    for n in (3, 8, 15):
        for _ in range(5):
            spec, data, theta = random_probit_instance(rng, n)
            # a failed factorization before a jitter retry is charged on top
            c = OpCounter()
            factorizations.clear()
            la = laplace_approx(spec, theta, data, c)
            la_ok &= c.cubic_ops == 2 + la.iterations + 2 + failed()
            retries += failed()
            c = OpCounter()
            factorizations.clear()
            ep = ep_approx(spec, theta, data, c)
            ep_ok &= c.cubic_ops == 2 + 3 * ep.iterations + failed()
            retries += failed()
    notes.append(f"LA 2+iters+2: {la_ok}; EP 2+3*sweeps: {ep_ok} ({retries} charged jitter retries)")
    monkeypatch.setattr(np.linalg, "cholesky", real)
    target = gaussian_target(np.zeros(2), np.eye(2))
    c = OpCounter()
    state = initial_state(target, np.zeros(2), counter=c)
    run_mh(state, cholesky(np.eye(2), FREE), target, 40, make_rng(1), c)
    mh_ok = c.cubic_ops == 41
    c = OpCounter()
    state = ChainState(np.zeros(2), *target.value_and_grad(np.zeros(2)))
    _, info = nuts_step(state, MassMatrix(np.eye(2)), 0.2, target, make_rng(2), c)
    nuts_ok = c.cubic_ops == 3 * info.n_leapfrog
    notes.append(f"MH S+1: {mh_ok}; NUTS 3 per leapfrog: {nuts_ok}")
    ok = ok and la_ok and ep_ok and mh_ok and nuts_ok
    verdict(8, ok, "; ".join(notes))
    assert ok


# ----------------------------------------------------------------------------- 9


def test_criterion_9_determinism_across_threads(tmp_path):
    X, y = synthetic_regression(30, 2, seed=9)
    data = Dataset(X, y - y.mean())
    config = default_config()
    for key, value in {"run.replicates": 6, "run.budget": 4000, "run.seed": 9}.items():
        config[key] = value
    problem = prepare(config, data)
    compared, mismatched = 0, []
    for sampler in ("amis", "mamis-p", "mh-h", "nutsda-h", "ss"):
        dirs = []
        for threads in (1, 4):
            c = config.copy()
            c["run.threads"] = threads
            dirs.append(write_run(run_experiment(c, problem=problem, sampler=sampler), c, tmp_path / f"{sampler}{threads}"))
        for path in sorted(dirs[0].glob("*.csv")):
            compared += 1
            if path.read_bytes() != (dirs[1] / path.name).read_bytes():
                mismatched.append(f"{sampler}/{path.name}")
    ok = compared > 0 and not mismatched
    verdict(9, ok, f"{compared} trace/aggregate files compared for threads 1 vs 4, mismatches: {mismatched or 'none'}")
    assert ok
