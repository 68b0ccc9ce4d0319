"""Replicated sampler runs producing E[||theta||] convergence traces.

Each replicate gets its own spawned generator and its own op counter, which
starts at the (shared, deterministic) initialization cost.  Samplers run
until their counter reaches ``run.budget``; MCMC tuning and AMIS warm-up are
charged to the same counter and marked by the trace's EOT.
"""

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import dump
from ..errors import ConfigError, GPAmisError
from ..gp.kernels import KernelSpec
from ..importance import (
    DIAG_COV,
    FULL_COV,
    Schedule,
    amis_mamis_run,
    amis_run,
    mamis_run,
    self_normalized_expectation,
)
from ..initialization import DIAG, FULL, IDENTITY, build_proposal, initialize
from ..linalg import FREE, OpCounter, cholesky, split_rngs
from ..mcmc import (
    DIAG_INVERSE,
    FULL_INVERSE,
    DualAveragingParams,
    MassMatrix,
    hmc_step,
    initial_state,
    mh_step,
    nuts_step,
    nutsda_run,
    slice_step,
    tune_scale,
)
from ..mcmc import IDENTITY as MASS_IDENTITY
from ..targets import approx_evidence_target, classification_target, regression_target
from .data import load_dataset
from .traces import ConvergenceTrace, RunningMean, default_grid, iqr_aggregate, stabilization_point

log = logging.getLogger(__name__)

_PROPOSAL_SUFFIX = {"i": IDENTITY, "d": DIAG, "h": FULL}
_MASS_SUFFIX = {"i": MASS_IDENTITY, "d": DIAG_INVERSE, "h": FULL_INVERSE}

IS_SAMPLERS = ("amis", "amis-d", "mamis", "mamis-d", "amis-mamis", "mamis-p", "pm-amis")
MCMC_SAMPLERS = ("mh-i", "mh-d", "mh-h", "pm-mh", "hmc-i", "hmc-d", "hmc-h",
                 "nuts-i", "nuts-d", "nuts-h", "nutsda-i", "nutsda-d", "nutsda-h", "ss")
SAMPLERS = IS_SAMPLERS + MCMC_SAMPLERS
CLASSIFICATION_SAMPLERS = ("pm-amis", "pm-mh")


def _norms(X):
    return np.linalg.norm(X, axis=1)


@dataclass
class Problem:
    dataset: object
    spec: KernelSpec
    target: object
    mode: object
    init_cost: int
    regression: bool


@dataclass
class ExperimentResult:
    sampler: str
    traces: list
    curve: object
    failures: list = field(default_factory=list)
    init_cost: int = 0
    budget: int = 0

    @property
    def eots(self):
        return [t.eot for t in self.traces]


def prepare(config, dataset=None):
    """Load data, build the target, and run the (shared) initializer once."""
    task = config["data.task"]
    if dataset is None:
        if not config["data.path"]:
            raise ConfigError("data.path is required")
        dataset = load_dataset(config["data.path"], task, config["data.subsample"] or None,
                               config["run.seed"], config["data.positive_class"] or None)
    spec = KernelSpec(config["model.kernel"], dataset.d)
    counter = OpCounter()
    if task == "regression":
        target = regression_target(spec, dataset, config["model.prior_sd"])
        surrogate = target
    elif task == "classification":
        target = classification_target(spec, dataset, config["model.approx"], config["model.n_imp"], config["model.prior_sd"])
        surrogate = approx_evidence_target(spec, dataset, config["model.approx"], config["model.prior_sd"])
    else:
        raise ConfigError(f"data.task must be 'regression' or 'classification', got {task!r}")
    mode = initialize(surrogate, None, counter, config["init.tol"], config["init.max_iter"], config["init.fd_step"])
    return Problem(dataset, spec, target, mode, counter.cubic_ops, task == "regression")


def _check_compatible(name, problem):
    if name not in SAMPLERS:
        raise ConfigError(f"unknown sampler {name!r}; expected one of {', '.join(SAMPLERS)}")
    if problem.regression and name in CLASSIFICATION_SAMPLERS:
        raise ConfigError(f"sampler {name!r} targets a pseudo-marginal (classification) posterior")
    if not problem.regression and name not in CLASSIFICATION_SAMPLERS:
        raise ConfigError(f"sampler {name!r} needs an exact likelihood; use pm-amis or pm-mh for classification")


# ---------------------------------------------------------------- IS drivers


def _run_is(name, problem, config, rng, counter, budget):
    gamma0 = build_proposal(FULL, problem.mode.m, problem.mode.H, 1.0)
    trace = ConvergenceTrace(eot=counter.cubic_ops, label=name)

    def record(store, t):
        trace.record(counter.cubic_ops, self_normalized_expectation(store, _norms, vectorized=True))

    target = problem.target
    if name in ("amis", "amis-d"):
        schedule = Schedule(config["amis.iterations"], config["amis.samples"])
        mode = DIAG_COV if name.endswith("-d") else FULL_COV
        amis_run(target, gamma0, schedule, mode, rng, counter, callback=record, budget=budget)
    elif name == "pm-amis":
        schedule = Schedule(config["pm_amis.iterations"], config["pm_amis.samples"])
        amis_run(target, gamma0, schedule, FULL_COV, rng, counter, callback=record, budget=budget)
    elif name in ("mamis", "mamis-d"):
        schedule = Schedule(config["mamis.iterations"], config["mamis.base"], config["mamis.slope"])
        mode = DIAG_COV if name.endswith("-d") else FULL_COV
        mamis_run(target, gamma0, schedule, rng, counter, mode, callback=record, budget=budget)
    elif name == "mamis-p":
        schedule = Schedule(config["mamis.iterations"], config["mamis.base"], config["mamis.slope"])
        mamis_run(target, gamma0, schedule, rng, counter, prior=(gamma0, config["mamis_p.strength"]),
                  callback=record, budget=budget)
    elif name == "amis-mamis":
        warm = Schedule(config["amis_mamis.tuning_iterations"], config["amis_mamis.tuning_samples"])
        main = Schedule(config["amis_mamis.iterations"], config["amis_mamis.base"], config["amis_mamis.slope"])
        start = counter.cubic_ops
        store = amis_mamis_run(target, gamma0, warm, main, rng, counter, callback=record, budget=budget)
        trace.eot = start + store.tuning_cost
    return trace


# ---------------------------------------------------------------- MCMC drivers


def _start_point(problem, rng):
    return build_proposal(FULL, problem.mode.m, problem.mode.H, 1.0).sample(rng, 1)[0]


def _sample_until(budget, counter, step, record):
    while counter.cubic_ops < budget:
        theta = step()
        record(theta, counter.cubic_ops)


def _run_mh(name, problem, config, rng, counter, budget):
    variant = FULL if name == "pm-mh" else _PROPOSAL_SUFFIX[name[-1]]
    base_cov = build_proposal(variant, problem.mode.m, problem.mode.H, 1.0).cov
    target = problem.target
    state = initial_state(target, _start_point(problem, rng), rng, counter)
    box = {"state": state}

    def run_fn(alpha, n):
        chol = cholesky(alpha * base_cov, FREE)
        acc = 0
        for _ in range(n):
            box["state"], ok = mh_step(box["state"], chol, target, rng, counter)
            acc += ok
        return acc / n

    tuned = tune_scale(run_fn, config["mh.target_rate"], config["tune.tol"], counter, config["mh.alpha0"],
                       config["tune.batch"], config["tune.max_batches"])
    chol = cholesky(tuned.alpha * base_cov, FREE)
    trace = ConvergenceTrace(eot=counter.cubic_ops, label=name)
    acc = RunningMean(trace, burn_in=config["run.burn_in"])

    def step():
        box["state"], _ = mh_step(box["state"], chol, target, rng, counter)
        return box["state"].theta

    _sample_until(budget, counter, step, acc)
    return trace


def _mass(name, problem):
    return MassMatrix.build(_MASS_SUFFIX[name[-1]], problem.mode.approx_cov, dim=problem.mode.m.shape[0])


def _run_hmc(name, problem, config, rng, counter, budget):
    mass = _mass(name, problem)
    target = problem.target
    box = {"state": initial_state(target, _start_point(problem, rng), rng, counter, with_grad=True)}
    L_max = config["hmc.max_leapfrog"]
    jitter = config["hmc.jitter"]

    def run_fn(eps, n):
        acc = 0
        for _ in range(n):
            box["state"], ok, _ = hmc_step(box["state"], mass, eps, L_max, target, rng, counter, jitter)
            acc += ok
        return acc / n

    tuned = tune_scale(run_fn, config["hmc.target_rate"], config["tune.tol"], counter, config["hmc.eps0"],
                       config["tune.batch"], config["tune.max_batches"])
    trace = ConvergenceTrace(eot=counter.cubic_ops, label=name)
    acc = RunningMean(trace, burn_in=config["run.burn_in"])

    def step():
        box["state"], _, _ = hmc_step(box["state"], mass, tuned.alpha, L_max, target, rng, counter, jitter)
        return box["state"].theta

    _sample_until(budget, counter, step, acc)
    return trace


def _run_nuts(name, problem, config, rng, counter, budget):
    mass = _mass(name, problem)
    target = problem.target
    box = {"state": initial_state(target, _start_point(problem, rng), rng, counter, with_grad=True)}
    trace = ConvergenceTrace(eot=counter.cubic_ops, label=name)
    acc = RunningMean(trace, burn_in=config["run.burn_in"])
    eps = config["nuts.step_size"]
    depth = config["nuts.max_depth"]

    def step():
        box["state"], _ = nuts_step(box["state"], mass, eps, target, rng, counter, depth)
        return box["state"].theta

    _sample_until(budget, counter, step, acc)
    return trace


def _run_nutsda(name, problem, config, rng, counter, budget):
    mass = _mass(name, problem)
    target = problem.target
    state = initial_state(target, _start_point(problem, rng), rng, counter, with_grad=True)
    da = DualAveragingParams(config["nutsda.gamma"], config["nutsda.t0"], config["nutsda.kappa"], config["nutsda.delta"])
    trace = ConvergenceTrace(label=name)
    acc = RunningMean(trace, burn_in=config["run.burn_in"])
    result = nutsda_run(state, mass, da, config["nutsda.adapt"], None, target, rng, counter,
                        max_depth=config["nuts.max_depth"],
                        callback=lambda s, info: acc(s.theta, counter.cubic_ops), budget=budget)
    trace.eot = result.eot
    return trace


def _run_slice(name, problem, config, rng, counter, budget):
    target = problem.target
    box = {"state": initial_state(target, _start_point(problem, rng), rng, counter)}
    trace = ConvergenceTrace(eot=counter.cubic_ops, label=name)
    acc = RunningMean(trace, burn_in=config["run.burn_in"])
    w = config["slice.width"]

    def step():
        box["state"] = slice_step(box["state"], w, target, rng, counter)
        return box["state"].theta

    _sample_until(budget, counter, step, acc)
    return trace


def run_sampler(name, problem, config, rng, budget=None):
    """One replicate of sampler ``name``; returns its ConvergenceTrace."""
    _check_compatible(name, problem)
    budget = budget if budget is not None else config["run.budget"]
    counter = OpCounter(problem.init_cost)
    if name in IS_SAMPLERS:
        trace = _run_is(name, problem, config, rng, counter, budget)
    elif name in ("mh-i", "mh-d", "mh-h", "pm-mh"):
        trace = _run_mh(name, problem, config, rng, counter, budget)
    elif name.startswith("hmc-"):
        trace = _run_hmc(name, problem, config, rng, counter, budget)
    elif name.startswith("nutsda-"):
        trace = _run_nutsda(name, problem, config, rng, counter, budget)
    elif name.startswith("nuts-"):
        trace = _run_nuts(name, problem, config, rng, counter, budget)
    else:
        trace = _run_slice(name, problem, config, rng, counter, budget)
    if not len(trace):
        raise GPAmisError(f"{name}: budget {budget} exhausted before the first post-tuning observation")
    return trace


def _threads(config):
    n = config["run.threads"]
    return n if n > 0 else (os.cpu_count() or 1)


def run_replicates(name, problem, config, budget=None):
    """All replicates of one sampler; failures are logged and excluded."""
    reps = config["run.replicates"]
    if reps < 1:
        raise ConfigError("run.replicates must be at least 1")
    rngs = split_rngs(config["run.seed"], reps)
    _check_compatible(name, problem)

    def one(r):
        try:
            return run_sampler(name, problem, config, rngs[r], budget), None
        except (GPAmisError, FloatingPointError, np.linalg.LinAlgError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    workers = min(_threads(config), reps)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(reps)))
    else:
        outcomes = [one(r) for r in range(reps)]
    traces, failures = [], []
    for r, (trace, err) in enumerate(outcomes):
        if err is None:
            trace.label = f"{name}#{r}"
            traces.append(trace)
        else:
            log.warning("%s replicate %d failed and is excluded: %s", name, r, err)
            failures.append((r, err))
    return traces, failures


def run_experiment(config, dataset=None, problem=None, sampler=None):
    """Initialize, run every replicate, and aggregate into an IQR curve."""
    name = sampler or config["sampler.name"]
    problem = problem if problem is not None else prepare(config, dataset)
    budget = config["run.budget"]
    traces, failures = run_replicates(name, problem, config, budget)
    if not traces:
        raise GPAmisError(f"every replicate of {name} failed: {failures[0][1] if failures else 'no replicates'}")
    grid = default_grid(traces, budget, config["run.grid_points"])
    curve = iqr_aggregate(traces, grid)
    return ExperimentResult(name, traces, curve, failures, problem.init_cost, budget)


def manifest_comments(result):
    lines = [f"sampler {result.sampler}: {len(result.traces)} replicate(s) kept, {len(result.failures)} failed",
             f"initialization cost (cubic ops): {result.init_cost}"]
    lines += [f"eot {t.label}: {t.eot}" for t in result.traces]
    lines += [f"failed replicate {r}: {msg}" for r, msg in result.failures]
    return lines


def write_run(result, config, out_dir):
    """Per-replicate traces, the aggregate IQR curve, and a manifest config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for trace in result.traces:
        rep = int(trace.label.rsplit("#", 1)[1])
        trace.write(out / f"trace_rep{rep:03d}.csv")
    result.curve.write(out / "aggregate.csv")
    resolved = config.copy()
    resolved["sampler.name"] = result.sampler
    (out / "manifest.txt").write_text(dump(resolved, manifest_comments(result)))
    return out


def run_sweep(config, dataset=None, samplers=None):
    """Same initialization, seeds, and budget for every listed sampler.

    Returns ``(results, errors)``; a failing variant does not stop the others.
    """
    names = samplers or config.samplers or [config["sampler.name"]]
    for name in names:
        if name not in SAMPLERS:
            raise ConfigError(f"unknown sampler {name!r} in sweep.samplers")
    problem = prepare(config, dataset)
    results, errors = {}, {}
    for name in names:
        try:
            results[name] = run_experiment(config, problem=problem, sampler=name)
        except (GPAmisError, ConfigError) as exc:
            log.warning("sweep variant %s failed: %s", name, exc)
            errors[name] = f"{type(exc).__name__}: {exc}"
    return results, errors


def comparison_table(results, points=200):
    """Median curves of every variant on one shared log-spaced grid."""
    traces = [t for r in results.values() for t in r.traces]
    budget = max(r.budget for r in results.values())
    grid = default_grid(traces, budget, points)
    return grid, {name: iqr_aggregate(r.traces, grid).median for name, r in results.items()}


def write_sweep(results, config, out_dir):
    """Per-variant run directories, comparison.csv (one median column per
    variant) and summary.csv (one row per variant)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, result in results.items():
        write_run(result, config, out / name)
    grid, medians = comparison_table(results, config["run.grid_points"])
    names = list(medians)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cubic_ops"] + names)
        for i, x in enumerate(grid):
            w.writerow([repr(float(x))] + [repr(float(medians[n][i])) for n in names])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sampler", "replicates", "failed", "median_eot", "final_q1", "final_median", "final_q3",
                    "stable_at_2pct"])
        for name, result in results.items():
            c = result.curve
            w.writerow([name, len(result.traces), len(result.failures), repr(float(np.median(result.eots))),
                        repr(float(c.q1[-1])), repr(float(c.median[-1])), repr(float(c.q3[-1])),
                        repr(stabilization_point(c))])
    return out
