"""Adaptive multiple importance sampling.

All engines share :class:`WeightedSampleStore`, which keeps every sample ever
drawn together with its cached log target value and the log of its running
mixture denominator

    log delta_i = log sum_m N_m q_m(theta_i)

over every proposal used so far.  The importance weight of a sample is
f(theta_i) / (delta_i / sum_m N_m).  Noisy targets (pseudo-marginal) are
evaluated exactly once per sample; re-weighting only touches the denominator.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import NotPositiveDefinite, ZeroTotalWeight
from .linalg import FREE, CholeskyFactor, cholesky, mvn_log_density, mvn_sample

log = logging.getLogger(__name__)

FULL_COV = "full_cov"
DIAG_COV = "diag_cov"


@dataclass(frozen=True)
class ProposalParams:
    mean: np.ndarray
    chol: CholeskyFactor

    @classmethod
    def from_cov(cls, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(mean, cholesky(cov, FREE))

    @property
    def cov(self):
        return self.chol.reconstruct()

    @property
    def dim(self):
        return self.mean.shape[0]

    def log_density(self, X):
        return np.atleast_1d(mvn_log_density(np.atleast_2d(X), self.mean, self.chol))

    def sample(self, rng, n):
        return mvn_sample(self.mean, self.chol, rng, size=n)


@dataclass(frozen=True)
class Schedule:
    """T iterations with N_t = base + slope * t, t counted from 1."""

    T: int
    base: int
    slope: int = 0

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("iteration count cannot be negative")
        if self.T and min(self.n(0), self.n(self.T - 1)) < 1:
            raise ValueError("every iteration needs at least one sample")

    def n(self, t):
        return int(self.base + self.slope * (t + 1))

    def sizes(self):
        return [self.n(t) for t in range(self.T)]

    @property
    def total(self):
        return sum(self.sizes())


def _accumulate_log_delta(log_delta, log_n, log_q):
    """delta <- delta + N_t q_t(theta), in log space."""
    return np.logaddexp(log_delta, log_n + log_q)


@dataclass
class WeightedSampleStore:
    dim: int
    thetas: np.ndarray = None
    log_f: np.ndarray = None
    log_delta: np.ndarray = None
    log_q_own: np.ndarray = None
    iteration: np.ndarray = None
    proposals: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    n_target_evals: int = 0
    tuning_cost: int = 0
    tuning_samples: int = 0

    def __post_init__(self):
        if self.thetas is None:
            self.thetas = np.empty((0, self.dim))
            self.log_f = np.empty(0)
            self.log_delta = np.empty(0)
            self.log_q_own = np.empty(0)
            self.iteration = np.empty(0, dtype=int)

    @property
    def n_samples(self):
        return self.thetas.shape[0]

    @property
    def n_iterations(self):
        return len(self.sizes)

    @property
    def log_total_n(self):
        return math.log(sum(self.sizes))

    @property
    def log_weights(self):
        """ln w_i = ln f(theta_i) - ln(delta_i / sum N)."""
        if len(self.sizes) == 1:
            # a one-component mixture is its proposal; skip the log N round trip
            return self.log_f - self.log_q_own
        return self.log_f - self.log_delta + self.log_total_n

    def normalized_weights(self, mask=None):
        lw = self.log_weights if mask is None else self.log_weights[mask]
        return _normalize(lw)

    def add_iteration(self, X, log_f, proposal):
        """Append N_t new samples drawn from ``proposal`` and retro-weight the past."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        log_f = np.asarray(log_f, dtype=float)
        n_new = X.shape[0]
        log_n = math.log(n_new)
        if self.n_samples:
            self.log_delta = _accumulate_log_delta(self.log_delta, log_n, proposal.log_density(self.thetas))
        own = proposal.log_density(X)
        new_delta = log_n + own
        for m, (q, n_m) in enumerate(zip(self.proposals, self.sizes)):
            new_delta = _accumulate_log_delta(new_delta, math.log(n_m), q.log_density(X))
        t = len(self.sizes)
        self.thetas = np.vstack([self.thetas, X])
        self.log_f = np.concatenate([self.log_f, log_f])
        self.log_delta = np.concatenate([self.log_delta, new_delta])
        self.log_q_own = np.concatenate([self.log_q_own, own])
        self.iteration = np.concatenate([self.iteration, np.full(n_new, t)])
        self.proposals.append(proposal)
        self.sizes.append(n_new)

    def classical_log_weights(self, t):
        """f / q_t for the samples of iteration ``t`` only."""
        mask = self.iteration == t
        return self.log_f[mask] - self.log_q_own[mask], mask


def _normalize(log_w):
    log_w = np.asarray(log_w, dtype=float)
    if log_w.size == 0 or not np.any(np.isfinite(log_w)):
        raise ZeroTotalWeight("all importance weights are zero")
    w = np.exp(log_w - np.max(log_w))
    return w / w.sum()


def effective_sample_size(weights):
    """(sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ZeroTotalWeight("all weights are zero")
    w = w / total
    return float(1.0 / np.sum(w * w))


def log_ess(log_w):
    return effective_sample_size(_normalize(log_w))


def weighted_moments(X, log_w):
    """Self-normalized weighted mean and (1/sum w normalized) covariance."""
    w = _normalize(log_w)
    X = np.atleast_2d(X)
    mu = w @ X
    diff = X - mu
    cov = (diff * w[:, None]).T @ diff
    return mu, 0.5 * (cov + cov.T)


def moment_match(store, mask=None):
    """(mean, covariance) over all samples with current AMIS weights."""
    X = store.thetas if mask is None else store.thetas[mask]
    lw = store.log_weights if mask is None else store.log_weights[mask]
    return weighted_moments(X, lw)


def proposal_from_moments(mean, cov, previous=None, adapt_mode=FULL_COV, diagnostics=None):
    """Build the next Gaussian proposal, rescuing a collapsed covariance.

    A non-SPD covariance first gets a ridge of 1e-8 * trace / d; if that still
    fails the previous proposal is kept.
    """
    if adapt_mode == DIAG_COV:
        cov = np.diag(np.diag(cov))
    elif adapt_mode != FULL_COV:
        raise ValueError(f"unknown adapt mode {adapt_mode!r}")
    d = len(mean)
    try:
        return ProposalParams.from_cov(mean, cov)
    except NotPositiveDefinite:
        pass
    ridge = 1e-8 * max(float(np.trace(cov)), 0.0) / d
    if ridge > 0:
        try:
            prop = ProposalParams.from_cov(mean, cov + ridge * np.eye(d))
            if diagnostics is not None:
                diagnostics.append(("proposal_ridge", ridge))
            return prop
        except NotPositiveDefinite:
            pass
    if previous is None:
        raise NotPositiveDefinite("moment-matched covariance collapsed and no previous proposal exists")
    if diagnostics is not None:
        diagnostics.append(("proposal_collapse", "kept previous proposal"))
    log.warning("proposal covariance collapsed; retaining previous proposal")
    return previous


def mamis_p_update(prior_gamma, prior_strength, X, log_w):
    """Shrink iteration-t moments toward a prior proposal.

    mu <- (n_eff mu_w + s mu_prior) / (n_eff + s), same blend for the covariance.
    """
    if math.isinf(prior_strength):
        return prior_gamma
    mu_w, cov_w = weighted_moments(X, log_w)
    n_eff = log_ess(log_w)
    s = float(prior_strength)
    mu = (n_eff * mu_w + s * prior_gamma.mean) / (n_eff + s)
    cov = (n_eff * cov_w + s * prior_gamma.cov) / (n_eff + s)
    return mean_cov_proposal(mu, cov, fallback=prior_gamma)


def mean_cov_proposal(mu, cov, fallback):
    try:
        return ProposalParams.from_cov(mu, 0.5 * (cov + cov.T))
    except NotPositiveDefinite:
        return fallback


def self_normalized_expectation(store, h, vectorized=False):
    """sum_i w_i h(theta_i) / sum_i w_i over every stored sample."""
    w = store.normalized_weights()
    values = h(store.thetas) if vectorized else np.array([h(x) for x in store.thetas])
    return float(w @ values)


def log_normalizing_constant(store):
    """ln( sum w / sum N ), the estimate of ln Z."""
    lw = store.log_weights
    if not np.any(np.isfinite(lw)):
        raise ZeroTotalWeight("all importance weights are zero")
    return float(logsumexp(lw) - store.log_total_n)


def _evaluate(target, X, rng, counter, store):
    vals = np.array([target.log_f(x, rng, counter) for x in X], dtype=float)
    store.n_target_evals += len(vals)
    return vals


def _check_degeneracy(store, t):
    try:
        ess = log_ess(store.log_weights)
    except ZeroTotalWeight:
        ess = 0.0
    if ess < 2.0:
        store.diagnostics.append(("degenerate_weights", t, ess))
        log.warning("iteration %d: effective sample size %.2f < 2", t, ess)
    return ess


def _over_budget(counter, budget):
    return budget is not None and counter.cubic_ops >= budget


def amis_run(target, gamma0, schedule, adapt_mode=FULL_COV, rng=None, counter=None,
             switch_to_mamis_at=None, callback=None, budget=None):
    """Generic AMIS; PM-AMIS when ``target.is_noisy``.

    Every past weight is recomputed against the full deterministic mixture
    after each iteration and the next proposal is moment-matched on all
    weighted samples.  From iteration ``switch_to_mamis_at`` onward the
    adaptation uses only the current iteration's samples (the MAMIS rule).
    """
    counter = counter if counter is not None else FREE
    store = WeightedSampleStore(gamma0.dim)
    gamma = gamma0
    for t in range(schedule.T):
        X = gamma.sample(rng, schedule.n(t))
        store.add_iteration(X, _evaluate(target, X, rng, counter, store), gamma)
        _check_degeneracy(store, t)
        if switch_to_mamis_at is not None and t >= switch_to_mamis_at:
            lw, mask = store.classical_log_weights(t)
            mu, cov = weighted_moments(store.thetas[mask], lw) if np.any(np.isfinite(lw)) else (gamma.mean, gamma.cov)
        else:
            mu, cov = moment_match(store) if np.any(np.isfinite(store.log_weights)) else (gamma.mean, gamma.cov)
        gamma = proposal_from_moments(mu, cov, gamma, adapt_mode, store.diagnostics)
        if callback is not None:
            callback(store, t)
        if _over_budget(counter, budget):
            break
    store.next_proposal = gamma
    return store


def mamis_run(target, gamma0, schedule, rng=None, counter=None, adapt_mode=FULL_COV,
              prior=None, callback=None, budget=None):
    """Modified AMIS: adapt from iteration-t samples with classical weights.

    The stored (and final) weights always use the multiple-mixture
    denominator.  ``prior=(gamma_prior, strength)`` turns on the regularized
    MAMIS-P update.
    """
    counter = counter if counter is not None else FREE
    store = WeightedSampleStore(gamma0.dim)
    gamma = gamma0
    for t in range(schedule.T):
        X = gamma.sample(rng, schedule.n(t))
        store.add_iteration(X, _evaluate(target, X, rng, counter, store), gamma)
        _check_degeneracy(store, t)
        lw, mask = store.classical_log_weights(t)
        if prior is not None:
            gamma = mamis_p_update(prior[0], prior[1], store.thetas[mask], lw)
        elif np.any(np.isfinite(lw)):
            mu, cov = weighted_moments(store.thetas[mask], lw)
            gamma = proposal_from_moments(mu, cov, gamma, adapt_mode, store.diagnostics)
        if callback is not None:
            callback(store, t)
        if _over_budget(counter, budget):
            break
    store.next_proposal = gamma
    return store


def amis_mamis_run(target, gamma0, amis_schedule, mamis_schedule, rng=None, counter=None,
                   adapt_mode=FULL_COV, callback=None, budget=None):
    """AMIS as a tuning phase whose final proposal seeds MAMIS.

    AMIS samples are charged to ``counter`` but excluded from the returned
    store; ``store.tuning_cost`` holds the op-count they consumed.
    """
    counter = counter if counter is not None else FREE
    start = counter.cubic_ops
    gamma = gamma0
    tuning_samples = 0
    if amis_schedule.T > 0:
        tuning = amis_run(target, gamma0, amis_schedule, adapt_mode, rng, counter)
        gamma = tuning.next_proposal
        tuning_samples = tuning.n_samples
    cost = counter.cubic_ops - start
    store = mamis_run(target, gamma, mamis_schedule, rng, counter, adapt_mode, callback=callback, budget=budget)
    store.tuning_cost = cost
    store.tuning_samples = tuning_samples
    return store
