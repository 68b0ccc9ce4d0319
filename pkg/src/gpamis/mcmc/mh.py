"""Random-walk Metropolis-Hastings, exact or pseudo-marginal."""

import math

import numpy as np

from .core import ChainState


def mh_step(state, proposal_chol, target, rng, counter=None):
    """One Gaussian random-walk MH step.

    The target is evaluated exactly once, at the proposal.  For noisy targets
    the cached estimate of the current state enters the ratio unchanged,
    which is what makes this PM-MH.
    """
    z = rng.standard_normal(state.theta.shape[0])
    proposal = state.theta + proposal_chol.L @ z
    log_f = target.log_f(proposal, rng, counter)
    log_ratio = log_f - state.log_target
    if math.isnan(log_ratio):
        return state, False
    if log_ratio >= 0.0 or math.log(rng.random()) < log_ratio:
        return ChainState(proposal, log_f), True
    return state, False


def run_mh(state, proposal_chol, target, n_steps, rng, counter=None, callback=None):
    """``n_steps`` MH steps; returns (final state, acceptance rate)."""
    accepted = 0
    for _ in range(n_steps):
        state, ok = mh_step(state, proposal_chol, target, rng, counter)
        accepted += ok
        if callback is not None:
            callback(state)
    return state, accepted / max(n_steps, 1)
