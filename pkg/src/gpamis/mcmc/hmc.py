"""Hybrid Monte Carlo with a general mass matrix."""

import math

import numpy as np

from .core import ChainState


def leapfrog(theta, p, grad, eps, n_steps, value_and_grad, mass, counter=None):
    """``n_steps`` leapfrog steps; returns (theta, p, log_target, grad).

    ``grad`` is the gradient at the starting point, so each step costs one
    gradient evaluation.  Integration stops early on a non-finite value.
    """
    theta = np.array(theta, dtype=float)
    p = np.array(p, dtype=float)
    value = None
    p = p + 0.5 * eps * grad
    for i in range(n_steps):
        theta = theta + eps * mass.velocity(p)
        value, grad = value_and_grad(theta, counter)
        if not math.isfinite(value):
            return theta, p, -math.inf, grad
        if i < n_steps - 1:
            p = p + eps * grad
    p = p + 0.5 * eps * grad
    return theta, p, value, grad


def hmc_step(state, mass, eps, L_max, target, rng, counter=None, jitter=True):
    """One HMC transition; returns (state, accepted, acceptance probability).

    ``L`` is drawn uniformly from 1..L_max when ``jitter`` else fixed at L_max.
    A non-finite Hamiltonian is an automatic rejection.
    """
    n_steps = int(rng.integers(1, L_max + 1)) if jitter else int(L_max)
    p0 = mass.sample_momentum(rng)
    h0 = -state.log_target + mass.kinetic(p0)
    theta, p, value, grad = leapfrog(state.theta, p0, state.grad, eps, n_steps, target.value_and_grad, mass, counter)
    h1 = -value + mass.kinetic(p) if math.isfinite(value) else math.inf
    if not math.isfinite(h1):
        return state, False, 0.0
    log_accept = h0 - h1
    accept_prob = 1.0 if log_accept >= 0 else math.exp(log_accept)
    if log_accept >= 0 or math.log(rng.random()) < log_accept:
        return ChainState(theta, value, grad), True, accept_prob
    return state, False, accept_prob
