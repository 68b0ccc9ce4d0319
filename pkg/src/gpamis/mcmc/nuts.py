"""No-U-Turn sampler (efficient slice-variable version) and its dual-averaging
step-size adaptation.  The U-turn criterion is taken through the mass
matrix: the tree stops when (theta+ - theta-) . M^{-1} r falls below zero at
either end.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ChainState
from .hmc import leapfrog

DELTA_MAX = 1000.0


@dataclass
class NutsInfo:
    accept_stat: float
    depth: int
    n_leapfrog: int
    hit_max_depth: bool


@dataclass
class _Tree:
    theta_minus: np.ndarray
    r_minus: np.ndarray
    grad_minus: np.ndarray
    theta_plus: np.ndarray
    r_plus: np.ndarray
    grad_plus: np.ndarray
    theta: np.ndarray
    log_target: float
    grad: np.ndarray
    n_valid: int
    keep_going: bool
    alpha_sum: float
    n_alpha: int


def _no_uturn(theta_minus, theta_plus, r_minus, r_plus, mass):
    span = theta_plus - theta_minus
    return span @ mass.velocity(r_minus) >= 0.0 and span @ mass.velocity(r_plus) >= 0.0


def _build_tree(theta, r, grad, log_u, direction, depth, eps, joint0, target, mass, rng, counter):
    if depth == 0:
        theta1, r1, value1, grad1 = leapfrog(theta, r, grad, direction * eps, 1, target.value_and_grad, mass, counter)
        joint = value1 - mass.kinetic(r1) if math.isfinite(value1) else -math.inf
        n_valid = int(log_u <= joint)
        keep_going = log_u < DELTA_MAX + joint
        alpha = 0.0 if not math.isfinite(joint) else min(1.0, math.exp(min(joint - joint0, 0.0)))
        return _Tree(theta1, r1, grad1, theta1, r1, grad1, theta1, value1, grad1, n_valid, keep_going, alpha, 1)
    tree = _build_tree(theta, r, grad, log_u, direction, depth - 1, eps, joint0, target, mass, rng, counter)
    if not tree.keep_going:
        return tree
    if direction == -1:
        other = _build_tree(tree.theta_minus, tree.r_minus, tree.grad_minus, log_u, direction, depth - 1,
                            eps, joint0, target, mass, rng, counter)
        tree.theta_minus, tree.r_minus, tree.grad_minus = other.theta_minus, other.r_minus, other.grad_minus
    else:
        other = _build_tree(tree.theta_plus, tree.r_plus, tree.grad_plus, log_u, direction, depth - 1,
                            eps, joint0, target, mass, rng, counter)
        tree.theta_plus, tree.r_plus, tree.grad_plus = other.theta_plus, other.r_plus, other.grad_plus
    total = tree.n_valid + other.n_valid
    if total > 0 and rng.random() < other.n_valid / total:
        tree.theta, tree.log_target, tree.grad = other.theta, other.log_target, other.grad
    tree.alpha_sum += other.alpha_sum
    tree.n_alpha += other.n_alpha
    tree.keep_going = other.keep_going and _no_uturn(tree.theta_minus, tree.theta_plus, tree.r_minus, tree.r_plus, mass)
    tree.n_valid = total
    return tree


def nuts_step(state, mass, eps, target, rng, counter=None, max_depth=10, slice_log_u=None):
    """One NUTS transition; returns (state, NutsInfo).

    ``slice_log_u`` overrides the slice variable (testing hook).
    """
    r0 = mass.sample_momentum(rng)
    joint0 = state.log_target - mass.kinetic(r0)
    log_u = joint0 - rng.exponential() if slice_log_u is None else slice_log_u
    theta_minus = theta_plus = state.theta
    r_minus = r_plus = r0
    grad_minus = grad_plus = state.grad
    current = state
    n_valid = 1
    keep_going = True
    depth = 0
    alpha_sum, n_alpha = 0.0, 0
    while keep_going:
        direction = 1 if rng.random() < 0.5 else -1
        if direction == -1:
            tree = _build_tree(theta_minus, r_minus, grad_minus, log_u, -1, depth, eps, joint0, target, mass, rng, counter)
            theta_minus, r_minus, grad_minus = tree.theta_minus, tree.r_minus, tree.grad_minus
        else:
            tree = _build_tree(theta_plus, r_plus, grad_plus, log_u, 1, depth, eps, joint0, target, mass, rng, counter)
            theta_plus, r_plus, grad_plus = tree.theta_plus, tree.r_plus, tree.grad_plus
        if tree.keep_going and rng.random() < min(1.0, tree.n_valid / n_valid):
            current = ChainState(tree.theta, tree.log_target, tree.grad)
        n_valid += tree.n_valid
        alpha_sum += tree.alpha_sum
        n_alpha += tree.n_alpha
        keep_going = tree.keep_going and _no_uturn(theta_minus, theta_plus, r_minus, r_plus, mass)
        depth += 1
        if depth >= max_depth:
            break
    hit = keep_going and depth >= max_depth
    accept = alpha_sum / n_alpha if n_alpha else 0.0
    return current, NutsInfo(accept, depth, n_alpha, hit)


def find_reasonable_epsilon(state, mass, target, rng, counter=None, eps=1.0):
    """Heuristic initial step size: double/halve until the one-step acceptance crosses 1/2."""
    r = mass.sample_momentum(rng)
    joint0 = state.log_target - mass.kinetic(r)

    def log_ratio(e):
        _, r1, v1, _ = leapfrog(state.theta, r, state.grad, e, 1, target.value_and_grad, mass, counter)
        return (v1 - mass.kinetic(r1)) - joint0 if math.isfinite(v1) else -math.inf

    lr = log_ratio(eps)
    direction = 1.0 if lr > math.log(0.5) else -1.0
    for _ in range(100):
        if direction * lr <= -direction * math.log(2.0):
            break
        eps *= 2.0**direction
        lr = log_ratio(eps)
    return eps


@dataclass
class DualAveragingParams:
    gamma: float = 0.05
    t0: float = 30.0
    kappa: float = 0.75
    delta: float = 0.65

    def __post_init__(self):
        if self.gamma <= 0 or self.t0 < 0 or not 0.5 < self.kappa <= 1.0:
            raise ValueError("dual averaging needs gamma > 0, t0 >= 0 and 1/2 < kappa <= 1")


@dataclass
class NutsdaResult:
    state: ChainState
    samples: list
    eps_final: float
    eps_history: list
    accept_stats: list
    eot: int
    max_depth_hits: int = 0
    infos: list = field(default_factory=list)


def nutsda_run(state, mass, da, n_adapt, n_keep, target, rng, counter=None, eps0=None, max_depth=10,
               callback=None, budget=None):
    """NUTS with dual-averaging step-size adaptation.

    Adapts for ``n_adapt`` transitions (tuning cost, ending at ``eot``) and
    then samples ``n_keep`` transitions with the step size frozen at the
    averaged value.  ``n_keep=None`` samples until ``counter`` reaches
    ``budget``.  ``callback(state, info)`` sees kept transitions only.
    """
    eps = find_reasonable_epsilon(state, mass, target, rng, counter) if eps0 is None else float(eps0)
    mu = math.log(10.0 * eps)
    log_eps_bar = 0.0
    h_bar = 0.0
    eps_history = []
    accept_stats = []
    samples = []
    hits = 0
    for m in range(1, n_adapt + 1):
        state, info = nuts_step(state, mass, eps, target, rng, counter, max_depth)
        hits += info.hit_max_depth
        w = 1.0 / (m + da.t0)
        h_bar = (1.0 - w) * h_bar + w * (da.delta - info.accept_stat)
        log_eps = mu - math.sqrt(m) / da.gamma * h_bar
        eta = m ** (-da.kappa)
        log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
        eps = math.exp(log_eps)
        eps_history.append(eps)
    if n_adapt > 0:
        eps = math.exp(log_eps_bar)
    eot = counter.cubic_ops if counter is not None else 0
    kept = 0
    while True:
        if n_keep is not None and kept >= n_keep:
            break
        if n_keep is None and (budget is None or counter.cubic_ops >= budget):
            break
        state, info = nuts_step(state, mass, eps, target, rng, counter, max_depth)
        hits += info.hit_max_depth
        eps_history.append(eps)
        accept_stats.append(info.accept_stat)
        samples.append(state.theta)
        kept += 1
        if callback is not None:
            callback(state, info)
    return NutsdaResult(state, samples, eps, eps_history, accept_stats, eot, hits)
