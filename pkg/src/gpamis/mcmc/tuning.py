"""Pilot-run tuning of a proposal scale or step size toward an acceptance rate."""

import math
from dataclasses import dataclass, field

from ..errors import TuningFailed
from ..linalg import FREE


@dataclass
class TuneResult:
    alpha: float
    cost: int
    batches: int
    rates: list = field(default_factory=list)


def tune_scale(run_fn, target_rate, tol=0.05, counter=None, alpha0=1.0, batch_size=200,
               max_batches=20, gain=1.0):
    """Stochastic approximation alpha <- alpha * exp(gain * (rate - target_rate)).

    ``run_fn(alpha, n_steps)`` advances the pilot chain and returns its
    acceptance rate.  Stops once two consecutive batches land within ``tol``
    of the target; raises :class:`TuningFailed` after ``max_batches``.  Works
    for MH covariance scales and for HMC step sizes alike, since in both
    cases a larger value lowers the acceptance rate.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError("target_rate must lie strictly between 0 and 1")
    counter = counter if counter is not None else FREE
    start = counter.cubic_ops
    alpha = float(alpha0)
    rates = []
    hits = 0
    for b in range(max_batches):
        rate = run_fn(alpha, batch_size)
        rates.append(rate)
        hits = hits + 1 if abs(rate - target_rate) <= tol else 0
        if hits >= 2:
            return TuneResult(alpha, counter.cubic_ops - start, b + 1, rates)
        alpha *= math.exp(gain * (rate - target_rate))
    raise TuningFailed(
        f"acceptance rate did not settle within {tol} of {target_rate} after {max_batches} batches "
        f"(last rates {rates[-3:]})",
        alpha=alpha,
        cost=counter.cubic_ops - start,
    )
