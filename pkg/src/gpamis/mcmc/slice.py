"""Component-wise slice sampling with stepping out and shrinkage."""

import numpy as np

from ..errors import ShrinkageExhausted
from .core import ChainState


def slice_step(state, w, target, rng, counter=None, max_shrink=1000):
    """One sweep over all coordinates in ascending order.

    The vertical level is log f(theta) - Exp(1); the bracket of width ``w``
    is stepped out without a cap and then shrunk toward the current point.
    A bracket that shrinks onto the current point returns it unchanged.
    """
    x = np.array(state.theta, dtype=float)
    log_fx = state.log_target

    def at(i, value):
        trial = x.copy()
        trial[i] = value
        return trial, target.log_f(trial, rng, counter)

    for i in range(x.shape[0]):
        level = log_fx - rng.exponential()
        x0 = x[i]
        left = x0 - rng.random() * w
        right = left + w
        while at(i, left)[1] > level:
            left -= w
        while at(i, right)[1] > level:
            right += w
        tiny = 1e-12 * max(1.0, abs(x0))
        for _ in range(max_shrink):
            candidate = left + rng.random() * (right - left)
            trial, log_ft = at(i, candidate)
            if log_ft > level:
                x, log_fx = trial, log_ft
                break
            if candidate < x0:
                left = candidate
            else:
                right = candidate
            if right - left <= tiny:
                break
        else:
            raise ShrinkageExhausted(f"no point accepted after {max_shrink} shrinkage steps on coordinate {i}")
    return ChainState(x, log_fx)
