"""Convergence traces of E[||theta||] against cubic-op counts, and their IQR."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import GridBeforeFirstObservation


@dataclass
class ConvergenceTrace:
    ops: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    eot: int = 0
    label: str = ""

    def record(self, ops, estimate):
        """Append an observation; a repeated op-count overwrites the previous one."""
        ops = int(ops)
        if self.ops and ops < self.ops[-1]:
            raise ValueError("op counts must be non-decreasing")
        if self.ops and ops == self.ops[-1]:
            self.estimates[-1] = float(estimate)
        else:
            self.ops.append(ops)
            self.estimates.append(float(estimate))

    def __len__(self):
        return len(self.ops)

    @property
    def final(self):
        return self.estimates[-1]

    def value_at(self, op_count):
        """Last observation carried forward."""
        idx = np.searchsorted(self.ops, op_count, side="right") - 1
        if idx < 0:
            raise GridBeforeFirstObservation(f"grid point {op_count} precedes first observation {self.ops[0]}")
        return self.estimates[idx]

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cubic_ops", "estimate"])
            for o, e in zip(self.ops, self.estimates):
                w.writerow([o, repr(e)])

    @classmethod
    def read(cls, path):
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for o, e in reader:
                trace.record(int(o), float(e))
        return trace


class RunningMean:
    """Streaming MCMC estimate: running mean of h over post-tuning samples."""

    def __init__(self, trace, h=np.linalg.norm, burn_in=0):
        self.trace = trace
        self.h = h
        self.burn_in = burn_in
        self.seen = 0
        self.total = 0.0
        self.count = 0

    def __call__(self, theta, ops):
        self.seen += 1
        if self.seen <= self.burn_in:
            return
        self.count += 1
        self.total += float(self.h(theta))
        self.trace.record(ops, self.total / self.count)


def running_estimate_trace(events, h=np.linalg.norm, eot=0):
    """Build a trace from sampler events.

    ``events`` yields ``(ops, theta)`` for MCMC draws or ``(ops, thetas,
    normalized_weights)`` for importance-sampling snapshots; the former give
    running means, the latter self-normalized estimates.
    """
    trace = ConvergenceTrace(eot=eot)
    acc = RunningMean(trace, h)
    for event in events:
        if len(event) == 2:
            ops, theta = event
            acc(np.asarray(theta), ops)
        else:
            ops, thetas, weights = event
            values = np.array([h(x) for x in np.atleast_2d(thetas)])
            trace.record(ops, float(np.asarray(weights) @ values))
    return trace


@dataclass
class IqrCurve:
    grid: np.ndarray
    q1: np.ndarray
    median: np.ndarray
    q3: np.ndarray

    @property
    def width(self):
        return self.q3 - self.q1

    def at(self, op_count):
        idx = int(np.clip(np.searchsorted(self.grid, op_count, side="right") - 1, 0, len(self.grid) - 1))
        return self.q1[idx], self.median[idx], self.q3[idx]

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cubic_ops", "q1", "median", "q3"])
            for row in zip(self.grid, self.q1, self.median, self.q3):
                w.writerow([repr(float(v)) for v in row])


def log_grid(start, stop, points=200):
    start = max(float(start), 1.0)
    stop = max(float(stop), start)
    return np.unique(np.geomspace(start, stop, points))


def locf_matrix(traces, grid):
    out = np.empty((len(traces), len(grid)))
    for r, trace in enumerate(traces):
        ops = np.asarray(trace.ops)
        idx = np.searchsorted(ops, grid, side="right") - 1
        if np.any(idx < 0):
            first = grid[np.argmax(idx < 0)]
            raise GridBeforeFirstObservation(f"grid point {first:g} precedes first observation {ops[0]} of trace {r}")
        out[r] = np.asarray(trace.estimates)[idx]
    return out


def iqr_aggregate(traces, grid):
    """Q1 / median / Q3 across replicates at each grid point (type-7 quantiles)."""
    if not traces:
        raise ValueError("need at least one trace")
    grid = np.asarray(grid, dtype=float)
    values = locf_matrix(traces, grid)
    q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75], axis=0, method="linear")
    return IqrCurve(grid, q1, med, q3)


def default_grid(traces, budget=None, points=200):
    """Log-spaced grid from the latest first observation (>= EOT) to the budget."""
    start = max(max(t.ops[0] for t in traces), max(t.eot for t in traces))
    stop = budget if budget else max(t.ops[-1] for t in traces)
    return log_grid(start, max(stop, start), points)


def stabilization_point(curve, rel_tol=0.02, band=True):
    """First grid point after which the curve stays within ``rel_tol`` of its final median.

    With ``band`` the whole IQR band must stay inside, otherwise only the
    median.  Returns ``inf`` if the curve never stabilizes.
    """
    final = curve.median[-1]
    lo, hi = final * (1 - rel_tol), final * (1 + rel_tol)
    if final < 0:
        lo, hi = hi, lo
    inside = (curve.median >= lo) & (curve.median <= hi)
    if band:
        inside &= (curve.q1 >= lo) & (curve.q3 <= hi)
    if not inside[-1]:
        return float("inf")
    outside = np.nonzero(~inside)[0]
    first = 0 if outside.size == 0 else outside[-1] + 1
    return float(curve.grid[first])
