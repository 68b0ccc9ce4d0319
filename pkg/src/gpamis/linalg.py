"""Instrumented dense linear algebra.

Every whole factorization or explicit n x n inversion is reported to an
:class:`OpCounter`; triangular solves and quadratic forms are free.  The
counter is the x-axis of every convergence trace produced by the harness.
"""

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric

LOG_2PI = math.log(2.0 * math.pi)

# A Cholesky factorization costs about n^3 / 3 flops; tables that quote tuning
# cost in "n^3 units" divide the number of factorizations by this.
CHOLESKY_N3_FRACTION = 1.0 / 3.0

SYMMETRY_TOL = 1e-10


class OpCounter:
    """Monotone, thread-safe tally of cubic-cost operations."""

    def __init__(self, start=0):
        if start < 0:
            raise ValueError("counter cannot start negative")
        self._ops = int(start)
        self._lock = threading.Lock()

    @property
    def cubic_ops(self):
        return self._ops

    def add(self, n=1):
        if n < 0:
            raise ValueError("counter is monotone; cannot add a negative count")
        with self._lock:
            self._ops += int(n)
        return self._ops

    def __repr__(self):
        return f"OpCounter(cubic_ops={self._ops})"


class _FreeCounter:
    """Counter stand-in for parameter-space (d x d) algebra, which is not charged."""

    cubic_ops = 0

    def add(self, n=1):
        return 0


FREE = _FreeCounter()


def as_n3_units(cubic_ops):
    """Convert a count of factorizations into n^3 flop units."""
    return cubic_ops * CHOLESKY_N3_FRACTION


@dataclass(frozen=True)
class CholeskyFactor:
    L: np.ndarray

    @property
    def n(self):
        return self.L.shape[0]

    def reconstruct(self):
        return self.L @ self.L.T

    def solve(self, b):
        """Solve (L L^T) x = b with two free triangular solves."""
        z = solve_triangular(self.L, b, lower=True, check_finite=False)
        return solve_triangular(self.L, z, lower=True, trans="T", check_finite=False)


def _symmetrize(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {M.shape}")
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
    if asym > SYMMETRY_TOL * scale:
        raise NotSymmetric(f"matrix asymmetry {asym:.3e} exceeds relative tolerance {SYMMETRY_TOL}")
    if asym > 0.0:
        M = 0.5 * (M + M.T)
    return M


def cholesky(M, counter):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Charges exactly one cubic op to ``counter``, including on failure: the
    work was spent either way.
    """
    M = _symmetrize(M)
    counter.add(1)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.isfinite(L)) or np.any(np.diag(L) <= 0.0):
        raise NotPositiveDefinite("factorization produced a non-positive pivot")
    return CholeskyFactor(L)


def factor_from_lower(L):
    """Wrap an already-computed lower factor (no counter charge)."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[0] != L.shape[1]:
        raise DimensionMismatch(f"factor must be square, got {L.shape}")
    if np.any(np.diag(L) <= 0.0) or not np.all(np.isfinite(L)):
        raise NotPositiveDefinite("factor diagonal must be strictly positive")
    return CholeskyFactor(np.tril(L))


def tri_solve(chol, b, transposed=False):
    """Solve ``L x = b`` (or ``L^T x = b``); O(n^2), never counted."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != chol.n:
        raise DimensionMismatch(f"factor has order {chol.n}, right-hand side has {b.shape[0]} rows")
    return solve_triangular(chol.L, b, lower=True, trans="T" if transposed else "N", check_finite=False)


def inverse_from_chol(chol, counter):
    """Explicit inverse of L L^T; charged as two cubic ops (two triangular inversions)."""
    counter.add(2)
    eye = np.eye(chol.n)
    inv = chol.solve(eye)
    return 0.5 * (inv + inv.T)


def log_det_from_chol(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol.L))))


def mvn_log_density(x, mean, chol):
    """Log density of N(mean, L L^T) at ``x`` (rows of ``x`` are evaluated independently)."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    d = chol.n
    if x.shape[-1] != d or mean.shape[-1] != d:
        raise DimensionMismatch(f"expected vectors of length {d}, got {x.shape} and {mean.shape}")
    diff = (x - mean).T
    z = solve_triangular(chol.L, diff, lower=True, check_finite=False)
    maha = np.sum(z * z, axis=0)
    out = -0.5 * d * LOG_2PI - 0.5 * log_det_from_chol(chol) - 0.5 * maha
    return float(out) if np.ndim(out) == 0 else out


def mvn_sample(mean, chol, rng, size=None):
    """Draw ``mean + L z``; ``size`` draws are returned as rows."""
    mean = np.asarray(mean, dtype=float)
    if size is None:
        return mean + chol.L @ rng.standard_normal(chol.n)
    z = rng.standard_normal((size, chol.n))
    return mean + z @ chol.L.T


def cholesky_with_jitter(M, counter, start=1e-10, stop=1e-4):
    """Cholesky with escalating diagonal jitter (relative to mean diagonal).

    Tries the bare matrix first, then jitter ``start * mean(diag)`` growing
    by x10 up to ``stop * mean(diag)``.  Each attempt is a charged
    factorization.  Returns ``(factor, jitter_added)``.
    """
    M = _symmetrize(M)
    try:
        return cholesky(M, counter), 0.0
    except NotPositiveDefinite:
        pass
    scale = float(np.mean(np.diag(M)))
    if not np.isfinite(scale) or scale <= 0.0:
        raise NotPositiveDefinite("matrix has a non-positive mean diagonal")
    rel = start
    eye = np.eye(M.shape[0])
    while rel <= stop * (1 + 1e-12):
        jitter = rel * scale
        try:
            return cholesky(M + jitter * eye, counter), jitter
        except NotPositiveDefinite:
            rel *= 10.0
    raise NotPositiveDefinite(f"matrix not positive definite even with jitter {stop:g} x mean(diag)")


def make_rng(seed):
    """Deterministic generator from a 64-bit integer seed or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.PCG64(seed))


def split_rngs(seed, n):
    """``n`` independent generators spawned from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(n)]
