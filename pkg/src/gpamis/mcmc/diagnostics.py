"""Effective sample size of MCMC output."""

import numpy as np


def autocorrelation(x):
    """Normalized autocorrelation of a 1-D series via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    if acov[0] <= 0.0:
        return np.ones(1)
    return acov / acov[0]


def chain_ess(x):
    """ESS with Geyer's initial monotone positive-sequence truncation."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4:
        return float(n)
    rho = autocorrelation(x)
    pairs = rho[: 2 * ((len(rho) - 1) // 2) + 1]
    gamma = pairs[:-1:2] + pairs[1::2]
    k = np.argmax(gamma <= 0.0) if np.any(gamma <= 0.0) else gamma.shape[0]
    gamma = np.minimum.accumulate(gamma[:k])
    tau = -1.0 + 2.0 * float(np.sum(gamma))
    return float(n / max(tau, 1.0 / np.log10(max(n, 10))))


def min_ess(samples):
    """Smallest per-coordinate ESS of an (n, d) sample array."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 1 and samples.shape[1] > 1:
        samples = samples.T
    return min(chain_ess(samples[:, j]) for j in range(samples.shape[1]))
