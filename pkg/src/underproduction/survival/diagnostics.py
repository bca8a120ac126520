"""Split R-hat and effective sample size for multi-chain MCMC output.

Both functions take ``chains`` shaped ``(n_chains, n_draws)`` or
``(n_chains, n_draws, n_params)`` and return one value per parameter.
"""

from __future__ import annotations

import numpy as np


def _as_3d(chains) -> np.ndarray:
    x = np.asarray(chains, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ValueError("chains must have shape (n_chains, n_draws[, n_params])")
    return x


def _split(x: np.ndarray) -> np.ndarray:
    half = x.shape[1] // 2
    if half < 2:
        raise ValueError("need at least 4 draws per chain")
    return np.concatenate([x[:, :half], x[:, -half:]], axis=0)


def split_rhat(chains) -> np.ndarray:
    """Potential scale reduction on chains split in half."""
    x = _split(_as_3d(chains))
    m, n = x.shape[:2]
    means = x.mean(axis=1)
    B = n * means.var(axis=0, ddof=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    var_plus = (n - 1) / n * W + B / n
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / W)
    # constant parameters mix trivially
    return np.where(W > 0, rhat, np.where(B > 0, np.inf, 1.0))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Autocovariance along axis 1 via FFT, biased estimator."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, n=size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=1)[:, :n]
    return acov / n


def effective_sample_size(chains) -> np.ndarray:
    """Multi-chain ESS using Geyer's initial monotone positive sequence."""
    x = _split(_as_3d(chains))
    m, n, k = x.shape
    out = np.empty(k)
    for j in range(k):
        xj = x[:, :, j]
        acov = _autocov(xj)
        W = (acov[:, 0] * n / (n - 1)).mean()
        var_plus = W * (n - 1) / n
        if m > 1:
            var_plus += xj.mean(axis=1).var(ddof=1)
        if var_plus <= 0:
            out[j] = m * n
            continue
        rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        # sum consecutive pairs while positive, enforcing monotone decrease
        tau = 0.0
        prev = np.inf
        t = 0
        while t + 1 < n:
            pair = rho[t] + rho[t + 1]
            if pair <= 0:
                break
            pair = min(pair, prev)
            tau += pair
            prev = pair
            t += 2
        tau = 2.0 * tau - 1.0
        out[j] = m * n / max(tau, 1.0 / np.log10(m * n))
    return out
