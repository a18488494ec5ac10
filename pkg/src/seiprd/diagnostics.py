"""Split-R-hat and effective sample size for multi-chain draws.

Arrays are ``(chains, draws)`` or ``(chains, draws, params)``.
"""
import numpy as np

from seiprd.errors import DomainError


def _as_3d(draws):
    x = np.asarray(draws, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise DomainError("draws must have shape (chains, draws[, params])")
    return x


def _squeeze(out, draws):
    return out[0] if np.ndim(draws) == 2 else out


def degenerate(draws) -> np.ndarray:
    """Mask of parameters whose pooled draws have zero variance."""
    x = _as_3d(draws)
    flat = x.reshape(-1, x.shape[2])
    return _squeeze(np.ptp(flat, axis=0) == 0.0, draws)


def split_rhat(draws) -> np.ndarray:
    """Potential scale reduction computed on half-chains.

    Parameters with zero total variance get R-hat 1 (see :func:`degenerate`).
    """
    x = _as_3d(draws)
    m, n, _ = x.shape
    if m < 2 or n < 4:
        raise DomainError("split-R-hat needs >= 2 chains and >= 4 draws per chain")
    half = n // 2
    # Drop the middle draw for odd lengths so both halves match.
    halves = np.concatenate([x[:, :half], x[:, n - half:]], axis=0)
    chain_means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean(axis=0)
    between = half * chain_means.var(axis=0, ddof=1)
    var_plus = (half - 1) / half * within + between / half
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / within)
    flat = degenerate(x)
    rhat = np.where(flat, 1.0, rhat)
    # Constant within each half-chain but different across them.
    rhat = np.where(~flat & (within == 0.0), np.inf, rhat)
    return _squeeze(rhat, draws)


def _autocovariance(x):
    """Biased autocovariance along axis 1 via FFT."""
    n = x.shape[1]
    centred = x - x.mean(axis=1, keepdims=True)
    size = 2 * n
    f = np.fft.rfft(centred, n=size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=1)[:, :n]
    return acov / n


def ess(draws) -> np.ndarray:
    """Effective sample size from the multi-chain autocorrelation.

    The autocorrelation sum is cut at the first negative sum of an adjacent
    (even, odd) lag pair and made monotone, following Geyer.
    """
    x = _as_3d(draws)
    m, n, p = x.shape
    if m < 1 or n < 4:
        raise DomainError("ESS needs >= 4 draws per chain")
    out = np.empty(p)
    for j in range(p):
        acov = _autocovariance(x[:, :, j])
        chain_var = acov[:, 0] * n / (n - 1.0)
        within = chain_var.mean()
        var_plus = within * (n - 1.0) / n
        if m > 1:
            var_plus += x[:, :, j].mean(axis=1).var(ddof=1)
        if var_plus == 0.0:
            out[j] = m * n
            continue
        rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        tau = -1.0
        prev_pair = np.inf
        for k in range(0, n - 1, 2):
            pair = rho[k] + rho[k + 1]
            if pair < 0.0:
                break
            pair = min(pair, prev_pair)
            tau += 2.0 * pair
            prev_pair = pair
        out[j] = m * n / max(tau, 1.0 / np.log10(m * n))
    return _squeeze(out, draws)
