"""Posterior-predictive distributions of daily deaths over a forecast horizon.

A predictive distribution for one day is an equal-weight mixture of
negative binomials, one component per posterior draw. Probabilities are
exact (no simulated counts); the support is truncated at ``K_max``, the
smallest count whose mixture cdf reaches ``1 - TAIL_MASS``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import nbinom

from seiprd.errors import DomainError, IntegrationDiverged, NumericError
from seiprd.observation import MEAN_FLOOR

log = logging.getLogger(__name__)

TAIL_MASS = 1e-9
K_CAP = 10**7
DEFAULT_HORIZON = 21
_CHUNK = 256
MODES = ("samples", "point")


class FinitePMF:
    """A distribution on ``0..K`` given by an explicit probability vector.

    Also the base of :class:`PredictiveDistribution`, so anything that only
    needs ``probs``, ``pmf``, ``cdf`` and the moments works on both.
    """

    truncated = False

    def __init__(self, probs):
        p = np.array(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("probabilities must be a non-empty 1-D array")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DomainError(f"probabilities sum to {p.sum()!r}, not 1")
        p.flags.writeable = False
        self._probs = p

    @property
    def probs(self) -> np.ndarray:
        """Probabilities of ``0..k_max``."""
        return self._probs

    @property
    def k_max(self) -> int:
        return self._probs.size - 1

    @property
    def cdf_array(self) -> np.ndarray:
        return np.cumsum(self._probs)

    def pmf(self, k):
        k = np.asarray(k)
        inside = (k >= 0) & (k <= self.k_max)
        out = np.where(inside, self._probs[np.clip(k, 0, self.k_max).astype(int)], 0.0)
        return out if out.ndim else float(out)

    def cdf(self, k):
        k = np.asarray(k)
        c = self.cdf_array
        out = np.where(k < 0, 0.0, np.where(k >= self.k_max, 1.0, c[np.clip(k, 0, self.k_max).astype(int)]))
        return out if out.ndim else float(out)

    def mean(self) -> float:
        return float(np.dot(np.arange(self._probs.size), self._probs))

    def variance(self) -> float:
        k = np.arange(self._probs.size)
        m = self.mean()
        return float(np.dot((k - m) ** 2, self._probs))

    def sd(self) -> float:
        return math.sqrt(max(self.variance(), 0.0))

    def quantile(self, q: float) -> int:
        """Smallest ``k`` with ``cdf(k) >= q``."""
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"quantile level must lie in [0, 1], got {q}")
        c = self.cdf_array
        idx = int(np.searchsorted(c, q, side="left"))
        return min(idx, self.k_max)


class PredictiveDistribution(FinitePMF):
    """Equal-weight mixture of NB(mu_s, phi_s) components."""

    def __init__(self, mus, phis):
        mus = np.atleast_1d(np.asarray(mus, dtype=float))
        phis = np.broadcast_to(np.asarray(phis, dtype=float), mus.shape).copy()
        if mus.ndim != 1 or mus.size == 0:
            raise DomainError("need at least one mixture component")
        if not (np.all(mus > 0) and np.all(np.isfinite(mus))):
            raise DomainError("component means must be finite and positive")
        if not (np.all(phis > 0) and np.all(np.isfinite(phis))):
            raise DomainError("component dispersions must be finite and positive")
        mus.flags.writeable = False
        phis.flags.writeable = False
        self.mus = mus
        self.phis = phis
        self._probs, self.truncated = self._build()
        self._probs.flags.writeable = False
        if self.truncated:
            log.warning("predictive support truncated at the cap %d", K_CAP)

    def _components(self):
        return nbinom(self.phis, self.phis / (self.mus + self.phis))

    def _build(self):
        # Each component reaching 1 - TAIL_MASS guarantees the mixture does.
        upper = int(np.max(self._components().ppf(1.0 - TAIL_MASS / 10.0)))
        truncated = upper > K_CAP
        upper = min(upper, K_CAP)
        k = np.arange(upper + 1)
        probs = np.zeros(upper + 1)
        for start in range(0, self.mus.size, _CHUNK):
            mu = self.mus[start:start + _CHUNK, None]
            phi = self.phis[start:start + _CHUNK, None]
            probs += nbinom.pmf(k[None, :], phi, phi / (mu + phi)).sum(axis=0)
        probs /= self.mus.size
        cdf = np.cumsum(probs)
        hit = np.flatnonzero(cdf >= 1.0 - TAIL_MASS)
        k_max = int(hit[0]) if hit.size else upper
        return probs[: k_max + 1], truncated

    @property
    def n_components(self) -> int:
        return self.mus.size

    def pmf(self, k):
        k = np.asarray(k)
        out = self._components().pmf(k[..., None]).mean(axis=-1)
        return out if k.ndim else float(out)

    def cdf(self, k):
        k = np.asarray(k)
        out = self._components().cdf(k[..., None]).mean(axis=-1)
        return out if k.ndim else float(out)

    def mean(self) -> float:
        return float(self.mus.mean())

    def variance(self) -> float:
        # law of total variance over the equal-weight components
        within = self.mus + self.mus**2 / self.phis
        return float(within.mean() + self.mus.var())

    def quantile(self, q: float) -> int:
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"quantile level must lie in [0, 1], got {q}")
        c = self.cdf_array
        if q <= c[-1]:
            return int(np.searchsorted(c, q, side="left"))
        # Beyond the truncation point: walk the exact cdf outward.
        k = self.k_max
        step = max(1, k // 8)
        while k < K_CAP:
            nxt = min(k + step, K_CAP)
            ks = np.arange(k + 1, nxt + 1)
            ck = self.cdf(ks)
            hit = np.flatnonzero(ck >= q)
            if hit.size:
                return int(ks[hit[0]])
            k, step = nxt, 2 * step
        return K_CAP


@dataclass
class Forecast:
    """Per-day predictive distributions for one calibration and one mode.

    ``mus`` has shape ``(horizon, components)``; it and ``phis`` are the
    stored components from which every distribution is rebuilt.
    """

    mode: str
    days: np.ndarray
    mus: np.ndarray
    phis: np.ndarray
    n_dropped: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.days = np.asarray(self.days, dtype=np.int64)
        self.mus = np.asarray(self.mus, dtype=float)
        self.phis = np.asarray(self.phis, dtype=float)
        if self.mus.shape != (self.days.size, self.phis.size):
            raise DomainError("component array shapes do not match")

    def __len__(self) -> int:
        return self.days.size

    def __getitem__(self, i: int) -> PredictiveDistribution:
        if i not in self._cache:
            self._cache[i] = PredictiveDistribution(self.mus[i], self.phis)
        return self._cache[i]

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def any_truncated(self) -> bool:
        return any(p.truncated for p in self)

    def quantiles(self, levels) -> np.ndarray:
        """``(horizon, len(levels))`` integer quantiles."""
        return np.array([[p.quantile(q) for q in levels] for p in self], dtype=np.int64)


def _death_means(spec, x, calibration_end, horizon):
    states = spec.trajectory(x, calibration_end + horizon)
    means = spec.latent_means(x, states)
    return np.maximum(means.deaths[calibration_end + 1:], MEAN_FLOOR)


def posterior_predictive(
    draws,
    spec,
    calibration_end: int,
    mode: str = "samples",
    horizon: int = DEFAULT_HORIZON,
) -> Forecast:
    """Death forecasts for the ``horizon`` days after ``calibration_end``.

    ``draws`` is a :class:`~seiprd.mcmc.PosteriorDraws` or an array of
    constrained vectors. In ``"samples"`` mode every draw is one mixture
    component carrying its own deaths dispersion. In ``"point"`` mode the
    draws are averaged on the constrained scale and a single trajectory is
    used.
    """
    if mode not in MODES:
        raise DomainError(f"unknown forecast mode {mode!r}; expected one of {MODES}")
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    pooled = draws.pooled() if hasattr(draws, "pooled") else np.atleast_2d(np.asarray(draws, dtype=float))
    if pooled.shape[0] == 0:
        raise DomainError("no posterior draws")
    if mode == "point":
        pooled = pooled.mean(axis=0, keepdims=True)
    inv_phi = spec.layout.slices["inv_phi"].start

    mus, phis = [], []
    dropped = 0
    for x in pooled:
        try:
            mus.append(_death_means(spec, x, calibration_end, horizon))
        except IntegrationDiverged:
            dropped += 1
            continue
        phis.append(1.0 / x[inv_phi])
    if dropped:
        msg = f"{dropped} of {pooled.shape[0]} draws diverged and were dropped from the forecast"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        log.warning(msg)
    if not mus:
        raise NumericError("every draw diverged; no forecast components remain")
    days = np.arange(calibration_end + 1, calibration_end + horizon + 1)
    return Forecast(mode, days, np.array(mus).T, np.array(phis), n_dropped=dropped)


__all__ = [
    "DEFAULT_HORIZON",
    "K_CAP",
    "MODES",
    "TAIL_MASS",
    "FinitePMF",
    "Forecast",
    "PredictiveDistribution",
    "posterior_predictive",
]
