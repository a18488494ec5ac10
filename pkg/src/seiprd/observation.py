"""Observation model: latent daily means and negative-binomial likelihoods.

Three surveillance streams are modelled, each as NB(mean, phi) with
variance ``mean + mean**2 / phi``:

* deaths: first difference of the D compartment;
* hospital admissions: ``rho_admissions(t) * (2/d_I) * I2``;
* NHS 111 symptom calls: ``rho_calls(t) * ((2/d_L) E2 + (2/d_I) I2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from seiprd import kernels
from seiprd.errors import AlignmentError, DomainError, OrderingError, ValidationError
from seiprd.integrator import DailyTrajectory
from seiprd.model_core import D, E2, I2, PiecewiseLinear, TransmissionParams

MEAN_FLOOR = 1e-10
STREAMS = ("deaths", "admissions", "calls")


@dataclass(frozen=True)
class ObservationParams:
    phi_deaths: float
    phi_admissions: float
    phi_calls: float
    rho_admissions: PiecewiseLinear
    rho_calls: PiecewiseLinear

    def __post_init__(self):
        for name in ("phi_deaths", "phi_admissions", "phi_calls"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("rho_admissions", "rho_calls"):
            vals = getattr(self, name).knot_values
            if np.any(vals <= 0) or np.any(vals >= 1):
                raise DomainError(f"{name} knot values must lie in (0, 1)")

    def phi(self, stream: str) -> float:
        return getattr(self, f"phi_{stream}")


class CountSeries:
    """Day-indexed non-negative integer counts; missing days are simply absent."""

    __slots__ = ("days", "counts")

    def __init__(self, days, counts):
        days = np.asarray(days)
        counts = np.asarray(counts)
        if days.shape != counts.shape or days.ndim != 1:
            raise ValidationError("days and counts must be 1-D and the same length")
        if days.size and not np.issubdtype(days.dtype, np.integer):
            if not np.all(days == np.round(days)):
                raise ValidationError("days must be integers")
        if counts.size and not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.round(counts)):
                raise ValidationError("counts must be integers")
        days = days.astype(np.int64)
        counts = counts.astype(np.int64)
        bad = np.flatnonzero(counts < 0)
        if bad.size:
            raise ValidationError(f"negative count at position {bad[0]}")
        dup = np.flatnonzero(np.diff(days) <= 0)
        if dup.size:
            raise OrderingError(f"days not strictly increasing at position {dup[0] + 1}")
        days.flags.writeable = False
        counts.flags.writeable = False
        self.days = days
        self.counts = counts

    def __len__(self):
        return self.days.size

    def window(self, first_day: int, last_day: int) -> "CountSeries":
        keep = (self.days >= first_day) & (self.days <= last_day)
        return CountSeries(self.days[keep], self.counts[keep])

    def __eq__(self, other):
        if not isinstance(other, CountSeries):
            return NotImplemented
        return np.array_equal(self.days, other.days) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"CountSeries(n={len(self)}, days={self.days[:3].tolist()}...)"


class ObservationData(NamedTuple):
    deaths: CountSeries
    admissions: CountSeries
    calls: CountSeries

    def window(self, first_day, last_day) -> "ObservationData":
        return ObservationData(*(s.window(first_day, last_day) for s in self))


class LatentMeans(NamedTuple):
    """Daily NB means for each stream, indexed by model day from 0."""

    deaths: np.ndarray
    admissions: np.ndarray
    calls: np.ndarray


def nb_log_pmf(n, mu, phi):
    """Log NB(mu, phi) probability of count ``n`` (scalars or broadcastable arrays)."""
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(~(mu > 0)) or np.any(~(phi > 0)):
        raise DomainError("mu and phi must be positive")
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise DomainError("count must be non-negative")
    out = (
        gammaln(n + phi) - gammaln(phi) - gammaln(n + 1.0)
        + n * (np.log(mu) - np.log(mu + phi))
        - phi * np.log1p(mu / phi)
    )
    return float(out) if out.ndim == 0 else out


def sample_nb(rng: np.random.Generator, mu, phi, size=None):
    """Draw NB(mu, phi) counts."""
    mu = np.asarray(mu, dtype=float)
    return rng.negative_binomial(phi, phi / (mu + phi), size=size)


def latent_mean_arrays(states, d_L, d_I, adm_times, adm_values, calls_times, calls_values):
    """Means from a raw ``(days, 9)`` state array.

    Negative compartment undershoot is clamped to zero here only; every mean
    is floored at ``MEAN_FLOOR``.
    """
    clamped = np.maximum(states[:, (D, E2, I2)], 0.0)
    dead, e2, i2 = clamped[:, 0], clamped[:, 1], clamped[:, 2]
    days = np.arange(states.shape[0], dtype=float)
    deaths = np.empty_like(dead)
    deaths[0] = dead[0]
    np.subtract(dead[1:], dead[:-1], out=deaths[1:])
    new_pending = (2.0 / d_I) * i2
    admissions = np.interp(days, adm_times, adm_values) * new_pending
    calls = np.interp(days, calls_times, calls_values) * (
        (2.0 / d_L) * e2 + new_pending
    )
    return LatentMeans(
        np.maximum(deaths, MEAN_FLOOR),
        np.maximum(admissions, MEAN_FLOOR),
        np.maximum(calls, MEAN_FLOOR),
    )


def latent_means(traj: DailyTrajectory, tp: TransmissionParams, op: ObservationParams) -> LatentMeans:
    """Deaths ``D(t) - D(t-1)`` (with ``D(-1) = 0``), admissions and calls per day."""
    return latent_mean_arrays(
        traj.states,
        tp.d_L,
        tp.d_I,
        op.rho_admissions.knot_times,
        op.rho_admissions.knot_values,
        op.rho_calls.knot_times,
        op.rho_calls.knot_values,
    )


def check_alignment(data: ObservationData, n_days: int):
    for name, series in zip(STREAMS, data):
        if len(series) and (series.days[0] < 0 or series.days[-1] >= n_days):
            raise AlignmentError(
                f"{name} observations span days {series.days[0]}..{series.days[-1]} "
                f"outside trajectory days 0..{n_days - 1}"
            )


def stream_log_likelihood(series: CountSeries, means: np.ndarray, phi: float) -> float:
    if not len(series):
        return 0.0
    return kernels.nb_logpmf_sum(series.counts, means[series.days], phi)


def log_likelihood(data: ObservationData, means: LatentMeans, op: ObservationParams) -> float:
    """Total NB log-likelihood over every observed (day, count) pair of all streams."""
    check_alignment(data, means.deaths.shape[0])
    total = 0.0
    for name, series, mu in zip(STREAMS, data, means):
        total += stream_log_likelihood(series, mu, op.phi(name))
    if math.isnan(total):
        raise DomainError("log-likelihood is NaN")
    return total
