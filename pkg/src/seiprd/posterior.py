"""Priors, constrained/unconstrained transforms and the joint log-posterior.

The parameter vector has a fixed layout::

    alpha1, alpha2, beta_1..beta_{J+1}, d_L, d_I, d_P, omega,
    inv_phi_deaths, inv_phi_admissions, inv_phi_calls,
    rho_admissions_1..K+1, rho_calls_1..L+1

Components on (0, 1) use a logit transform, positive components a log
transform. Dispersions are parameterised by their reciprocals, which is
where the exponential priors sit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import betaln, expit, gammaln, log_ndtr, logit

from seiprd import kernels
from seiprd.errors import DomainError, IntegrationDiverged
from seiprd.model_core import PiecewiseLinear, TransmissionParams, initial_values
from seiprd.observation import (
    MEAN_FLOOR,
    ObservationData,
    ObservationParams,
    check_alignment,
    latent_mean_arrays,
)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ParamLayout:
    """Names, slices and support kinds of the flat parameter vector."""

    def __init__(self, n_beta: int, n_rho_admissions: int, n_rho_calls: int):
        if n_beta < 2 or n_rho_admissions < 2 or n_rho_calls < 2:
            raise DomainError("every piecewise-linear block needs at least 2 knots")
        self.n_beta = n_beta
        self.n_rho_admissions = n_rho_admissions
        self.n_rho_calls = n_rho_calls
        blocks = [
            ("alpha1", 1, "unit"),
            ("alpha2", 1, "unit"),
            ("beta", n_beta, "positive"),
            ("d_L", 1, "positive"),
            ("d_I", 1, "positive"),
            ("d_P", 1, "positive"),
            ("omega", 1, "unit"),
            ("inv_phi", 3, "positive"),
            ("rho_admissions", n_rho_admissions, "unit"),
            ("rho_calls", n_rho_calls, "unit"),
        ]
        self.slices = {}
        names, kinds = [], []
        start = 0
        for name, size, kind in blocks:
            self.slices[name] = slice(start, start + size)
            start += size
            if name == "inv_phi":
                names += ["inv_phi_deaths", "inv_phi_admissions", "inv_phi_calls"]
            elif size == 1:
                names.append(name)
            else:
                names += [f"{name}_{i + 1}" for i in range(size)]
            kinds += [kind] * size
        self.dim = start
        self.names = tuple(names)
        self.unit_mask = np.array([k == "unit" for k in kinds])
        self.positive_mask = ~self.unit_mask
        self.unit_index = np.flatnonzero(self.unit_mask)
        self.positive_index = np.flatnonzero(self.positive_mask)
        self.scalar_index = {n: i for i, n in enumerate(self.names)}

    def __eq__(self, other):
        return isinstance(other, ParamLayout) and (
            self.n_beta, self.n_rho_admissions, self.n_rho_calls
        ) == (other.n_beta, other.n_rho_admissions, other.n_rho_calls)

    def block(self, name: str) -> slice:
        return self.slices[name]


class ParamVector:
    """A constrained parameter vector with named accessors."""

    def __init__(self, layout: ParamLayout, values):
        values = np.array(values, dtype=float)
        if values.shape != (layout.dim,):
            raise DomainError(f"expected {layout.dim} parameters, got shape {values.shape}")
        self.layout = layout
        self.values = values

    def __getitem__(self, name):
        if name in self.layout.slices and self.layout.slices[name].stop - self.layout.slices[name].start > 1:
            return self.values[self.layout.slices[name]]
        return float(self.values[self.layout.scalar_index[name]])

    def __getattr__(self, name):
        if name in ("layout", "values"):
            raise AttributeError(name)
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def phi(self) -> np.ndarray:
        return 1.0 / self.values[self.layout.slices["inv_phi"]]

    def as_dict(self) -> dict:
        return dict(zip(self.layout.names, self.values.tolist()))

    def in_support(self) -> bool:
        v = self.values
        u = v[self.layout.unit_mask]
        return bool(np.all(np.isfinite(v)) and np.all(u > 0) and np.all(u < 1)
                    and np.all(v[self.layout.positive_mask] > 0))


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters; only ``sigma_beta`` is swept."""

    sigma_beta: float
    alpha1: tuple = (5.0, 0.5)
    alpha2: tuple = (1.1, 1.1)
    beta1_scale: float = 0.5
    d_L: tuple = (4.0, 3.0)
    d_I: tuple = (5.0, 4.0)
    d_P: tuple = (13.0, 4.0)
    omega: tuple = (5.7, 624.1)
    inv_phi_rate: float = 5.0
    rho: tuple = (1.1, 1.1)

    def __post_init__(self):
        if not self.sigma_beta > 0:
            raise DomainError("sigma_beta must be positive")

    @cached_property
    def hyper(self) -> np.ndarray:
        """Flat hyperparameter array in the order the prior kernels expect."""
        out = []
        for a, b in (self.alpha1, self.alpha2):
            out += [a, b, betaln(a, b)]
        out += [self.beta1_scale, math.log(2.0) - math.log(self.beta1_scale) - _LOG_SQRT_2PI]
        out += [self.sigma_beta, -math.log(self.sigma_beta) - _LOG_SQRT_2PI]
        for mu, sd in (self.d_L, self.d_I, self.d_P):
            out += [mu, sd, -math.log(sd) - _LOG_SQRT_2PI - float(log_ndtr(mu / sd))]
        out += [self.omega[0], self.omega[1], betaln(*self.omega)]
        out += [self.inv_phi_rate]
        out += [self.rho[0], self.rho[1], betaln(*self.rho)]
        return np.array(out, dtype=float)


def beta_logpdf(x, a, b, log_norm=None):
    x = np.asarray(x, dtype=float)
    if log_norm is None:
        log_norm = betaln(a, b)
    return np.sum((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x)) - log_norm


def truncated_normal_logpdf(x, mu, sd):
    """Log density of Normal(mu, sd) truncated to x >= 0."""
    z = (x - mu) / sd
    return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI - log_ndtr(mu / sd)


def log_prior(p: ParamVector | np.ndarray, cfg: PriorConfig, layout: ParamLayout | None = None) -> float:
    """Joint log prior density; ``-inf`` outside the support.

    The beta knots after the first follow a random walk whose steps are
    normal truncated at zero; the truncation mass depends on the previous
    knot and is included.
    """
    if isinstance(p, ParamVector):
        layout, values = p.layout, p.values
    else:
        values = np.asarray(p, dtype=float)
    return kernels.log_prior(values, layout.n_beta, cfg.hyper)


def transform(p: ParamVector | np.ndarray, layout: ParamLayout | None = None):
    """Map constrained values to the unconstrained space.

    Returns ``(u, log_jacobian)`` where the log-Jacobian is that of the
    inverse map evaluated at ``u``.
    """
    if isinstance(p, ParamVector):
        layout, x = p.layout, p.values
    else:
        x = np.asarray(p, dtype=float)
    u = np.empty_like(x)
    um = layout.unit_mask
    u[um] = logit(x[um])
    u[~um] = np.log(x[~um])
    return u, _log_jacobian(u, x, um)


def _log_jacobian(u, x, unit_mask):
    uu = u[unit_mask]
    # log(x (1 - x)) for x = expit(u), written to stay finite for large |u|
    unit = -np.sum(np.logaddexp(0.0, uu) + np.logaddexp(0.0, -uu))
    return float(unit + np.sum(u[~unit_mask]))


def inverse_transform(u, layout: ParamLayout):
    """Map an unconstrained vector back; returns ``(x, log_jacobian)``."""
    u = np.asarray(u, dtype=float)
    ui, pi = layout.unit_index, layout.positive_index
    uu = u[ui]
    x = np.empty_like(u)
    x[ui] = expit(uu)
    up = u[pi]
    x[pi] = np.exp(up)
    soft = np.logaddexp(0.0, uu)
    # log(x (1 - x)) = -softplus(u) - softplus(-u) = u - 2 softplus(u)
    log_jac = float(up.sum() + (uu - 2.0 * soft).sum())
    return x, log_jac


@dataclass(frozen=True)
class ModelSpec:
    """Static model definition: population, knot schedules, integration grid."""

    N: float
    beta_times: tuple
    rho_admissions_times: tuple
    rho_calls_times: tuple
    substeps_per_day: int = 4

    def __post_init__(self):
        for name in ("beta_times", "rho_admissions_times", "rho_calls_times"):
            object.__setattr__(self, name, tuple(float(t) for t in getattr(self, name)))
        if self.beta_times[0] != 0.0:
            raise DomainError("beta knots must start at model day 0")
        if not (self.N >= 6 and float(self.N).is_integer()):
            raise DomainError("N must be an integer >= 6")

    @cached_property
    def layout(self) -> ParamLayout:
        return ParamLayout(len(self.beta_times), len(self.rho_admissions_times), len(self.rho_calls_times))

    @cached_property
    def _arrays(self):
        return (
            np.array(self.beta_times),
            np.array(self.rho_admissions_times),
            np.array(self.rho_calls_times),
        )

    def to_params(self, x) -> tuple[TransmissionParams, ObservationParams]:
        p = x if isinstance(x, ParamVector) else ParamVector(self.layout, x)
        tp = TransmissionParams(
            alpha1=p.alpha1,
            alpha2=p.alpha2,
            beta=PiecewiseLinear(self.beta_times, p.beta),
            d_L=p.d_L,
            d_I=p.d_I,
            d_P=p.d_P,
            omega=p.omega,
            N=self.N,
        )
        phi = p.phi
        op = ObservationParams(
            phi_deaths=float(phi[0]),
            phi_admissions=float(phi[1]),
            phi_calls=float(phi[2]),
            rho_admissions=PiecewiseLinear(self.rho_admissions_times, p.rho_admissions),
            rho_calls=PiecewiseLinear(self.rho_calls_times, p.rho_calls),
        )
        return tp, op

    def trajectory(self, x, horizon_days: int) -> np.ndarray:
        """Raw ``(horizon+1, 9)`` states for constrained vector ``x``."""
        sl = self.layout.slices
        bt, _, _ = self._arrays
        y0 = initial_values(self.N, x[0], x[1])
        return kernels.integrate(
            y0, bt, x[sl["beta"]], x[sl["d_L"]][0], x[sl["d_I"]][0], x[sl["d_P"]][0],
            x[sl["omega"]][0], self.N, horizon_days, self.substeps_per_day,
        )

    def latent_means(self, x, states):
        """(deaths, admissions, calls) daily means for vector ``x`` and its states."""
        sl = self.layout.slices
        _, at, ct = self._arrays
        return latent_mean_arrays(
            states, x[sl["d_L"]][0], x[sl["d_I"]][0],
            at, x[sl["rho_admissions"]], ct, x[sl["rho_calls"]],
        )


@dataclass
class LogPosterior:
    """Callable log-posterior density over the unconstrained space."""

    spec: ModelSpec
    data: ObservationData
    prior: PriorConfig
    horizon_days: int | None = None
    n_diverged: int = field(default=0, init=False)

    def __post_init__(self):
        if self.horizon_days is None:
            last = [int(s.days[-1]) for s in self.data if len(s)]
            self.horizon_days = max(last) if last else 1
        check_alignment(self.data, self.horizon_days + 1)
        self.layout = self.spec.layout
        self._streams = [(s.days, s.counts) for s in self.data]
        self._log_factorials = -float(sum(gammaln(s.counts + 1.0).sum() for s in self.data))

    @property
    def dim(self) -> int:
        return self.layout.dim

    def components(self, u) -> dict:
        """Prior, likelihood and log-Jacobian terms at unconstrained ``u``."""
        x, log_jac = inverse_transform(u, self.layout)
        lp = log_prior(x, self.prior, self.layout)
        if lp == -math.inf:
            return {"prior": lp, "likelihood": -math.inf, "log_jacobian": log_jac, "total": -math.inf}
        try:
            ll = self.log_likelihood(x)
        except IntegrationDiverged:
            self.n_diverged += 1
            ll = -math.inf
        return {"prior": lp, "likelihood": ll, "log_jacobian": log_jac, "total": lp + ll + log_jac}

    def log_likelihood(self, x) -> float:
        states = self.spec.trajectory(x, self.horizon_days)
        sl = self.layout.slices
        _, at, ct = self.spec._arrays
        inv_phi = x[sl["inv_phi"]]
        (dd, dc), (ad, ac), (cd, cc) = self._streams
        return kernels.observation_loglik(
            states, x[sl["d_L"].start], x[sl["d_I"].start],
            at, x[sl["rho_admissions"]], ct, x[sl["rho_calls"]],
            dd, dc, ad, ac, cd, cc,
            1.0 / inv_phi[0], 1.0 / inv_phi[1], 1.0 / inv_phi[2], MEAN_FLOOR, False,
        ) + self._log_factorials

    def __call__(self, u) -> float:
        total = self.components(u)["total"]
        return total if total == total else -math.inf


__all__ = [
    "MEAN_FLOOR",
    "LogPosterior",
    "ModelSpec",
    "ParamLayout",
    "ParamVector",
    "PriorConfig",
    "beta_logpdf",
    "inverse_transform",
    "log_prior",
    "transform",
    "truncated_normal_logpdf",
]
