"""Fixed-step explicit trapezoidal (Heun) integration of the transmission ODEs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seiprd import kernels
from seiprd.errors import DomainError, NumericError
from seiprd.model_core import COMPARTMENTS, CompartmentState, TransmissionParams, initial_values


@dataclass(frozen=True)
class IntegratorConfig:
    horizon_days: int
    substeps_per_day: int = 4

    def __post_init__(self):
        if self.substeps_per_day < 1:
            raise DomainError("substeps_per_day must be >= 1")
        if self.horizon_days < 1:
            raise DomainError("horizon_days must be >= 1")


class DailyTrajectory:
    """States at integer days ``0..horizon``; ``states`` has shape ``(horizon+1, 9)``."""

    def __init__(self, states: np.ndarray):
        states = np.asarray(states, dtype=float)
        if states.ndim != 2 or states.shape[1] != 9:
            raise DomainError("trajectory array must have shape (days, 9)")
        self.states = states

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, day) -> CompartmentState:
        return CompartmentState.from_array(self.states[day])

    def compartment(self, name: str) -> np.ndarray:
        return self.states[:, COMPARTMENTS.index(name)]

    @property
    def horizon_days(self) -> int:
        return self.states.shape[0] - 1


def heun_step(f, t, y, h):
    """One explicit trapezoidal step: ``y + h/2 [f(t, y) + f(t+h, y + h f(t, y))]``.

    ``f(t, y)`` may work on scalars or numpy arrays.
    """
    if not h > 0:
        raise DomainError("step size must be positive")
    k1 = f(t, y)
    if not np.all(np.isfinite(k1)):
        raise NumericError(f"non-finite derivative at t={t}")
    k2 = f(t + h, y + h * k1)
    if not np.all(np.isfinite(k2)):
        raise NumericError(f"non-finite derivative at t={t + h}")
    return y + 0.5 * h * (k1 + k2)


def integrate_arrays(
    N, alpha1, alpha2, beta_times, beta_values, d_L, d_I, d_P, omega, horizon_days, substeps=4
) -> np.ndarray:
    """Array-level entry point used by the sampler; skips dataclass validation."""
    y0 = initial_values(N, alpha1, alpha2)
    return kernels.integrate(
        y0, beta_times, beta_values, d_L, d_I, d_P, omega, N, horizon_days, substeps
    )


def integrate_daily(params: TransmissionParams, cfg: IntegratorConfig) -> DailyTrajectory:
    """Integrate from the day-0 state and record the state at each integer day.

    Raises :class:`~seiprd.errors.IntegrationDiverged` if any compartment
    leaves ``[-10 N, 10 N]`` or becomes non-finite.
    """
    states = integrate_arrays(
        params.N,
        params.alpha1,
        params.alpha2,
        params.beta.knot_times,
        params.beta.knot_values,
        params.d_L,
        params.d_I,
        params.d_P,
        params.omega,
        cfg.horizon_days,
        cfg.substeps_per_day,
    )
    return DailyTrajectory(states)
