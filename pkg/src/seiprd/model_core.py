"""SEIPRD transmission model: state, parameters, piecewise-linear rates, ODE.

Compartment order throughout the package is
``S, E1, E2, I1, I2, P1, P2, R, D``; trajectories are ``(days, 9)`` arrays.
Model time is measured in days from 17 February 2020 (day 0).
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from seiprd.errors import DomainError

MODEL_EPOCH = _dt.date(2020, 2, 17)
COMPARTMENTS = ("S", "E1", "E2", "I1", "I2", "P1", "P2", "R", "D")
S, E1, E2, I1, I2, P1, P2, R, D = range(9)


def day_of(date: _dt.date | str) -> int:
    """Model day of a calendar date (ISO string accepted)."""
    if isinstance(date, str):
        date = _dt.date.fromisoformat(date)
    return (date - MODEL_EPOCH).days


def date_of(day: int) -> _dt.date:
    return MODEL_EPOCH + _dt.timedelta(days=int(day))


class CompartmentState(NamedTuple):
    S: float
    E1: float
    E2: float
    I1: float
    I2: float
    P1: float
    P2: float
    R: float
    D: float

    def as_array(self) -> np.ndarray:
        return np.asarray(self, dtype=float)

    @classmethod
    def from_array(cls, y) -> "CompartmentState":
        return cls(*(float(v) for v in y))

    def total(self) -> float:
        return float(sum(self))


class PiecewiseLinear:
    """Continuous piecewise-linear function given by its knots.

    Between knots the value is interpolated linearly; outside the knot span
    it is held at the nearest end value.
    """

    __slots__ = ("knot_times", "knot_values")

    def __init__(self, knot_times: Sequence[float], knot_values: Sequence[float]):
        times = np.array(knot_times, dtype=float)
        values = np.array(knot_values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise DomainError("knot_times and knot_values must be 1-D and equal length")
        if times.size < 2:
            raise DomainError("a piecewise-linear function needs at least 2 knots")
        if np.any(np.diff(times) <= 0):
            raise DomainError("knot times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise DomainError("knot values must be finite")
        times.flags.writeable = False
        values.flags.writeable = False
        self.knot_times = times
        self.knot_values = values

    def __call__(self, t):
        return eval_piecewise(self, t)

    def with_values(self, values) -> "PiecewiseLinear":
        return PiecewiseLinear(self.knot_times, values)

    def __len__(self):
        return self.knot_times.size

    def __eq__(self, other):
        if not isinstance(other, PiecewiseLinear):
            return NotImplemented
        return np.array_equal(self.knot_times, other.knot_times) and np.array_equal(
            self.knot_values, other.knot_values
        )

    def __repr__(self):
        return f"PiecewiseLinear(knot_times={self.knot_times.tolist()}, knot_values={self.knot_values.tolist()})"


def eval_piecewise(f: PiecewiseLinear, t):
    """Evaluate ``f`` at scalar or array ``t`` (hold-constant outside the knots)."""
    # np.interp clamps to the end values, which is exactly the extrapolation rule.
    out = np.interp(t, f.knot_times, f.knot_values)
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TransmissionParams:
    alpha1: float
    alpha2: float
    beta: PiecewiseLinear
    d_L: float
    d_I: float
    d_P: float
    omega: float
    N: float

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "omega"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must lie in (0, 1), got {v}")
        for name in ("d_L", "d_I", "d_P"):
            v = getattr(self, name)
            if not v > 0.0:
                raise DomainError(f"{name} must be positive, got {v}")
        if not (self.N >= 6 and float(self.N).is_integer()):
            raise DomainError(f"N must be an integer >= 6, got {self.N}")
        if self.beta.knot_times[0] != 0.0:
            raise DomainError("beta knots must start at model day 0")
        if np.any(self.beta.knot_values < 0):
            raise DomainError("beta values must be non-negative")


def _check_initial(N, alpha1, alpha2):
    if not (0.0 <= alpha1 <= 1.0 and 0.0 <= alpha2 <= 1.0):
        raise DomainError("alpha1 and alpha2 must lie in [0, 1]")
    if not N >= 6:
        raise DomainError("N must be at least 6")


def initial_values(N: float, alpha1: float, alpha2: float) -> np.ndarray:
    """Day-0 compartment vector; the closed interval [0, 1] is accepted for the alphas."""
    _check_initial(N, alpha1, alpha2)
    rest = N - 5.0
    exposed = 0.5 * rest * (1.0 - alpha1) * alpha2 + 1.0
    infectious = 0.5 * rest * (1.0 - alpha1) * (1.0 - alpha2) + 1.0
    return np.array(
        [rest * alpha1 + 1.0, exposed, exposed, infectious, infectious, 0.0, 0.0, 0.0, 0.0]
    )


def initial_state(params: TransmissionParams) -> CompartmentState:
    return CompartmentState.from_array(initial_values(params.N, params.alpha1, params.alpha2))


def rhs(t: float, state, params: TransmissionParams) -> np.ndarray:
    """Time derivative of the nine compartments at model day ``t``."""
    s, e1, e2, i1, i2, p1, p2, r, d = np.asarray(state, dtype=float)
    beta = eval_piecewise(params.beta, t)
    kl = 2.0 / params.d_L
    ki = 2.0 / params.d_I
    kp = 2.0 / params.d_P
    infection = beta * (i1 + i2) / params.N * s
    leave_p = kp * p2
    return np.array(
        [
            -infection,
            infection - kl * e1,
            kl * (e1 - e2),
            kl * e2 - ki * i1,
            ki * (i1 - i2),
            ki * i2 - kp * p1,
            kp * (p1 - p2),
            leave_p * (1.0 - params.omega),
            leave_p * params.omega,
        ]
    )


def beta_knot_days(end_day: int, first_gap: int = 36, spacing: int = 7) -> np.ndarray:
    """Beta knot schedule: day 0, then ``first_gap``, then every ``spacing`` days.

    The last knot is the first one on or after ``end_day``.
    """
    knots = [0, first_gap]
    while knots[-1] < end_day:
        knots.append(knots[-1] + spacing)
    return np.array(knots, dtype=float)


def rho_knot_days(start_day: int, spacing: int, end_day: int) -> np.ndarray:
    knots = [start_day, start_day + spacing]
    while knots[-1] < end_day:
        knots.append(knots[-1] + spacing)
    return np.array(knots, dtype=float)
