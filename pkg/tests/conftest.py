import numpy as np
import pytest

from seiprd.config import DESK_TRUTH, PRESETS
from seiprd.model_core import PiecewiseLinear, TransmissionParams
from seiprd.observation import ObservationParams
from seiprd.posterior import ModelSpec


def desk_spec():
    p = PRESETS["desk"]
    return ModelSpec(
        N=p.N,
        beta_times=p.beta_times,
        rho_admissions_times=p.rho_admissions_times,
        rho_calls_times=p.rho_calls_times,
    )


@pytest.fixture
def spec():
    return desk_spec()


@pytest.fixture
def truth():
    return np.array(DESK_TRUTH, dtype=float)


@pytest.fixture
def desk_params(spec, truth):
    return spec.to_params(truth)


def make_params(beta=(0.3, 0.3), times=(0.0, 50.0), N=1_000_000.0, **kw):
    base = dict(alpha1=0.9995, alpha2=0.5, d_L=4.0, d_I=5.0, d_P=13.0, omega=0.009)
    base.update(kw)
    return TransmissionParams(beta=PiecewiseLinear(times, beta), N=N, **base)


def make_obs_params(**kw):
    base = dict(
        phi_deaths=10.0,
        phi_admissions=20.0,
        phi_calls=20.0,
        rho_admissions=PiecewiseLinear((0.0, 100.0), (0.05, 0.05)),
        rho_calls=PiecewiseLinear((0.0, 100.0), (0.3, 0.3)),
    )
    base.update(kw)
    return ObservationParams(**base)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
