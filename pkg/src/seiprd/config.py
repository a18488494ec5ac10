"""Run configuration and the bundled presets.

A run is described by :class:`RunConfig`. Values come from a preset, then
an optional JSON config file, then command-line flags, each layer
overriding the previous one.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seiprd.errors import ConfigError
from seiprd.mcmc import ChainConfig
from seiprd.model_core import beta_knot_days, day_of, rho_knot_days

DEFAULT_SIGMA_BETAS = (0.0005, 0.001, 0.0025, 0.005, 0.01, 0.025, 0.05)
QUANTILE_LEVELS = (0.025, 0.25, 0.5, 0.75, 0.975)

# Generating parameters of the desk scenario, in the posterior layout
# (alpha1, alpha2, beta_1..6, d_L, d_I, d_P, omega, inv_phi x3,
# rho_admissions x2, rho_calls x2). The beta knots were drawn once from a
# zero-truncated normal random walk with step scale 0.025.
DESK_TRUTH = (
    0.9995, 0.5,
    0.3, 0.351, 0.287, 0.298, 0.283, 0.272,
    4.0, 5.0, 13.0, 0.009,
    0.1, 0.05, 0.05,
    0.05, 0.04,
    0.3, 0.35,
)
DESK_WALK_SCALE = 0.025


@dataclass(frozen=True)
class Preset:
    """Population, knot schedules, windows and sampler budget for a workload."""

    name: str
    N: float
    calibration_start: str
    calibration_end: str
    beta_times: tuple | None = None
    rho_admissions_times: tuple | None = None
    rho_calls_times: tuple | None = None
    truth: tuple | None = None
    data_seed: int = 1
    chain: dict = field(default_factory=dict)

    def schedules(self, calibration_end: int):
        """Knot days for beta, admissions ratio and calls ratio."""
        if self.beta_times is not None:
            return self.beta_times, self.rho_admissions_times, self.rho_calls_times
        first = day_of("2020-03-24")
        return (
            tuple(beta_knot_days(calibration_end).tolist()),
            tuple(rho_knot_days(first, 84, calibration_end).tolist()),
            tuple(rho_knot_days(first, 28, calibration_end).tolist()),
        )


PRESETS = {
    "desk": Preset(
        name="desk",
        N=1_000_000.0,
        calibration_start="2020-02-18",
        calibration_end="2020-06-16",
        beta_times=(0.0, 24.0, 48.0, 72.0, 96.0, 120.0),
        rho_admissions_times=(0.0, 120.0),
        rho_calls_times=(0.0, 120.0),
        truth=DESK_TRUTH,
        data_seed=1,
        chain={"proposal": "dense", "thin": 200},
    ),
    "england2020": Preset(
        name="england2020",
        # ONS mid-2019 estimate for England; the source text gives no value.
        N=56_286_961.0,
        calibration_start="2020-03-24",
        calibration_end="2020-12-31",
        chain={"proposal": "dense", "thin": 200},
    ),
}


@dataclass(frozen=True)
class RunConfig:
    preset: str = "desk"
    deaths: str | None = None
    admissions: str | None = None
    calls: str | None = None
    N: float | None = None
    calibration_start: str | None = None
    calibration_end: str | None = None
    horizon: int = 21
    sigma_betas: tuple = DEFAULT_SIGMA_BETAS
    n_chains: int = 6
    n_samples: int = 512
    n_warmup: int = 256
    thin: int | None = None
    proposal: str | None = None
    jobs: int = 1
    substeps_per_day: int = 4
    seed: int = 0
    data_seed: int | None = None
    out_dir: str = "out"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        object.__setattr__(self, "sigma_betas", tuple(float(s) for s in self.sigma_betas))
        if not self.sigma_betas:
            raise ConfigError("need at least one sigma_beta value")
        if any(not s > 0 for s in self.sigma_betas):
            raise ConfigError("sigma_beta values must be positive")
        if len(set(self.sigma_betas)) != len(self.sigma_betas):
            raise ConfigError("sigma_beta values must be distinct")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.substeps_per_day < 1:
            raise ConfigError("substeps_per_day must be >= 1")
        streams = [self.deaths, self.admissions, self.calls]
        if any(streams) and not all(streams):
            raise ConfigError("give all three of deaths, admissions and calls, or none")
        if not any(streams) and self.preset_obj.truth is None:
            raise ConfigError(f"preset {self.preset!r} has no synthetic truth; input CSVs are required")
        try:
            start, end = self.window
        except ValueError as exc:
            raise ConfigError(f"bad calibration date: {exc}") from None
        if not 0 <= start < end:
            raise ConfigError("calibration window must satisfy 17 Feb 2020 <= start < end")
        self.chain_config(0)

    @property
    def preset_obj(self) -> Preset:
        return PRESETS[self.preset]

    @property
    def synthetic(self) -> bool:
        return self.deaths is None

    @property
    def window(self) -> tuple[int, int]:
        p = self.preset_obj
        return (
            day_of(self.calibration_start or p.calibration_start),
            day_of(self.calibration_end or p.calibration_end),
        )

    @property
    def population(self) -> float:
        return float(self.N if self.N is not None else self.preset_obj.N)

    @property
    def synthetic_seed(self) -> int:
        return self.data_seed if self.data_seed is not None else self.preset_obj.data_seed

    def chain_config(self, seed: int) -> ChainConfig:
        preset = self.preset_obj.chain
        try:
            return ChainConfig(
                n_chains=self.n_chains,
                n_samples=self.n_samples,
                n_warmup=self.n_warmup,
                seed=seed,
                thin=self.thin if self.thin is not None else preset.get("thin", 1),
                proposal=self.proposal or preset.get("proposal", "diagonal"),
                jobs=self.jobs,
            )
        except Exception as exc:
            raise ConfigError(str(exc)) from None

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["sigma_betas"] = list(self.sigma_betas)
        return out


def cell_seed(seed: int, sigma_beta: float) -> int:
    """Chain seed for one sweep cell, keyed by the sigma value not its position."""
    bits = int(np.float64(sigma_beta).view(np.uint64))
    return int(np.random.SeedSequence([seed, bits]).generate_state(1, dtype=np.uint32)[0])


def load_config_file(path) -> dict:
    """Read a JSON object of RunConfig fields."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return data


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge config-file values and explicit overrides (overrides win)."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
