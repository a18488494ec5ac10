"""Synthetic data, calibration cells, the sigma_beta sweep and its output files.

Sweep outputs (all deterministic for a fixed config and seed):

``scores.csv``
    mean scores, one column per sigma_beta, a point-estimate block followed
    by a posterior-samples block.
``forecast_sigma_<s>.csv``
    daily forecast quantiles and means for both modes plus observed deaths.
``components_sigma_<s>.npz``
    the NB mixture components behind those forecasts, for rescoring.
``posterior_sigma_<s>.csv``
    posterior summary with R-hat and ESS per parameter.
``selection.json``
    best sigma_beta per score and overall, for each forecast mode.
``metadata.json``
    config, seeds, input hashes, per-cell diagnostics and output hashes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seiprd import __version__
from seiprd.config import QUANTILE_LEVELS, RunConfig, cell_seed
from seiprd.errors import AlignmentError, InitialisationError
from seiprd.forecast import Forecast, posterior_predictive
from seiprd.integrator import IntegratorConfig, integrate_daily
from seiprd.io import (
    blob_hash,
    fmt,
    ingest_csv,
    series_digest,
    sha256_file,
    write_json,
    write_rows,
)
from seiprd.kernels import BACKEND
from seiprd.mcmc import PosteriorDraws, run_chains
from seiprd.model_core import TransmissionParams, date_of
from seiprd.observation import (
    STREAMS,
    CountSeries,
    ObservationData,
    ObservationParams,
    latent_means,
    sample_nb,
)
from seiprd.posterior import LogPosterior, ModelSpec, PriorConfig
from seiprd.scoring import LABELS, RULES, ScoreReport, score_forecast, select_best

log = logging.getLogger(__name__)

BLOCKS = (("point", "point-estimate"), ("samples", "posterior-samples"))


def simulate_synthetic(
    tp: TransmissionParams,
    op: ObservationParams,
    window: tuple[int, int],
    seed: int,
    substeps_per_day: int = 4,
) -> ObservationData:
    """Draw NB counts for every day in ``window`` (inclusive) from the model.

    Streams are drawn in the order deaths, admissions, calls from one
    generator seeded with ``seed``. Calls are drawn for every day and the
    weekend days then removed, as in the published call feed.
    """
    first, last = window
    traj = integrate_daily(tp, IntegratorConfig(horizon_days=last, substeps_per_day=substeps_per_day))
    means = latent_means(traj, tp, op)
    rng = np.random.default_rng(seed)
    days = np.arange(first, last + 1)
    out = []
    for stream in STREAMS:
        counts = sample_nb(rng, getattr(means, stream)[days], op.phi(stream))
        keep = np.ones(days.size, dtype=bool)
        if stream == "calls":
            keep = np.array([date_of(d).weekday() < 5 for d in days])
        out.append(CountSeries(days[keep], counts[keep]))
    return ObservationData(*out)


def model_spec(cfg: RunConfig) -> ModelSpec:
    _, end = cfg.window
    bt, at, ct = cfg.preset_obj.schedules(end)
    return ModelSpec(
        N=cfg.population,
        beta_times=bt,
        rho_admissions_times=at,
        rho_calls_times=ct,
        substeps_per_day=cfg.substeps_per_day,
    )


def load_data(cfg: RunConfig, spec: ModelSpec | None = None):
    """Observed streams for the run plus a description of where they came from."""
    if cfg.synthetic:
        spec = spec or model_spec(cfg)
        tp, op = spec.to_params(np.array(cfg.preset_obj.truth, dtype=float))
        _, end = cfg.window
        data = simulate_synthetic(tp, op, (1, end + cfg.horizon), cfg.synthetic_seed, cfg.substeps_per_day)
        inputs = {
            s: {"source": f"synthetic:{cfg.preset}:seed={cfg.synthetic_seed}", "sha256": series_digest(series)}
            for s, series in zip(STREAMS, data)
        }
        return data, inputs
    paths = {"deaths": cfg.deaths, "admissions": cfg.admissions, "calls": cfg.calls}
    data = ObservationData(*(ingest_csv(paths[s]) for s in STREAMS))
    inputs = {s: {"source": Path(paths[s]).name, "sha256": sha256_file(paths[s])} for s in STREAMS}
    return data, inputs


def held_out(data: ObservationData, calibration_end: int, horizon: int) -> CountSeries:
    series = data.deaths.window(calibration_end + 1, calibration_end + horizon)
    if not len(series):
        raise AlignmentError("no observed deaths inside the forecast window")
    return series


def calibrate(cfg: RunConfig, spec: ModelSpec, data: ObservationData, sigma_beta: float) -> PosteriorDraws:
    start, end = cfg.window
    target = LogPosterior(spec, data.window(start, end), PriorConfig(sigma_beta), horizon_days=end)
    return run_chains(target, cfg.chain_config(cell_seed(cfg.seed, sigma_beta)))


def forecast_both(draws, spec: ModelSpec, calibration_end: int, horizon: int) -> dict:
    return {
        mode: posterior_predictive(draws, spec, calibration_end, mode=mode, horizon=horizon)
        for mode, _ in BLOCKS
    }


def score_on_observed(forecast: Forecast, observed: CountSeries) -> ScoreReport:
    """Score only the forecast days that have an observation."""
    idx = np.searchsorted(forecast.days, observed.days)
    sub = Forecast(forecast.mode, forecast.days[idx], forecast.mus[idx], forecast.phis, forecast.n_dropped)
    return score_forecast(sub, observed.counts)


@dataclass
class Cell:
    sigma_beta: float
    draws: PosteriorDraws | None = None
    forecasts: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    failure: str | None = None


@dataclass
class SweepResult:
    config: RunConfig
    cells: list
    selection: dict
    files: dict


def run_cell(cfg: RunConfig, spec: ModelSpec, data: ObservationData, sigma_beta: float, observed) -> Cell:
    cell = Cell(sigma_beta)
    _, end = cfg.window
    try:
        cell.draws = calibrate(cfg, spec, data, sigma_beta)
    except InitialisationError as exc:
        cell.failure = f"initialisation: {exc}"
        log.error("sigma_beta=%s: %s", sigma_beta, cell.failure)
        return cell
    cell.forecasts = forecast_both(cell.draws, spec, end, cfg.horizon)
    cell.reports = {mode: score_on_observed(f, observed) for mode, f in cell.forecasts.items()}
    return cell


def sigma_tag(sigma_beta: float) -> str:
    return format(sigma_beta, "g")


def run_sweep(cfg: RunConfig, progress=None) -> SweepResult:
    """Calibrate, forecast and score every sigma_beta, then write the outputs."""
    spec = model_spec(cfg)
    data, inputs = load_data(cfg, spec)
    _, end = cfg.window
    observed = held_out(data, end, cfg.horizon)
    cells = []
    for s in cfg.sigma_betas:
        if progress:
            progress(f"sigma_beta={sigma_tag(s)}: calibrating")
        cells.append(run_cell(cfg, spec, data, s, observed))
    selection = _selection(cells)
    files = write_outputs(cfg, spec, cells, observed, inputs, selection)
    return SweepResult(cfg, cells, selection, files)


def _selection(cells) -> dict:
    done = [c for c in cells if c.failure is None]
    if not done:
        return {}
    out = {}
    for mode, label in BLOCKS:
        means = {sigma_tag(c.sigma_beta): c.reports[mode].means for c in done}
        out[label] = select_best(means)
    return out


def score_table_rows(cells) -> list:
    rows = []
    for mode, label in BLOCKS:
        for rule in RULES:
            row = [label, LABELS[rule]]
            for c in cells:
                row.append(fmt(c.reports[mode].means[rule]) if c.failure is None else "")
            rows.append(row)
    return rows


def save_components(path, forecasts: dict, observed: CountSeries) -> None:
    arrays = {"observed_days": observed.days, "observed_counts": observed.counts}
    for mode, f in forecasts.items():
        arrays[f"{mode}_days"] = f.days
        arrays[f"{mode}_mus"] = f.mus
        arrays[f"{mode}_phis"] = f.phis
        arrays[f"{mode}_dropped"] = np.array(f.n_dropped)
    np.savez(path, **arrays)


def load_components(path):
    """Forecasts by mode and the observed held-out series from a components file."""
    with np.load(path) as z:
        forecasts = {
            mode: Forecast(mode, z[f"{mode}_days"], z[f"{mode}_mus"], z[f"{mode}_phis"], int(z[f"{mode}_dropped"]))
            for mode, _ in BLOCKS
            if f"{mode}_mus" in z
        }
        observed = CountSeries(z["observed_days"], z["observed_counts"])
    return forecasts, observed


def rescore(path) -> dict:
    """Recompute the mean scores of each mode from a stored components file."""
    forecasts, observed = load_components(path)
    return {mode: score_on_observed(f, observed) for mode, f in forecasts.items()}


def forecast_rows(forecasts: dict, observed: CountSeries) -> list:
    obs = dict(zip(observed.days.tolist(), observed.counts.tolist()))
    rows = []
    for mode, label in BLOCKS:
        if mode not in forecasts:
            continue
        f = forecasts[mode]
        q = f.quantiles(QUANTILE_LEVELS)
        for i, day in enumerate(f.days.tolist()):
            rows.append(
                [label, date_of(day).isoformat(), day, obs.get(day, "")]
                + q[i].tolist()
                + [fmt(f[i].mean())]
            )
    return rows


FORECAST_HEADER = ["mode", "date", "day", "observed"] + [f"q{q:g}" for q in QUANTILE_LEVELS] + ["mean"]


def posterior_rows(draws: PosteriorDraws) -> list:
    keys = ("mean", "sd", "q05", "q50", "q95", "rhat", "ess")
    return [[r["name"]] + [fmt(r[k]) for k in keys] for r in draws.summary()]


POSTERIOR_HEADER = ["parameter", "mean", "sd", "q05", "q50", "q95", "rhat", "ess"]


def _cell_metadata(cell: Cell) -> dict:
    if cell.failure is not None:
        return {"status": "failed", "failure": cell.failure}
    d = cell.draws
    return {
        "status": "ok",
        "rhat_max": float(np.max(d.rhat)),
        "ess_min": float(np.min(d.ess)),
        "accept_rate": d.accept_rate.tolist(),
        "n_diverged": d.n_diverged,
        "sampler_warnings": list(d.warnings),
        "forecast": {
            mode: {
                "components": int(cell.forecasts[mode].phis.size),
                "dropped": cell.forecasts[mode].n_dropped,
                "truncated": bool(cell.reports[mode].truncated),
                "infinite_logs": cell.reports[mode].infinite_logs,
                "nses_reading": cell.reports[mode].nses_reading,
            }
            for mode, _ in BLOCKS
        },
    }


def write_outputs(cfg, spec, cells, observed, inputs, selection) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "scores.csv"
    write_rows(path, ["block", "score"] + [sigma_tag(c.sigma_beta) for c in cells], score_table_rows(cells))
    written.append(path)
    for c in cells:
        if c.failure is not None:
            continue
        tag = sigma_tag(c.sigma_beta)
        path = out / f"forecast_sigma_{tag}.csv"
        write_rows(path, FORECAST_HEADER, forecast_rows(c.forecasts, observed))
        written.append(path)
        path = out / f"components_sigma_{tag}.npz"
        save_components(path, c.forecasts, observed)
        written.append(path)
        path = out / f"posterior_sigma_{tag}.csv"
        write_rows(path, POSTERIOR_HEADER, posterior_rows(c.draws))
        written.append(path)
    path = out / "selection.json"
    write_json(path, selection)
    written.append(path)

    config = cfg.as_dict()
    config.pop("out_dir")
    _, end = cfg.window
    meta = {
        "package_version": __version__,
        "kernel_backend": BACKEND,
        "config": config,
        "seed": cfg.seed,
        "cell_seeds": {sigma_tag(c.sigma_beta): cell_seed(cfg.seed, c.sigma_beta) for c in cells},
        "model": {
            "N": spec.N,
            "beta_knots": list(spec.beta_times),
            "rho_admissions_knots": list(spec.rho_admissions_times),
            "rho_calls_knots": list(spec.rho_calls_times),
            "calibration_days": list(cfg.window),
            "forecast_days": [end + 1, end + cfg.horizon],
        },
        "inputs": inputs,
        "cells": {sigma_tag(c.sigma_beta): _cell_metadata(c) for c in cells},
        "outputs": {p.name: blob_hash(p.read_bytes()) for p in written},
    }
    path = out / "metadata.json"
    write_json(path, _finite(meta))
    written.append(path)
    return {p.name: p for p in written}


def _finite(obj):
    """Replace non-finite floats so the metadata stays strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


__all__ = [
    "BLOCKS",
    "Cell",
    "SweepResult",
    "calibrate",
    "forecast_both",
    "held_out",
    "load_components",
    "load_data",
    "model_spec",
    "rescore",
    "run_cell",
    "run_sweep",
    "save_components",
    "score_on_observed",
    "simulate_synthetic",
]
