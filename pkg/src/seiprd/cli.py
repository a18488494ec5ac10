"""Command-line entry point: ``seiprd {simulate,calibrate,forecast,score,sweep}``.

Settings are layered: preset defaults, then ``--config FILE`` (JSON), then
explicit flags. Failures print ``error: <category>: <message>`` on stderr
and exit with the category's code (see ``seiprd.errors``).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from seiprd import __version__
from seiprd.config import PRESETS, RunConfig, build_config, cell_seed, load_config_file
from seiprd.errors import ConfigError, SeiprdError
from seiprd.harness import (
    BLOCKS,
    FORECAST_HEADER,
    POSTERIOR_HEADER,
    calibrate,
    forecast_both,
    forecast_rows,
    held_out,
    load_components,
    load_data,
    model_spec,
    posterior_rows,
    rescore,
    run_sweep,
    save_components,
    sigma_tag,
)
from seiprd.io import fmt, write_rows, write_series_csv
from seiprd.observation import STREAMS
from seiprd.scoring import LABELS, RULES

log = logging.getLogger("seiprd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# (flag, RunConfig field, type, help)
_RUN_FLAGS = [
    ("--preset", "preset", str, f"workload preset: {', '.join(PRESETS)} (default desk)"),
    ("--deaths", "deaths", str, "deaths CSV (date,count)"),
    ("--admissions", "admissions", str, "hospital admissions CSV"),
    ("--calls", "calls", str, "symptom-call CSV"),
    ("--N", "N", float, "population size (default from preset)"),
    ("--calibration-start", "calibration_start", str, "first calibration date, ISO-8601"),
    ("--calibration-end", "calibration_end", str, "last calibration date, ISO-8601"),
    ("--horizon", "horizon", int, "forecast horizon in days (default 21)"),
    ("--sigma-betas", "sigma_betas", _floats, "comma-separated sigma_beta values"),
    ("--n-chains", "n_chains", int, "chains per calibration (default 6)"),
    ("--n-samples", "n_samples", int, "iterations per chain incl. warmup (default 512)"),
    ("--n-warmup", "n_warmup", int, "warmup iterations per chain (default 256)"),
    ("--thin", "thin", int, "Metropolis steps per kept iteration (default from preset)"),
    ("--proposal", "proposal", str, "proposal shape: diagonal or dense (default from preset)"),
    ("--jobs", "jobs", int, "worker processes for chains (default 1)"),
    ("--substeps-per-day", "substeps_per_day", int, "integrator substeps per day (default 4)"),
    ("--seed", "seed", int, "sampler seed (default 0)"),
    ("--data-seed", "data_seed", int, "seed for synthetic data (default from preset)"),
    ("--out-dir", "out_dir", str, "output directory (default ./out)"),
]


def _add_run_flags(p):
    p.add_argument("--config", help="JSON file of run settings; flags override it")
    for flag, dest, typ, text in _RUN_FLAGS:
        p.add_argument(flag, dest=dest, type=typ, default=None, help=text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seiprd", description="SEIPRD calibration, forecasting and scoring workbench.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write synthetic deaths/admissions/calls CSVs for a preset")
    _add_run_flags(p)

    p = sub.add_parser("calibrate", help="sample the posterior for one sigma_beta")
    _add_run_flags(p)
    p.add_argument("--sigma-beta", type=float, help="sigma_beta (default: first of --sigma-betas)")

    p = sub.add_parser("forecast", help="build both forecast modes from a saved draws file")
    _add_run_flags(p)
    p.add_argument("--draws", required=True, help="draws_sigma_<s>.npz written by calibrate")

    p = sub.add_parser("score", help="score stored forecast components against the held-out deaths")
    p.add_argument("components", nargs="+", help="components_sigma_<s>.npz files")
    p.add_argument("--out", help="per-day score CSV (default: print means only)")

    p = sub.add_parser("sweep", help="run the full sigma_beta sweep and write all outputs")
    _add_run_flags(p)
    return parser


def _config(args) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {dest: getattr(args, dest) for _, dest, _, _ in _RUN_FLAGS}
    return build_config(file_values, flags)


def _cmd_simulate(args) -> int:
    cfg = _config(args)
    if not cfg.synthetic:
        raise ConfigError("simulate uses the preset's generating parameters; do not pass input CSVs")
    data, _ = load_data(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stream, series in zip(STREAMS, data):
        write_series_csv(out / f"{stream}.csv", series)
        print(out / f"{stream}.csv")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = _config(args)
    sigma = args.sigma_beta if args.sigma_beta is not None else cfg.sigma_betas[0]
    if not sigma > 0:
        raise ConfigError("sigma_beta must be positive")
    spec = model_spec(cfg)
    data, _ = load_data(cfg, spec)
    draws = calibrate(cfg, spec, data, sigma)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = sigma_tag(sigma)
    np.savez(
        out / f"draws_sigma_{tag}.npz",
        names=np.array(draws.names),
        constrained=draws.constrained,
        unconstrained=draws.unconstrained,
        log_density=draws.log_density,
        accept_rate=draws.accept_rate,
        sigma_beta=np.array(sigma),
        seed=np.array(cell_seed(cfg.seed, sigma)),
    )
    write_rows(out / f"posterior_sigma_{tag}.csv", POSTERIOR_HEADER, posterior_rows(draws))
    print(f"rhat max {np.max(draws.rhat):.3f}, ess min {np.min(draws.ess):.1f}, "
          f"accept {np.round(draws.accept_rate, 3).tolist()}")
    print(out / f"draws_sigma_{tag}.npz")
    return 0


def _cmd_forecast(args) -> int:
    cfg = _config(args)
    spec = model_spec(cfg)
    with np.load(args.draws) as z:
        names = tuple(z["names"].tolist())
        pooled = z["constrained"].reshape(-1, z["constrained"].shape[-1])
        tag = sigma_tag(float(z["sigma_beta"]))
    if names != spec.layout.names:
        raise ConfigError("draws file does not match the configured model layout")
    data, _ = load_data(cfg, spec)
    _, end = cfg.window
    observed = held_out(data, end, cfg.horizon)
    forecasts = forecast_both(pooled, spec, end, cfg.horizon)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_components(out / f"components_sigma_{tag}.npz", forecasts, observed)
    write_rows(out / f"forecast_sigma_{tag}.csv", FORECAST_HEADER, forecast_rows(forecasts, observed))
    print(out / f"forecast_sigma_{tag}.csv")
    return 0


def _cmd_score(args) -> int:
    rows = []
    for path in args.components:
        reports = rescore(path)
        _, observed = load_components(path)
        for mode, label in BLOCKS:
            if mode not in reports:
                continue
            r = reports[mode]
            print(f"{Path(path).name} {label}: "
                  + " ".join(f"{LABELS[k]}={r.means[k]:.6g}" for k in RULES)
                  + f" ({r.nses_reading})")
            for i, day in enumerate(observed.days.tolist()):
                rows.append([Path(path).name, label, day] + [fmt(r.per_day[k][i]) for k in RULES])
    if args.out:
        write_rows(args.out, ["file", "mode", "day"] + [LABELS[k] for k in RULES], rows)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    result = run_sweep(cfg, progress=lambda msg: log.info(msg))
    failed = [c for c in result.cells if c.failure is not None]
    for c in failed:
        print(f"sigma_beta={sigma_tag(c.sigma_beta)} failed: {c.failure}", file=sys.stderr)
    for label, sel in result.selection.items():
        print(f"{label}: best sigma_beta {sel['overall']} (per score: {sel['per_rule']})")
    print(Path(cfg.out_dir) / "scores.csv")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "forecast": _cmd_forecast,
    "score": _cmd_score,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except SeiprdError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
