"""Gradient-free adaptive random-walk Metropolis over the unconstrained space.

Each chain runs ``n_samples`` iterations of ``thin`` Metropolis steps and
keeps the iterations after the first ``n_warmup``. Proposal scales are
adapted during warmup only and frozen afterwards:

* a global log-scale follows a Robbins-Monro recursion toward the target
  acceptance probability at every warmup step;
* the proposal shape (per-parameter variances, or a full covariance with
  ``proposal="dense"``) is re-estimated at the end of each slow-adaptation
  window from the draws inside that window. Windows double in length
  between a fixed initial and terminal buffer.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from seiprd.diagnostics import degenerate, ess, split_rhat
from seiprd.errors import DomainError, InitialisationError
from seiprd.posterior import ParamLayout, inverse_transform, transform

log = logging.getLogger(__name__)

# Constrained intervals for the custom-initialised blocks. These are
# configuration defaults chosen for this package, not published values.
DEFAULT_INIT_INTERVALS = MappingProxyType(
    {
        "alpha1": (0.999, 0.9999),
        "alpha2": (0.3, 0.7),
        "beta": (0.2, 0.5),
        "d_L": (3.0, 5.0),
        "d_I": (4.0, 6.0),
        "d_P": (11.0, 15.0),
        "omega": (0.005, 0.012),
    }
)
DEFAULT_INIT_RANGE = 2.0
MAX_INIT_TRIES = 100


@dataclass(frozen=True)
class ChainConfig:
    n_chains: int = 6
    n_samples: int = 512
    n_warmup: int = 256
    seed: int = 0
    target_accept: float = 0.234
    thin: int = 1
    proposal: str = "diagonal"
    adapt_window: int = 50
    init_intervals: Mapping[str, tuple] = field(default_factory=lambda: dict(DEFAULT_INIT_INTERVALS))
    jobs: int = 1

    def __post_init__(self):
        if self.n_chains < 1:
            raise DomainError("n_chains must be >= 1")
        if not 0 <= self.n_warmup < self.n_samples:
            raise DomainError("need 0 <= n_warmup < n_samples")
        if not 0.0 < self.target_accept < 1.0:
            raise DomainError("target_accept must lie in (0, 1)")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        if self.proposal not in ("diagonal", "dense"):
            raise DomainError(f"unknown proposal kind {self.proposal!r}")
        for name, (lo, hi) in self.init_intervals.items():
            if not lo < hi:
                raise DomainError(f"empty init interval for {name}")

    @property
    def n_retained(self) -> int:
        return self.n_samples - self.n_warmup


@dataclass
class PosteriorDraws:
    """Post-warmup draws of every chain plus sampler diagnostics."""

    names: tuple
    unconstrained: np.ndarray  # (chains, draws, dim)
    constrained: np.ndarray  # (chains, draws, dim)
    log_density: np.ndarray  # (chains, draws)
    accept_rate: np.ndarray  # post-warmup, per chain
    warmup_accept_rate: np.ndarray
    scale_trace: np.ndarray  # global log-scale at every iteration, (chains, n_samples)
    proposal_sd: np.ndarray  # final per-parameter proposal sd, (chains, dim)
    n_warmup: int
    n_diverged: int = 0
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.unconstrained.shape[0] >= 2 and self.unconstrained.shape[1] >= 4:
            self.rhat = split_rhat(self.constrained)
            self.degenerate = degenerate(self.constrained)
        else:
            self.rhat = np.full(len(self.names), np.nan)
            self.degenerate = np.zeros(len(self.names), dtype=bool)
        self.ess = ess(self.constrained) if self.unconstrained.shape[1] >= 4 else np.full(len(self.names), np.nan)

    @property
    def n_chains(self) -> int:
        return self.constrained.shape[0]

    @property
    def n_retained(self) -> int:
        return self.constrained.shape[0] * self.constrained.shape[1]

    def pooled(self) -> np.ndarray:
        return self.constrained.reshape(-1, self.constrained.shape[2])

    def mean(self) -> np.ndarray:
        """Posterior mean on the constrained scale."""
        return self.pooled().mean(axis=0)

    def summary(self) -> list[dict]:
        pooled = self.pooled()
        q = np.quantile(pooled, [0.05, 0.5, 0.95], axis=0)
        return [
            {
                "name": name,
                "mean": float(pooled[:, i].mean()),
                "sd": float(pooled[:, i].std(ddof=1)) if pooled.shape[0] > 1 else 0.0,
                "q05": float(q[0, i]),
                "q50": float(q[1, i]),
                "q95": float(q[2, i]),
                "rhat": float(self.rhat[i]),
                "ess": float(self.ess[i]),
            }
            for i, name in enumerate(self.names)
        ]


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Independent stream for ``chain``, derived from ``seed`` by spawn key."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chain,))))


def init_point(
    layout: ParamLayout | None,
    cfg: ChainConfig,
    rng: np.random.Generator,
    dim: int | None = None,
) -> np.ndarray:
    """Draw an unconstrained starting point.

    Blocks listed in ``cfg.init_intervals`` are drawn uniformly on their
    constrained interval and transformed; all other components are drawn
    uniformly on (-2, 2) in the unconstrained space. The whole beta block
    starts at one common level so the random-walk prior starts near its mode.
    """
    if layout is None:
        return rng.uniform(-DEFAULT_INIT_RANGE, DEFAULT_INIT_RANGE, size=dim)
    u = rng.uniform(-DEFAULT_INIT_RANGE, DEFAULT_INIT_RANGE, size=layout.dim)
    x, _ = inverse_transform(u, layout)
    for name, (lo, hi) in cfg.init_intervals.items():
        sl = layout.block(name)
        x[sl] = rng.uniform(lo, hi) if name == "beta" else rng.uniform(lo, hi, size=sl.stop - sl.start)
    custom = np.zeros(layout.dim, dtype=bool)
    for name in cfg.init_intervals:
        custom[layout.block(name)] = True
    u_custom, _ = transform(x, layout)
    u[custom] = u_custom[custom]
    return u


def _window_ends(n_warmup_steps: int, first: int) -> list[int]:
    """Step indices at which the proposal shape is re-estimated."""
    init_buffer = max(int(0.15 * n_warmup_steps), 1)
    term_buffer = max(int(0.1 * n_warmup_steps), 1)
    end_slow = n_warmup_steps - term_buffer
    ends = []
    start, size = init_buffer, max(first, 1)
    while start + size <= end_slow:
        nxt = start + size
        # Absorb a final short window into the current one.
        if nxt + 2 * size > end_slow:
            nxt = end_slow
        ends.append(nxt)
        start, size = nxt, 2 * size
    return ends


def _proposal_factor(samples: np.ndarray, kind: str) -> np.ndarray:
    n, d = samples.shape
    shrink = n / (n + 5.0)
    if kind == "diagonal":
        var = samples.var(axis=0, ddof=1) if n > 1 else np.ones(d)
        return np.diag(np.sqrt(shrink * var + 1e-3 * (1.0 - shrink) + 1e-12))
    cov = np.cov(samples, rowvar=False) if n > 1 else np.eye(d)
    cov = shrink * np.atleast_2d(cov) + (1e-3 * (1.0 - shrink) + 1e-12) * np.eye(d)
    return np.linalg.cholesky(cov)


def run_chain(
    log_density: Callable,
    u0: np.ndarray,
    cfg: ChainConfig,
    rng: np.random.Generator,
):
    """Run one chain; returns ``(samples, log_densities, stats)`` for all iterations."""
    d = u0.size
    n_steps_warm = cfg.n_warmup * cfg.thin
    ends = set(_window_ends(n_warmup_steps=n_steps_warm, first=cfg.adapt_window))
    init_buffer = max(int(0.15 * n_steps_warm), 1)
    base = 2.38 / math.sqrt(d)
    factor = np.eye(d) * 0.1
    log_scale = 0.0
    rm_t = 0
    window = []

    u = np.array(u0, dtype=float)
    lp = log_density(u)
    samples = np.empty((cfg.n_samples, d))
    lps = np.empty(cfg.n_samples)
    scale_trace = np.empty(cfg.n_samples)
    accepted_warm = accepted_post = 0
    stuck_windows = []
    window_accepts = 0

    step = 0
    for it in range(cfg.n_samples):
        for _ in range(cfg.thin):
            warm = step < n_steps_warm
            z = rng.standard_normal(d)
            prop = u + base * math.exp(log_scale) * (factor @ z)
            lp_prop = log_density(prop)
            log_alpha = lp_prop - lp if lp_prop > -math.inf else -math.inf
            accept_prob = 1.0 if log_alpha >= 0.0 else math.exp(log_alpha)
            if rng.random() < accept_prob:
                u, lp = prop, lp_prop
                if warm:
                    accepted_warm += 1
                    window_accepts += 1
                else:
                    accepted_post += 1
            if warm:
                rm_t += 1
                log_scale += (accept_prob - cfg.target_accept) / (rm_t + 10.0) ** 0.6
                if step >= init_buffer:
                    window.append(u.copy())
                if (step + 1) % cfg.adapt_window == 0:
                    if window_accepts == 0:
                        stuck_windows.append(step + 1 - cfg.adapt_window)
                    window_accepts = 0
                if step + 1 in ends:
                    # Latter half of everything since the initial buffer:
                    # long enough to see the posterior's extent, short
                    # enough to forget the approach from the start point.
                    history = window[len(window) // 2:]
                    factor = _proposal_factor(np.array(history), cfg.proposal)
                    log_scale = 0.0
                    rm_t = 0
            step += 1
        samples[it] = u
        lps[it] = lp
        scale_trace[it] = log_scale

    n_post = (cfg.n_samples - cfg.n_warmup) * cfg.thin
    stats = {
        "warmup_accept": accepted_warm / n_steps_warm if n_steps_warm else math.nan,
        "accept": accepted_post / n_post,
        "scale_trace": scale_trace,
        "proposal_sd": base * math.exp(log_scale) * np.sqrt(np.sum(factor * factor, axis=1)),
        "stuck_windows": stuck_windows,
    }
    return samples, lps, stats


def _default_init(rng, layout, cfg, dim):
    return init_point(layout, cfg, rng, dim=dim)


def _chain_job(args):
    log_density, cfg, chain, init_fn = args
    rng = chain_rng(cfg.seed, chain)
    before = getattr(log_density, "n_diverged", 0)
    for _ in range(MAX_INIT_TRIES):
        u0 = init_fn(rng)
        if log_density(u0) > -math.inf:
            break
    else:
        raise InitialisationError(
            f"chain {chain}: no finite log-density after {MAX_INIT_TRIES} initialisation attempts"
        )
    samples, lps, stats = run_chain(log_density, u0, cfg, rng)
    stats["n_diverged"] = getattr(log_density, "n_diverged", 0) - before
    return samples, lps, stats


def run_chains(
    log_density: Callable,
    cfg: ChainConfig,
    layout: ParamLayout | None = None,
    dim: int | None = None,
    init_fn: Callable | None = None,
) -> PosteriorDraws:
    """Run ``cfg.n_chains`` independent chains and collect post-warmup draws.

    ``layout`` (taken from ``log_density.layout`` when present) enables the
    model-aware initialisation and the constrained view of the draws.
    Chains may run in worker processes (``cfg.jobs > 1``); results are always
    ordered by chain index.
    """
    if layout is None:
        layout = getattr(log_density, "layout", None)
    if dim is None:
        dim = layout.dim if layout is not None else getattr(log_density, "dim", None)
    if dim is None:
        raise DomainError("cannot infer the dimension of the target")
    if init_fn is None:
        init_fn = partial(_default_init, layout=layout, cfg=cfg, dim=dim)

    jobs = [(log_density, cfg, c, init_fn) for c in range(cfg.n_chains)]
    if cfg.jobs > 1 and cfg.n_chains > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_chain_job, jobs))
    else:
        results = [_chain_job(job) for job in jobs]

    keep = slice(cfg.n_warmup, None)
    unconstrained = np.stack([r[0][keep] for r in results])
    log_dens = np.stack([r[1][keep] for r in results])
    if layout is not None:
        constrained = np.empty_like(unconstrained)
        for c in range(unconstrained.shape[0]):
            for i in range(unconstrained.shape[1]):
                constrained[c, i] = inverse_transform(unconstrained[c, i], layout)[0]
        names = layout.names
    else:
        constrained = unconstrained.copy()
        names = tuple(f"x{i}" for i in range(dim))

    notes = []
    for c, (_, _, st) in enumerate(results):
        if st["stuck_windows"]:
            notes.append(
                f"chain {c}: no proposal accepted in warmup window(s) starting at step(s) "
                f"{st['stuck_windows'][:5]}"
            )
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
        log.warning(note)

    return PosteriorDraws(
        names=names,
        unconstrained=unconstrained,
        constrained=constrained,
        log_density=log_dens,
        accept_rate=np.array([r[2]["accept"] for r in results]),
        warmup_accept_rate=np.array([r[2]["warmup_accept"] for r in results]),
        scale_trace=np.stack([r[2]["scale_trace"] for r in results]),
        proposal_sd=np.stack([r[2]["proposal_sd"] for r in results]),
        n_warmup=cfg.n_warmup,
        n_diverged=int(sum(r[2]["n_diverged"] for r in results)),
        warnings=notes,
    )
