"""Scoring rules for count forecasts and their horizon means.

All scores are negatively oriented: lower is better. The infinite sums in
the quadratic, spherical and ranked probability scores run over the
distribution's stored support ``0..k_max`` (extended to ``x`` for RPS), so
the neglected tail mass is below the forecast module's ``TAIL_MASS``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from seiprd.errors import DegenerateDistributionError, DomainError

RULES = ("logs", "qs", "sphs", "rps", "dss", "ses", "nses")
PROPER_RULES = ("logs", "qs", "sphs", "rps", "dss", "ses")
LABELS = {
    "logs": "LogS",
    "qs": "QS",
    "sphs": "SphS",
    "rps": "RPS",
    "dss": "DSS",
    "ses": "SES",
    "nses": "NSES",
}


def _check_count(x) -> int:
    if isinstance(x, (bool, np.bool_)) or int(x) != x or x < 0:
        raise DomainError(f"observed count must be a non-negative integer, got {x!r}")
    return int(x)


def _sigma(P, rule):
    var = P.variance()
    if not var > 0.0:
        raise DegenerateDistributionError(f"{rule} needs a positive predictive variance")
    return math.sqrt(var)


def ranked_probability(P, x: int) -> float:
    """Sum over k of ``(F(k) - 1{x <= k})**2`` up to ``max(k_max, x)``."""
    cdf = P.cdf_array
    if x > P.k_max:
        tail = np.atleast_1d(P.cdf(np.arange(P.k_max + 1, x + 1)))
        cdf = np.concatenate([cdf, tail])
    step = (np.arange(cdf.size) >= x).astype(float)
    return float(np.sum((cdf - step) ** 2))


def score(rule: str, P, x) -> float:
    """Score one predictive distribution ``P`` against the observed count ``x``."""
    x = _check_count(x)
    if rule == "logs":
        px = P.pmf(x)
        return math.inf if px <= 0.0 else 0.0 - math.log(px)
    if rule == "qs":
        return float(-2.0 * P.pmf(x) + np.dot(P.probs, P.probs))
    if rule == "sphs":
        return float(-P.pmf(x) / math.sqrt(np.dot(P.probs, P.probs)))
    if rule == "rps":
        return ranked_probability(P, x)
    if rule == "ses":
        return (x - P.mean()) ** 2
    if rule == "dss":
        s = _sigma(P, rule)
        return ((x - P.mean()) / s) ** 2 + 2.0 * math.log(s)
    if rule == "nses":
        s = _sigma(P, rule)
        return ((x - P.mean()) / s) ** 2
    raise DomainError(f"unknown scoring rule {rule!r}; expected one of {RULES}")


def score_all(P, x, rules=RULES) -> dict:
    return {rule: score(rule, P, x) for rule in rules}


def classify_nses(value: float) -> str:
    """Read a mean NSES: above one is over-confident, below one over-cautious."""
    if value > 1.0:
        return "over-confident"
    if value < 1.0:
        return "over-cautious"
    return "calibrated"


@dataclass
class ScoreReport:
    """Per-day scores and their horizon means for one forecast."""

    per_day: dict
    truncated: bool = False
    infinite_logs: int = 0
    means: dict = field(init=False)

    def __post_init__(self):
        self.per_day = {r: np.asarray(v, dtype=float) for r, v in self.per_day.items()}
        lengths = {v.size for v in self.per_day.values()}
        if len(lengths) != 1 or 0 in lengths:
            raise DomainError("per-day score arrays must be non-empty and of equal length")
        self.means = {r: float(v.mean()) for r, v in self.per_day.items()}

    @property
    def n_days(self) -> int:
        return next(iter(self.per_day.values())).size

    @property
    def nses_reading(self) -> str | None:
        return classify_nses(self.means["nses"]) if "nses" in self.means else None


def mean_scores(per_day) -> ScoreReport:
    """Aggregate per-day scores, given as a list of dicts or a dict of sequences."""
    if isinstance(per_day, dict):
        table = per_day
    else:
        rows = list(per_day)
        if not rows:
            raise DomainError("need at least one day of scores")
        table = {r: [row[r] for row in rows] for r in rows[0]}
    report = ScoreReport(table)
    if "logs" in report.per_day:
        report.infinite_logs = int(np.isinf(report.per_day["logs"]).sum())
    return report


def score_forecast(forecast, observed) -> ScoreReport:
    """Score each day of ``forecast`` against the matching observed count."""
    observed = np.asarray(observed)
    if observed.size != len(forecast):
        raise DomainError(f"{observed.size} observations for {len(forecast)} forecast days")
    rows = [score_all(P, x) for P, x in zip(forecast, observed)]
    report = mean_scores(rows)
    report.truncated = any(P.truncated for P in forecast)
    return report


def best_by_rule(means_by_sigma: dict) -> dict:
    """Best hyperparameter per rule.

    ``means_by_sigma`` maps each sigma to a dict of mean scores. Proper
    scores pick the lowest mean. NSES picks the value closest to one from
    below; when every value exceeds one it falls back to the closest
    overall. Ties keep the earlier key.
    """
    keys = list(means_by_sigma)
    if not keys:
        raise DomainError("no hyperparameter values to choose from")
    rules = [r for r in RULES if all(r in means_by_sigma[k] for k in keys)]
    best = {}
    for rule in rules:
        vals = [means_by_sigma[k][rule] for k in keys]
        if rule == "nses":
            below = [i for i, v in enumerate(vals) if v <= 1.0]
            pool = below if below else range(len(keys))
            i = min(pool, key=lambda j: (abs(1.0 - vals[j]), j))
        else:
            i = min(range(len(keys)), key=lambda j: (vals[j], j))
        best[rule] = keys[i]
    return best


def select_best(means_by_sigma: dict) -> dict:
    """Per-rule winners plus an overall choice by majority over rules.

    A tied vote goes to the value with the lowest mean rank across the
    proper rules.
    """
    per_rule = best_by_rule(means_by_sigma)
    keys = list(means_by_sigma)
    votes = {k: sum(1 for v in per_rule.values() if v == k) for k in keys}
    top = max(votes.values())
    tied = [k for k in keys if votes[k] == top]
    if len(tied) > 1:
        ranks = {k: 0.0 for k in keys}
        proper = [r for r in PROPER_RULES if r in per_rule]
        for rule in proper:
            order = sorted(keys, key=lambda k: means_by_sigma[k][rule])
            for pos, k in enumerate(order):
                ranks[k] += pos
        tied.sort(key=lambda k: (ranks[k], keys.index(k)))
    return {"per_rule": per_rule, "overall": tied[0], "votes": votes}


__all__ = [
    "LABELS",
    "PROPER_RULES",
    "RULES",
    "ScoreReport",
    "best_by_rule",
    "classify_nses",
    "mean_scores",
    "ranked_probability",
    "score",
    "score_all",
    "score_forecast",
    "select_best",
]
