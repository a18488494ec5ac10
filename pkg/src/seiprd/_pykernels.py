"""Pure-Python implementations of the hot kernels.

Mirrors ``_ckernels.pyx`` operation for operation so both backends produce
the same floating-point results up to libm differences.
"""
from math import erfc, inf, isfinite, lgamma, log, log1p, sqrt

import numpy as np

from seiprd.errors import DomainError, IntegrationDiverged


def _beta_at(t, times, values, n):
    if t <= times[0]:
        return values[0]
    if t >= times[n - 1]:
        return values[n - 1]
    j = 1
    while times[j] <= t:
        j += 1
    t0 = times[j - 1]
    return values[j - 1] + (values[j] - values[j - 1]) * (t - t0) / (times[j] - t0)


def _deriv(t, y, out, times, values, n, kl, ki, kp, omega, inv_n):
    s, e1, e2, i1, i2, p1, p2 = y[0], y[1], y[2], y[3], y[4], y[5], y[6]
    inf = _beta_at(t, times, values, n) * (i1 + i2) * inv_n * s
    leave = kp * p2
    out[0] = -inf
    out[1] = inf - kl * e1
    out[2] = kl * (e1 - e2)
    out[3] = kl * e2 - ki * i1
    out[4] = ki * (i1 - i2)
    out[5] = ki * i2 - kp * p1
    out[6] = kp * (p1 - p2)
    out[7] = leave * (1.0 - omega)
    out[8] = leave * omega


def integrate(y0, knot_times, knot_values, d_L, d_I, d_P, omega, N, n_days, substeps):
    """Heun integration on a uniform grid; returns the ``(n_days+1, 9)`` daily states."""
    times = [float(v) for v in knot_times]
    values = [float(v) for v in knot_values]
    n = len(times)
    kl, ki, kp = 2.0 / d_L, 2.0 / d_I, 2.0 / d_P
    inv_n = 1.0 / N
    limit = 10.0 * N
    h = 1.0 / substeps
    half_h = 0.5 * h
    y = [float(v) for v in y0]
    k1 = [0.0] * 9
    k2 = [0.0] * 9
    pred = [0.0] * 9
    out = np.empty((n_days + 1, 9))
    out[0] = y
    for day in range(n_days):
        for sub in range(substeps):
            t = day + sub * h
            _deriv(t, y, k1, times, values, n, kl, ki, kp, omega, inv_n)
            for i in range(9):
                pred[i] = y[i] + h * k1[i]
            _deriv(t + h, pred, k2, times, values, n, kl, ki, kp, omega, inv_n)
            for i in range(9):
                y[i] = y[i] + half_h * (k1[i] + k2[i])
        for i in range(9):
            v = y[i]
            if not (-limit <= v <= limit):
                raise IntegrationDiverged(day + 1)
        out[day + 1] = y
    return out


def nb_logpmf_sum(counts, mus, phi):
    """Sum of negative-binomial (mean/dispersion) log-pmfs over paired arrays."""
    if not phi > 0.0:
        raise DomainError(f"phi must be positive, got {phi}")
    total = 0.0
    lg_phi = lgamma(phi)
    for n, mu in zip(counts.tolist(), mus.tolist()):
        if not mu > 0.0:
            raise DomainError(f"mu must be positive, got {mu}")
        total += (
            lgamma(n + phi) - lg_phi - lgamma(n + 1.0)
            + n * (log(mu) - log(mu + phi))
            - phi * log1p(mu / phi)
        )
    if not isfinite(total) and total != float("-inf"):
        raise DomainError("non-finite negative-binomial log-likelihood")
    return total


def observation_loglik(states, d_L, d_I, adm_times, adm_values, calls_times, calls_values,
                       d_days, d_counts, a_days, a_counts, c_days, c_counts,
                       phi_d, phi_a, phi_c, floor, include_constant=True):
    """NB log-likelihood of all three streams for one trajectory.

    With ``include_constant=False`` the ``-log(n!)`` terms are left out.
    """
    from seiprd.observation import latent_mean_arrays

    n_days = states.shape[0]
    for days in (d_days, a_days, c_days):
        if len(days) and (days[0] < 0 or days[-1] >= n_days):
            raise DomainError("observation day outside trajectory span")
    means = latent_mean_arrays(states, d_L, d_I, adm_times, adm_values, calls_times, calls_values)
    total = 0.0
    for days, counts, mu, phi in (
        (d_days, d_counts, means.deaths, phi_d),
        (a_days, a_counts, means.admissions, phi_a),
        (c_days, c_counts, means.calls, phi_c),
    ):
        if len(days):
            counts = np.asarray(counts)
            total += nb_logpmf_sum(counts, np.maximum(mu[days], floor), phi)
            if not include_constant:
                total += sum(lgamma(n + 1.0) for n in counts.tolist())
    return total


def _log_ndtr_nonneg(z):
    # log Phi(z) for z >= 0, where erfc keeps full precision
    return log(0.5 * erfc(-z / sqrt(2.0)))


def log_prior(x, n_beta, hyper):
    """Joint log prior of a flat constrained vector; ``-inf`` outside the support.

    ``hyper`` is laid out as produced by ``PriorConfig.hyper``.
    """
    v = [float(t) for t in x]
    h = [float(t) for t in hyper]
    for t in v:
        if not isfinite(t):
            return -inf
    a1, a2 = v[0], v[1]
    beta = v[2:2 + n_beta]
    d_l, d_i, d_p, omega = v[2 + n_beta:6 + n_beta]
    inv_phi = v[6 + n_beta:9 + n_beta]
    rho = v[9 + n_beta:]
    for t in [a1, a2, omega] + rho:
        if not 0.0 < t < 1.0:
            return -inf
    for t in beta + [d_l, d_i, d_p] + inv_phi:
        if not t > 0.0:
            return -inf

    lp = (h[0] - 1.0) * log(a1) + (h[1] - 1.0) * log1p(-a1) - h[2]
    lp += (h[3] - 1.0) * log(a2) + (h[4] - 1.0) * log1p(-a2) - h[5]
    b1 = beta[0] / h[6]
    lp += h[7] - 0.5 * b1 * b1
    sb, walk = h[8], h[9]
    for prev, cur in zip(beta[:-1], beta[1:]):
        z = (cur - prev) / sb
        lp += walk - 0.5 * z * z - _log_ndtr_nonneg(prev / sb)
    for value, k in ((d_l, 10), (d_i, 13), (d_p, 16)):
        z = (value - h[k]) / h[k + 1]
        lp += h[k + 2] - 0.5 * z * z
    lp += (h[19] - 1.0) * log(omega) + (h[20] - 1.0) * log1p(-omega) - h[21]
    rate = h[22]
    lp += 3.0 * log(rate) - rate * sum(inv_phi)
    for r in rho:
        lp += (h[23] - 1.0) * log(r) + (h[24] - 1.0) * log1p(-r) - h[25]
    return lp
