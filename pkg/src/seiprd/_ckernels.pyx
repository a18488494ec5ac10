# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: fixed-step Heun integration and NB log-likelihood sums."""
import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, lgamma, log, log1p, isfinite, sqrt

from seiprd.errors import DomainError, IntegrationDiverged

cnp.import_array()


cdef inline double _beta_at(double t, const double[:] times, const double[:] values, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t j
    cdef double t0
    if t <= times[0]:
        return values[0]
    if t >= times[n - 1]:
        return values[n - 1]
    j = 1
    while times[j] <= t:
        j += 1
    t0 = times[j - 1]
    return values[j - 1] + (values[j] - values[j - 1]) * (t - t0) / (times[j] - t0)


cdef inline void _deriv(double t, double* y, double* out, const double[:] times, const double[:] values,
                        Py_ssize_t n, double kl, double ki, double kp, double omega, double inv_n) noexcept nogil:
    cdef double inf = _beta_at(t, times, values, n) * (y[3] + y[4]) * inv_n * y[0]
    cdef double leave = kp * y[6]
    out[0] = -inf
    out[1] = inf - kl * y[1]
    out[2] = kl * (y[1] - y[2])
    out[3] = kl * y[2] - ki * y[3]
    out[4] = ki * (y[3] - y[4])
    out[5] = ki * y[4] - kp * y[5]
    out[6] = kp * (y[5] - y[6])
    out[7] = leave * (1.0 - omega)
    out[8] = leave * omega


def integrate(y0, knot_times, knot_values, double d_L, double d_I, double d_P,
              double omega, double N, Py_ssize_t n_days, Py_ssize_t substeps):
    """Heun integration on a uniform grid; returns the ``(n_days+1, 9)`` daily states."""
    cdef const double[:] times = np.ascontiguousarray(knot_times, dtype=np.float64)
    cdef const double[:] values = np.ascontiguousarray(knot_values, dtype=np.float64)
    cdef const double[:] init = np.ascontiguousarray(y0, dtype=np.float64)
    cdef Py_ssize_t n = times.shape[0]
    cdef double kl = 2.0 / d_L, ki = 2.0 / d_I, kp = 2.0 / d_P
    cdef double inv_n = 1.0 / N
    cdef double limit = 10.0 * N
    cdef double h = 1.0 / substeps
    cdef double half_h = 0.5 * h
    cdef double y[9]
    cdef double k1[9]
    cdef double k2[9]
    cdef double pred[9]
    cdef double t, v
    cdef Py_ssize_t day, sub, i
    cdef Py_ssize_t bad_day = -1
    result = np.empty((n_days + 1, 9), dtype=np.float64)
    cdef double[:, ::1] out = result
    for i in range(9):
        y[i] = init[i]
        out[0, i] = y[i]
    with nogil:
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
                    bad_day = day + 1
                out[day + 1, i] = v
            if bad_day >= 0:
                break
    if bad_day >= 0:
        raise IntegrationDiverged(bad_day)
    return result


def nb_logpmf_sum(counts, mus, double phi):
    """Sum of negative-binomial (mean/dispersion) log-pmfs over paired arrays."""
    if not phi > 0.0:
        raise DomainError(f"phi must be positive, got {phi}")
    cdef const cnp.int64_t[:] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef const double[:] m = np.ascontiguousarray(mus, dtype=np.float64)
    cdef Py_ssize_t k, size = c.shape[0]
    cdef double total = 0.0, lg_phi = lgamma(phi), nd, mu
    cdef int bad = 0
    if m.shape[0] != size:
        raise DomainError("counts and means differ in length")
    with nogil:
        for k in range(size):
            mu = m[k]
            if not mu > 0.0:
                bad = 1
                break
            nd = <double>c[k]
            total += (lgamma(nd + phi) - lg_phi - lgamma(nd + 1.0)
                      + nd * (log(mu) - log(mu + phi))
                      - phi * log1p(mu / phi))
    if bad:
        raise DomainError(f"mu must be positive, got {mu}")
    if not isfinite(total) and total != -np.inf:
        raise DomainError("non-finite negative-binomial log-likelihood")
    return total


cdef inline double _interp(double t, const double[:] times, const double[:] values) noexcept nogil:
    return _beta_at(t, times, values, times.shape[0])


cdef inline double _nb_term(double n, double mu, double phi, double lg_phi, bint full) noexcept nogil:
    cdef double out = (lgamma(n + phi) - lg_phi
                       + n * (log(mu) - log(mu + phi)) - phi * log1p(mu / phi))
    if full:
        out -= lgamma(n + 1.0)
    return out


def observation_loglik(states, double d_L, double d_I, adm_times, adm_values,
                       calls_times, calls_values, d_days, d_counts, a_days, a_counts,
                       c_days, c_counts, double phi_d, double phi_a, double phi_c,
                       double floor, bint include_constant=True):
    """NB log-likelihood of all three streams, computing means only on observed days.

    With ``include_constant=False`` the parameter-free ``-log(n!)`` terms are
    left out so callers can add them once.
    """
    if not (phi_d > 0.0 and phi_a > 0.0 and phi_c > 0.0):
        raise DomainError("phi must be positive")
    cdef const double[:, ::1] y = np.ascontiguousarray(states, dtype=np.float64)
    cdef const double[:] at = np.ascontiguousarray(adm_times, dtype=np.float64)
    cdef const double[:] av = np.ascontiguousarray(adm_values, dtype=np.float64)
    cdef const double[:] ct = np.ascontiguousarray(calls_times, dtype=np.float64)
    cdef const double[:] cv = np.ascontiguousarray(calls_values, dtype=np.float64)
    cdef const cnp.int64_t[:] dd = np.ascontiguousarray(d_days, dtype=np.int64)
    cdef const cnp.int64_t[:] dc = np.ascontiguousarray(d_counts, dtype=np.int64)
    cdef const cnp.int64_t[:] ad = np.ascontiguousarray(a_days, dtype=np.int64)
    cdef const cnp.int64_t[:] ac = np.ascontiguousarray(a_counts, dtype=np.int64)
    cdef const cnp.int64_t[:] cd = np.ascontiguousarray(c_days, dtype=np.int64)
    cdef const cnp.int64_t[:] cc = np.ascontiguousarray(c_counts, dtype=np.int64)
    cdef Py_ssize_t n_days = y.shape[0], k, t
    cdef double ki = 2.0 / d_I, kl = 2.0 / d_L
    cdef double total = 0.0, mu, prev, cur, e2, i2
    cdef double lg_d = lgamma(phi_d), lg_a = lgamma(phi_a), lg_c = lgamma(phi_c)
    for arr in (dd, ad, cd):
        if arr.shape[0] and (arr[0] < 0 or arr[arr.shape[0] - 1] >= n_days):
            raise DomainError("observation day outside trajectory span")
    with nogil:
        for k in range(dd.shape[0]):
            t = dd[k]
            cur = y[t, 8] if y[t, 8] > 0.0 else 0.0
            if t > 0:
                prev = y[t - 1, 8] if y[t - 1, 8] > 0.0 else 0.0
            else:
                prev = 0.0
            mu = cur - prev
            if not mu > floor:
                mu = floor
            total += _nb_term(<double>dc[k], mu, phi_d, lg_d, include_constant)
        for k in range(ad.shape[0]):
            t = ad[k]
            i2 = y[t, 4] if y[t, 4] > 0.0 else 0.0
            mu = _interp(<double>t, at, av) * ki * i2
            if not mu > floor:
                mu = floor
            total += _nb_term(<double>ac[k], mu, phi_a, lg_a, include_constant)
        for k in range(cd.shape[0]):
            t = cd[k]
            i2 = y[t, 4] if y[t, 4] > 0.0 else 0.0
            e2 = y[t, 2] if y[t, 2] > 0.0 else 0.0
            mu = _interp(<double>t, ct, cv) * (kl * e2 + ki * i2)
            if not mu > floor:
                mu = floor
            total += _nb_term(<double>cc[k], mu, phi_c, lg_c, include_constant)
    return total


cdef inline double _log_ndtr_nonneg(double z) noexcept nogil:
    return log(0.5 * erfc(-z / sqrt(2.0)))


def log_prior(x, Py_ssize_t n_beta, hyper):
    """Joint log prior of a flat constrained vector; ``-inf`` outside the support."""
    cdef const double[:] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:] h = np.ascontiguousarray(hyper, dtype=np.float64)
    cdef Py_ssize_t dim = v.shape[0], i, k
    cdef Py_ssize_t b0 = 2, d0 = 2 + n_beta, phi0 = 6 + n_beta, rho0 = 9 + n_beta
    cdef double lp, z, t, sb, walk, rate
    if h.shape[0] != 26 or dim < rho0:
        raise DomainError("parameter or hyperparameter vector has the wrong length")
    for i in range(dim):
        t = v[i]
        if not isfinite(t):
            return -np.inf
        if i < b0 or i == d0 + 3 or i >= rho0:
            if not (0.0 < t < 1.0):
                return -np.inf
        elif not t > 0.0:
            return -np.inf
    lp = (h[0] - 1.0) * log(v[0]) + (h[1] - 1.0) * log1p(-v[0]) - h[2]
    lp += (h[3] - 1.0) * log(v[1]) + (h[4] - 1.0) * log1p(-v[1]) - h[5]
    z = v[b0] / h[6]
    lp += h[7] - 0.5 * z * z
    sb = h[8]
    walk = h[9]
    for i in range(b0 + 1, d0):
        z = (v[i] - v[i - 1]) / sb
        lp += walk - 0.5 * z * z - _log_ndtr_nonneg(v[i - 1] / sb)
    for k in range(3):
        z = (v[d0 + k] - h[10 + 3 * k]) / h[11 + 3 * k]
        lp += h[12 + 3 * k] - 0.5 * z * z
    t = v[d0 + 3]
    lp += (h[19] - 1.0) * log(t) + (h[20] - 1.0) * log1p(-t) - h[21]
    rate = h[22]
    lp += 3.0 * log(rate) - rate * (v[phi0] + v[phi0 + 1] + v[phi0 + 2])
    for i in range(rho0, dim):
        t = v[i]
        lp += (h[23] - 1.0) * log(t) + (h[24] - 1.0) * log1p(-t) - h[25]
    return lp
