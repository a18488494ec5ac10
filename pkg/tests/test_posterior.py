import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from seiprd.errors import IntegrationDiverged
from seiprd.observation import CountSeries, ObservationData, nb_log_pmf
from seiprd.posterior import (
    LogPosterior,
    ParamLayout,
    ParamVector,
    PriorConfig,
    inverse_transform,
    log_prior,
    transform,
)


def scipy_log_prior(x, layout, sigma_beta, walk=True):
    """Table of prior densities written with scipy.stats, independent of the kernels."""
    p = ParamVector(layout, x)
    lp = stats.beta(5.0, 0.5).logpdf(p.alpha1) + stats.beta(1.1, 1.1).logpdf(p.alpha2)
    b = p.beta
    lp += stats.halfnorm(scale=0.5).logpdf(b[0])
    for prev, cur in zip(b[:-1], b[1:]) if walk else ():
        a = -prev / sigma_beta
        lp += stats.truncnorm(a, np.inf, loc=prev, scale=sigma_beta).logpdf(cur)
    for v, mu, sd in ((p.d_L, 4, 3), (p.d_I, 5, 4), (p.d_P, 13, 4)):
        lp += stats.truncnorm(-mu / sd, np.inf, loc=mu, scale=sd).logpdf(v)
    lp += stats.beta(5.7, 624.1).logpdf(p.omega)
    for name in ("inv_phi_deaths", "inv_phi_admissions", "inv_phi_calls"):
        lp += stats.expon(scale=1 / 5.0).logpdf(p[name])
    for r in np.concatenate([p.rho_admissions, p.rho_calls]):
        lp += stats.beta(1.1, 1.1).logpdf(r)
    return lp


class TestPrior:
    @pytest.mark.parametrize("sigma", [0.0005, 0.025, 0.5])
    def test_matches_scipy_oracle(self, spec, truth, sigma):
        assert log_prior(truth, PriorConfig(sigma), spec.layout) == pytest.approx(
            scipy_log_prior(truth, spec.layout, sigma), rel=1e-10
        )

    def test_exponential_component(self, spec, truth):
        x = truth.copy()
        i = spec.layout.scalar_index["inv_phi_deaths"]
        x[i] = 0.2
        y = x.copy()
        y[i] = 0.4
        cfg = PriorConfig(0.025)
        # the 0.2 -> 0.4 change moves only the Exponential(5) term
        delta = log_prior(x, cfg, spec.layout) - log_prior(y, cfg, spec.layout)
        assert delta == pytest.approx((math.log(5) - 1.0) - (math.log(5) - 2.0), rel=1e-12)
        assert stats.expon(scale=0.2).logpdf(0.2) == pytest.approx(0.60944, abs=1e-5)

    def test_random_walk_step_at_mode(self):
        layout = ParamLayout(2, 2, 2)
        cfg = PriorConfig(0.025)
        x = np.array([0.999, 0.5, 1.0, 1.0, 4, 5, 13, 0.009, 0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5])
        walk = log_prior(x, cfg, layout) - scipy_log_prior(x, layout, 0.025, walk=False)
        assert walk == pytest.approx(-math.log(0.025 * math.sqrt(2 * math.pi)), abs=1e-9)

    def test_outside_support(self, spec, truth):
        x = truth.copy()
        x[spec.layout.scalar_index["omega"]] = 1.2
        assert log_prior(x, PriorConfig(0.025), spec.layout) == -math.inf
        x = truth.copy()
        x[spec.layout.slices["beta"].start + 2] = -0.1
        assert log_prior(x, PriorConfig(0.025), spec.layout) == -math.inf

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 18), st.floats(-5, 5))
    def test_finite_exactly_on_support(self, i, value):
        from .conftest import desk_spec
        layout = desk_spec().layout
        x = np.array(ParamVector(layout, inverse_transform(np.zeros(layout.dim), layout)[0]).values)
        x[i] = value
        inside = ParamVector(layout, x).in_support()
        assert math.isfinite(log_prior(x, PriorConfig(0.01), layout)) == inside

    def test_only_adjacent_betas_couple(self):
        layout = ParamLayout(8, 2, 2)
        cfg = PriorConfig(0.05)
        beta = np.array([0.3, 0.32, 0.29, 0.31, 0.33, 0.3, 0.28, 0.3])
        x = np.concatenate([[0.999, 0.5], beta, [4, 5, 13, 0.009, 0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5]])
        b0 = layout.slices["beta"].start

        def grad(vec, j, h=1e-6):
            up, dn = vec.copy(), vec.copy()
            up[b0 + j] += h
            dn[b0 + j] -= h
            return (log_prior(up, cfg, layout) - log_prior(dn, cfg, layout)) / (2 * h)

        for j in range(8):
            for k in range(8):
                if abs(k - j) <= 1:
                    continue
                moved = x.copy()
                moved[b0 + k] += 0.01
                assert grad(moved, j) == pytest.approx(grad(x, j), abs=1e-6)


class TestTransforms:
    def test_unit_and_positive_examples(self):
        layout = ParamLayout(2, 2, 2)
        x = np.full(layout.dim, 0.5)
        x[layout.positive_mask] = 1.0
        u, logjac = transform(x, layout)
        assert np.allclose(u, 0.0)
        assert logjac == pytest.approx(layout.unit_mask.sum() * math.log(0.25))

    def test_thousand_roundtrips(self, spec):
        rng = np.random.default_rng(11)
        layout = spec.layout
        for _ in range(1000):
            x = np.where(layout.unit_mask, rng.uniform(1e-4, 1 - 1e-4, layout.dim), rng.uniform(1e-3, 50, layout.dim))
            back, _ = inverse_transform(transform(x, layout)[0], layout)
            assert np.allclose(back, x, rtol=1e-12, atol=0)

    def test_log_jacobian_against_finite_differences(self, spec):
        layout = spec.layout
        u = np.random.default_rng(2).normal(0, 1.5, layout.dim)
        _, logjac = inverse_transform(u, layout)
        h = 1e-6
        diag = [
            (inverse_transform(u + h * e, layout)[0][i] - inverse_transform(u - h * e, layout)[0][i]) / (2 * h)
            for i, e in enumerate(np.eye(layout.dim))
        ]
        assert logjac == pytest.approx(np.log(np.abs(diag)).sum(), rel=1e-7)
        assert transform(inverse_transform(u, layout)[0], layout)[1] == pytest.approx(logjac, rel=1e-10)


def _data(spec, truth, days=np.arange(1, 61)):
    states = spec.trajectory(truth, int(days[-1]))
    m = spec.latent_means(truth, states)
    rng = np.random.default_rng(5)
    return ObservationData(*(CountSeries(days, rng.poisson(mu[days])) for mu in m))


class TestLogPosterior:
    def test_decomposition(self, spec, truth):
        post = LogPosterior(spec, _data(spec, truth), PriorConfig(0.025))
        u, logjac = transform(truth, spec.layout)
        c = post.components(u)
        assert c["prior"] == pytest.approx(log_prior(truth, PriorConfig(0.025), spec.layout))
        assert c["log_jacobian"] == pytest.approx(logjac)
        assert c["total"] == c["prior"] + c["likelihood"] + c["log_jacobian"]
        assert post(u) == post(u)

    def test_likelihood_oracle(self, spec, truth):
        data = _data(spec, truth)
        post = LogPosterior(spec, data, PriorConfig(0.025))
        m = spec.latent_means(truth, spec.trajectory(truth, 60))
        phi = ParamVector(spec.layout, truth).phi
        expected = sum(
            nb_log_pmf(s.counts, mu[s.days], f).sum() for s, mu, f in zip(data, m, phi)
        )
        assert post.log_likelihood(truth) == pytest.approx(expected, rel=1e-11)

    def test_perturbing_data_changes_only_likelihood(self, spec, truth):
        data = _data(spec, truth)
        bumped = data.deaths.counts.copy()
        bumped[10] += 3
        other = ObservationData(CountSeries(data.deaths.days, bumped), data.admissions, data.calls)
        u, _ = transform(truth, spec.layout)
        a = LogPosterior(spec, data, PriorConfig(0.025)).components(u)
        b = LogPosterior(spec, other, PriorConfig(0.025)).components(u)
        assert a["prior"] == b["prior"] and a["log_jacobian"] == b["log_jacobian"]
        assert a["likelihood"] != b["likelihood"]

    def test_divergence_is_minus_infinity_and_counted(self, spec, truth, monkeypatch):
        post = LogPosterior(spec, _data(spec, truth), PriorConfig(0.025))

        def boom(x, horizon):
            raise IntegrationDiverged(3)

        monkeypatch.setattr(type(spec), "trajectory", lambda self, x, h: boom(x, h))
        u, _ = transform(truth, spec.layout)
        assert post(u) == -math.inf
        assert post.n_diverged == 1

    def test_param_vector_access(self, spec, truth):
        p = ParamVector(spec.layout, truth)
        assert p.d_I == 5.0 and p.beta.size == 6
        assert p.phi.tolist() == pytest.approx([10.0, 20.0, 20.0])
        assert list(p.as_dict())[:3] == ["alpha1", "alpha2", "beta_1"]
