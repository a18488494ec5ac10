import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import nbinom

from seiprd.errors import DomainError, IntegrationDiverged
from seiprd.forecast import (
    DEFAULT_HORIZON,
    TAIL_MASS,
    FinitePMF,
    PredictiveDistribution,
    posterior_predictive,
)

components = st.lists(
    st.tuples(st.floats(0.05, 2000.0), st.floats(0.2, 200.0)), min_size=1, max_size=6
)


class TestPredictiveDistribution:
    def test_geometric(self):
        P = PredictiveDistribution([1.0], [1.0])
        assert P.pmf(0) == pytest.approx(0.5, abs=1e-15)

    def test_mixture_of_identical_components(self):
        a = PredictiveDistribution([1.0, 1.0], [1.0, 1.0])
        b = PredictiveDistribution([1.0], [1.0])
        k = np.arange(30)
        assert np.allclose(a.pmf(k), b.pmf(k), rtol=1e-14, atol=0)

    def test_two_component_moments(self):
        P = PredictiveDistribution([1.0, 3.0], [1.0, 1.0])
        assert P.mean() == 2.0
        assert P.variance() == pytest.approx(8.0, rel=1e-14)
        k = np.arange(P.k_max + 1)
        assert (k * P.probs).sum() == pytest.approx(2.0, rel=1e-6)

    def test_pmf_matches_scipy(self):
        mus, phis = np.array([4.0, 9.0, 30.0]), np.array([2.0, 5.0, 1.5])
        P = PredictiveDistribution(mus, phis)
        k = np.arange(60)
        ref = np.mean([nbinom.pmf(k, f, f / (m + f)) for m, f in zip(mus, phis)], axis=0)
        assert np.allclose(P.pmf(k), ref, rtol=1e-12)
        assert np.allclose(P.probs[:60], ref, rtol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(components)
    def test_invariants(self, comps):
        mus, phis = map(np.array, zip(*comps))
        P = PredictiveDistribution(mus, phis)
        cdf = P.cdf_array
        assert np.all(np.diff(cdf) >= -1e-15)
        assert cdf[-1] >= 1 - TAIL_MASS
        assert P.k_max == 0 or cdf[-2] < 1 - TAIL_MASS
        k = np.arange(P.k_max + 1)
        assert (k * P.probs).sum() == pytest.approx(P.mean(), rel=1e-6)
        med = P.quantile(0.5)
        # a two-component mixture can plateau at exactly 0.5
        assert P.cdf(med) >= 0.5 - 1e-12
        assert med == 0 or P.cdf(med - 1) < 0.5 + 1e-12

    def test_quantile_domain(self):
        P = PredictiveDistribution([3.0], [2.0])
        with pytest.raises(DomainError):
            P.quantile(1.5)
        with pytest.raises(DomainError):
            P.quantile(-0.1)
        assert P.quantile(0.0) == 0
        assert P.cdf(P.quantile(1.0)) >= 1.0

    def test_invalid_components(self):
        with pytest.raises(DomainError):
            PredictiveDistribution([0.0], [1.0])
        with pytest.raises(DomainError):
            PredictiveDistribution([1.0], [-1.0])
        with pytest.raises(DomainError):
            PredictiveDistribution([], [])


class TestFinitePMF:
    def test_uniform(self):
        P = FinitePMF([0.25] * 4)
        assert P.mean() == 1.5 and P.variance() == 1.25
        assert P.quantile(0.5) == 1 and P.cdf(10) == 1.0 and P.pmf(7) == 0.0

    def test_must_normalise(self):
        with pytest.raises(DomainError):
            FinitePMF([0.5, 0.4])
        with pytest.raises(DomainError):
            FinitePMF([1.2, -0.2])


class TestPosteriorPredictive:
    def test_single_draw_modes_agree(self, spec, truth):
        a = posterior_predictive(truth[None, :], spec, 120, mode="samples")
        b = posterior_predictive(truth[None, :], spec, 120, mode="point")
        assert len(a) == len(b) == DEFAULT_HORIZON
        assert np.array_equal(a.mus, b.mus) and np.array_equal(a.phis, b.phis)
        assert a.days.tolist() == list(range(121, 142))

    def test_point_mode_averages_constrained_draws(self, spec, truth):
        other = truth.copy()
        other[spec.layout.slices["beta"]] *= 1.1
        other[spec.layout.scalar_index["inv_phi_deaths"]] = 0.3
        pair = np.stack([truth, other])
        point = posterior_predictive(pair, spec, 120, mode="point", horizon=5)
        direct = posterior_predictive(pair.mean(axis=0)[None, :], spec, 120, mode="samples", horizon=5)
        assert np.array_equal(point.mus, direct.mus)
        assert point.phis[0] == pytest.approx(1 / 0.2)

    def test_samples_mode_components(self, spec, truth):
        other = truth.copy()
        other[spec.layout.scalar_index["inv_phi_deaths"]] = 0.5
        f = posterior_predictive(np.stack([truth, other]), spec, 100, horizon=3)
        assert f.mus.shape == (3, 2)
        assert f.phis.tolist() == pytest.approx([10.0, 2.0])
        states = spec.trajectory(truth, 103)
        assert f.mus[:, 0] == pytest.approx(np.diff(states[:, 8])[100:103])

    def test_diverging_draw_dropped(self, spec, truth, monkeypatch):
        original = type(spec).trajectory
        calls = []

        def flaky(self, x, horizon):
            calls.append(1)
            if len(calls) == 2:
                raise IntegrationDiverged(5)
            return original(self, x, horizon)

        monkeypatch.setattr(type(spec), "trajectory", flaky)
        with pytest.warns(RuntimeWarning, match="1 of 3 draws diverged"):
            f = posterior_predictive(np.stack([truth] * 3), spec, 120)
        assert f.n_dropped == 1 and f.phis.size == 2

    def test_preconditions(self, spec, truth):
        with pytest.raises(DomainError):
            posterior_predictive(truth[None, :], spec, 120, horizon=0)
        with pytest.raises(DomainError):
            posterior_predictive(truth[None, :], spec, 120, mode="median")
        with pytest.raises(DomainError):
            posterior_predictive(np.empty((0, truth.size)), spec, 120)
