"""Tests for GEV margins, the unit Frechet transform and F-madogram diagnostics."""

import math

import numpy as np
import pytest
from scipy.stats import genextreme

from empirical.madogram import empirical_theta_fmad, model_theta, theta_vs_distance
from empirical.margins import GevParams, fit_margins, gev_fit, gev_loglik, margins_table, to_unit_frechet
from models.bivariate import theta_br
from pipeline.schemas import BlockMaximaPanel, MarginState
from simulation.exact import simulate_br_pairs
from utils.errors import InsufficientDataError, MarginFitError, ValidationError


class TestGevFit:
    def test_gumbel_recovery(self):
        sample = genextreme.rvs(c=0.0, loc=10.0, scale=2.0, size=5000, random_state=np.random.default_rng(1))
        params = gev_fit(sample)
        assert params.mu == pytest.approx(10.0, abs=0.1)
        assert params.sigma == pytest.approx(2.0, abs=0.1)
        assert abs(params.xi) < 0.05

    def test_heavy_tail_recovery(self):
        sample = genextreme.rvs(c=-0.3, loc=0.0, scale=1.0, size=5000, random_state=np.random.default_rng(2))
        assert gev_fit(sample).xi == pytest.approx(0.3, abs=0.05)

    def test_constant_sample(self):
        with pytest.raises(MarginFitError):
            gev_fit(np.full(30, 4.2), site_id="S1")

    def test_too_few_observations_names_the_site(self):
        with pytest.raises(MarginFitError) as info:
            gev_fit(np.arange(10.0), site_id="S7")
        assert info.value.site_id == "S7"

    def test_missing_values_are_ignored(self):
        sample = genextreme.rvs(c=0.1, loc=5.0, scale=1.0, size=200, random_state=np.random.default_rng(3))
        with_gaps = np.concatenate([sample, [np.nan] * 5])
        a, b = gev_fit(sample), gev_fit(with_gaps)
        assert (a.mu, a.sigma, a.xi) == (b.mu, b.sigma, b.xi)

    def test_loglik_matches_scipy(self):
        data = np.array([4.0, 5.5, 7.1, 3.2])
        for xi in (-0.2, 0.0, 0.4):
            expected = float(np.sum(genextreme.logpdf(data, c=-xi, loc=5.0, scale=1.5)))
            assert gev_loglik(data, 5.0, 1.5, xi) == pytest.approx(expected, rel=1e-10)

    def test_loglik_outside_support(self):
        assert gev_loglik(np.array([0.0, 10.0]), 5.0, 1.0, -0.5) == -math.inf


class TestUnitFrechet:
    def test_median_maps_to_frechet_median(self):
        params = GevParams(xi=0.1, mu=10.0, sigma=2.0)
        median = genextreme.ppf(0.5, c=-0.1, loc=10.0, scale=2.0)
        panel = BlockMaximaPanel([[median], [median]], MarginState.RAW, site_ids=("a",))
        z = to_unit_frechet(panel, {"a": params}).values[0, 0]
        assert z == pytest.approx(-1.0 / math.log(0.5), rel=1e-9)
        assert z == pytest.approx(1.4427, abs=1e-4)

    def test_frechet_margin_is_identity(self):
        values = np.array([[0.3], [1.0], [12.0]])
        panel = BlockMaximaPanel(values, MarginState.RAW, site_ids=("a",))
        z = to_unit_frechet(panel, {"a": GevParams(xi=1.0, mu=1.0, sigma=1.0)}).values
        np.testing.assert_allclose(z, values, rtol=1e-12)

    def test_monotone_and_positive(self):
        values = np.linspace(5.0, 30.0, 25).reshape(-1, 1)
        panel = BlockMaximaPanel(values, MarginState.RAW, site_ids=("a",))
        z = to_unit_frechet(panel, {"a": GevParams(xi=0.2, mu=10.0, sigma=3.0)}).values[:, 0]
        assert np.all(z > 0)
        assert np.all(np.diff(z) > 0)

    def test_values_below_support_are_clipped(self):
        panel = BlockMaximaPanel([[-100.0], [10.0]], MarginState.RAW, site_ids=("a",))
        z = to_unit_frechet(panel, {"a": GevParams(xi=0.5, mu=10.0, sigma=1.0)})
        assert z.margin_state is MarginState.UNIT_FRECHET
        assert np.all(np.isfinite(z.values)) and np.all(z.values > 0)

    def test_missing_cells_stay_missing(self):
        panel = BlockMaximaPanel([[np.nan], [10.0]], MarginState.RAW, site_ids=("a",))
        z = to_unit_frechet(panel, {"a": GevParams(xi=0.0, mu=10.0, sigma=1.0)})
        assert z.missing[:, 0].tolist() == [True, False]

    def test_probability_integral_transform(self):
        rng = np.random.default_rng(4)
        raw = genextreme.rvs(c=-0.1, loc=20.0, scale=4.0, size=(2000, 2), random_state=rng)
        panel = BlockMaximaPanel(raw, MarginState.RAW, site_ids=("a", "b"))
        margins = fit_margins(panel)
        z = to_unit_frechet(panel, margins).values
        assert np.mean(np.exp(-1.0 / z)) == pytest.approx(0.5, abs=0.02)
        table = margins_table(margins)
        assert list(table.columns) == ["site_id", "xi", "mu", "sigma"]
        assert table["site_id"].tolist() == ["a", "b"]

    def test_frechet_panels_are_rejected(self):
        panel = BlockMaximaPanel([[1.0], [2.0]], MarginState.UNIT_FRECHET)
        with pytest.raises(ValidationError):
            fit_margins(panel)


class TestMadogram:
    def test_identical_columns(self):
        x = np.random.default_rng(5).exponential(size=300)
        assert empirical_theta_fmad(x, x) == pytest.approx(1.0)

    def test_independent_columns(self):
        rng = np.random.default_rng(6)
        theta = empirical_theta_fmad(rng.exponential(size=10_000), rng.exponential(size=10_000))
        assert 1.9 <= theta <= 2.1

    def test_rank_invariance(self):
        rng = np.random.default_rng(7)
        a, b = rng.exponential(size=(2, 500))
        assert empirical_theta_fmad(np.exp(a), b ** 3) == empirical_theta_fmad(a, b)

    def test_too_few_pairs(self):
        a = np.array([1.0, 2.0, np.nan, 4.0] * 3)
        b = np.array([1.0, np.nan, 3.0, 4.0] * 3)
        with pytest.raises(InsufficientDataError):
            empirical_theta_fmad(a, b)

    def test_brown_resnick_pairs(self):
        sample = simulate_br_pairs(np.full(10_000, 2.0), np.random.default_rng(8))
        assert empirical_theta_fmad(sample[:, 0], sample[:, 1]) == pytest.approx(1.6827, abs=0.05)


class TestThetaVsDistance:
    def test_layout_and_ordering(self, br_panel, line_sites, br_iso_spec):
        frame = theta_vs_distance(br_panel, line_sites, [br_iso_spec])
        assert list(frame.columns) == ["pair_id", "site_i", "site_j", "distance_km", "theta_empirical",
                                       "theta_BR-iso"]
        assert len(frame) == 10
        assert np.all(np.diff(frame["distance_km"]) >= 0)
        assert np.all(np.diff(frame["theta_BR-iso"]) >= 0)
        assert frame["theta_empirical"].between(1.0, 2.5).all()

    def test_model_theta_uses_kernel(self, line_sites, br_iso_spec):
        got = model_theta(br_iso_spec, line_sites, np.array([0]), np.array([1]))
        gamma = 0.1 + 0.01 * float(np.hypot(40.0, 5.0))
        assert got[0] == pytest.approx(float(theta_br(gamma)))

    def test_single_site_is_empty(self, br_panel, line_sites):
        frame = theta_vs_distance(br_panel.columns([0]), line_sites.subset([0]))
        assert frame.empty

    def test_pairs_without_data_are_dropped(self, line_sites):
        values = np.ones((12, 3)) + np.arange(36).reshape(12, 3)
        values[:, 2] = np.nan
        panel = BlockMaximaPanel(values, MarginState.UNIT_FRECHET)
        frame = theta_vs_distance(panel, line_sites.subset([0, 1, 2]))
        assert frame["pair_id"].tolist() == ["A-B"]
