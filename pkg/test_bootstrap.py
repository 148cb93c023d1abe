"""Tests for the parametric bootstrap."""

import math

import pandas as pd
import pytest

import inference.bootstrap as bootstrap_module
from inference.bootstrap import bootstrap
from inference.fitting import isotropic_start
from inference.optimizer import OptimizerSettings
from inference.plans import default_plan
from pipeline.schemas import DependenceSpec, Family, FitReport, Structure
from utils.errors import BootstrapError, InitializationError

SETTINGS = OptimizerSettings(max_evals=1500, restarts=0)


@pytest.fixture
def small_sites(line_sites):
    return line_sites.subset([0, 1, 2, 3])


@pytest.fixture
def tolerant(monkeypatch):
    """Never abort on unconverged replicates."""
    monkeypatch.setenv("MAXSTABLE_BOOTSTRAP_MAX_FAILURE", "1.0")


def test_table_layout(small_sites, br_iso_spec, tolerant):
    result = bootstrap(br_iso_spec, small_sites, n_years=15, n_reps=3, seed=4, settings=SETTINGS)
    assert list(result.table.columns) == ["parameter", "true_value", "mean", "sd"]
    assert result.table["parameter"].tolist() == ["q", "alpha0", "nugget"]
    assert result.table["true_value"].tolist() == [0.01, 1.0, 0.1]
    assert result.n_reps == 3
    assert len(result.estimates) == result.n_reps - result.n_failed


def test_single_replicate_has_no_spread(small_sites, br_iso_spec, tolerant):
    result = bootstrap(br_iso_spec, small_sites, n_years=15, n_reps=1, seed=4, settings=SETTINGS)
    assert all(math.isnan(v) for v in result.table["sd"])
    if result.n_failed == 0:
        assert all(math.isfinite(v) for v in result.table["mean"])


def test_same_seed_same_table(small_sites, br_iso_spec, tolerant):
    first = bootstrap(br_iso_spec, small_sites, n_years=15, n_reps=2, seed=21, settings=SETTINGS)
    second = bootstrap(br_iso_spec, small_sites, n_years=15, n_reps=2, seed=21, settings=SETTINGS)
    pd.testing.assert_frame_equal(first.table, second.table)
    pd.testing.assert_frame_equal(first.estimates, second.estimates)


def test_unconverged_replicates_are_dropped(small_sites, br_iso_spec, tolerant, monkeypatch):
    real_fit = bootstrap_module.fit
    calls = {"n": 0}

    def flaky_fit(*args, **kwargs):
        calls["n"] += 1
        report = real_fit(*args, **kwargs)
        if calls["n"] == 1:
            report.converged = False
        return report

    monkeypatch.setattr(bootstrap_module, "fit", flaky_fit)
    result = bootstrap(br_iso_spec, small_sites, n_years=10, n_reps=3, seed=2, settings=SETTINGS)
    assert result.n_failed >= 1
    assert len(result.estimates) == 3 - result.n_failed


def test_too_many_failures(small_sites, br_iso_spec, monkeypatch):
    def failing_fit(*args, **kwargs):
        raise InitializationError("log-likelihood is not finite at the initial point")

    monkeypatch.setattr(bootstrap_module, "fit", failing_fit)
    with pytest.raises(BootstrapError):
        bootstrap(br_iso_spec, small_sites, n_years=10, n_reps=4, seed=1)


def test_needs_a_replicate(small_sites, br_iso_spec):
    with pytest.raises(BootstrapError):
        bootstrap(br_iso_spec, small_sites, n_years=10, n_reps=0)


def test_needs_two_years_per_panel(small_sites, br_iso_spec):
    with pytest.raises(BootstrapError):
        bootstrap(br_iso_spec, small_sites, n_years=1, n_reps=2)


@pytest.fixture
def recorded_fits(monkeypatch):
    calls = []

    def record(panel, sites, spec, plan=None, settings=None):
        calls.append((spec, plan))
        return FitReport(spec=spec, loglik=0.0, converged=True)

    monkeypatch.setattr(bootstrap_module, "fit", record)
    return calls


@pytest.fixture
def br_m1_spec():
    return DependenceSpec(Family.BROWN_RESNICK, Structure.M1,
                          {"q1": 0.02, "q2": 0.01, "theta": 0.3, "alpha0": 1.2, "q3": 1.5, "nugget": 0.2})


def test_refits_use_the_staged_plan_from_the_isotropic_part(small_sites, br_m1_spec, recorded_fits):
    bootstrap(br_m1_spec, small_sites, n_years=3, n_reps=2, seed=5)
    assert len(recorded_fits) == 2
    for start, plan in recorded_fits:
        assert start.params == isotropic_start(br_m1_spec).params
        assert start.params["q3"] == 0.0
        assert start.params["q1"] == start.params["q2"]
        assert plan == default_plan(br_m1_spec)
        assert plan.nested_structure is Structure.ANISO


def test_generating_parameters_as_an_explicit_start(small_sites, br_m1_spec, recorded_fits):
    bootstrap(br_m1_spec, small_sites, n_years=3, n_reps=1, seed=5, start=br_m1_spec)
    assert recorded_fits[0][0] is br_m1_spec


def test_start_must_match_the_model(small_sites, br_m1_spec, br_iso_spec):
    with pytest.raises(BootstrapError):
        bootstrap(br_m1_spec, small_sites, n_years=3, n_reps=1, start=br_iso_spec)


@pytest.mark.slow
def test_smoke_bootstrap_recovers_the_altitude_model(field_sites, et_m1_truth):
    result = bootstrap(et_m1_truth, field_sites, n_years=30, n_reps=20, seed=2024)
    table = result.table.set_index("parameter")
    assert result.n_failed <= 10
    for name, row in table.iterrows():
        assert abs(row["mean"] - row["true_value"]) < row["sd"], name
    relative_sd = table["sd"] / table["true_value"].abs()
    assert relative_sd["q3"] > relative_sd["q1"]
