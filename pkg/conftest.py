"""Shared fixtures: small site sets, specs and simulated unit Frechet panels."""

import numpy as np
import pytest

from pipeline.schemas import DependenceSpec, Family, SiteSet, Structure
from simulation.exact import simulate_exact


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def line_sites():
    """Five stations on a slightly bent line, 40 km apart, altitudes 0.1 to 0.9 km."""
    coords = np.array([[0.0, 0.0], [40.0, 5.0], [80.0, -3.0], [120.0, 8.0], [160.0, 0.0]])
    alt = np.array([[0.1], [0.3], [0.5], [0.7], [0.9]])
    return SiteSet(coords, alt, ("A", "B", "C", "D", "E"))


@pytest.fixture
def scattered_sites(rng):
    coords = rng.uniform(0.0, 200.0, size=(6, 2))
    alt = rng.uniform(0.0, 1.5, size=(6, 1))
    return SiteSet(coords, alt)


@pytest.fixture
def br_iso_spec():
    return DependenceSpec(Family.BROWN_RESNICK, Structure.ISO, {"q": 0.01, "alpha0": 1.0, "nugget": 0.1})


@pytest.fixture
def et_iso_spec():
    return DependenceSpec(Family.EXTREMAL_T, Structure.ISO,
                          {"q": 0.01, "alpha0": 1.0, "nugget": 0.1, "nu": 3.0})


@pytest.fixture
def br_panel(line_sites, br_iso_spec):
    return simulate_exact(line_sites, br_iso_spec, 30, seed=11)


@pytest.fixture
def field_sites():
    """Twenty stations over a 100 km square, altitudes up to 1.5 km."""
    gen = np.random.default_rng(99)
    return SiteSet(gen.uniform(0.0, 100.0, size=(20, 2)), gen.uniform(0.0, 1.5, size=(20, 1)))


@pytest.fixture
def et_m1_truth():
    return DependenceSpec(Family.EXTREMAL_T, Structure.M1, {
        "q1": 0.011, "q2": 0.006, "theta": -0.726, "alpha0": 1.323, "q3": 1.302, "nugget": 0.315, "nu": 4.094,
    })
