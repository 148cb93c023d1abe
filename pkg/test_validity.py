"""Tests for numerical definiteness certification."""

import math

import numpy as np
import pytest

from models.kernels import corr_from_vario, vario_iso
from models.validity import check_cnd, check_psd, check_spec, random_spec
from pipeline.schemas import Family, SiteSet, Structure


def power_vario(x, y, cx, cy):
    return vario_iso(x, y, 0.01, 1.5)


def negative_distance(x, y, cx, cy):
    return -np.sqrt(np.sum((np.asarray(x) - np.asarray(y)) ** 2, axis=-1))


def cosine_corr(x, y, cx, cy):
    return np.cos(10.0 * np.sqrt(np.sum((np.asarray(x) - np.asarray(y)) ** 2, axis=-1)))


class TestCND:
    def test_power_variogram_passes(self):
        report = check_cnd(power_vario, n_sites=8, n_trials=200, seed=1)
        assert report.passed
        assert report.routes_agree
        assert report.worst_contrast_value <= 1e-8
        assert report.failing_config is None

    def test_negative_distance_fails(self):
        report = check_cnd(negative_distance, n_sites=8, n_trials=20, seed=1)
        assert not report.passed
        assert report.routes_agree
        assert report.min_eigenvalue < 0
        assert report.worst_contrast_value > 0
        assert report.failing_config["trial"] == 0

    def test_contrasts_never_exceed_the_eigen_bound(self):
        # 0.5 a^T G a = -a^T C a for unit zero-sum a, with C = -H G H / 2
        report = check_cnd(negative_distance, n_sites=8, n_trials=20, seed=4)
        assert 0 < report.worst_contrast_value <= -report.min_eigenvalue + 1e-9

    def test_eigen_route_stands_alone(self, monkeypatch):
        monkeypatch.setenv("MAXSTABLE_VALIDITY_CONTRASTS", "0")
        report = check_cnd(negative_distance, n_sites=8, n_trials=5, seed=1)
        assert not report.passed
        assert report.min_eigenvalue < 0
        assert report.worst_contrast_value == -math.inf
        assert not report.routes_agree

    def test_two_sites(self):
        report = check_cnd(power_vario, n_sites=2, n_trials=10, seed=3)
        assert report.passed
        assert report.worst_contrast_value <= 0

    def test_deterministic_for_a_seed(self):
        first = check_cnd(power_vario, n_trials=20, seed=7)
        second = check_cnd(power_vario, n_trials=20, seed=7)
        assert first.to_dict() == second.to_dict()


class TestPSD:
    def test_exponential_of_variogram_passes(self):
        report = check_psd(lambda x, y, cx, cy: corr_from_vario(power_vario(x, y, cx, cy)), n_sites=8, n_trials=100, seed=2)
        assert report.passed
        assert math.isnan(report.worst_contrast_value)

    def test_cosine_fails(self):
        report = check_psd(cosine_corr, n_sites=8, n_trials=20, seed=2)
        assert not report.passed
        assert report.min_eigenvalue < 0

    def test_single_site(self):
        report = check_psd(cosine_corr, n_sites=1, n_trials=5, seed=2)
        assert report.passed
        assert report.min_eigenvalue == pytest.approx(1.0)

    def test_custom_site_generator(self):
        def collinear(rng, n):
            return SiteSet(np.column_stack([np.sort(rng.uniform(0, 100, n)), np.zeros(n)]), np.zeros((n, 1)))
        report = check_psd(lambda x, y, cx, cy: corr_from_vario(power_vario(x, y, cx, cy)),
                           site_generator=collinear, n_sites=6, n_trials=20, seed=4)
        assert report.passed


@pytest.mark.parametrize("family,structure", [
    (Family.BROWN_RESNICK, s) for s in (Structure.ISO, Structure.ANISO, Structure.M1, Structure.M2,
                                        Structure.M3, Structure.MBD)
] + [
    (Family.EXTREMAL_T, s) for s in (Structure.ISO, Structure.ANISO, Structure.M1, Structure.M2,
                                     Structure.M3, Structure.MBD, Structure.MHG)
])
def test_every_structure_is_valid(family, structure):
    rng = np.random.default_rng(99)
    for draw in range(100):
        spec = random_spec(family, structure, rng)
        report = check_spec(spec, n_sites=10, n_trials=2, seed=draw)
        assert report.passed, (spec.params, report.failing_config)
