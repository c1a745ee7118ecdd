import math
import warnings

import numpy as np
import pytest

from fcal import autodiff as ad
from fcal.calibrate import (
    NumericWarning,
    PredictiveFamily,
    TemperatureModel,
    closed_form_temperature,
    fit_temperature,
    pit_canonicalize,
    scaled_nll,
)
from fcal.distmath import Rng, sample_laplace
from fcal.errors import ContractError, DomainError
from fcal.losses import residuals
from fcal.metrics import ece
from fcal.params import GaussianParams


def calibrated(n, seed, sigma_factor=1.0):
    g = Rng(seed).generator
    mu = g.normal(size=n)
    sigma = g.uniform(0.5, 3.0, n)
    y = mu + sigma * g.standard_normal(n)
    return GaussianParams(mu, sigma_factor * sigma), y


class TestTemperature:
    def test_calibrated_predictions(self):
        p, y = calibrated(5000, 0)
        assert 0.95 <= fit_temperature(p, y).t <= 1.05

    def test_half_sigma(self):
        p, y = calibrated(20000, 1, sigma_factor=0.5)
        assert fit_temperature(p, y).t == pytest.approx(2.0, abs=0.05)

    def test_matches_closed_form(self):
        for seed in range(5):
            p, y = calibrated(500, seed, sigma_factor=0.3 + seed)
            assert fit_temperature(p, y).t == pytest.approx(closed_form_temperature(p, y), abs=1e-6)

    def test_nll_does_not_increase(self):
        for seed in range(10):
            p, y = calibrated(300, seed, sigma_factor=0.4 + 0.2 * seed)
            t = fit_temperature(p, y).t
            assert scaled_nll(t, p, y) <= scaled_nll(1.0, p, y)

    def test_mu_untouched(self):
        p, y = calibrated(50, 3)
        out = TemperatureModel(1.7).apply(p)
        assert out.mu is p.mu
        assert np.array_equal(out.sigma, 1.7 * p.sigma)

    def test_empty_validation(self):
        with pytest.raises(ContractError):
            fit_temperature(GaussianParams(np.zeros(0), np.ones(0)), np.zeros(0))

    def test_bad_temperature(self):
        with pytest.raises(DomainError):
            TemperatureModel(0.0)


class TestPit:
    def test_gaussian_family_reduces_to_residuals(self):
        p, y = calibrated(2000, 4)
        z = pit_canonicalize(y, PredictiveFamily.gaussian(p.mu, p.sigma)).z
        ref = residuals(p, y).z
        assert np.max(np.abs(z - ref)) < 1e-6

    def test_laplace_median_maps_to_zero(self):
        z = pit_canonicalize(np.array([1.5, -2.0]), PredictiveFamily.laplace(np.array([1.5, -2.0]), np.array([0.3, 2.0]))).z
        assert np.all(z == 0.0)

    def test_laplace_self_consistent(self):
        g = Rng(5).generator
        loc = g.normal(size=10**4)
        scale = g.uniform(0.2, 2.0, 10**4)
        y = sample_laplace(Rng(6), loc, scale)
        z = pit_canonicalize(y, PredictiveFamily.laplace(loc, scale)).z
        assert ece(z) < 0.02

    def test_clamp_warns(self):
        with pytest.warns(NumericWarning):
            z = pit_canonicalize(np.array([60.0]), PredictiveFamily.gaussian(np.zeros(1), np.ones(1))).z
        assert np.isfinite(z[0]) and z[0] == pytest.approx(5.997807, abs=1e-5)

    def test_no_warning_inside_window(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            pit_canonicalize(np.array([0.5]), PredictiveFamily.gaussian(np.zeros(1), np.ones(1)))

    @pytest.mark.parametrize("kind", ["gaussian", "laplace"])
    def test_differentiable_through_parameters(self, kind):
        y = np.random.default_rng(0).normal(size=6)

        def f(t, p):
            fam = PredictiveFamily(kind, p[:6], p[6:])
            return ad.square(pit_canonicalize(y, fam).z).sum()

        point = np.concatenate([np.random.default_rng(1).normal(size=6) * 0.5, np.full(6, 1.3)])
        assert ad.grad_check(f, point) < 1e-5

    def test_invalid_family(self):
        with pytest.raises(ContractError):
            PredictiveFamily("cauchy", 0.0, 1.0)
        with pytest.raises(DomainError):
            PredictiveFamily.laplace(np.zeros(2), np.array([1.0, 0.0]))


def test_closed_form_temperature_formula():
    p = GaussianParams(np.zeros(2), np.ones(2))
    assert closed_form_temperature(p, np.array([1.0, 3.0])) == pytest.approx(math.sqrt(5.0))
