"""Tests for the estimator-style model-fitting interface."""

import numpy as np
import pytest

from icf_bvsr.estimator import BvsrRegressor


def strong_data(seed=3, n=200, p=8):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    y = 1.8 * x[:, 1] - 1.2 * x[:, 4] + 0.8 * rng.standard_normal(n)
    return x, y


class TestParamsProtocol:
    def test_get_params_round_trip(self):
        est = BvsrRegressor(burn_in=11, sampling_steps=22, seed=5)
        params = est.get_params()
        rebuilt = BvsrRegressor(**params)
        assert rebuilt.get_params() == params

    def test_set_params_returns_self(self):
        est = BvsrRegressor()
        out = est.set_params(burn_in=99, pi_max=0.5)
        assert out is est
        assert est.burn_in == 99
        assert est.pi_max == 0.5

    def test_set_params_rejects_unknown(self):
        with pytest.raises(ValueError):
            BvsrRegressor().set_params(not_a_param=1)


class TestFitPredict:
    @classmethod
    def setup_class(cls):
        cls.x, cls.y = strong_data()
        cls.est = BvsrRegressor(
            burn_in=800, sampling_steps=1500, rb_interval=300, seed=11
        ).fit(cls.x, cls.y)

    def test_finds_true_covariates(self):
        assert self.est.pip_rb_[1] > 0.9
        assert self.est.pip_rb_[4] > 0.9
        others = np.delete(self.est.pip_rb_, [1, 4])
        assert others.max() < 0.5

    def test_coefficients_near_truth(self):
        assert self.est.coef_[1] == pytest.approx(1.8, abs=0.35)
        assert self.est.coef_[4] == pytest.approx(-1.2, abs=0.35)

    def test_predict_and_score(self):
        r2 = self.est.score(self.x, self.y)
        assert r2 > 0.7
        preds = self.est.predict(self.x)
        assert preds.shape == (200,)

    def test_prediction_centers_new_data_consistently(self):
        shifted = self.x + 5.0
        base = self.est.predict(self.x)
        with_shift = self.est.predict(shifted)
        # a constant shift moves predictions by the shift times the
        # coefficient sum, nothing else
        expected = base + 5.0 * self.est.coef_.sum()
        np.testing.assert_allclose(with_shift, expected, atol=1e-8)

    def test_fit_before_predict_required(self):
        with pytest.raises(ValueError):
            BvsrRegressor().predict(self.x)


class TestMultiChain:
    def test_two_chains_merge_and_reproduce(self):
        x, y = strong_data(seed=9, n=120, p=5)
        est = BvsrRegressor(
            burn_in=150, sampling_steps=300, n_chains=2, seed=3
        ).fit(x, y)
        again = BvsrRegressor(
            burn_in=150, sampling_steps=300, n_chains=2, seed=3
        ).fit(x, y)
        np.testing.assert_array_equal(est.pip_raw_, again.pip_raw_)
        assert est.output_.n_records == 600
        assert len(est.chain_outputs_) == 2
