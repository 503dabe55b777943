import itertools
import logging

import numpy as np
import pytest

from survival.cox_fit import (
    StepFunction,
    breslow_baseline,
    fit_beta,
    fit_cox,
    log_partial_likelihood,
    survival_at,
)
from survival.data_model import make_sample
from survival.errors import DataError, DomainError
from survival.sim_lab import SimConfig, TruncatedCauchyLaw, simulate_cox_sample


def hand_cum_hazard(times, status):
    """Σ_{tⱼ≤t} δⱼ / #{i : tᵢ ≥ tⱼ} を時間の昇順に足し上げる"""
    order = np.argsort(times)
    values = []
    total = 0.0
    for j in order:
        at_risk = sum(1 for t in times if t >= times[j])
        total += status[j] / at_risk
        values.append(total)
    return np.array(values)


class TestStepFunction:

    def test_right_continuous(self):
        f = StepFunction(np.array([1.0, 2.0]), np.array([0.5, 1.0]))
        assert f(0.999) == 0.0
        assert f(1.0) == 0.5
        assert f(2.0) == 1.0
        assert f(10.0) == 1.0

    def test_left_limit(self):
        f = StepFunction(np.array([1.0, 2.0]), np.array([0.5, 1.0]))
        assert f.left_limit(1.0) == 0.0
        assert f.left_limit(2.0) == 0.5
        assert f.left_limit(1.5) == 0.5

    def test_knots_must_increase(self):
        with pytest.raises(DomainError):
            StepFunction(np.array([2.0, 1.0]), np.array([0.0, 1.0]))


class TestBreslowBaseline:

    def test_matches_hand_risk_sets_for_all_small_patterns(self):
        for n in range(1, 6):
            times = [float(t) for t in range(1, n + 1)]
            for status in itertools.product((0, 1), repeat=n):
                cox = breslow_baseline(make_sample(times, status), None)
                np.testing.assert_allclose(cox.cum_hazard(times), hand_cum_hazard(times, status), rtol=1e-15, atol=0)

    def test_tied_times_share_risk_set(self):
        cox = breslow_baseline(make_sample([2.0, 2.0, 3.0], [1, 1, 0]), None)
        np.testing.assert_array_equal(cox.knots, [2.0, 3.0])
        assert cox.cum_hazard(2.0) == pytest.approx(2.0 / 3.0, rel=1e-15)
        assert cox.cum_hazard(3.0) == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_covariate_weights_enter_risk_set(self):
        sample = make_sample([1.0, 2.0], [1, 1], [[0.0], [1.0]])
        cox = breslow_baseline(sample, [np.log(3.0)])
        assert cox.cum_hazard(1.0) == pytest.approx(1.0 / 4.0)
        assert cox.cum_hazard(2.0) == pytest.approx(1.0 / 4.0 + 1.0 / 3.0)

    def test_empty_sample(self):
        with pytest.raises(DataError):
            breslow_baseline(make_sample([], []), None)


class TestFitBeta:

    def test_gradient_vanishes_at_estimate(self, hand_sample):
        fit = fit_beta(hand_sample)
        assert fit.converged
        h = 1e-6
        numerical = (
            log_partial_likelihood(hand_sample, fit.beta + h) - log_partial_likelihood(hand_sample, fit.beta - h)
        ) / (2 * h)
        assert abs(numerical) < 1e-5

    def test_estimate_maximizes_likelihood(self, hand_sample):
        fit = fit_beta(hand_sample)
        for shift in (-0.1, 0.1):
            assert log_partial_likelihood(hand_sample, fit.beta + shift) < fit.log_partial_likelihood

    def test_no_events(self):
        with pytest.raises(DataError):
            fit_beta(make_sample([1.0, 2.0], [0, 0], [[0.0], [1.0]]))

    def test_constant_column_fixed_at_zero(self, hand_sample, caplog):
        covariates = np.column_stack([hand_sample.covariates[:, 0], np.ones(hand_sample.n)])
        sample = make_sample(hand_sample.times, hand_sample.status, covariates)
        with caplog.at_level(logging.WARNING):
            fit = fit_beta(sample)
        assert fit.beta[1] == 0.0
        assert fit.beta[0] == pytest.approx(fit_beta(hand_sample).beta[0], abs=1e-8)
        assert "定数" in caplog.text

    def test_recovers_beta_in_simulation(self):
        config = SimConfig(
            n=500,
            n_mc=200,
            beta=[-0.5],
            failure_baseline=TruncatedCauchyLaw(x0=0.0, gamma_scale=1.0),
            seed=5,
        )
        hits = 0
        for rep in range(config.n_mc):
            beta = fit_beta(simulate_cox_sample(config, rep)).beta[0]
            hits += abs(beta + 0.5) < 0.2
        assert hits >= 0.95 * config.n_mc


class TestSurvivalAt:

    def test_covariate_power(self, hand_sample):
        cox = fit_cox(hand_sample, beta=[np.log(2.0)])
        x = np.array([2.0, 8.0, 40.0])
        np.testing.assert_allclose(survival_at(cox, [1.0], x), survival_at(cox, None, x) ** 2, rtol=1e-12)

    def test_negative_time(self, hand_sample):
        cox = fit_cox(hand_sample, beta=[0.0])
        with pytest.raises(DomainError):
            survival_at(cox, None, -1.0)
