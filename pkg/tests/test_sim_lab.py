import json
import math
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate, stats

from conftest import pareto_sample
from survival import sim_lab
from survival.errors import ConvergenceError, DomainError
from survival.settings import SelectionParams
from survival.sim_lab import (
    ESTIMATORS,
    CovariateLaw,
    GridSpec,
    LogGammaLaw,
    ParetoLaw,
    SimConfig,
    TruncatedCauchyLaw,
    avg_rel_mse,
    censoring_rate_above,
    geometric_grid,
    law_density,
    law_isf,
    law_quantile,
    law_sample,
    law_survival,
    rel_mse,
    report_frame,
    run_monte_carlo,
    simulate_cox_sample,
    tail_index,
    theoretical_censoring_rate,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

LAWS = [
    TruncatedCauchyLaw(x0=0.0, gamma_scale=1.0),
    TruncatedCauchyLaw(x0=10.0, gamma_scale=0.1),
    ParetoLaw(theta=2.0),
    LogGammaLaw(a=2.0, b=2.0),
]


def small_config(**overrides):
    """数秒で終わる実験設定"""
    values = dict(
        name="smoke",
        n=60,
        n_mc=2,
        beta=[-0.5],
        failure_baseline=TruncatedCauchyLaw(),
        censoring_law=TruncatedCauchyLaw(gamma_scale=2.0),
        eval_points=[5.0, 20.0],
        seed=9,
        M=3,
        selection_params=SelectionParams(critical_value=8.0),
        fixed_tau=2.0,
        average_grid=GridSpec(start=0.1, stop=10.0, num=5),
        tau_sweep=GridSpec(start=0.5, stop=3.0, num=3),
    )
    values.update(overrides)
    return SimConfig(**values)


class TestLaws:

    def test_known_values(self):
        assert law_survival(TruncatedCauchyLaw(), 1.0) == pytest.approx(0.5, rel=1e-14)
        assert law_survival(ParetoLaw(theta=2.0), 4.0) == pytest.approx(0.5, rel=1e-14)
        assert law_survival(LogGammaLaw(a=1.0, b=1.0), math.e) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_outside_support(self):
        assert law_survival(ParetoLaw(theta=1.0), 0.5) == 1.0
        assert law_survival(LogGammaLaw(a=2.0, b=1.0), 0.5) == 1.0
        assert law_survival(TruncatedCauchyLaw(), 0.0) == 1.0

    def test_tail_index(self):
        assert tail_index(TruncatedCauchyLaw(x0=10.0, gamma_scale=0.1)) == 1.0
        assert tail_index(ParetoLaw(theta=0.5)) == 0.5
        assert tail_index(LogGammaLaw(a=5.0, b=3.5)) == pytest.approx(1 / 3.5)

    @pytest.mark.parametrize("law", LAWS)
    def test_inverse_survival(self, law):
        v = np.linspace(0.01, 0.99, 25)
        np.testing.assert_allclose(law_survival(law, law_isf(law, v)), v, rtol=1e-9)

    @pytest.mark.parametrize("law", LAWS)
    def test_density_is_derivative_of_survival(self, law):
        for x in (1.5, 3.0, 9.9, 10.05, 50.0):
            h = x * 1e-6
            slope = (law_survival(law, x - h) - law_survival(law, x + h)) / (2 * h)
            assert law_density(law, x) == pytest.approx(slope, rel=1e-5)

    def test_pareto_density_integrates_to_one(self):
        law = ParetoLaw(theta=2.0)
        total, _ = integrate.quad(lambda x: law_density(law, x), 1.0, np.inf)
        assert total == pytest.approx(1.0, rel=1e-8)

    def test_quantile_domain(self):
        with pytest.raises(DomainError):
            law_quantile(ParetoLaw(), 1.0)
        with pytest.raises(DomainError):
            law_quantile(ParetoLaw(), [0.5, 0.0])

    def test_quantile_of_median(self):
        assert law_quantile(TruncatedCauchyLaw(), 0.5) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("law", LAWS)
    def test_sampling_matches_distribution(self, law):
        draws = law_sample(law, np.random.default_rng(17), 100_000)
        result = stats.kstest(draws, lambda x: 1.0 - np.asarray(law_survival(law, x)))
        assert result.statistic < 0.01

    def test_discriminated_config(self):
        config = SimConfig.model_validate({"n": 10, "n_mc": 1, "failure_baseline": {"kind": "pareto", "theta": 3.0}})
        assert isinstance(config.failure_baseline, ParetoLaw)
        with pytest.raises(ValidationError):
            SimConfig.model_validate({"n": 10, "n_mc": 1, "failure_baseline": {"kind": "weibull"}})


class TestSimConfig:

    def test_eval_points_ascending(self):
        with pytest.raises(ValidationError):
            small_config(eval_points=[20.0, 5.0])

    def test_minimum_sizes(self):
        with pytest.raises(ValidationError):
            small_config(n=2)
        with pytest.raises(ValidationError):
            small_config(n_mc=0)

    @pytest.mark.parametrize("name", ["table-simcauch1", "table-simcauch2", "table-loggamma", "sweep-simcauch1"])
    def test_shipped_configs_parse(self, name):
        config = SimConfig.model_validate(json.loads((CONFIG_DIR / f"{name}.json").read_text(encoding="utf-8")))
        assert config.name == name
        assert config.beta == [-0.5]
        assert config.m0 == 30


class TestSimulation:

    def test_deterministic_per_replication(self, cauchy_config):
        first = simulate_cox_sample(cauchy_config, 3)
        second = simulate_cox_sample(cauchy_config, 3)
        other = simulate_cox_sample(cauchy_config, 4)
        np.testing.assert_array_equal(first.times, second.times)
        np.testing.assert_array_equal(first.covariates, second.covariates)
        assert not np.array_equal(first.times, other.times)

    def test_conditional_law(self):
        config = SimConfig(
            n=20_000,
            n_mc=1,
            beta=[1.0],
            covariate_law=CovariateLaw(low=math.log(2.0), high=math.log(2.0)),
            failure_baseline=TruncatedCauchyLaw(),
            seed=21,
        )
        sample = simulate_cox_sample(config, 0)
        assert sample.status.all()
        law = config.failure_baseline
        result = stats.kstest(sample.times, lambda x: 1.0 - np.asarray(law_survival(law, x)) ** 2)
        assert result.statistic < 0.015

    def test_theoretical_rate_of_identical_laws(self):
        config = small_config(beta=[0.0], censoring_law=TruncatedCauchyLaw())
        assert theoretical_censoring_rate(config) == pytest.approx(0.5, rel=1e-6)

    def test_theoretical_rate_of_pareto_laws(self):
        config = small_config(beta=[], failure_baseline=ParetoLaw(theta=1.0), censoring_law=ParetoLaw(theta=3.0))
        assert theoretical_censoring_rate(config) == pytest.approx(0.25, rel=1e-6)

    def test_no_censoring(self):
        assert theoretical_censoring_rate(small_config(censoring_law=None)) == 0.0

    @pytest.mark.parametrize("name", ["table-simcauch1", "table-simcauch2", "table-loggamma", "sweep-simcauch1"])
    def test_simulated_rate_matches_theory(self, name):
        data = json.loads((CONFIG_DIR / f"{name}.json").read_text(encoding="utf-8"))
        config = SimConfig.model_validate({**data, "n": 5000})
        sample = simulate_cox_sample(config, 0)
        simulated = 1.0 - sample.status.mean()
        assert simulated == pytest.approx(theoretical_censoring_rate(config), abs=0.03)


class TestErrorMetrics:

    def test_rel_mse_excludes_zero_estimates(self):
        value, excluded = rel_mse([0.5, 0.5 * math.e, 0.0], 0.5)
        assert value == pytest.approx(0.5, rel=1e-12)
        assert excluded == 1

    def test_rel_mse_truth_domain(self):
        with pytest.raises(DomainError):
            rel_mse([0.5], 0.0)

    def test_avg_rel_mse(self):
        assert avg_rel_mse([1.0, 2.0, 3.0]) == 2.0
        with pytest.raises(DomainError):
            avg_rel_mse([])

    def test_geometric_grid(self):
        grid = geometric_grid(0.1, 100.0, 100)
        assert grid[0] == pytest.approx(0.1)
        assert grid[-1] == pytest.approx(100.0)
        ratios = grid[1:] / grid[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
        with pytest.raises(DomainError):
            geometric_grid(1.0, 0.5, 10)


class TestCensoringAboveThreshold:

    @pytest.mark.parametrize("censoring_theta, expected", [(1.0, 0.5), (2.0, 1 / 3)])
    def test_pareto_censoring_rate(self, censoring_theta, expected):
        rates = []
        for seed in range(10):
            sample = pareto_sample(5000, theta=1.0, seed=seed, censoring_theta=censoring_theta)
            rates.append(censoring_rate_above(sample, float(np.quantile(sample.times, 0.95))))
        assert np.mean(rates) == pytest.approx(expected, abs=0.05)

    def test_nothing_above(self, hand_sample):
        with pytest.raises(DomainError):
            censoring_rate_above(hand_sample, 89.0)


class TestMonteCarlo:

    def test_report_shape(self):
        report = run_monte_carlo(small_config())
        assert report.critical_value == 8.0
        assert set(report.rel_mse) == set(ESTIMATORS)
        for values in report.rel_mse.values():
            assert len(values) == 2
        assert len(report.tau_sweep) == 3
        assert 0.0 <= report.censoring_rate <= 1.0
        assert 0.0 < report.theoretical_censoring_rate < 1.0

        frame = report_frame(report)
        assert list(frame.columns) == ["estimator", "x", "rel_mse"]
        assert len(frame) == 2 * len(ESTIMATORS)

    def test_without_fixed_threshold(self):
        report = run_monte_carlo(small_config(fixed_tau=None, tau_sweep=None))
        assert "fixed" not in report.rel_mse
        assert report.tau_sweep is None

    def test_estimated_coefficients(self):
        report = run_monte_carlo(small_config(estimate_beta=True, n=150))
        assert len(report.beta_mean) == 1

    def test_failed_coefficient_fit_counts_against_every_estimator(self, monkeypatch):
        real_fit = sim_lab.fit_beta
        calls = []

        def flaky_fit(sample):
            calls.append(sample.n)
            if len(calls) == 2:
                raise ConvergenceError("収束しません", np.zeros(1), 50)
            return real_fit(sample)

        monkeypatch.setattr(sim_lab, "fit_beta", flaky_fit)
        report = run_monte_carlo(small_config(estimate_beta=True, n=150, n_mc=3))
        assert set(report.failures) == set(ESTIMATORS)
        for name in ESTIMATORS:
            assert report.failures[name] >= 1
        assert report.failures["nelson_aalen"] == 1
        assert all(point.failures >= 1 for point in report.tau_sweep)
        assert len(report.beta_mean) == 1

    def test_every_coefficient_fit_fails(self, monkeypatch):
        def failing_fit(sample):
            raise ConvergenceError("収束しません", np.zeros(1), 50)

        monkeypatch.setattr(sim_lab, "fit_beta", failing_fit)
        report = run_monte_carlo(small_config(estimate_beta=True, n_mc=2))
        assert report.failures == {name: 2 for name in ESTIMATORS}
        assert all(value is None for values in report.rel_mse.values() for value in values)
        assert all(value is None for value in report.arel_mse.values())
        assert all(point.arel_mse is None and point.failures == 2 for point in report.tau_sweep)
        assert report.beta_mean is None

    def test_grid_average_goes_through_avg_rel_mse(self, monkeypatch):
        monkeypatch.setattr(sim_lab, "avg_rel_mse", lambda values: 42.0)
        report = run_monte_carlo(small_config())
        assert report.arel_mse["nelson_aalen"] == 42.0
        assert all(point.arel_mse == 42.0 for point in report.tau_sweep)

    def test_parallel_matches_serial(self):
        config = small_config(n_mc=3)
        serial = run_monte_carlo(config, n_jobs=1)
        parallel = run_monte_carlo(config, n_jobs=2)
        assert serial.model_dump() == parallel.model_dump()
