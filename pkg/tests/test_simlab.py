import numpy as np
import pytest

from funcbayes.analysis import survival_curve
from funcbayes.config import AppConfig, SamplerConfig, ScenarioConfig, SplineSettings
from funcbayes.errors import DegenerateTruthError, ShapeError, SpecError
from funcbayes.pipeline import RegressionPipeline
from funcbayes.simlab import (
    _functional_covariate,
    coverage,
    desk_sampler,
    event_times,
    gen_cox,
    gen_fosr,
    gen_sofr,
    reference_cell,
    replication_sampler_seed,
    rise,
    run_replication,
    run_scenario,
    scenario_rng,
    standard_grid,
    standin_shapes,
    true_beta,
)
from funcbayes.types import Interval

TINY = AppConfig(
    spline=SplineSettings(k=6),
    sampler=SamplerConfig(n_iter=300, n_warmup=150, n_chains=2, seed=3, parallel=False),
)


def test_standin_shapes_orthonormal():
    grid = standard_grid(50)
    shapes = standin_shapes(grid)
    np.testing.assert_allclose(shapes @ shapes.T / 50.0, np.eye(4), atol=1e-12)


def test_true_beta():
    np.testing.assert_allclose(true_beta([0.5, 0.0], 2.0), [0.168, (0.084 - 0.25) * 2.0])


def test_generators_deterministic_per_replication():
    config = ScenarioConfig(model="sofr-gaussian", n=50, seed=7)
    a = gen_sofr(config, scenario_rng(config, 0))
    b = gen_sofr(config, scenario_rng(config, 0))
    c = gen_sofr(config, scenario_rng(config, 1))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.w, b.w)
    assert not np.array_equal(a.y, c.y)


def test_gaussian_noise_sd():
    config = ScenarioConfig(model="sofr-gaussian", n=5000, tau=3.0)
    data = gen_sofr(config)
    assert data.w.shape == (5000, 50)
    assert np.std(data.y - data.eta) == pytest.approx(1.5, abs=0.1)


def test_bernoulli_outcomes_binary():
    data = gen_sofr(ScenarioConfig(model="sofr-bernoulli", n=300))
    assert set(np.unique(data.y)) <= {0.0, 1.0}


def test_constant_hazard_event_times_exponential():
    config = ScenarioConfig(model="cox", baseline="constant", baseline_rate=1.0)
    times = event_times(config, np.random.default_rng(0), np.zeros(5000))
    assert times.mean() == pytest.approx(1.0, abs=0.05)


def test_censoring_consistent_with_event_times():
    config = ScenarioConfig(model="cox", n=400, tau=3.0, seed=2)
    data = gen_cox(config, scenario_rng(config, 0))

    rng = scenario_rng(config, 0)
    w = _functional_covariate(config, rng, config.n, data.grid)
    eta = w @ true_beta(data.grid, config.tau) / data.grid.size
    times = event_times(config, rng, eta)
    censored = data.censor == 1
    assert censored.any() and (~censored).any()
    assert np.all(data.y[censored] < times[censored])
    np.testing.assert_array_equal(data.y[~censored], times[~censored])
    np.testing.assert_array_equal(data.w, w)


def test_joint_scenario_adds_measurement_noise():
    clean = gen_cox(ScenarioConfig(model="cox", n=1000, seed=4), scenario_rng(ScenarioConfig(model="cox", seed=4), 0))
    config = ScenarioConfig(model="joint-cox", n=1000, seed=4, noise_sd=10.0)
    noisy = gen_cox(config, scenario_rng(config, 0))
    np.testing.assert_array_equal(noisy.eta, clean.eta)
    assert np.std(noisy.w - clean.w) == pytest.approx(10.0, rel=0.02)


def test_fosr_generator_moments():
    config = ScenarioConfig(model="fosr", n=5000, tau=1.0)
    data = gen_fosr(config, scenario_rng(config, 0))
    assert data.x.mean() == pytest.approx(20.0, abs=0.5)
    assert data.x.std() == pytest.approx(10.0, abs=0.5)

    rng = scenario_rng(config, 0)
    rng.normal(config.x_mean, config.x_sd, size=config.n)
    w = _functional_covariate(config, rng, config.n, data.grid)
    assert np.std(data.y - data.mean - w) == pytest.approx(5.0, abs=0.2)


def test_fosr_null_signal_centred():
    data = gen_fosr(ScenarioConfig(model="fosr", n=5000, tau=0.0))
    means = data.y.mean(axis=0)
    se = data.y.std(axis=0) / np.sqrt(5000)
    assert np.all(np.abs(means) < 4 * se)


def test_generators_reject_other_models():
    with pytest.raises(SpecError):
        gen_sofr(ScenarioConfig(model="cox"))
    with pytest.raises(SpecError):
        gen_cox(ScenarioConfig(model="fosr"))
    with pytest.raises(SpecError):
        gen_fosr(ScenarioConfig(model="sofr-gaussian"))


def test_rise_identities():
    beta = true_beta(standard_grid(50), 2.0)
    assert rise(beta, beta) == 0.0
    assert rise(np.zeros(50), beta) == pytest.approx(1.0)
    assert rise(2 * beta, beta) == pytest.approx(1.0)
    with pytest.raises(DegenerateTruthError):
        rise(beta, np.zeros(50))
    with pytest.raises(ShapeError):
        rise(beta[:10], beta)


def test_coverage_percentage():
    band = Interval(lo=np.array([0.0, 0.0, 0.0, 0.0]), hi=np.array([1.0, 1.0, 1.0, 1.0]))
    assert coverage(band, np.array([0.5, 1.0, 2.0, -1.0])) == 50.0


def test_zero_signal_scenario_flags_degenerate_truth():
    report = run_scenario(ScenarioConfig(model="sofr-gaussian", n=50, tau=0.0, replications=3))
    assert np.isnan(report.median_rise)
    assert report.flags and report.flags[0].startswith("DegenerateTruthError")


def test_reference_cells():
    cell = reference_cell(ScenarioConfig(model="sofr-gaussian", n=500, tau=5.0))
    assert cell == {"median_rise": 0.067, "mean_coverage": 99.8, "median_prediction_error": 0.042}
    assert reference_cell(ScenarioConfig(model="cox", n=500, tau=5.0))["median_rise"] == 0.061
    joint = reference_cell(ScenarioConfig(model="joint-cox", n=200, tau=2.0, noise_sd=10.0))
    two_step = reference_cell(ScenarioConfig(model="two-step-cox", n=200, tau=2.0, noise_sd=10.0))
    assert joint["mean_coverage"] == 96.7
    assert two_step["mean_coverage"] == 89.6
    assert reference_cell(ScenarioConfig(model="sofr-gaussian", n=250, tau=5.0)) is None


def test_single_replication_end_to_end():
    config = ScenarioConfig(model="sofr-gaussian", n=80, tau=5.0, seed=1, n_test=100)
    metrics = run_replication(config, 0, TINY)
    assert metrics["replication"] == 0
    assert np.isfinite(metrics["rise"]) and metrics["rise"] >= 0
    assert 0.0 <= metrics["coverage"] <= 100.0
    assert np.isfinite(metrics["prediction_error"])


def test_replications_use_distinct_sampler_seeds(monkeypatch):
    config = ScenarioConfig(model="sofr-gaussian", n=80, tau=5.0, seed=1, n_test=100)
    seeds = [replication_sampler_seed(config, r) for r in range(5)]
    assert len(set(seeds)) == 5
    assert seeds == [replication_sampler_seed(config, r) for r in range(5)]

    used = []
    fit = RegressionPipeline.fit

    def recording_fit(self, model, data):
        used.append(self.config.sampler.seed)
        return fit(self, model, data)

    monkeypatch.setattr(RegressionPipeline, "fit", recording_fit)
    run_replication(config, 0, TINY)
    run_replication(config, 1, TINY)
    assert used == seeds[:2]


def test_scenario_aggregates_replications():
    config = ScenarioConfig(model="sofr-gaussian", n=80, tau=5.0, seed=1, n_test=100, replications=2)
    report = run_scenario(config, TINY)
    assert len(report.rise) == 2
    assert report.median_rise == pytest.approx(np.median(report.rise))
    assert report.mean_coverage == pytest.approx(np.mean(report.coverage))
    record = report.as_record()
    assert record["model"] == "sofr-gaussian" and record["replications"] == 2


def _desk(model, n, tau, replications, **kwargs):
    config = ScenarioConfig(model=model, n=n, tau=tau, replications=replications, workers=4, **kwargs)
    return run_scenario(config, desk_sampler(AppConfig()))


@pytest.mark.slow
def test_gaussian_desk_cell():
    report = _desk("sofr-gaussian", 500, 5.0, 50)
    assert 0.03 <= report.median_rise <= 0.15
    assert report.mean_coverage >= 95.0


@pytest.mark.slow
def test_bernoulli_desk_cell():
    report = _desk("sofr-bernoulli", 500, 5.0, 50)
    assert 0.06 <= report.median_rise <= 0.3
    assert report.mean_coverage >= 94.0


@pytest.mark.slow
def test_cox_constant_hazard_survival_recovery():
    config = ScenarioConfig(model="cox", n=300, tau=5.0, baseline="constant", baseline_rate=1.0, seed=8)
    data = gen_cox(config, scenario_rng(config, 0))
    fit = RegressionPipeline(desk_sampler(AppConfig())).fit("cox", data)
    times = np.linspace(fit.hazard.boundary[0], np.quantile(data.y, 0.9), 50)
    curves = survival_curve(fit.draws, fit.hazard, eta=0.0, times=times, include_intercept=True)
    assert np.max(np.abs(curves.values.mean(axis=0) - np.exp(-times))) < 0.05


@pytest.mark.slow
def test_cox_rise_decreases_with_signal():
    rises = [_desk("cox", 300, tau, 30).median_rise for tau in (1.0, 2.0, 3.0, 5.0)]
    assert all(b < a for a, b in zip(rises, rises[1:]))


@pytest.mark.slow
def test_joint_model_coverage_under_large_noise():
    report = _desk("joint-cox", 200, 2.0, 30, noise_sd=10.0)
    assert report.mean_coverage >= 93.0
