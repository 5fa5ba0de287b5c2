import numpy as np
import pytest
from scipy import stats

from funcbayes.config import SamplerConfig
from funcbayes.diagnostics import bulk_ess
from funcbayes.errors import InitError
from funcbayes.layout import ParamLayout
from funcbayes.posteriors import ModelPosterior
from funcbayes.sampler import HamiltonianSystem, StepSizeAdapter, WarmupSchedule, collect_chain_stats, run_hmc


class GaussianMean(ModelPosterior):
    """y_i ~ N(mu, sigma^2) with mu ~ N(0, tau^2); posterior is Gaussian in closed form."""

    family = "gaussian-mean"

    def __init__(self, y, sigma=2.0, tau=3.0):
        self.y = np.asarray(y, dtype=float)
        self.sigma = sigma
        self.tau = tau
        self.layout = ParamLayout([("mu", (1,))])

    def posterior(self):
        precision = self.y.size / self.sigma**2 + 1.0 / self.tau**2
        return self.y.sum() / self.sigma**2 / precision, 1.0 / precision

    def _evaluate(self, params):
        mu = params["mu"][0]
        resid = self.y - mu
        terms = {"likelihood": -0.5 * float(resid @ resid) / self.sigma**2, "prior": -0.5 * mu**2 / self.tau**2}
        grad = resid.sum() / self.sigma**2 - mu / self.tau**2
        return terms, {"mu": np.array([grad])}


class Unreachable(ModelPosterior):
    family = "unreachable"

    def __init__(self):
        self.layout = ParamLayout([("x", (2,))])

    def _evaluate(self, params):
        return {"value": -np.inf}, {"x": np.zeros(2)}


class StdNormal(ModelPosterior):
    family = "std-normal"

    def __init__(self, dim):
        self.layout = ParamLayout([("x", (dim,))])

    def _evaluate(self, params):
        x = params["x"]
        return {"value": -0.5 * float(x @ x)}, {"x": -x}


class CorrelatedNormal(ModelPosterior):
    family = "correlated-normal"

    def __init__(self, rho=0.8):
        self.precision = np.linalg.inv(np.array([[1.0, rho], [rho, 1.0]]))
        self.layout = ParamLayout([("x", (2,))])

    def _evaluate(self, params):
        x = params["x"]
        g = self.precision @ x
        return {"value": -0.5 * float(x @ g)}, {"x": -g}


def test_conjugate_gaussian_mean_oracle():
    model = GaussianMean(np.random.default_rng(3).normal(1.5, 2.0, size=25))
    mean, var = model.posterior()
    config = SamplerConfig(n_iter=2500, n_warmup=500, n_chains=4, seed=11)
    draws = run_hmc(model, config)
    assert draws.draws.shape == (4, 2000, 1)

    samples = draws.draws[:, :, 0]
    ess = bulk_ess(samples)
    flat = samples.reshape(-1)
    mcse_mean = np.sqrt(var / ess)
    sq = (flat - flat.mean()) ** 2
    mcse_var = sq.std() / np.sqrt(bulk_ess((samples - flat.mean()) ** 2))
    assert abs(flat.mean() - mean) < 3 * mcse_mean
    assert abs(flat.var(ddof=1) - var) < 3 * mcse_var
    assert draws.rhat[0] < 1.01
    assert np.sum(draws.divergences) == 0


def test_same_seed_same_draws():
    model = GaussianMean(np.random.default_rng(5).normal(size=10))
    config = SamplerConfig(n_iter=200, n_warmup=100, n_chains=2, seed=4)
    first = run_hmc(model, config)
    second = run_hmc(model, config)
    np.testing.assert_array_equal(first.draws, second.draws)
    other = run_hmc(model, SamplerConfig(n_iter=200, n_warmup=100, n_chains=2, seed=5))
    assert not np.array_equal(first.draws, other.draws)


def test_chains_use_independent_streams():
    model = GaussianMean(np.random.default_rng(5).normal(size=10))
    draws = run_hmc(model, SamplerConfig(n_iter=200, n_warmup=100, n_chains=2, seed=4, parallel=False))
    assert not np.array_equal(draws.draws[0], draws.draws[1])


def test_standard_normal_moments():
    draws = run_hmc(StdNormal(5), SamplerConfig(n_iter=2000, n_warmup=500, n_chains=2, seed=1))
    flat = draws.flat()
    np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=0.15)
    np.testing.assert_allclose(flat.var(axis=0), 1.0, atol=0.2)
    stats = collect_chain_stats(draws)
    assert [s["chain"] for s in stats] == [0, 1]
    assert all(0.5 < s["accept_stat"] <= 1.0 for s in stats)
    assert all(s["tree_depth"] >= 1 for s in stats)


def test_init_error_when_density_is_never_finite():
    config = SamplerConfig(n_iter=20, n_warmup=10, n_chains=1, max_init_tries=5)
    with pytest.raises(InitError):
        run_hmc(Unreachable(), config)


def test_step_size_adapter_moves_toward_target():
    adapter = StepSizeAdapter(target=0.8)
    adapter.restart(1.0)
    for _ in range(50):
        small = adapter.learn(0.2)
    assert small < 1.0
    adapter.restart(1.0)
    for _ in range(50):
        large = adapter.learn(1.0)
    assert large > 1.0


def test_warmup_schedule_default_windows():
    schedule = WarmupSchedule(1000)
    ends = []
    for i in range(1000):
        if schedule.window_ends():
            ends.append(i)
            schedule.advance_window()
        schedule.counter += 1
    assert ends[0] == 75 + 25 - 1
    assert ends[-1] == 1000 - 50 - 1
    assert all(b > a for a, b in zip(ends, ends[1:]))


def test_warmup_schedule_short_warmup_fallback():
    schedule = WarmupSchedule(100)
    assert schedule.init_buffer == 15
    assert schedule.term_buffer == 10
    assert schedule.window_size == 75


def test_energy_conserved_at_tiny_step():
    system = HamiltonianSystem(CorrelatedNormal(), np.ones(2))
    pt = system.point(np.array([0.7, -1.2]), np.array([0.3, 0.9]))
    h0 = system.hamiltonian(pt)
    for _ in range(200):
        pt = system.leapfrog(pt, 1e-4)
        assert abs(system.hamiltonian(pt) - h0) < 1e-6


def test_correlated_gaussian_marginals_pass_ks():
    config = SamplerConfig(n_iter=3000, n_warmup=1000, n_chains=4, seed=21)
    flat = run_hmc(CorrelatedNormal(), config).flat()
    assert flat.shape == (8000, 2)
    critical = 1.628 / np.sqrt(flat.shape[0])
    for j in range(2):
        assert stats.kstest(flat[:, j], "norm").statistic < critical


def test_conjugate_acceptance_near_target():
    y = np.random.default_rng(8).normal(0.5, 1.0, size=20)
    model = GaussianMean(y, sigma=1.0, tau=10.0)
    mean, var = model.posterior()
    config = SamplerConfig(n_iter=2000, n_warmup=1000, n_chains=4, seed=3)
    draws = run_hmc(model, config)
    samples = draws.draws[:, :, 0]
    assert abs(samples.mean() - mean) < 3 * np.sqrt(var / bulk_ess(samples))
    accept = np.mean([s["accept_stat"] for s in collect_chain_stats(draws)])
    assert abs(accept - config.target_accept) <= 0.1


def test_ten_dim_standard_normal_covariance():
    config = SamplerConfig(n_iter=3000, n_warmup=1000, n_chains=4, seed=17)
    flat = run_hmc(StdNormal(10), config).flat()
    assert flat.shape == (8000, 10)
    np.testing.assert_allclose(np.cov(flat, rowvar=False), np.eye(10), atol=0.1)
