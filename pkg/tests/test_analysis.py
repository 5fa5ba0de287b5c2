import numpy as np
import pytest
from scipy import optimize, stats

from funcbayes.analysis import (
    cma_interval,
    curve_table,
    curves_from_transformed,
    normal_pointwise_interval,
    pointwise_interval,
    reconstruct_fosr_betas,
    scalar_summaries,
    summarize_scalars,
    survival_curve,
    survival_from_coefficients,
)
from funcbayes.basis import build_hazard_basis, build_spline_system
from funcbayes.design import functional_design_matrix
from funcbayes.errors import DegenerateDrawsError, ShapeError, SpecError
from funcbayes.layout import ParamLayout
from funcbayes.posteriors import SofrPosterior
from funcbayes.reparam import build_reparam, transform_coeffs
from funcbayes.types import OPEN_CUBIC, CurveDraws, PosteriorDraws, SplineSpec


def _draws(layout, values):
    values = np.asarray(values, dtype=float).reshape(1, -1, layout.size)
    chains = values.shape[0]
    return PosteriorDraws(
        draws=values,
        layout=layout,
        divergences=np.zeros(chains, dtype=int),
        accept_stat=np.full(chains, 0.8),
        step_size=np.full(chains, 0.1),
    )


def test_cma_single_point_hand_example():
    curves = CurveDraws(values=np.array([[0.0], [1.0], [2.0]]), grid=np.array([0.5]))
    band = cma_interval(curves, alpha=0.05)
    np.testing.assert_allclose(band.lo, [0.0])
    np.testing.assert_allclose(band.hi, [2.0])


def test_pointwise_quantiles_linear():
    values = np.arange(101.0).reshape(-1, 1)
    band = pointwise_interval(CurveDraws(values=values, grid=np.array([0.0])), alpha=0.1)
    np.testing.assert_allclose(band.lo, [5.0])
    np.testing.assert_allclose(band.hi, [95.0])


def test_normal_pointwise_interval():
    values = np.array([[0.0, 1.0], [2.0, 1.0], [4.0, 1.0]])
    band = normal_pointwise_interval(CurveDraws(values=values, grid=np.array([0.0, 1.0])), alpha=0.05)
    z = stats.norm.ppf(0.975)
    np.testing.assert_allclose(band.lo, [2.0 - 2.0 * z, 1.0])
    np.testing.assert_allclose(band.hi, [2.0 + 2.0 * z, 1.0])


def test_cma_contains_pointwise_on_correlated_draws(rng):
    grid = np.linspace(0.0, 1.0, 50)
    cov = np.exp(-np.subtract.outer(grid, grid) ** 2 / 0.02) + 1e-8 * np.eye(50)
    values = rng.multivariate_normal(np.sin(2 * np.pi * grid), 0.3 * cov, size=1000)
    curves = CurveDraws(values=values, grid=grid)
    cma = cma_interval(curves)
    normal = normal_pointwise_interval(curves)
    quant = pointwise_interval(curves)
    assert np.all(cma.lo <= normal.lo) and np.all(cma.hi >= normal.hi)
    assert np.all(cma.lo <= quant.lo) and np.all(cma.hi >= quant.hi)


def test_cma_contains_pointwise_on_rank_one_draws():
    rng = np.random.default_rng(11)
    grid = np.linspace(0.0, 1.0, 30)
    for _ in range(200):
        b = rng.standard_normal(400)
        curves = CurveDraws(values=np.outer(b, 1.0 + grid), grid=grid)
        cma = cma_interval(curves)
        normal = normal_pointwise_interval(curves)
        assert np.all(cma.lo <= normal.lo + 1e-12)
        assert np.all(cma.hi >= normal.hi - 1e-12)


def test_cma_simultaneous_coverage_monte_carlo():
    rng = np.random.default_rng(99)
    m, q, reps = 10, 2000, 4000
    covered = 0
    for _ in range(reps):
        values = rng.standard_normal((q, m))
        truth = rng.standard_normal(m)
        band = cma_interval(CurveDraws(values=values, grid=np.arange(m) / m))
        covered += bool(np.all(band.contains(truth)))
    assert covered / reps >= 0.94


def test_cma_excludes_zero_sd_points(rng):
    values = rng.standard_normal((200, 3))
    values[:, 1] = 4.0
    band = cma_interval(CurveDraws(values=values, grid=np.arange(3.0)))
    assert band.lo[1] == band.hi[1] == 4.0


def test_cma_all_constant_raises():
    with pytest.raises(DegenerateDrawsError):
        cma_interval(CurveDraws(values=np.ones((30, 4)), grid=np.arange(4.0)))


def test_alpha_validation():
    curves = CurveDraws(values=np.zeros((30, 2)), grid=np.arange(2.0))
    with pytest.raises(SpecError):
        pointwise_interval(curves, alpha=0.0)
    with pytest.raises(SpecError):
        cma_interval(curves, alpha=1.5)


def test_curves_from_transformed_reconstructs_beta(rng, standard_grid):
    system = build_spline_system(SplineSpec(kind=OPEN_CUBIC, num_basis=8, domain=(0.0, 1.0)), standard_grid)
    raw = functional_design_matrix(rng.standard_normal((30, 50)), standard_grid, system)
    rmap = build_reparam(system, raw)
    b = rng.standard_normal((5, 8))
    curves = curves_from_transformed(transform_coeffs(rmap, b), rmap, system)
    np.testing.assert_allclose(curves.values, b @ system.eval.T, atol=1e-10)
    with pytest.raises(ShapeError):
        curves_from_transformed(np.zeros((5, 7)), rmap, system)


def test_fosr_curves_per_predictor(standard_grid):
    system = build_spline_system(SplineSpec(kind=OPEN_CUBIC, num_basis=6, domain=(0.0, 1.0)), standard_grid)
    layout = ParamLayout([("b_p", (2, 6))])
    values = np.vstack([np.concatenate([np.ones(6), 2 * np.ones(6)])] * 4)
    curves = reconstruct_fosr_betas(_draws(layout, values), system)
    assert len(curves) == 2
    np.testing.assert_allclose(curves[0].values, 1.0, atol=1e-12)
    np.testing.assert_allclose(curves[1].values, 2.0, atol=1e-12)


def test_survival_from_coefficients_closed_form():
    i_eval = np.array([[0.0], [0.5], [1.0]])
    surv = survival_from_coefficients(np.array([[1.0]]), i_eval, eta=np.log(2.0))
    np.testing.assert_allclose(surv, [[1.0, np.exp(-1.0), np.exp(-2.0)]])


def test_survival_curve_monotone_from_one():
    times = np.random.default_rng(1).exponential(size=100)
    hazard = build_hazard_basis(times, 5)
    layout = ParamLayout([("eta0", (1,)), ("c_raw", (4,))])
    values = np.random.default_rng(2).normal(size=(10, 5))
    curves = survival_curve(_draws(layout, values), hazard, eta=0.0)
    np.testing.assert_allclose(curves.values[:, 0], 1.0, atol=1e-12)
    assert np.all(np.diff(curves.values, axis=1) <= 1e-12)
    np.testing.assert_allclose(curves.values[:, -1], np.exp(-np.exp(values[:, 0])), rtol=1e-10)
    shape_only = survival_curve(_draws(layout, values), hazard, eta=0.0, include_intercept=False)
    np.testing.assert_allclose(shape_only.values[:, -1], np.exp(-1.0), rtol=1e-10)


def _cox_map(times):
    hazard = build_hazard_basis(times, 5)
    empty = np.zeros((0, times.size))
    model = SofrPosterior("cox", times, empty, empty, censor=np.zeros(times.size, dtype=int), hazard=hazard)

    def objective(theta):
        value, grad = model.log_density(theta)
        return -value, -grad

    fit = optimize.minimize(objective, np.zeros(model.dim), jac=True, method="L-BFGS-B")
    return _draws(model.layout, np.tile(fit.x, (5, 1))), hazard


@pytest.mark.parametrize("rate", [0.2, 1.0, 5.0])
def test_survival_curve_tracks_hazard_scale(rate):
    times = np.random.default_rng(7).exponential(1.0 / rate, size=1000)
    draws, hazard = _cox_map(times)
    curves = survival_curve(draws, hazard, eta=0.0)
    truth = np.exp(-rate * curves.grid)
    assert np.max(np.abs(curves.values.mean(axis=0) - truth)) < 0.07
    assert curves.values[0, -1] < 0.05


def test_scalar_summaries_natural_scale():
    layout = ParamLayout([("eta0", (1,)), ("gamma", (2,)), ("log_sigma_b", (1,))])
    values = np.tile([1.0, 2.0, 3.0, np.log(4.0)], (10, 1))
    table = scalar_summaries(_draws(layout, values), z_names=["age", "sex"])
    assert list(table["parameter"]) == ["eta0", "age", "sex", "sigma_b"]
    np.testing.assert_allclose(table["estimate"], [1.0, 2.0, 3.0, 4.0])


def test_summarize_scalars_label_mismatch():
    with pytest.raises(ShapeError):
        summarize_scalars(np.zeros((5, 2)), ["a"])


def test_curve_table_columns(rng):
    curves = CurveDraws(values=rng.standard_normal((100, 5)), grid=np.linspace(0, 1, 5))
    table = curve_table(curves)
    assert list(table.columns) == ["t", "mean", "pw_lo", "pw_hi", "cma_lo", "cma_hi"]
    assert np.all(table["cma_lo"] <= table["pw_lo"])
    with pytest.raises(SpecError):
        curve_table(curves, pointwise="bogus")
