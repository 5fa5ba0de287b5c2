import logging
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .basis import evaluate_hazard
from .errors import DegenerateDrawsError, ShapeError, SpecError
from .layout import simplex_transform
from .reparam import untransform_coeffs
from .types import CurveDraws, HazardBasis, Interval, PosteriorDraws, ReparamMap, SplineSystem

logger = logging.getLogger(__name__)

MIN_DRAWS = 20
SD_FLOOR = 1e-12


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise SpecError(f"alpha must lie in (0, 1), got {alpha}")


def _values(curves: CurveDraws) -> np.ndarray:
    values = np.asarray(curves.values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ShapeError(f"curve draws must be Q x M with Q >= 1, got shape {values.shape}")
    return values


def transformed_coefficients(draws: PosteriorDraws, names: Sequence[str] = ("b_r", "b_f")) -> np.ndarray:
    """Stacked draws of the transformed spline coefficients, Q x K."""
    return np.hstack([draws.block(name).reshape(draws.flat().shape[0], -1) for name in names])


def curves_from_transformed(b_tilde: np.ndarray, rmap: ReparamMap, system: SplineSystem) -> CurveDraws:
    b_tilde = np.asarray(b_tilde, dtype=float)
    if b_tilde.ndim != 2 or b_tilde.shape[1] != system.num_basis:
        raise ShapeError(f"expected Q x {system.num_basis} transformed coefficients, got shape {b_tilde.shape}")
    b = untransform_coeffs(rmap, b_tilde)
    return CurveDraws(values=b @ system.eval.T, grid=system.grid)


def reconstruct_beta(draws: PosteriorDraws, rmap: ReparamMap, system: SplineSystem) -> CurveDraws:
    return curves_from_transformed(transformed_coefficients(draws), rmap, system)


def reconstruct_fosr_betas(draws: PosteriorDraws, system: SplineSystem) -> List[CurveDraws]:
    """One set of coefficient curves per scalar predictor, from untransformed b_p."""
    coeffs = draws.block("b_p")
    if coeffs.shape[-1] != system.num_basis:
        raise ShapeError(f"b_p has {coeffs.shape[-1]} coefficients, basis has {system.num_basis}")
    return [CurveDraws(values=coeffs[:, p, :] @ system.eval.T, grid=system.grid) for p in range(coeffs.shape[1])]


def pointwise_interval(curves: CurveDraws, alpha: float = 0.05) -> Interval:
    """Empirical alpha/2 and 1 - alpha/2 quantiles at every grid point."""
    _check_alpha(alpha)
    values = _values(curves)
    if values.shape[0] < MIN_DRAWS:
        logger.warning("pointwise interval from only %d draws", values.shape[0])
    lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0, method="linear")
    return Interval(lo=lo, hi=hi, center=values.mean(axis=0))


def normal_pointwise_interval(curves: CurveDraws, alpha: float = 0.05) -> Interval:
    """Posterior mean plus or minus z_{1-alpha/2} posterior sd."""
    _check_alpha(alpha)
    values = _values(curves)
    center = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1])
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    return Interval(lo=center - z * sd, hi=center + z * sd, center=center)


def cma_interval(curves: CurveDraws, alpha: float = 0.05) -> Interval:
    """Simultaneous band from the max standardized deviation over the grid.

    With at least MIN_DRAWS draws the multiplier is floored at z_{1-alpha/2},
    so the band always contains the normal pointwise interval.
    """
    _check_alpha(alpha)
    values = _values(curves)
    if values.shape[0] < MIN_DRAWS:
        logger.warning("CMA interval from only %d draws", values.shape[0])
    center = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1])
    keep = sd >= SD_FLOOR
    if not np.any(keep):
        raise DegenerateDrawsError("all curve draws are constant; no grid point has positive sd")
    excluded = int(np.sum(~keep))
    if excluded:
        logger.warning("CMA interval excludes %d grid points with zero posterior sd", excluded)
    d = np.max(np.abs(values[:, keep] - center[keep]) / sd[keep], axis=1)
    q = float(np.quantile(d, 1.0 - alpha, method="linear"))
    if values.shape[0] >= MIN_DRAWS:
        q = max(q, float(stats.norm.ppf(1.0 - alpha / 2.0)))
    return Interval(lo=center - q * sd, hi=center + q * sd, center=center)


def survival_from_coefficients(c_draws: np.ndarray, i_eval: np.ndarray, eta) -> np.ndarray:
    """S(t) = exp(-H0(t) e^eta) with H0 = I c, one row per draw.

    ``eta`` is a scalar or one value per draw.
    """
    c_draws = np.atleast_2d(np.asarray(c_draws, dtype=float))
    i_eval = np.atleast_2d(np.asarray(i_eval, dtype=float))
    if c_draws.shape[1] != i_eval.shape[1]:
        raise ShapeError(f"{c_draws.shape[1]} hazard coefficients against {i_eval.shape[1]} basis columns")
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (c_draws.shape[0],))
    cumulative = c_draws @ i_eval.T
    return np.exp(-cumulative * np.exp(eta)[:, None])


def hazard_coefficients(draws: PosteriorDraws) -> np.ndarray:
    raw = draws.block("c_raw")
    return np.vstack([simplex_transform(row)[0] for row in raw])


def survival_curve(
    cox_draws: PosteriorDraws,
    hazard: HazardBasis,
    eta: float,
    times: Optional[Sequence[float]] = None,
    include_intercept: bool = True,
) -> CurveDraws:
    """Posterior survival curves at covariate contribution ``eta``.

    The sampled eta0 is added draw by draw; the simplex fixes H0(upper) = 1,
    so eta0 carries the baseline scale. Pass include_intercept=False only for
    the normalized baseline shape.
    """
    if "c_raw" not in cox_draws.layout:
        raise ShapeError("draws carry no hazard simplex slice")
    if times is None:
        times = np.linspace(hazard.boundary[0], hazard.boundary[1], 101)
    times = np.asarray(times, dtype=float)
    _, i_eval = evaluate_hazard(hazard, times)
    c = hazard_coefficients(cox_draws)
    eta_draws = np.full(c.shape[0], float(eta))
    if include_intercept:
        eta_draws = eta_draws + cox_draws.block("eta0").reshape(-1)
    return CurveDraws(values=survival_from_coefficients(c, i_eval, eta_draws), grid=times)


def summarize_scalars(values: np.ndarray, labels: Sequence[str]) -> pd.DataFrame:
    """Posterior mean with 2.5% and 97.5% quantiles, one row per label."""
    values = np.asarray(values, dtype=float).reshape(np.shape(values)[0], -1)
    if values.shape[1] != len(labels):
        raise ShapeError(f"{values.shape[1]} columns for {len(labels)} labels")
    lo, hi = np.quantile(values, [0.025, 0.975], axis=0, method="linear")
    return pd.DataFrame({"parameter": list(labels), "estimate": values.mean(axis=0), "q2.5": lo, "q97.5": hi})


def scalar_summaries(draws: PosteriorDraws, z_names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Intercept, scalar-covariate effects and scale parameters on their natural scale."""
    frames = []
    layout = draws.layout
    if "eta0" in layout:
        frames.append(summarize_scalars(draws.block("eta0"), ["eta0"]))
    if "gamma" in layout and layout.block("gamma").size:
        gamma = draws.block("gamma")
        names = list(z_names) if z_names else [f"gamma[{j}]" for j in range(gamma.shape[1])]
        frames.append(summarize_scalars(gamma, names))
    for name in layout.names:
        if not name.startswith("log_"):
            continue
        values = np.exp(draws.block(name).reshape(draws.flat().shape[0], -1))
        label = name[len("log_") :]
        labels = [label] if values.shape[1] == 1 else [f"{label}[{j}]" for j in range(values.shape[1])]
        frames.append(summarize_scalars(values, labels))
    if "c_raw" in layout:
        c = hazard_coefficients(draws)
        frames.append(summarize_scalars(c, [f"c[{j}]" for j in range(c.shape[1])]))
    if not frames:
        return pd.DataFrame(columns=["parameter", "estimate", "q2.5", "q97.5"])
    return pd.concat(frames, ignore_index=True)


def curve_table(curves: CurveDraws, alpha: float = 0.05, pointwise: str = "normal") -> pd.DataFrame:
    """Plot-ready table: t, mean, pw_lo, pw_hi, cma_lo, cma_hi."""
    if pointwise == "normal":
        pw = normal_pointwise_interval(curves, alpha)
    elif pointwise == "quantile":
        pw = pointwise_interval(curves, alpha)
    else:
        raise SpecError(f"pointwise must be 'normal' or 'quantile', got {pointwise}")
    try:
        cma = cma_interval(curves, alpha)
        cma_lo, cma_hi = cma.lo, cma.hi
    except DegenerateDrawsError:
        center = _values(curves).mean(axis=0)
        cma_lo, cma_hi = center, center
    return pd.DataFrame(
        {
            "t": curves.grid,
            "mean": _values(curves).mean(axis=0),
            "pw_lo": pw.lo,
            "pw_hi": pw.hi,
            "cma_lo": cma_lo,
            "cma_hi": cma_hi,
        }
    )
