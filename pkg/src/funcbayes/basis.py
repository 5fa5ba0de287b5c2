"""Spline bases for functional coefficients and baseline hazards.

Functional coefficients use cubic B-splines (open, with clamped ends, or
periodic) with the exact integrated squared second-derivative penalty.
Baseline hazards use M-splines (non-negative, unit integral) and their
running integrals, the I-splines.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from .errors import DomainError, SpecError
from .types import CYCLIC_CUBIC, OPEN_CUBIC, HazardBasis, SplineSpec, SplineSystem

logger = logging.getLogger(__name__)

DEGREE = 3
_GAUSS_POINTS = 3
_DOMAIN_TOL = 1e-12


def _check_grid(grid: np.ndarray, lo: float, hi: float, what: str = "grid") -> np.ndarray:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise DomainError(f"{what} is empty")
    if not np.all(np.isfinite(grid)):
        raise DomainError(f"{what} contains non-finite values")
    span = _DOMAIN_TOL * max(1.0, abs(hi - lo))
    if grid.min() < lo - span or grid.max() > hi + span:
        raise DomainError(f"{what} values must lie in [{lo}, {hi}], got [{grid.min()}, {grid.max()}]")
    return np.clip(grid, lo, hi)


def _check_spec(spec: SplineSpec) -> None:
    a, b = spec.domain
    if not a < b:
        raise SpecError(f"domain must satisfy a < b, got {spec.domain}")
    if spec.kind == OPEN_CUBIC:
        if spec.num_basis < 4:
            raise SpecError(f"open-cubic needs K >= 4, got {spec.num_basis}")
    elif spec.kind == CYCLIC_CUBIC:
        if spec.num_basis < 3:
            raise SpecError(f"cyclic-cubic needs K >= 3, got {spec.num_basis}")
    else:
        raise SpecError(f"unknown spline kind: {spec.kind}")


def _breakpoints(grid: np.ndarray, a: float, b: float, count: int) -> np.ndarray:
    """``count`` interior breakpoints at equally spaced quantiles of the grid."""
    if count <= 0:
        return np.zeros(0)
    probs = np.linspace(0.0, 1.0, count + 2)[1:-1]
    inner = np.quantile(grid, probs)
    return np.clip(inner, a, b)


def _open_knots(spec: SplineSpec, grid: np.ndarray) -> np.ndarray:
    a, b = spec.domain
    inner = _breakpoints(grid, a, b, spec.num_basis - 4)
    return np.concatenate([[a] * 4, inner, [b] * 4])


def _cyclic_knots(spec: SplineSpec, grid: np.ndarray) -> np.ndarray:
    a, b = spec.domain
    k = spec.num_basis
    period = b - a
    x = np.concatenate([[a], _breakpoints(grid, a, b, k - 1), [b]])
    left = x[k - DEGREE : k] - period
    right = x[1 : DEGREE + 1] + period
    return np.concatenate([left, x, right])


def _cyclic_fold(num_basis: int) -> np.ndarray:
    """Map the K+3 extended B-splines onto K periodic ones."""
    fold = np.zeros((num_basis + DEGREE, num_basis))
    for j in range(num_basis + DEGREE):
        fold[j, j % num_basis] = 1.0
    return fold


def _raw_basis(knots: np.ndarray) -> BSpline:
    n = len(knots) - DEGREE - 1
    return BSpline(knots, np.eye(n), DEGREE)


def evaluate_basis(spec: SplineSpec, knots: np.ndarray, t: Sequence[float]) -> np.ndarray:
    """Basis values at arbitrary points of the domain, one row per point."""
    a, b = spec.domain
    t = _check_grid(np.asarray(t, dtype=float), a, b, what="evaluation points")
    values = _raw_basis(knots)(t)
    if spec.kind == CYCLIC_CUBIC:
        values = values @ _cyclic_fold(spec.num_basis)
    return values


def _second_derivative_penalty(knots: np.ndarray, a: float, b: float) -> np.ndarray:
    d2 = _raw_basis(knots).derivative(2)
    nodes, weights = leggauss(_GAUSS_POINTS)
    breaks = np.unique(knots[(knots >= a) & (knots <= b)])
    n = len(knots) - DEGREE - 1
    penalty = np.zeros((n, n))
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (hi - lo)
        pts = lo + half * (nodes + 1.0)
        vals = d2(pts)
        penalty += half * (vals.T * weights) @ vals
    return 0.5 * (penalty + penalty.T)


def build_spline_system(spec: SplineSpec, grid: Sequence[float]) -> SplineSystem:
    _check_spec(spec)
    a, b = spec.domain
    grid = _check_grid(grid, a, b)
    if np.any(np.diff(grid) <= 0):
        raise DomainError("grid values must be strictly increasing")

    if spec.kind == OPEN_CUBIC:
        knots = _open_knots(spec, grid)
        eval_mat = _raw_basis(knots)(grid)
        penalty = _second_derivative_penalty(knots, a, b)
        rank = spec.num_basis - 2
    else:
        knots = _cyclic_knots(spec, grid)
        fold = _cyclic_fold(spec.num_basis)
        eval_mat = _raw_basis(knots)(grid) @ fold
        penalty = fold.T @ _second_derivative_penalty(knots, a, b) @ fold
        rank = spec.num_basis - 1

    eigvals = np.linalg.eigvalsh(penalty)
    numeric_rank = int(np.sum(eigvals > 1e-10 * eigvals.max()))
    if numeric_rank != rank:
        logger.warning("penalty numeric rank %d differs from analytic rank %d", numeric_rank, rank)

    logger.debug("built %s system with K=%d on %d grid points", spec.kind, spec.num_basis, len(grid))
    return SplineSystem(spec=spec, grid=grid, eval=eval_mat, penalty=penalty, rank=rank, knots=knots)


def hazard_boundary(times: Sequence[float], pad: float = 0.01) -> Tuple[float, float]:
    """Boundary knots slightly outside the observed range, floored at zero."""
    times = np.asarray(times, dtype=float)
    lo, hi = float(times.min()), float(times.max())
    spread = hi - lo if hi > lo else max(abs(hi), 1.0)
    return max(0.0, lo - pad * spread), hi + pad * spread


def _hazard_knots(times: np.ndarray, df: int, boundary: Tuple[float, float]) -> np.ndarray:
    order = min(DEGREE + 1, df)
    lo, hi = boundary
    inner = _breakpoints(times, lo, hi, df - order)
    return np.concatenate([[lo] * order, inner, [hi] * order])


def _mspline(knots: np.ndarray, df: int) -> BSpline:
    order = len(knots) - df
    widths = knots[order : order + df] - knots[:df]
    return BSpline(knots, np.diag(order / widths), order - 1)


def evaluate_hazard(basis: HazardBasis, t: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """M-spline and I-spline values at new times inside the boundary."""
    lo, hi = basis.boundary
    t = _check_grid(np.asarray(t, dtype=float), lo, hi, what="times")
    mspl = _mspline(basis.knots, basis.df)
    ispl = mspl.antiderivative()
    m_eval = np.clip(mspl(t), 0.0, None)
    i_eval = ispl(t) - ispl(np.array([lo]))
    return m_eval, np.clip(i_eval, 0.0, 1.0)


def build_hazard_basis(
    times: Sequence[float],
    df: int,
    boundary: Optional[Tuple[float, float]] = None,
) -> HazardBasis:
    times = np.asarray(times, dtype=float).reshape(-1)
    if df < 3:
        raise SpecError(f"hazard df must be >= 3, got {df}")
    if boundary is None:
        boundary = hazard_boundary(times)
    lo, hi = float(boundary[0]), float(boundary[1])
    if not lo < hi:
        raise SpecError(f"hazard boundary must satisfy lo < hi, got {boundary}")
    if times.size and (times.min() < lo or times.max() > hi):
        raise DomainError(f"times must lie inside the hazard boundary [{lo}, {hi}]")
    if df > DEGREE + 1 and np.unique(times).size < 2:
        raise SpecError("need at least two distinct times to place hazard knots")

    knots = _hazard_knots(times, df, (lo, hi))
    basis = HazardBasis(df=df, boundary=(lo, hi), knots=knots, times=times, m_eval=np.zeros((0, df)), i_eval=np.zeros((0, df)))
    m_eval, i_eval = evaluate_hazard(basis, times)
    return HazardBasis(df=df, boundary=(lo, hi), knots=knots, times=times, m_eval=m_eval, i_eval=i_eval)
