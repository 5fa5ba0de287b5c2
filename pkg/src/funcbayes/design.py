import logging
from typing import Sequence

import numpy as np

from .errors import ShapeError
from .types import FunctionalDataset, SplineSystem

logger = logging.getLogger(__name__)


def quadrature_weights(grid: Sequence[float]) -> np.ndarray:
    """Riemann weights t[m+1] - t[m]; the last weight repeats the previous one."""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < 2:
        raise ShapeError(f"need at least 2 grid points, got {grid.size}")
    diffs = np.diff(grid)
    if np.any(diffs <= 0):
        raise ShapeError("grid values must be strictly increasing")
    return np.append(diffs, diffs[-1])


def _same_grid(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=1e-12)


def functional_design_matrix(w: np.ndarray, grid: Sequence[float], system: SplineSystem) -> np.ndarray:
    """K x n matrix with entries sum_m L_m W_i(t_m) psi_k(t_m)."""
    grid = np.asarray(grid, dtype=float)
    w = np.asarray(w, dtype=float)
    if not _same_grid(grid, system.grid):
        raise ShapeError("functional covariate grid does not match the spline system grid")
    if w.ndim != 2 or w.shape[1] != grid.size:
        raise ShapeError(f"functional covariate must be n x {grid.size}, got shape {w.shape}")
    weights = quadrature_weights(grid)
    return system.eval.T @ (w * weights).T


def functional_design(data: FunctionalDataset, system: SplineSystem) -> np.ndarray:
    return functional_design_matrix(data.w, data.grid, system)


def fpca_spline_crossproduct(efunctions: np.ndarray, system: SplineSystem, grid: Sequence[float]) -> np.ndarray:
    """J x K inner products of eigenfunctions and basis functions with 1/M weights."""
    grid = np.asarray(grid, dtype=float)
    efunctions = np.atleast_2d(np.asarray(efunctions, dtype=float))
    if not _same_grid(grid, system.grid):
        raise ShapeError("eigenfunction grid does not match the spline system grid")
    if efunctions.shape[1] != grid.size:
        raise ShapeError(f"eigenfunctions must be J x {grid.size}, got shape {efunctions.shape}")
    return efunctions @ system.eval / grid.size
