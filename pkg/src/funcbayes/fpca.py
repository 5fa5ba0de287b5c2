"""Functional principal components on a common grid.

Eigenfunctions are normalized under the grid inner product
<f, g> = (1/M) sum_m f(t_m) g(t_m), so scores keep the scale of the data.
"""

import logging
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DegenerateDataError, ShapeError, SpecError
from .types import FpcaFit

logger = logging.getLogger(__name__)

_ZERO_TOL = 1e-12


def _select_npc(evalues: np.ndarray, pve_target: float) -> int:
    fractions = np.cumsum(evalues) / np.sum(evalues)
    return int(np.searchsorted(fractions, pve_target - 1e-12) + 1)


def _noise_variance(cov: np.ndarray, residual: np.ndarray) -> float:
    """Average gap between the covariance diagonal and its interpolation from off-diagonal neighbours.

    White noise only inflates the diagonal, so the gap does not depend on how
    many components are kept. Grids shorter than five points fall back to the
    truncation residual.
    """
    m = cov.shape[0]
    if m < 5:
        return float(np.mean(residual**2))
    idx = np.arange(2, m - 2)
    near = cov[idx, idx - 1] + cov[idx, idx + 1]
    far = cov[idx, idx - 2] + cov[idx, idx + 2]
    # cubic interpolation through t-2h, t-h, t+h, t+2h
    smooth_diag = (4.0 * near - far) / 6.0
    return float(max(np.mean(cov[idx, idx] - smooth_diag), 0.0))


def fit_fpca(w: np.ndarray, pve_target: float = 0.99, npc: Optional[int] = None) -> FpcaFit:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ShapeError(f"expected an n x M matrix, got shape {w.shape}")
    n, m = w.shape
    if n < 2:
        raise ShapeError(f"need at least 2 curves, got {n}")
    if not 0.0 < pve_target <= 1.0:
        raise SpecError(f"pve_target must lie in (0, 1], got {pve_target}")

    mean = w.mean(axis=0)
    centred = w - mean
    cov = centred.T @ centred / (n - 1)
    eigvals, eigvecs = linalg.eigh(cov)
    eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]

    top = eigvals[0]
    if not top > _ZERO_TOL * max(1.0, np.abs(w).max() ** 2):
        raise DegenerateDataError("functional data have zero covariance")
    positive = eigvals > 1e-10 * top
    eigvals, eigvecs = eigvals[positive], eigvecs[:, positive]

    if npc is None:
        num = min(_select_npc(eigvals, pve_target), eigvals.size)
    else:
        if npc < 1:
            raise SpecError(f"npc must be >= 1, got {npc}")
        num = min(int(npc), eigvals.size)
        if num < npc:
            logger.warning("requested %d components but only %d are positive", npc, num)

    efunctions = eigvecs[:, :num].T * np.sqrt(m)
    evalues = eigvals[:num] / m
    for j in range(num):
        if efunctions[j, np.argmax(np.abs(efunctions[j]))] < 0:
            efunctions[j] = -efunctions[j]

    scores = centred @ efunctions.T / m
    residual = centred - scores @ efunctions
    pve = float(np.sum(eigvals[:num]) / np.sum(eigvals))
    noise_var = _noise_variance(cov, residual)
    logger.info("fpca: J=%d pve=%.4f noise_var=%.4g", num, pve, noise_var)
    return FpcaFit(mean=mean, efunctions=efunctions, evalues=evalues, scores=scores, pve=pve, noise_var=noise_var)


def project_scores(fit: FpcaFit, w: np.ndarray) -> np.ndarray:
    """Least-squares scores of new curves on the fitted eigenfunctions."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if w.shape[1] != fit.efunctions.shape[1]:
        raise ShapeError(f"curves must have {fit.efunctions.shape[1]} grid points, got {w.shape[1]}")
    return (w - fit.mean) @ fit.efunctions.T / fit.efunctions.shape[1]


def reconstruct(fit: FpcaFit, scores: Optional[np.ndarray] = None) -> np.ndarray:
    """Mean plus the truncated expansion, one row per subject."""
    scores = fit.scores if scores is None else np.asarray(scores, dtype=float)
    return fit.mean + scores @ fit.efunctions
