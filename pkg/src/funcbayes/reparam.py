"""Spectral reparametrization of penalized spline coefficients.

With S = U diag(s) U^T, transformed coefficients are b~ = diag(v) U^T b, where
v holds sqrt(s) on the penalized block and a design-norm scaling on the null
block. The penalty then reads ||b~_r||^2 and b~_f is left unpenalized.
"""

import logging
from typing import Tuple

import numpy as np

from .errors import NumericalError, ShapeError
from .types import ReparamMap, SplineSystem

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10


def _sign_normalize(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nonzero = np.flatnonzero(np.abs(col) > 1e-12)
        if nonzero.size and col[nonzero[0]] < 0:
            out[:, j] = -col
    return out


def spectral_decomposition(penalty: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    """Eigenvalues (decreasing), eigenvectors and numeric rank of a PSD penalty."""
    penalty = np.asarray(penalty, dtype=float)
    if not np.all(np.isfinite(penalty)):
        raise NumericalError("penalty matrix has non-finite entries", slice_name="penalty")
    try:
        eigvals, eigvecs = np.linalg.eigh(0.5 * (penalty + penalty.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}", slice_name="penalty") from exc
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = _sign_normalize(eigvecs[:, order])
    top = eigvals[0] if eigvals.size else 0.0
    rank = int(np.sum(eigvals > RANK_TOL * top)) if top > 0 else 0
    return eigvals, eigvecs, rank


def build_reparam(system: SplineSystem, raw_design: np.ndarray) -> ReparamMap:
    raw_design = np.asarray(raw_design, dtype=float)
    k = system.penalty.shape[0]
    if raw_design.ndim != 2 or raw_design.shape[0] != k:
        raise ShapeError(f"raw design must have {k} rows, got shape {raw_design.shape}")

    eigvals, U, rank = spectral_decomposition(system.penalty)
    if rank != system.rank:
        logger.warning("penalty rank %d differs from basis rank %d", rank, system.rank)
    if rank == 0:
        raise NumericalError("penalty has no positive eigenvalues", slice_name="penalty")

    v = np.ones(k)
    v[:rank] = np.sqrt(eigvals[:rank])

    x_mat = raw_design.T
    col_norm = np.sum((x_mat @ U) ** 2, axis=0) / v**2
    av_norm = np.mean(col_norm[:rank])
    if rank < k:
        if not av_norm > 0:
            raise NumericalError("design has zero norm on the penalized block", slice_name="v_diag")
        null_norm = col_norm[rank:]
        if np.any(null_norm <= 0):
            raise NumericalError("design has zero norm on a null-space direction", slice_name="v_diag")
        v[rank:] = np.sqrt(null_norm / av_norm)

    logger.debug("reparam built: K=%d rank=%d null scaling=%s", k, rank, v[rank:])
    return ReparamMap(U=U, v_diag=v, rank=rank)


def transform_coeffs(rmap: ReparamMap, b: np.ndarray) -> np.ndarray:
    """b~ = diag(v) U^T b, applied row-wise to a (Q x K) matrix or a single vector."""
    b = np.asarray(b, dtype=float)
    if b.shape[-1] != rmap.num_basis:
        raise ShapeError(f"expected {rmap.num_basis} coefficients, got {b.shape[-1]}")
    return (b @ rmap.U) * rmap.v_diag


def untransform_coeffs(rmap: ReparamMap, draws: np.ndarray) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws.reshape(1, -1) if draws.size else draws.reshape(0, rmap.num_basis)
    if draws.ndim != 2 or draws.shape[1] != rmap.num_basis:
        raise ShapeError(f"expected a Q x {rmap.num_basis} matrix, got shape {draws.shape}")
    return (draws / rmap.v_diag) @ rmap.U.T


def transform_design(rmap: ReparamMap, raw_design: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split diag(1/v) U^T X into its penalized (K0 x n) and null (K-K0 x n) rows."""
    raw_design = np.asarray(raw_design, dtype=float)
    if raw_design.ndim != 2 or raw_design.shape[0] != rmap.num_basis:
        raise ShapeError(f"raw design must have {rmap.num_basis} rows, got shape {raw_design.shape}")
    tilde = (rmap.U.T @ raw_design) / rmap.v_diag[:, None]
    return tilde[: rmap.rank], tilde[rmap.rank :]
