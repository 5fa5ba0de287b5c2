"""Convergence diagnostics: rank-normalized split R-hat and bulk ESS."""

import logging
from typing import Dict, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.fft import next_fast_len

from .errors import ShapeError
from .types import PosteriorDraws

logger = logging.getLogger(__name__)


def _split_chains(ary: np.ndarray) -> np.ndarray:
    """(chains, draws) -> (2 * chains, draws // 2), dropping the middle draw if odd."""
    half = ary.shape[1] // 2
    return np.vstack([ary[:, :half], ary[:, -half:]])


def _z_scale(ary: np.ndarray) -> np.ndarray:
    size = ary.size
    ranks = stats.rankdata(ary, method="average").reshape(ary.shape)
    return stats.norm.ppf((ranks - 3.0 / 8.0) / (size - 1.0 / 4.0))


def _rhat(ary: np.ndarray) -> float:
    n = ary.shape[1]
    between = n * np.var(ary.mean(axis=1), ddof=1)
    within = np.mean(np.var(ary, axis=1, ddof=1))
    return float(np.sqrt((between / within + n - 1) / n))


def _autocov(ary: np.ndarray) -> np.ndarray:
    n = ary.shape[-1]
    m = next_fast_len(2 * n)
    centred = ary - ary.mean(axis=-1, keepdims=True)
    spectrum = np.fft.rfft(centred, n=m, axis=-1)
    spectrum *= np.conjugate(spectrum)
    return np.fft.irfft(spectrum, n=m, axis=-1)[..., :n] / n


def _ess(ary: np.ndarray) -> float:
    n_chain, n_draw = ary.shape
    acov = _autocov(ary)
    chain_mean = ary.mean(axis=1)
    mean_var = np.mean(acov[:, 0]) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += np.var(chain_mean, ddof=1)

    rho = np.zeros(n_draw)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[1] = rho_odd

    # initial positive sequence
    t = 1
    while t < n_draw - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even

    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    total = n_chain * n_draw
    tau = -1.0 + 2.0 * np.sum(rho[: max_t + 1]) + np.sum(rho[max_t + 1 : max_t + 2])
    tau = max(tau, 1.0 / np.log10(total))
    return float(total / tau)


def _is_constant(ary: np.ndarray) -> bool:
    return bool(np.all(ary == ary.flat[0])) or not np.all(np.isfinite(ary))


def split_rhat(ary: np.ndarray) -> float:
    """Max of bulk and folded rank-normalized split R-hat for one parameter (chains x draws)."""
    ary = np.atleast_2d(np.asarray(ary, dtype=float))
    if ary.shape[1] < 4 or _is_constant(ary):
        return float("nan")
    split = _split_chains(ary)
    bulk = _rhat(_z_scale(split))
    folded = np.abs(ary - np.median(ary))
    tail = _rhat(_z_scale(_split_chains(folded)))
    return max(bulk, tail)


def bulk_ess(ary: np.ndarray) -> float:
    ary = np.atleast_2d(np.asarray(ary, dtype=float))
    if ary.shape[1] < 4 or _is_constant(ary):
        return float("nan")
    return _ess(_z_scale(_split_chains(ary)))


def diagnostics(draws: Union[PosteriorDraws, np.ndarray]) -> Dict[str, np.ndarray]:
    """Per-parameter rhat and bulk ESS from (chains x draws x dim) samples."""
    ary = draws.draws if isinstance(draws, PosteriorDraws) else np.asarray(draws, dtype=float)
    if ary.ndim != 3:
        raise ShapeError(f"expected chains x draws x dim, got shape {ary.shape}")
    if ary.shape[0] < 2:
        logger.warning("rhat needs at least 2 chains; got %d", ary.shape[0])
    if ary.shape[1] < 50:
        logger.warning("diagnostics on %d draws per chain are unreliable", ary.shape[1])
    dim = ary.shape[2]
    rhat = np.array([split_rhat(ary[:, :, d]) for d in range(dim)])
    ess = np.array([bulk_ess(ary[:, :, d]) for d in range(dim)])
    flat = int(np.sum(np.isnan(rhat)))
    if flat:
        logger.warning("%d parameters have zero variance; rhat reported as NaN", flat)
    return {"rhat": rhat, "ess": ess}


def summary_table(draws: PosteriorDraws) -> pd.DataFrame:
    """One row per unconstrained coordinate: mean, sd, 95% quantiles, rhat, ess."""
    flat = draws.flat()
    stats_ = diagnostics(draws) if draws.rhat is None else {"rhat": draws.rhat, "ess": draws.ess}
    return pd.DataFrame(
        {
            "parameter": draws.layout.labels(),
            "mean": flat.mean(axis=0),
            "sd": flat.std(axis=0, ddof=1) if flat.shape[0] > 1 else np.zeros(flat.shape[1]),
            "q2.5": np.quantile(flat, 0.025, axis=0),
            "q97.5": np.quantile(flat, 0.975, axis=0),
            "rhat": stats_["rhat"],
            "ess": stats_["ess"],
        }
    )
