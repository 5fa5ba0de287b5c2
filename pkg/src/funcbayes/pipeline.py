import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .analysis import reconstruct_beta, reconstruct_fosr_betas
from .basis import build_hazard_basis, build_spline_system, hazard_boundary
from .config import AppConfig
from .design import fpca_spline_crossproduct, functional_design, functional_design_matrix
from .errors import ShapeError, SpecError
from .fpca import fit_fpca, project_scores
from .posteriors import FosrPosterior, JointFpcaPosterior, ModelPosterior, SofrPosterior
from .reparam import build_reparam, transform_design, untransform_coeffs
from .sampler import run_hmc
from .types import (
    CurveDraws,
    FosrDataset,
    FpcaFit,
    FunctionalDataset,
    HazardBasis,
    PosteriorDraws,
    ReparamMap,
    SplineSpec,
    SplineSystem,
)

logger = logging.getLogger(__name__)

MODEL_KINDS = (
    "sofr-gaussian",
    "sofr-bernoulli",
    "cox",
    "joint-cox",
    "joint-gaussian",
    "joint-bernoulli",
    "two-step-cox",
    "fosr",
)


@dataclass
class FitResult:
    """Posterior draws plus everything needed to map them back to curves."""

    model: str
    draws: PosteriorDraws
    system: SplineSystem
    rmap: Optional[ReparamMap] = None
    hazard: Optional[HazardBasis] = None
    fpca: Optional[FpcaFit] = None
    z_names: List[str] = field(default_factory=list)
    x_names: List[str] = field(default_factory=list)
    elapsed_sec: float = 0.0

    @property
    def grid(self) -> np.ndarray:
        return self.system.grid

    def beta_curves(self) -> CurveDraws:
        if self.model == "fosr":
            raise SpecError("fosr fits have one curve per predictor; use fosr_curves()")
        return reconstruct_beta(self.draws, self.rmap, self.system)

    def fosr_curves(self) -> List[CurveDraws]:
        if self.model != "fosr":
            raise SpecError(f"{self.model} fits have no function-on-scalar coefficients")
        return reconstruct_fosr_betas(self.draws, self.system)

    def _mean_block(self, name: str) -> np.ndarray:
        return self.draws.block(name).mean(axis=0)

    def coefficient_mean(self) -> np.ndarray:
        """Posterior mean of the untransformed spline coefficients b."""
        b_tilde = np.concatenate([self._mean_block("b_r"), self._mean_block("b_f")])
        return untransform_coeffs(self.rmap, b_tilde)[0]

    def predict_eta(
        self,
        w: np.ndarray,
        z: Optional[np.ndarray] = None,
        include_intercept: bool = True,
    ) -> np.ndarray:
        """Posterior-mean linear predictor for new subjects observed on the fitted grid."""
        if self.model == "fosr":
            raise SpecError("fosr fits predict curves; use predict_mean()")
        w = np.atleast_2d(np.asarray(w, dtype=float))
        b = self.coefficient_mean()
        if self.model.startswith("joint"):
            cross = fpca_spline_crossproduct(self.fpca.efunctions, self.system, self.grid)
            eta = project_scores(self.fpca, w) @ (cross @ b)
        elif self.model == "two-step-cox":
            smooth = project_scores(self.fpca, w) @ self.fpca.efunctions
            eta = functional_design_matrix(smooth, self.grid, self.system).T @ b
        else:
            eta = functional_design_matrix(w, self.grid, self.system).T @ b
        gamma = self._mean_block("gamma")
        if gamma.size:
            if z is None:
                raise ShapeError(f"model has {gamma.size} scalar covariates but none were given")
            eta = eta + np.asarray(z, dtype=float).reshape(w.shape[0], -1) @ gamma
        if include_intercept:
            eta = eta + float(self._mean_block("eta0")[0])
        return eta

    def predict_mean(self, x: np.ndarray) -> np.ndarray:
        """Posterior-mean response curves for new scalar predictors (intercept added)."""
        if self.model != "fosr":
            raise SpecError(f"{self.model} fits predict a linear predictor; use predict_eta()")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        design = np.column_stack([np.ones(x.shape[0]), x])
        return design @ self._mean_block("b_p") @ self.system.eval.T


class RegressionPipeline:
    """Builds the basis, design and posterior for a model kind and samples it."""

    def __init__(self, config: Union[AppConfig, Dict[str, Any], None] = None) -> None:
        self.config = config if isinstance(config, AppConfig) else AppConfig.from_dict(config)

    def spline_system(self, grid: np.ndarray) -> SplineSystem:
        spline = self.config.spline
        spec = SplineSpec(kind=spline.kind, num_basis=spline.k, domain=(0.0, 1.0))
        grid = np.asarray(grid, dtype=float)
        if grid.min() < 0.0 or grid.max() > 1.0:
            spec = SplineSpec(kind=spline.kind, num_basis=spline.k, domain=(float(grid.min()), float(grid.max())))
        return build_spline_system(spec, grid)

    def hazard_basis(self, data: FunctionalDataset) -> HazardBasis:
        if data.censor is None:
            raise SpecError("time-to-event models need a censor column")
        hazard = self.config.hazard
        boundary = hazard_boundary(data.y, pad=hazard.boundary_pad)
        return build_hazard_basis(data.y, hazard.df, boundary)

    def _fpca(self, w: np.ndarray) -> FpcaFit:
        return fit_fpca(w, self.config.fpca.pve, npc=self.config.fpca.npc)

    def _sample(self, kind: str, model: ModelPosterior, **extras: Any) -> FitResult:
        logger.info("fitting %s: dim=%d", kind, model.layout.size)
        start = time.perf_counter()
        draws = run_hmc(model, self.config.sampler)
        elapsed = time.perf_counter() - start
        logger.info("fit %s done in %.1fs", kind, elapsed)
        return FitResult(model=kind, draws=draws, elapsed_sec=elapsed, **extras)

    def fit_sofr(self, data: FunctionalDataset, family: str) -> FitResult:
        if family not in ("gaussian", "bernoulli"):
            raise SpecError(f"sofr family must be gaussian or bernoulli, got {family}")
        system = self.spline_system(data.grid)
        raw = functional_design(data, system)
        rmap = build_reparam(system, raw)
        xr, xf = transform_design(rmap, raw)
        model = SofrPosterior(family, data.y, xr, xf, z=data.z)
        return self._sample(f"sofr-{family}", model, system=system, rmap=rmap, z_names=list(data.z_names))

    def fit_cox(self, data: FunctionalDataset) -> FitResult:
        system = self.spline_system(data.grid)
        hazard = self.hazard_basis(data)
        raw = functional_design(data, system)
        rmap = build_reparam(system, raw)
        xr, xf = transform_design(rmap, raw)
        model = SofrPosterior("cox", data.y, xr, xf, z=data.z, censor=data.censor, hazard=hazard)
        return self._sample("cox", model, system=system, rmap=rmap, hazard=hazard, z_names=list(data.z_names))

    def fit_joint(self, data: FunctionalDataset, family: str = "cox") -> FitResult:
        system = self.spline_system(data.grid)
        fpca = self._fpca(data.w)
        cross = fpca_spline_crossproduct(fpca.efunctions, system, data.grid)
        rmap = build_reparam(system, cross.T)
        xr, xf = transform_design(rmap, cross.T)
        hazard = self.hazard_basis(data) if family == "cox" else None
        model = JointFpcaPosterior(
            family, data.y, xr.T, xf.T, fpca, data.w, z=data.z, censor=data.censor, hazard=hazard
        )
        return self._sample(
            f"joint-{family}", model, system=system, rmap=rmap, hazard=hazard, fpca=fpca, z_names=list(data.z_names)
        )

    def fit_two_step_cox(self, data: FunctionalDataset) -> FitResult:
        """Cox fit on the FPCA reconstruction, treating estimated scores as known."""
        system = self.spline_system(data.grid)
        fpca = self._fpca(data.w)
        hazard = self.hazard_basis(data)
        smooth = fpca.scores @ fpca.efunctions
        raw = functional_design_matrix(smooth, data.grid, system)
        rmap = build_reparam(system, raw)
        xr, xf = transform_design(rmap, raw)
        model = SofrPosterior("cox", data.y, xr, xf, z=data.z, censor=data.censor, hazard=hazard)
        return self._sample(
            "two-step-cox", model, system=system, rmap=rmap, hazard=hazard, fpca=fpca, z_names=list(data.z_names)
        )

    def fit_fosr(self, data: FosrDataset) -> FitResult:
        system = self.spline_system(data.grid)
        y = np.asarray(data.y, dtype=float)
        if y.shape[1] != system.grid.size:
            raise ShapeError(f"response has {y.shape[1]} grid points, basis grid has {system.grid.size}")
        x = np.asarray(data.x, dtype=float).reshape(y.shape[0], -1)
        design = np.column_stack([np.ones(y.shape[0]), x])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        fpca = self._fpca(y - design @ coef)
        model = FosrPosterior(y, design, system.eval, system.penalty, system.rank, fpca.efunctions)
        names = ["intercept"] + (list(data.x_names) or [f"x{j}" for j in range(x.shape[1])])
        return self._sample("fosr", model, system=system, fpca=fpca, x_names=names)

    def fit(self, kind: str, data: Union[FunctionalDataset, FosrDataset]) -> FitResult:
        if kind not in MODEL_KINDS:
            raise SpecError(f"unknown model {kind!r}; expected one of {MODEL_KINDS}")
        if kind == "fosr":
            if not isinstance(data, FosrDataset):
                raise SpecError("fosr needs a functional-response dataset")
            return self.fit_fosr(data)
        if not isinstance(data, FunctionalDataset):
            raise SpecError(f"{kind} needs a scalar-outcome dataset")
        if kind.startswith("sofr-"):
            return self.fit_sofr(data, kind[len("sofr-") :])
        if kind == "cox":
            return self.fit_cox(data)
        if kind == "two-step-cox":
            return self.fit_two_step_cox(data)
        return self.fit_joint(data, kind[len("joint-") :])
