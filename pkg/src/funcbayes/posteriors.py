"""Unnormalized log-posteriors with exact gradients.

Every model works on one flat unconstrained vector described by a
``ParamLayout``. Scale parameters live on the log scale; an
inverse-gamma(0.001, 0.001) prior on a variance sigma^2 = exp(2 s) contributes

    a log b - lgamma(a) - 2 (a + 1) s - b exp(-2 s) + s

where the trailing ``s`` is the log-Jacobian of sigma = exp(s). Flat priors
contribute nothing.
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit, gammaln

from .errors import NumericalError, ShapeError, SpecError
from .layout import ParamLayout, simplex_transform, simplex_transform_grad
from .types import FpcaFit, HazardBasis

logger = logging.getLogger(__name__)

IG_SHAPE = 0.001
IG_SCALE = 0.001
_LOG_2PI = float(np.log(2.0 * np.pi))

Grads = Dict[str, np.ndarray]
Terms = Dict[str, float]

FAMILIES = ("gaussian", "bernoulli", "cox")


def log_ig_scale(s: float, shape: float = IG_SHAPE, scale: float = IG_SCALE) -> Tuple[float, float]:
    """Inverse-gamma prior on exp(2 s) plus the log-scale Jacobian, and its derivative."""
    s = float(s)
    value = shape * np.log(scale) - gammaln(shape) - 2.0 * (shape + 1.0) * s - scale * np.exp(-2.0 * s) + s
    grad = -2.0 * (shape + 1.0) + 2.0 * scale * np.exp(-2.0 * s) + 1.0
    return float(value), float(grad)


def cox_log_likelihood(
    eta: np.ndarray,
    censor: np.ndarray,
    m_eval: np.ndarray,
    i_eval: np.ndarray,
    c: np.ndarray,
) -> np.ndarray:
    """Per-subject Cox contributions with h0 = M c and H0 = I c.

    censor follows 0 = observed event, 1 = right censored.
    """
    eta = np.asarray(eta, dtype=float)
    event = np.asarray(censor) == 0
    bhaz = np.asarray(m_eval) @ c
    cbhaz = np.asarray(i_eval) @ c
    if np.any(bhaz[event] <= 0):
        raise NumericalError("baseline hazard is not positive at an event time", slice_name="c_raw")
    out = -cbhaz * np.exp(eta)
    out[event] += np.log(bhaz[event]) + eta[event]
    return out


class _Outcome:
    """Scalar-outcome likelihood shared by SoFR, Cox and the joint model."""

    def __init__(
        self,
        family: str,
        y: np.ndarray,
        censor: Optional[np.ndarray] = None,
        hazard: Optional[HazardBasis] = None,
    ) -> None:
        if family not in FAMILIES:
            raise SpecError(f"unknown outcome family: {family}")
        self.family = family
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if family == "bernoulli" and not np.all(np.isin(self.y, (0.0, 1.0))):
            raise SpecError("bernoulli outcomes must be 0 or 1")
        if family == "cox":
            if censor is None or hazard is None:
                raise SpecError("cox outcome needs censor flags and a hazard basis")
            self.censor = np.asarray(censor).reshape(-1).astype(int)
            if self.censor.shape != self.y.shape:
                raise ShapeError("censor flags and outcomes differ in length")
            if not np.all(np.isin(self.censor, (0, 1))):
                raise SpecError("censor flags must be 0 or 1")
            self.m_eval = np.asarray(hazard.m_eval, dtype=float)
            self.i_eval = np.asarray(hazard.i_eval, dtype=float)
            if self.m_eval.shape[0] != self.y.size:
                raise ShapeError("hazard basis rows do not match the number of subjects")
            self.event = self.censor == 0
            self.df = hazard.df

    def blocks(self) -> List[Tuple[str, Tuple[int, ...]]]:
        if self.family == "gaussian":
            return [("log_a", (1,))]
        if self.family == "cox":
            return [("c_raw", (self.df - 1,))]
        return []

    def evaluate(self, eta: np.ndarray, params: Dict[str, np.ndarray]) -> Tuple[Terms, np.ndarray, Grads]:
        if self.family == "gaussian":
            return self._gaussian(eta, params)
        if self.family == "bernoulli":
            return self._bernoulli(eta)
        return self._cox(eta, params)

    def _gaussian(self, eta, params):
        s = float(params["log_a"][0])
        inv_var = np.exp(-2.0 * s)
        resid = self.y - eta
        sq = float(resid @ resid)
        n = self.y.size
        loglik = -0.5 * n * _LOG_2PI - n * s - 0.5 * sq * inv_var
        # flat prior on a, log-Jacobian of a = exp(s)
        terms = {"likelihood": loglik, "dispersion_jacobian": s}
        grads = {"log_a": np.array([-n + sq * inv_var + 1.0])}
        return terms, resid * inv_var, grads

    def _bernoulli(self, eta):
        loglik = float(np.sum(self.y * eta - np.logaddexp(0.0, eta)))
        return {"likelihood": loglik}, self.y - expit(eta), {}

    def _cox(self, eta, params):
        raw = params["c_raw"]
        with np.errstate(over="ignore", invalid="ignore"):
            c, log_jac = simplex_transform(raw)
            contrib = cox_log_likelihood(eta, self.censor, self.m_eval, self.i_eval, c)
            exp_eta = np.exp(eta)
            bhaz = self.m_eval @ c
            d_eta = self.event.astype(float) - (self.i_eval @ c) * exp_eta
            grad_c = self.m_eval[self.event].T @ (1.0 / bhaz[self.event]) - self.i_eval.T @ exp_eta
            _, _, grad_raw = simplex_transform_grad(raw, grad_c)
        terms = {
            "likelihood": float(np.sum(contrib)),
            "dirichlet": float(gammaln(self.df)),
            "simplex_jacobian": float(log_jac),
        }
        return terms, d_eta, {"c_raw": grad_raw}


class ModelPosterior(ABC):
    """A differentiable log-density over a named unconstrained vector."""

    family: str
    layout: ParamLayout

    def __call__(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        return self.log_density(theta)

    def _unpack(self, theta: np.ndarray) -> Dict[str, np.ndarray]:
        params = self.layout.unpack(theta)
        for name, value in params.items():
            if not np.all(np.isfinite(value)):
                raise NumericalError(f"non-finite values in parameter slice {name!r}", slice_name=name)
        return params

    @abstractmethod
    def _evaluate(self, params: Dict[str, np.ndarray]) -> Tuple[Terms, Grads]:
        ...

    def log_density(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        terms, grads = self._evaluate(self._unpack(theta))
        value = float(sum(terms.values()))
        grad = np.zeros(self.layout.size)
        for name, g in grads.items():
            grad[self.layout.slice(name)] += np.asarray(g, dtype=float).reshape(-1)
        if not np.isfinite(value):
            value = -np.inf
        return value, grad

    def terms(self, theta: np.ndarray) -> Terms:
        """Named additive pieces of the log-density at theta."""
        return self._evaluate(self._unpack(theta))[0]

    @property
    def dim(self) -> int:
        return self.layout.size


def _smoothing_prior(b_r: np.ndarray, s: float) -> Tuple[Terms, Grads]:
    inv_var = np.exp(-2.0 * s)
    k0 = b_r.size
    sq = float(b_r @ b_r)
    ig, d_ig = log_ig_scale(s)
    terms = {
        "smoothing_log_scale": -0.5 * k0 * _LOG_2PI - k0 * s,
        "smoothing_quadratic": -0.5 * sq * inv_var,
        "smoothing_scale_prior": ig,
    }
    grads = {"b_r": -b_r * inv_var, "log_sigma_b": np.array([-k0 + sq * inv_var + d_ig])}
    return terms, grads


def _as_design(x: np.ndarray, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.zeros((0, n))
    if x.ndim != 2 or x.shape[1] != n:
        raise ShapeError(f"{name} must have {n} columns, got shape {x.shape}")
    return x


def _as_scalar_covariates(z: Optional[np.ndarray], n: int) -> np.ndarray:
    if z is None:
        return np.zeros((n, 0))
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return np.zeros((n, 0))
    if z.ndim == 1:
        z = z.reshape(n, -1)
    if z.shape[0] != n:
        raise ShapeError(f"scalar covariates must have {n} rows, got shape {z.shape}")
    return z


class SofrPosterior(ModelPosterior):
    """Scalar-on-function regression, and the functional Cox model when family='cox'.

    eta = eta0 + Xr^T b_r + Xf^T b_f + Z gamma, with b_r ~ N(0, sigma_b^2 I).
    """

    def __init__(
        self,
        family: str,
        y: np.ndarray,
        xr: np.ndarray,
        xf: np.ndarray,
        z: Optional[np.ndarray] = None,
        censor: Optional[np.ndarray] = None,
        hazard: Optional[HazardBasis] = None,
    ) -> None:
        self.outcome = _Outcome(family, y, censor=censor, hazard=hazard)
        self.family = family
        n = self.outcome.y.size
        self.xr = _as_design(xr, n, "xr")
        self.xf = _as_design(xf, n, "xf")
        self.z = _as_scalar_covariates(z, n)
        self.layout = ParamLayout(
            [
                ("eta0", (1,)),
                ("b_r", (self.xr.shape[0],)),
                ("b_f", (self.xf.shape[0],)),
                ("gamma", (self.z.shape[1],)),
                ("log_sigma_b", (1,)),
            ]
            + self.outcome.blocks()
        )

    def linear_predictor(self, params: Dict[str, np.ndarray]) -> np.ndarray:
        return params["eta0"][0] + self.xr.T @ params["b_r"] + self.xf.T @ params["b_f"] + self.z @ params["gamma"]

    def _evaluate(self, params):
        eta = self.linear_predictor(params)
        terms, d_eta, grads = self.outcome.evaluate(eta, params)
        prior_terms, prior_grads = _smoothing_prior(params["b_r"], float(params["log_sigma_b"][0]))
        terms.update(prior_terms)
        grads = dict(grads)
        grads["eta0"] = np.array([np.sum(d_eta)])
        grads["b_r"] = self.xr @ d_eta + prior_grads["b_r"]
        grads["b_f"] = self.xf @ d_eta
        grads["gamma"] = self.z.T @ d_eta
        grads["log_sigma_b"] = prior_grads["log_sigma_b"]
        return terms, grads


class JointFpcaPosterior(ModelPosterior):
    """Outcome model on FPCA scores estimated jointly with the curve measurement model.

    eta = eta0 + xi (Gr b_r + Gf b_f) + Z gamma where G = X~^T is the transformed
    eigenfunction-by-basis cross-product. Curves are modelled as xi Phi plus
    white noise, and the scores are centred at their frequentist estimates.
    """

    def __init__(
        self,
        family: str,
        y: np.ndarray,
        gr: np.ndarray,
        gf: np.ndarray,
        fpca: FpcaFit,
        w: np.ndarray,
        z: Optional[np.ndarray] = None,
        censor: Optional[np.ndarray] = None,
        hazard: Optional[HazardBasis] = None,
    ) -> None:
        self.outcome = _Outcome(family, y, censor=censor, hazard=hazard)
        self.family = family
        n = self.outcome.y.size
        self.gr = np.asarray(gr, dtype=float).reshape(fpca.npc, -1)
        self.gf = np.asarray(gf, dtype=float).reshape(fpca.npc, -1)
        self.phi = np.asarray(fpca.efunctions, dtype=float)
        self.xi_hat = np.asarray(fpca.scores, dtype=float)
        w = np.asarray(w, dtype=float)
        if w.shape != (n, self.phi.shape[1]):
            raise ShapeError(f"curves must be {n} x {self.phi.shape[1]}, got shape {w.shape}")
        if self.xi_hat.shape != (n, fpca.npc):
            raise ShapeError("FPCA scores do not match the number of subjects")
        self.w_centred = w - fpca.mean
        self.z = _as_scalar_covariates(z, n)
        self.layout = ParamLayout(
            [
                ("eta0", (1,)),
                ("b_r", (self.gr.shape[1],)),
                ("b_f", (self.gf.shape[1],)),
                ("gamma", (self.z.shape[1],)),
                ("log_sigma_b", (1,)),
            ]
            + self.outcome.blocks()
            + [
                ("xi", (n, fpca.npc)),
                ("log_lambda", (fpca.npc,)),
                ("log_sigma_e", (1,)),
            ]
        )

    def linear_predictor(self, params: Dict[str, np.ndarray]) -> np.ndarray:
        g = self.gr @ params["b_r"] + self.gf @ params["b_f"]
        return params["eta0"][0] + params["xi"] @ g + self.z @ params["gamma"]

    def _evaluate(self, params):
        xi = params["xi"]
        g = self.gr @ params["b_r"] + self.gf @ params["b_f"]
        eta = params["eta0"][0] + xi @ g + self.z @ params["gamma"]
        terms, d_eta, grads = self.outcome.evaluate(eta, params)
        prior_terms, prior_grads = _smoothing_prior(params["b_r"], float(params["log_sigma_b"][0]))
        terms.update(prior_terms)
        grads = dict(grads)

        xi_d_eta = xi.T @ d_eta
        grads["eta0"] = np.array([np.sum(d_eta)])
        grads["b_r"] = self.gr.T @ xi_d_eta + prior_grads["b_r"]
        grads["b_f"] = self.gf.T @ xi_d_eta
        grads["gamma"] = self.z.T @ d_eta
        grads["log_sigma_b"] = prior_grads["log_sigma_b"]
        grad_xi = np.outer(d_eta, g)

        n, m = self.w_centred.shape
        s_e = float(params["log_sigma_e"][0])
        inv_var_e = np.exp(-2.0 * s_e)
        resid = xi @ self.phi - self.w_centred
        sq = float(np.sum(resid**2))
        ig_e, d_ig_e = log_ig_scale(s_e)
        terms["measurement_log_scale"] = -n * m * s_e
        terms["measurement_quadratic"] = -0.5 * sq * inv_var_e
        terms["noise_scale_prior"] = ig_e
        grad_xi -= (resid @ self.phi.T) * inv_var_e
        grads["log_sigma_e"] = np.array([-n * m + sq * inv_var_e + d_ig_e])

        log_lam = params["log_lambda"]
        inv_var_l = np.exp(-2.0 * log_lam)
        dev = xi - self.xi_hat
        dev_sq = np.sum(dev**2, axis=0)
        ig_l = [log_ig_scale(s) for s in log_lam]
        terms["score_log_scale"] = float(-n * np.sum(log_lam))
        terms["score_quadratic"] = float(-0.5 * np.sum(dev_sq * inv_var_l))
        terms["score_scale_prior"] = float(sum(v for v, _ in ig_l))
        grad_xi -= dev * inv_var_l
        grads["log_lambda"] = -n + dev_sq * inv_var_l + np.array([d for _, d in ig_l])
        grads["xi"] = grad_xi
        return terms, grads


class FosrPosterior(ModelPosterior):
    """Function-on-scalar regression with FPCA-structured residuals.

    mu = X B Psi^T + xi Phi; each row b_p of B has its own smoothing scale.
    """

    family = "fosr"

    def __init__(
        self,
        y: np.ndarray,
        x: np.ndarray,
        basis_eval: np.ndarray,
        penalty: np.ndarray,
        penalty_rank: int,
        efunctions: np.ndarray,
    ) -> None:
        self.y = np.asarray(y, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.psi = np.asarray(basis_eval, dtype=float)
        self.penalty = np.asarray(penalty, dtype=float)
        self.penalty_rank = int(penalty_rank)
        self.phi = np.atleast_2d(np.asarray(efunctions, dtype=float))
        n, m = self.y.shape
        if self.x.ndim != 2 or self.x.shape[0] != n:
            raise ShapeError(f"predictors must have {n} rows, got shape {self.x.shape}")
        if self.psi.shape[0] != m or self.phi.shape[1] != m:
            raise ShapeError("response grid does not match the basis or eigenfunction grid")
        k = self.psi.shape[1]
        if self.penalty.shape != (k, k):
            raise ShapeError(f"penalty must be {k} x {k}, got shape {self.penalty.shape}")
        p = self.x.shape[1]
        j = self.phi.shape[0]
        self.layout = ParamLayout(
            [
                ("b_p", (p, k)),
                ("xi", (n, j)),
                ("log_lambda", (j,)),
                ("log_sigma_e", (1,)),
                ("log_sigma_p", (p,)),
            ]
        )

    def mean_curves(self, params: Dict[str, np.ndarray]) -> np.ndarray:
        return self.x @ params["b_p"] @ self.psi.T + params["xi"] @ self.phi

    def _evaluate(self, params):
        b = params["b_p"]
        xi = params["xi"]
        n, m = self.y.shape
        terms: Terms = {}
        grads: Grads = {}

        s_e = float(params["log_sigma_e"][0])
        inv_var_e = np.exp(-2.0 * s_e)
        resid = self.mean_curves(params) - self.y
        sq = float(np.sum(resid**2))
        ig_e, d_ig_e = log_ig_scale(s_e)
        terms["likelihood_log_scale"] = -n * m * s_e
        terms["likelihood_quadratic"] = -0.5 * sq * inv_var_e
        terms["noise_scale_prior"] = ig_e
        grads["b_p"] = -(self.x.T @ resid @ self.psi) * inv_var_e
        grads["xi"] = -(resid @ self.phi.T) * inv_var_e
        grads["log_sigma_e"] = np.array([-n * m + sq * inv_var_e + d_ig_e])

        s_p = params["log_sigma_p"]
        inv_var_p = np.exp(-2.0 * s_p)
        sb = b @ self.penalty
        quad = np.sum(sb * b, axis=1)
        ig_p = [log_ig_scale(s) for s in s_p]
        terms["penalty_log_scale"] = float(-self.penalty_rank * np.sum(s_p))
        terms["penalty_quadratic"] = float(-0.5 * np.sum(quad * inv_var_p))
        terms["penalty_scale_prior"] = float(sum(v for v, _ in ig_p))
        grads["b_p"] = grads["b_p"] - sb * inv_var_p[:, None]
        grads["log_sigma_p"] = -self.penalty_rank + quad * inv_var_p + np.array([d for _, d in ig_p])

        log_lam = params["log_lambda"]
        inv_var_l = np.exp(-2.0 * log_lam)
        xi_sq = np.sum(xi**2, axis=0)
        ig_l = [log_ig_scale(s) for s in log_lam]
        terms["score_log_scale"] = float(-n * np.sum(log_lam))
        terms["score_quadratic"] = float(-0.5 * np.sum(xi_sq * inv_var_l))
        terms["score_scale_prior"] = float(sum(v for v, _ in ig_l))
        grads["xi"] = grads["xi"] - xi * inv_var_l
        grads["log_lambda"] = -n + xi_sq * inv_var_l + np.array([d for _, d in ig_l])
        return terms, grads


def _require(model: ModelPosterior, kind: type, families: Tuple[str, ...]) -> None:
    if not isinstance(model, kind) or model.family not in families:
        raise SpecError(f"layout does not match the requested model: got {type(model).__name__}/{model.family}")


def sofr_log_posterior(theta: np.ndarray, model: ModelPosterior) -> Tuple[float, np.ndarray]:
    _require(model, SofrPosterior, ("gaussian", "bernoulli"))
    return model.log_density(theta)


def cox_log_posterior(theta: np.ndarray, model: ModelPosterior) -> Tuple[float, np.ndarray]:
    _require(model, SofrPosterior, ("cox",))
    return model.log_density(theta)


def joint_fpca_log_posterior(theta: np.ndarray, model: ModelPosterior) -> Tuple[float, np.ndarray]:
    _require(model, JointFpcaPosterior, FAMILIES)
    return model.log_density(theta)


def joint_cox_fpca_log_posterior(theta: np.ndarray, model: ModelPosterior) -> Tuple[float, np.ndarray]:
    _require(model, JointFpcaPosterior, ("cox",))
    return model.log_density(theta)


def fosr_log_posterior(theta: np.ndarray, model: ModelPosterior) -> Tuple[float, np.ndarray]:
    _require(model, FosrPosterior, ("fosr",))
    return model.log_density(theta)
