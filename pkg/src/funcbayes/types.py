from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .layout import ParamLayout

OPEN_CUBIC = "open-cubic"
CYCLIC_CUBIC = "cyclic-cubic"


@dataclass(frozen=True)
class SplineSpec:
    kind: str
    num_basis: int
    domain: Tuple[float, float] = (0.0, 1.0)


@dataclass(frozen=True)
class SplineSystem:
    spec: SplineSpec
    grid: np.ndarray
    eval: np.ndarray  # M x K
    penalty: np.ndarray  # K x K
    rank: int
    knots: np.ndarray

    @property
    def num_basis(self) -> int:
        return self.spec.num_basis


@dataclass(frozen=True)
class HazardBasis:
    df: int
    boundary: Tuple[float, float]
    knots: np.ndarray  # full clamped knot vector, order 4
    times: np.ndarray
    m_eval: np.ndarray  # n x L
    i_eval: np.ndarray  # n x L


@dataclass(frozen=True)
class ReparamMap:
    U: np.ndarray
    v_diag: np.ndarray
    rank: int

    @property
    def num_basis(self) -> int:
        return self.U.shape[0]


@dataclass
class FunctionalDataset:
    """Scalar outcome with one functional covariate on a shared grid.

    ``z`` is stored subject-major (n x p); ``censor`` follows the convention
    0 = observed event, 1 = right censored.
    """

    y: np.ndarray
    w: np.ndarray
    grid: np.ndarray
    z: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    censor: Optional[np.ndarray] = None
    z_names: List[str] = field(default_factory=list)
    eta: Optional[np.ndarray] = None  # true linear predictor, simulation only

    def __post_init__(self) -> None:
        if self.z.size == 0:
            self.z = np.zeros((len(self.y), 0))

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def num_scalar(self) -> int:
        return self.z.shape[1]


@dataclass
class FosrDataset:
    """Functional response (n x M) with scalar predictors x (n x P)."""

    y: np.ndarray
    x: np.ndarray
    grid: np.ndarray
    x_names: List[str] = field(default_factory=list)
    mean: Optional[np.ndarray] = None  # true mean curves, simulation only

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class FpcaFit:
    mean: np.ndarray
    efunctions: np.ndarray  # J x M
    evalues: np.ndarray
    scores: np.ndarray  # n x J
    pve: float
    noise_var: float

    @property
    def npc(self) -> int:
        return self.efunctions.shape[0]


@dataclass
class PosteriorDraws:
    draws: np.ndarray  # chains x Q x dim, unconstrained
    layout: ParamLayout
    divergences: np.ndarray
    accept_stat: np.ndarray
    step_size: np.ndarray
    tree_depth: Optional[np.ndarray] = None
    rhat: Optional[np.ndarray] = None
    ess: Optional[np.ndarray] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def num_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def num_draws(self) -> int:
        return self.draws.shape[1]

    def flat(self) -> np.ndarray:
        """Draws with chains stacked: (chains * Q) x dim."""
        return self.draws.reshape(-1, self.draws.shape[-1])

    def block(self, name: str) -> np.ndarray:
        """Stacked draws of one named slice, shape (chains * Q, *slice shape)."""
        return self.layout.take(self.flat(), name)


@dataclass(frozen=True)
class CurveDraws:
    values: np.ndarray  # Q x M
    grid: np.ndarray


@dataclass(frozen=True)
class Interval:
    lo: np.ndarray
    hi: np.ndarray
    center: Optional[np.ndarray] = None

    def contains(self, truth: np.ndarray) -> np.ndarray:
        return (self.lo <= truth) & (truth <= self.hi)


@dataclass
class ScenarioReport:
    model: str
    n: int
    tau: float
    replications: int
    median_rise: float
    mean_coverage: float
    median_prediction_error: float
    rise: List[float] = field(default_factory=list)
    coverage: List[float] = field(default_factory=list)
    prediction_error: List[float] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def as_record(self) -> Dict[str, object]:
        return {
            "model": self.model,
            "n": self.n,
            "tau": self.tau,
            "replications": self.replications,
            "median_rise": self.median_rise,
            "mean_coverage": self.mean_coverage,
            "median_prediction_error": self.median_prediction_error,
            "flags": list(self.flags),
        }
