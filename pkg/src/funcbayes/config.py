import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .errors import ConfigError, SpecError

DEFAULT_CONFIG_PATH = "config/funcbayes.yaml"


def load_config(path: str) -> Dict[str, Any]:
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    if config_path.suffix.lower() in {".json"}:
        with config_path.open("r", encoding="utf-8") as f:
            return json.load(f)

    if config_path.suffix.lower() in {".yml", ".yaml"}:
        try:
            import yaml  # type: ignore
        except ImportError as exc:
            raise ImportError("YAML config requires PyYAML") from exc
        with config_path.open("r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}

    raise ConfigError(f"Unsupported config format: {config_path.suffix}")


@dataclass(frozen=True)
class SamplerConfig:
    n_iter: int = 15000
    n_warmup: int = 5000
    n_chains: int = 3
    seed: int = 0
    target_accept: float = 0.8
    max_tree_depth: int = 10
    init_radius: float = 2.0
    max_init_tries: int = 100
    init_buffer: int = 75
    term_buffer: int = 50
    base_window: int = 25
    parallel: bool = True

    def __post_init__(self) -> None:
        if self.n_chains < 1:
            raise SpecError(f"n_chains must be >= 1, got {self.n_chains}")
        if not 0 <= self.n_warmup < self.n_iter:
            raise SpecError(f"need 0 <= n_warmup < n_iter, got {self.n_warmup}, {self.n_iter}")
        if not 0.0 < self.target_accept < 1.0:
            raise SpecError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.max_tree_depth < 1:
            raise SpecError("max_tree_depth must be >= 1")

    @property
    def n_draws(self) -> int:
        return self.n_iter - self.n_warmup

    @classmethod
    def from_dict(cls, cfg: Dict[str, Any]) -> "SamplerConfig":
        return cls(
            n_iter=int(cfg.get("iter", 15000)),
            n_warmup=int(cfg.get("warmup", 5000)),
            n_chains=int(cfg.get("chains", 3)),
            seed=int(cfg.get("seed", 0)),
            target_accept=float(cfg.get("target_accept", 0.8)),
            max_tree_depth=int(cfg.get("max_tree_depth", 10)),
            init_radius=float(cfg.get("init_radius", 2.0)),
            max_init_tries=int(cfg.get("max_init_tries", 100)),
            init_buffer=int(cfg.get("init_buffer", 75)),
            term_buffer=int(cfg.get("term_buffer", 50)),
            base_window=int(cfg.get("base_window", 25)),
            parallel=bool(cfg.get("parallel", True)),
        )


@dataclass(frozen=True)
class SplineSettings:
    k: int = 10
    bs: str = "open"

    @property
    def kind(self) -> str:
        from .types import CYCLIC_CUBIC, OPEN_CUBIC

        if self.bs in {"open", "cr", OPEN_CUBIC}:
            return OPEN_CUBIC
        if self.bs in {"cyclic", "cc", CYCLIC_CUBIC}:
            return CYCLIC_CUBIC
        raise ConfigError(f"Unknown spline basis: {self.bs}")

    @classmethod
    def from_dict(cls, cfg: Dict[str, Any]) -> "SplineSettings":
        return cls(k=int(cfg.get("k", 10)), bs=str(cfg.get("bs", "open")))


@dataclass(frozen=True)
class HazardSettings:
    df: int = 5
    boundary_pad: float = 0.01

    @classmethod
    def from_dict(cls, cfg: Dict[str, Any]) -> "HazardSettings":
        return cls(df=int(cfg.get("df", 5)), boundary_pad=float(cfg.get("boundary_pad", 0.01)))


@dataclass(frozen=True)
class FpcaSettings:
    pve: float = 0.99
    npc: Optional[int] = None

    @classmethod
    def from_dict(cls, cfg: Dict[str, Any]) -> "FpcaSettings":
        npc = cfg.get("npc")
        return cls(pve=float(cfg.get("pve", 0.99)), npc=int(npc) if npc is not None else None)


@dataclass(frozen=True)
class AnalysisSettings:
    alpha: float = 0.05
    pointwise: str = "normal"

    @classmethod
    def from_dict(cls, cfg: Dict[str, Any]) -> "AnalysisSettings":
        pointwise = str(cfg.get("pointwise", "normal"))
        if pointwise not in {"normal", "quantile"}:
            raise ConfigError(f"pointwise must be 'normal' or 'quantile', got {pointwise}")
        return cls(alpha=float(cfg.get("alpha", 0.05)), pointwise=pointwise)


# Variances of the four stand-in principal-component scores.
DEFAULT_SHAPE_EIGENVALUES = (9.0, 2.25, 0.5625, 0.16)


@dataclass(frozen=True)
class ScenarioConfig:
    model: str = "sofr-gaussian"
    n: int = 500
    tau: float = 5.0
    noise_sd: float = 0.0
    replications: int = 1
    seed: int = 0
    grid_size: int = 50
    n_test: int = 500
    workers: int = 1
    baseline: str = "weibull"
    baseline_rate: float = 1.0
    baseline_shape: float = 1.5
    baseline_scale: float = 1.0
    shape_eigenvalues: Tuple[float, ...] = DEFAULT_SHAPE_EIGENVALUES
    x_mean: float = 20.0
    x_sd: float = 10.0
    fosr_noise_sd: float = 5.0
    npc: Optional[int] = None

    MODELS = ("sofr-gaussian", "sofr-bernoulli", "cox", "joint-cox", "two-step-cox", "fosr")

    def __post_init__(self) -> None:
        if self.model not in self.MODELS:
            raise SpecError(f"unknown scenario model {self.model!r}; expected one of {self.MODELS}")
        if self.n <= 0:
            raise SpecError(f"n must be positive, got {self.n}")
        if self.replications < 1:
            raise SpecError(f"replications must be >= 1, got {self.replications}")

    def with_overrides(self, **kwargs: Any) -> "ScenarioConfig":
        return replace(self, **kwargs)

    @classmethod
    def from_dict(cls, cfg: Dict[str, Any]) -> "ScenarioConfig":
        base = cls()
        values = {key: cfg[key] for key in base.__dataclass_fields__ if key in cfg}
        if "shape_eigenvalues" in values:
            values["shape_eigenvalues"] = tuple(float(v) for v in values["shape_eigenvalues"])
        return replace(base, **values)


@dataclass(frozen=True)
class AppConfig:
    spline: SplineSettings = field(default_factory=SplineSettings)
    hazard: HazardSettings = field(default_factory=HazardSettings)
    fpca: FpcaSettings = field(default_factory=FpcaSettings)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    simulation: Dict[str, Any] = field(default_factory=dict)
    logging: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg: Optional[Dict[str, Any]]) -> "AppConfig":
        cfg = cfg or {}
        return cls(
            spline=SplineSettings.from_dict(cfg.get("spline", {})),
            hazard=HazardSettings.from_dict(cfg.get("hazard", {})),
            fpca=FpcaSettings.from_dict(cfg.get("fpca", {})),
            sampler=SamplerConfig.from_dict(cfg.get("sampler", {})),
            analysis=AnalysisSettings.from_dict(cfg.get("analysis", {})),
            simulation=dict(cfg.get("simulation", {})),
            logging=dict(cfg.get("logging", {})),
        )


def configure_logging(cfg: Dict[str, Any], level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or cfg.get("level", "INFO")).upper(),
        format=cfg.get("format", "%(asctime)s %(levelname)s %(name)s: %(message)s"),
    )
