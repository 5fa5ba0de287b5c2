from .config import AppConfig, SamplerConfig, ScenarioConfig
from .pipeline import FitResult, RegressionPipeline
from .simlab import run_scenario

__all__ = ["AppConfig", "FitResult", "RegressionPipeline", "SamplerConfig", "ScenarioConfig", "run_scenario"]
