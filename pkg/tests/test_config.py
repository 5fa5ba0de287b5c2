import json

import pytest

from funcbayes.config import (
    AppConfig,
    SamplerConfig,
    ScenarioConfig,
    SplineSettings,
    load_config,
)
from funcbayes.errors import ConfigError, SpecError
from funcbayes.types import CYCLIC_CUBIC, OPEN_CUBIC


def test_load_json_and_yaml(tmp_path):
    payload = {"spline": {"k": 30, "bs": "cyclic"}, "sampler": {"chains": 2}}
    json_path = tmp_path / "cfg.json"
    json_path.write_text(json.dumps(payload), encoding="utf-8")
    yaml_path = tmp_path / "cfg.yaml"
    yaml_path.write_text("spline:\n  k: 30\n  bs: cyclic\nsampler:\n  chains: 2\n", encoding="utf-8")
    assert load_config(str(json_path)) == payload
    assert load_config(str(yaml_path)) == payload


def test_load_config_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "cfg.toml"
    bad.write_text("", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_shipped_configs_agree():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "config"
    assert load_config(str(root / "funcbayes.yaml")) == load_config(str(root / "funcbayes.json"))


def test_defaults():
    app = AppConfig.from_dict({})
    assert app.spline.k == 10 and app.spline.kind == OPEN_CUBIC
    assert app.hazard.df == 5
    assert app.fpca.pve == 0.99
    assert app.sampler.n_iter == 15000 and app.sampler.n_warmup == 5000 and app.sampler.n_chains == 3
    assert app.sampler.n_draws == 10000
    assert app.analysis.alpha == 0.05


def test_section_overrides():
    app = AppConfig.from_dict({"spline": {"k": 35, "bs": "cc"}, "sampler": {"iter": 400, "warmup": 100}})
    assert app.spline.kind == CYCLIC_CUBIC
    assert app.sampler.n_draws == 300


def test_invalid_values():
    with pytest.raises(ConfigError):
        SplineSettings(bs="tp").kind
    with pytest.raises(SpecError):
        SamplerConfig(n_iter=100, n_warmup=100)
    with pytest.raises(SpecError):
        SamplerConfig(n_chains=0)
    with pytest.raises(ConfigError):
        AppConfig.from_dict({"analysis": {"pointwise": "hpd"}})


def test_scenario_config():
    config = ScenarioConfig.from_dict({"model": "cox", "n": 200, "shape_eigenvalues": [1, 2, 3, 4], "unused": 1})
    assert config.n == 200
    assert config.shape_eigenvalues == (1.0, 2.0, 3.0, 4.0)
    assert config.with_overrides(tau=2.0).tau == 2.0
    with pytest.raises(SpecError):
        ScenarioConfig(model="poisson")
    with pytest.raises(SpecError):
        ScenarioConfig(replications=0)
