import json

import pytest

from chernlab.config import DEFAULTS, ExperimentConfig, flatten
from chernlab.errors import ConfigError


def test_nested_objects_are_flattened():
    flat = flatten({"domain": {"kind": "Disk", "N": 64}, "initial": {"params": {"seed": 3}}})
    assert flat == {"domain.kind": "Disk", "domain.N": 64, "initial.params": {"seed": 3}}


def test_defaults_fill_missing_keys():
    cfg = ExperimentConfig.from_dict({"target.id": "Hopf"})
    assert cfg["target.id"] == "Hopf"
    assert cfg["domain.N"] == DEFAULTS["domain.N"]
    assert cfg.section("flow")["scheme"] == "SemiImplicit"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="domain.Nn"):
        ExperimentConfig.from_dict({"domain.Nn": 64})


def test_required_key_missing():
    with pytest.raises(ConfigError, match="target.id"):
        ExperimentConfig.from_dict({"domain.kind": "Disk"}, required=("domain.kind", "target.id"))


@pytest.mark.parametrize("bad", [{"domain.kind": "Annulus"}, {"domain.N": 4}, {"target.id": "K3"},
                                 {"seed": -1}, {"bubble.k_values": [8, 4, 16]}])
def test_invalid_values(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "bad.json")


def test_overrides_skip_none():
    cfg = ExperimentConfig().with_overrides(seed=5, **{"domain.N": None})
    assert cfg["seed"] == 5 and cfg["domain.N"] == DEFAULTS["domain.N"]
    assert json.loads(cfg.to_json())["seed"] == 5
