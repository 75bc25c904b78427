"""Experiment configuration.

Config files are JSON objects with flat dotted keys, e.g.::

    {"domain.kind": "Disk", "domain.N": 128, "target.id": "Hopf",
     "initial.map": "nonholomorphic_hopf", "flow.tol": 1e-10}

Nested objects are accepted and flattened.  Unknown keys are rejected so that
typos fail loudly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "domain.kind": "Disk",
    "domain.N": 128,
    "domain.size": 0.5,
    "domain.background": "flat",
    "target.id": "FlatC2",
    "initial.map": "holomorphic",
    "initial.params": {},
    "initial.snapshot": None,
    "flow.scheme": "SemiImplicit",
    "flow.tol": 1e-10,
    "flow.dt": None,
    "flow.max_steps": 2000,
    "analysis.radii_ladder": [0.05, 0.1, 0.2, 0.4],
    "analysis.epsilon1_candidate": 1.0,
    "analysis.epsilon2_candidate": 1.0,
    "verify.resolutions": [64, 128, 256],
    "verify.corpus_size": 10,
    "bubble.family": "FSProductBubble",
    "bubble.k_values": [8, 16, 32, 64],
    "bubble.epsilon1_candidate": 4.0,
    "bubble.C0": None,
    "bubble.identity_tol": 0.02,
    "output.dir": "out",
    "seed": 0,
}

# open-ended dictionaries whose inner keys are not flattened
_LEAVES = {"initial.params"}


def flatten(obj: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key not in _LEAVES:
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class ExperimentConfig:
    """Validated flat configuration; ``values`` maps dotted keys to values."""

    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def section(self, name: str) -> dict:
        p = name + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    @classmethod
    def from_dict(cls, data: dict, required=()) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        flat = flatten(data)
        unknown = sorted(set(flat) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        missing = [k for k in required if k not in flat]
        if missing:
            raise ConfigError(f"missing config key {missing[0]!r}")
        values = dict(DEFAULTS)
        values.update(flat)
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, required=()) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, required)

    def validate(self) -> None:
        v = self.values
        if v["domain.kind"] not in ("Disk", "PeriodicTorus", "SpherePair"):
            raise ConfigError(f"domain.kind: unknown domain {v['domain.kind']!r}")
        if not isinstance(v["domain.N"], int) or v["domain.N"] < 8:
            raise ConfigError("domain.N must be an integer >= 8")
        if v["target.id"] not in ("FlatC2", "FSProduct", "Hopf"):
            raise ConfigError(f"target.id: unknown target {v['target.id']!r}")
        if not isinstance(v["seed"], int) or v["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        ks = v["bubble.k_values"]
        if len(ks) < 3 or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigError("bubble.k_values needs at least three increasing values")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        values = dict(self.values)
        for k, v in kw.items():
            if v is not None:
                values[k] = v
        cfg = ExperimentConfig(values)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=True)
