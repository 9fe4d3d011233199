"""TOML experiment configuration.

Sections and keys::

    [model]     fixture = "reactor"  or  F, G, C, R0, R1, R2 as nested row arrays
    [detector]  kind = "cusum" | "chi2", b, biasFactor, tau, alpha, targetRate, N
    [attack]    detectorKind, directionKind = "uniform" | "worstCase" | "custom",
                custom = [...], startStep
    [run]       horizon, trials, seed, warmUpSteps, output, format

Every key is optional except that an inline model must give all six matrices.
Keys are translated to the snake_case names used in Python on load.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, ValidationError
from .plant import MODEL_FIELDS, LtiModel
from .reactor import reactor_fixture

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# file key -> Python name, per section
SECTIONS = {
    "model": {k: k for k in ("fixture", *MODEL_FIELDS)},
    "detector": {
        "kind": "kind",
        "b": "b",
        "biasFactor": "bias_factor",
        "tau": "tau",
        "alpha": "alpha",
        "targetRate": "target_rate",
        "N": "N",
    },
    "attack": {"detectorKind": "detector", "directionKind": "direction", "custom": "custom", "startStep": "k_star"},
    "run": {
        "horizon": "horizon",
        "trials": "trials",
        "seed": "seed",
        "warmUpSteps": "warm_up_steps",
        "output": "output",
        "format": "format",
    },
}
FIXTURES = {"reactor": reactor_fixture}


@dataclass
class ExperimentConfig:
    model: LtiModel
    detector: dict[str, Any] = field(default_factory=dict)
    attack: dict[str, Any] = field(default_factory=dict)
    horizon: int | None = None
    trials: int | None = None
    seed: int | None = None
    warm_up_steps: int | None = None
    output: str | None = None
    format: str | None = None

    def __post_init__(self):
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("run.horizon must be >= 1")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("run.trials must be >= 1")


def build_model(section: dict | None) -> LtiModel:
    if not section:
        return reactor_fixture()
    if "fixture" in section:
        extra = set(section) - {"fixture"}
        if extra:
            raise ConfigError(f"model.fixture cannot be combined with {sorted(extra)}")
        try:
            return FIXTURES[section["fixture"]]()
        except KeyError:
            raise ConfigError(f"unknown model fixture {section['fixture']!r}") from None
    try:
        return LtiModel.from_mapping(section)
    except ValidationError as exc:
        raise ConfigError(f"[model]: {exc}") from exc


def parse_config(data: dict) -> ExperimentConfig:
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, keys in SECTIONS.items():
        sec = data.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        bad = set(sec) - set(keys)
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        sections[name] = {keys[k]: v for k, v in sec.items()}
    return ExperimentConfig(
        model=build_model(sections["model"]),
        detector=sections["detector"],
        attack=sections["attack"],
        **sections["run"],
    )


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return parse_config({})
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(data)
