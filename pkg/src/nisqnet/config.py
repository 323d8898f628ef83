"""Flat ``key = value`` experiment configuration with dotted keys.

Files hold one ``key = value`` per line; ``#`` starts a comment. Every key
has a default, and command-line overrides use the same names. Values are
parsed by the type of their default; grids are comma-separated.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, Mapping

EXPERIMENTS = (
    "single-training",
    "generalization",
    "noise-sweep",
    "identity-cost",
    "transpile-report",
)
NETWORKS = ("dqnn", "qaoa", "both")
MODES = ("exact", "expectation", "sampled")

DEFAULTS: dict[str, Any] = {
    "experiment": "single-training",
    "network.type": "both",
    "dqnn.widths": (2, 2),
    "dqnn.eta": 0.5,
    "dqnn.epsilon": 0.25,
    "qaoa.m": 2,
    "qaoa.layers": 8,
    "qaoa.eta": 0.075,
    "qaoa.epsilon": 0.05,
    "train.epochs": 1000,
    "train.validation_every": 5,
    "data.n_train": 4,
    "data.n_train_grid": (1, 2, 3, 4),
    "data.n_val": 4,
    "noise.k": 0.0,
    "noise.k_grid": (0.0, 0.25, 0.5, 1.0, 2.0, 4.0),
    "noise.lambda_cnot": 3.14e-2,
    "noise.lambda_sx": 1.18e-3,
    "noise.lambda_rz": 0.0,
    "backend.mode": "expectation",
    "backend.shots": 8192,
    "stop.window": 10,
    "stop.tol": 1e-3,
    "stop.max_epochs": 1000,
    "sessions": 10,
    "seed": 0,
    "workers": 1,
    "out": "results",
}

_GRIDS_OF_INT = {"dqnn.widths", "data.n_train_grid"}
_GRIDS_OF_FLOAT = {"noise.k_grid"}


class ConfigError(ValueError):
    pass


def _parse(key: str, raw: Any) -> Any:
    default = DEFAULTS[key]
    if not isinstance(raw, str):
        if key in _GRIDS_OF_INT:
            return tuple(int(x) for x in raw)
        if key in _GRIDS_OF_FLOAT:
            return tuple(float(x) for x in raw)
        return type(default)(raw)
    text = raw.strip()
    try:
        if key in _GRIDS_OF_INT:
            return tuple(int(x) for x in text.split(",") if x.strip())
        if key in _GRIDS_OF_FLOAT:
            return tuple(float(x) for x in text.split(",") if x.strip())
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return text


@dataclass(frozen=True)
class ExperimentConfig:
    values: Mapping[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        merged = dict(self.values)
        for k, v in overrides.items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown config key {k!r}")
            merged[k] = _parse(k, v)
        cfg = ExperimentConfig(merged)
        cfg.validate()
        return cfg

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    def networks(self) -> list[str]:
        t = self["network.type"]
        return ["dqnn", "qaoa"] if t == "both" else [t]

    def validate(self) -> None:
        v = self.values
        if v["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if v["network.type"] not in NETWORKS:
            raise ConfigError(f"network.type must be one of {NETWORKS}")
        if v["backend.mode"] not in MODES:
            raise ConfigError(f"backend.mode must be one of {MODES}")
        if not v["data.n_train_grid"] or not v["noise.k_grid"]:
            raise ConfigError("grids must be nonempty")
        if min(v["data.n_train_grid"]) < 1 or v["data.n_train"] < 1:
            raise ConfigError("training set sizes must be positive")
        if v["data.n_val"] < 0:
            raise ConfigError("data.n_val must be non-negative")
        if min(v["noise.k_grid"]) < 0 or v["noise.k"] < 0:
            raise ConfigError("noise scale k must be non-negative")
        for key in ("sessions", "train.epochs", "train.validation_every", "workers",
                    "backend.shots", "stop.max_epochs"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be at least 1")
        if v["stop.window"] < 2:
            raise ConfigError("stop.window must be at least 2")
        if not 0 <= v["seed"] < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if len(v["dqnn.widths"]) < 2:
            raise ConfigError("dqnn.widths needs input and output widths")
        if v["dqnn.widths"][0] != v["dqnn.widths"][-1]:
            raise ConfigError("dqnn input and output widths must agree")
        if "qaoa" in self.networks() and "dqnn" in self.networks():
            if v["qaoa.m"] != v["dqnn.widths"][0]:
                raise ConfigError("qaoa.m must equal the dqnn input width")


def default_config() -> ExperimentConfig:
    return ExperimentConfig(dict(DEFAULTS))


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {n}: unknown config key {key!r}")
        out[key] = value
    return out


def load_config(path: str | os.PathLike | None = None, overrides: Mapping[str, Any] = ()) -> ExperimentConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path) as fh:
                values.update(parse_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update(dict(overrides))
    return default_config().with_overrides(values)
