"""Run configuration: JSON loading, schema validation and defaults."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .model import BeamConfig, ConfigError, DampingPattern, LayerParams


def _data(name: str) -> dict:
    return json.loads(resources.files("beamlab").joinpath("data", name).read_text())


def default_config_dict() -> dict:
    return _data("default_config.json")


def config_schema() -> dict:
    return _data("config.schema.json")


def report_schema() -> dict:
    return _data("report.schema.json")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _validate(doc: Any, schema: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {err.message}")


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, report_schema(), cls=jsonschema.Draft202012Validator)


@dataclass(frozen=True)
class RunConfig:
    beam: BeamConfig
    damping: DampingPattern
    n_elements: int
    dt: float
    t_final: float
    lambda_min: float
    lambda_max: float
    n_points: int
    spacing: str
    seed: int
    smoothness: int
    initial: str
    theorem: str
    n_range: tuple[int, int]
    fit_window: tuple[float, float] | None

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        """Validate ``doc`` (a partial config is merged over the defaults)."""
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        _validate(doc, config_schema())
        full = _merge(default_config_dict(), doc)
        b, x = full["beam"], full["experiment"]
        beam = BeamConfig(
            top=LayerParams(**b["top"]), bottom=LayerParams(**b["bottom"]),
            rho2=b["rho2"], h2=b["h2"], L=b["L"],
        )
        damping = DampingPattern(**full["damping"])
        if not x["lambda_min"] < x["lambda_max"]:
            raise ConfigError("config field experiment.lambda_min: must be below lambda_max")
        if not x["t_final"] >= x["dt"]:
            raise ConfigError("config field experiment.t_final: must be at least dt")
        lo, hi = x["n_range"]
        if lo > hi:
            raise ConfigError("config field experiment.n_range: start exceeds end")
        window = x["fit_window"]
        if window is not None and not window[0] < window[1]:
            raise ConfigError("config field experiment.fit_window: must be increasing")
        return cls(
            beam=beam, damping=damping, n_elements=full["mesh"]["n_elements"],
            dt=float(x["dt"]), t_final=float(x["t_final"]),
            lambda_min=float(x["lambda_min"]), lambda_max=float(x["lambda_max"]),
            n_points=x["n_points"], spacing=x["spacing"], seed=x["seed"],
            smoothness=x["smoothness"], initial=x["initial"], theorem=x["theorem"],
            n_range=(lo, hi), fit_window=None if window is None else tuple(window),
        )

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None) -> "RunConfig":
        doc: dict = {}
        if path is not None:
            try:
                doc = json.loads(Path(path).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if overrides:
            if not isinstance(doc, dict):
                raise ConfigError("config must be a JSON object")
            doc = _merge(doc, overrides)
        return cls.from_dict(doc)
