"""Run configuration: a YAML tree with a fixed set of keys.

Unknown keys anywhere in the tree are errors, so a misspelt threshold can
never silently fall back to its default.  Relative output paths are resolved
against ``$WAVEMAPS_OUTPUT_ROOT`` (default: the working directory).
"""

from __future__ import annotations

import copy
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .analysis import Thresholds
from .evolution import StepControl
from .exceptions import ConfigError, ParameterError
from .grid import RadialGrid, geometric_ratio, make_grid
from .scenarios import SCENARIOS, validate_params

__all__ = [
    "OUTPUT_ROOT_ENV",
    "GridConfig",
    "ScenarioConfig",
    "DiagnosticsConfig",
    "RunConfig",
    "load_config",
    "output_root",
]

OUTPUT_ROOT_ENV = "WAVEMAPS_OUTPUT_ROOT"
FLOWS = ("nonlinear", "linear")


def _strict(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping", key=where or None)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            path = f"{where}.{key}" if where else str(key)
            raise ConfigError(f"unknown config key {path!r}", key=path)
    return data


@dataclass
class GridConfig:
    R_max: float = 50.0
    N: int = 4096
    grading: str = "uniform"
    ratio: float | None = None
    r_min: float | None = None

    def build(self, k: int) -> RadialGrid:
        ratio = self.ratio
        if self.grading == "geometric" and ratio is None:
            if self.r_min is None:
                raise ConfigError("geometric grid needs grid.ratio or grid.r_min", key="grid.ratio")
            ratio = geometric_ratio(self.r_min, self.R_max, self.N)
        return make_grid(self.R_max, self.N, self.grading, ratio, k)


@dataclass
class ScenarioConfig:
    name: str = "zero"
    params: dict = field(default_factory=dict)


@dataclass
class DiagnosticsConfig:
    fit: bool = True
    radiation: bool = False
    budget: bool = True
    classify: bool = True
    stride: int = 1


@dataclass
class RunConfig:
    k: int = 1
    grid: GridConfig = field(default_factory=GridConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    flow: str = "nonlinear"
    t_final: float = 1.0
    cadence: float | None = None
    control: StepControl = field(default_factory=StepControl)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    output: str = "run"
    seed: int = 0
    emit_plotdata: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        data = copy.deepcopy(_strict(cls, data, ""))
        sub = {"grid": GridConfig, "scenario": ScenarioConfig, "control": StepControl,
               "diagnostics": DiagnosticsConfig, "thresholds": Thresholds}
        kwargs = {}
        for key, value in data.items():
            if key in sub:
                part = _strict(sub[key], value, key)
                try:
                    kwargs[key] = sub[key](**part)
                except (TypeError, ParameterError) as exc:
                    raise ConfigError(f"invalid {key}: {exc}", key=key) from exc
            else:
                kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k}", key="k")
        if self.flow not in FLOWS:
            raise ConfigError(f"flow must be one of {FLOWS}, got {self.flow!r}", key="flow")
        if not self.t_final > 0:
            raise ConfigError("t_final must be positive", key="t_final")
        if self.cadence is not None and not self.cadence > 0:
            raise ConfigError("cadence must be positive", key="cadence")
        if self.diagnostics.stride < 1:
            raise ConfigError("diagnostics.stride must be >= 1", key="diagnostics.stride")
        if self.grid.grading not in ("uniform", "geometric"):
            raise ConfigError(f"unknown grading {self.grid.grading!r}", key="grid.grading")
        if not isinstance(self.scenario.params, dict):
            raise ConfigError("scenario.params must be a mapping", key="scenario.params")
        validate_params(self.scenario.name, self.scenario_params())

    def scenario_params(self) -> dict:
        """Scenario parameters with the run seed filled in for randomised scenarios."""
        params = dict(self.scenario.params)
        spec = SCENARIOS.get(self.scenario.name)
        if spec is not None and "seed" in spec.optional and "seed" not in params:
            params["seed"] = self.seed
        return params

    def output_dir(self) -> Path:
        out = Path(self.output)
        return out if out.is_absolute() else output_root() / out


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "."))


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return RunConfig.from_dict(data or {})
