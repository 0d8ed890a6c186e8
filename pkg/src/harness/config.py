"""Experiment configuration: YAML defaults plus flat ``key = value`` run files."""

from __future__ import annotations

import hashlib
import os
from dataclasses import MISSING, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Iterable, Optional

import yaml

from ..dynamics.disturbances import Profile
from ..errors import ConfigError

PROJECT_ROOT = Path(__file__).resolve().parents[2]
PARAMS_PATH = PROJECT_ROOT / "config" / "experiment_params.yaml"
PATHS_PATH = PROJECT_ROOT / "config" / "paths.yaml"
OUTPUT_DIR_ENV = "MACTRL_OUTPUT_DIR"

CONTROLLERS = ("magpc", "gpc", "lqr", "hinf", "zero")
STEP_SCALINGS = ("energy", "none")
SCENARIO_AGENTS = {"admire": 4, "pair": 2}
NONE_VALUES = ("", "none", "null")


def _read_yaml(path: Path) -> dict:
    if not path.exists():
        raise FileNotFoundError(f"Cannot locate configuration file {path}.")
    with path.open("r", encoding="utf-8") as stream:
        return yaml.safe_load(stream) or {}


def read_params(config_path: Optional[Path] = None) -> dict:
    """Read the YAML file holding experiment defaults and solver settings."""
    return _read_yaml(config_path or PARAMS_PATH)


def read_paths(config_path: Optional[Path] = None) -> dict:
    """Read output locations; ``MACTRL_OUTPUT_DIR`` overrides the run directory."""
    paths = _read_yaml(config_path or PATHS_PATH)
    if os.environ.get(OUTPUT_DIR_ENV):
        paths["output_dir"] = os.environ[OUTPUT_DIR_ENV]
    return paths


def resolve_output_dir(cfg: "ExperimentConfig", paths: Optional[dict] = None) -> Path:
    paths = paths or read_paths()
    target = Path(cfg.output_dir or paths.get("output_dir", "reports/runs"))
    return target if target.is_absolute() else PROJECT_ROOT / target


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines one run; agent indices are 1-based."""

    scenario: str
    T: int
    seed: int
    profile: str
    controller: str
    lr_num: float
    h: Optional[int]
    m: int
    Tb: Optional[int] = None
    failure_agent: Optional[int] = None
    failure_t: int = 500
    Q_scale: float = 1.0
    R_scale: float = 1.0
    radius: float = 10.0
    step_scaling: str = "energy"
    output_dir: Optional[str] = None

    @property
    def burn_in(self) -> int:
        if self.Tb is not None:
            return self.Tb
        if self.h is None:
            raise ConfigError("Burn-in needs a resolved horizon; h is still `auto`.")
        return self.m + self.h

    @property
    def n_agents(self) -> int:
        return SCENARIO_AGENTS[self.scenario]

    def failure_mask(self, t: int):
        """Per-agent failed flags at step t, or None when nothing has failed."""
        if self.failure_agent is None or t < self.failure_t:
            return None
        return [i == self.failure_agent - 1 for i in range(self.n_agents)]

    def validate(self) -> "ExperimentConfig":
        if self.scenario not in SCENARIO_AGENTS:
            raise ConfigError(f"Unknown scenario {self.scenario!r}; expected one of {sorted(SCENARIO_AGENTS)}.")
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}.")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}.")
        if self.profile not in {p.value for p in Profile} - {Profile.CUSTOM.value}:
            raise ConfigError(f"Unknown disturbance profile {self.profile!r}.")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"Unknown controller {self.controller!r}; expected one of {CONTROLLERS}.")
        if (self.h is not None and self.h < 1) or self.m < 1:
            raise ConfigError(f"h and m must be >= 1, got h={self.h}, m={self.m}.")
        if self.Tb is not None and self.h is not None and self.Tb < self.m + self.h:
            raise ConfigError(f"Tb must be at least m + h = {self.m + self.h}, got {self.Tb}.")
        if self.lr_num < 0:
            raise ConfigError(f"lr_num must be non-negative, got {self.lr_num}.")
        if self.failure_agent is not None and not 1 <= self.failure_agent <= self.n_agents:
            raise ConfigError(f"failure_agent must be in 1..{self.n_agents}, got {self.failure_agent}.")
        if self.failure_t < 0:
            raise ConfigError(f"failure_t must be non-negative, got {self.failure_t}.")
        if self.Q_scale <= 0 or self.R_scale <= 0 or self.radius <= 0:
            raise ConfigError("Q_scale, R_scale and radius must be positive.")
        if self.step_scaling not in STEP_SCALINGS:
            raise ConfigError(f"Unknown step_scaling {self.step_scaling!r}; expected one of {STEP_SCALINGS}.")
        return self


_CASTS = {f.name: f.type for f in fields(ExperimentConfig)}
_OPTIONAL = {"h", "Tb", "failure_agent", "output_dir"}
AUTO_VALUES = ("auto",)


def _cast(key: str, raw: str):
    kind = _CASTS[key]
    value = raw.strip()
    if key in _OPTIONAL and value.lower() in NONE_VALUES + AUTO_VALUES:
        return None
    try:
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"Malformed value for {key}: {raw!r}.") from exc
    return value


def parse_pairs(text: str) -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    pairs: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Line {number} is not `key = value`: {line!r}.")
        key, value = (part.strip() for part in line.split("=", 1))
        pairs[key] = value
    return pairs


def parse_config(text: str, scenario: Optional[str] = None, defaults: Optional[dict] = None) -> ExperimentConfig:
    """Validated config from flat text; unset keys come from the YAML defaults."""
    params = defaults if defaults is not None else read_params()
    pairs = parse_pairs(text)
    unknown = sorted(set(pairs) - set(_CASTS))
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}.")
    values = {key: value for key, value in params.get("experiment", {}).items() if key in _CASTS}
    values.setdefault("seed", params.get("global", {}).get("seed", 0))
    values.update({key: _cast(key, raw) for key, raw in pairs.items()})
    if scenario is not None:
        values["scenario"] = scenario
    if not values.get("scenario"):
        raise ConfigError("No scenario given; set `scenario = ...` or pass one on the command line.")
    missing = [f.name for f in fields(ExperimentConfig) if f.name not in values and f.default is MISSING]
    if missing:
        raise ConfigError(f"Missing configuration keys: {', '.join(missing)}.")
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def apply_overrides(cfg: ExperimentConfig, overrides: Iterable[str]) -> ExperimentConfig:
    """Apply ``key=value`` overrides to an existing config."""
    text = "\n".join(overrides)
    pairs = parse_pairs(text)
    unknown = sorted(set(pairs) - set(_CASTS))
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}.")
    return replace(cfg, **{key: _cast(key, raw) for key, raw in pairs.items()}).validate()


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if value is None else repr(value) if isinstance(value, float) else value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()[:16]
