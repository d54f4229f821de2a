"""Experiment configuration: pydantic models, file loading and built-in presets."""

import logging
from importlib import resources
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Literal, Optional, Union

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
)

from core.errors import ConfigError
from core.models import ReferenceKind
from core.utils import load_config

logger = logging.getLogger(__name__)

ALPHA_MIN = 0.2
ALPHA_MAX = 2.0
PRESET_PACKAGE = "stablelab"
PRESET_DIR = "presets"


def _check_alpha(value: Optional[float]) -> Optional[float]:
    if value is not None and not ALPHA_MIN <= value <= ALPHA_MAX:
        raise ValueError(f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {value}")
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Section):
    """Named model family with its parameters."""

    name: str
    alpha: Optional[float] = None
    dim: int = Field(default=1, ge=1)
    horizon: float = Field(default=1.0, gt=0.0)
    x0: Optional[List[float]] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, value: Optional[float]) -> Optional[float]:
        return _check_alpha(value)


class TestFunctionConfig(_Section):
    """Test function g (or f for the one-step check)."""

    __test__: ClassVar[bool] = False

    kind: Literal["cosine", "weierstrass", "linear", "quadratic", "constant"] = "cosine"
    frequency: Optional[List[float]] = None
    phase: float = 0.0
    beta: float = Field(default=0.75, gt=0.0)
    amplitude: float = 1.0
    levels: int = Field(default=14, ge=1)
    axis: int = Field(default=0, ge=0)
    value: float = 1.0


class LadderConfig(_Section):
    """Step-size ladder and reference settings."""

    deltas: Optional[List[float]] = None
    coarsest: int = Field(default=3, ge=0)
    finest: int = Field(default=8, ge=0)
    reference: ReferenceKind = ReferenceKind.AUTO
    reference_factor: int = Field(default=16, ge=8)
    reference_paths_factor: int = Field(default=4, ge=1)
    crn: bool = True
    probes: int = Field(default=8, ge=1)
    tolerance: float = Field(default=0.15, ge=0.0)

    @field_validator("finest")
    @classmethod
    def _ordered(cls, value: int, info: ValidationInfo) -> int:
        coarsest = info.data.get("coarsest")
        if coarsest is not None and value <= coarsest:
            raise ValueError(f"finest ({value}) must exceed coarsest ({coarsest})")
        return value


class OracleConfig(_Section):
    """Fourier oracle grid and the optional Monte-Carlo cross-check."""

    n: int = Field(default=1024, ge=2)
    half_width: Optional[float] = Field(default=None, gt=0.0)
    times: Optional[List[float]] = None
    stride: int = Field(default=1, ge=1)
    cross_check: bool = False
    mc_paths: int = Field(default=20000, ge=2)
    mc_steps: int = Field(default=8, ge=1)

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError(f"n must be a power of two, got {value}")
        return value


class SamplerConfig(_Section):
    """Direct draws from one of the stable samplers."""

    law: Literal["standard", "isotropic", "positive", "anisotropic"] = "isotropic"
    alpha: float = 1.5
    dim: int = Field(default=1, ge=1)
    n: int = Field(default=100000, ge=1)
    kappa: float = Field(default=0.3, ge=0.0, lt=1.0)
    dt: float = Field(default=1.0 / 64.0, gt=0.0)
    probes: int = Field(default=8, ge=1)

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, value: Optional[float]) -> Optional[float]:
        return _check_alpha(value)


class ExperimentConfig(_Section):
    """Everything a command needs; round-trips through model_dump(mode="json")."""

    name: str = "experiment"
    model: ModelConfig
    test_function: TestFunctionConfig = Field(default_factory=TestFunctionConfig)
    ladder: LadderConfig = Field(default_factory=LadderConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    n_paths: int = Field(default=100000, ge=2)
    seed: int = Field(default=0, ge=0, lt=2**64)
    block_size: int = Field(default=4096, ge=1)
    output_dir: Path = Path("./runs")
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])

    @property
    def run_dir(self) -> Path:
        return self.output_dir / self.name

    def deltas(self) -> List[float]:
        """Ladder step sizes, explicit or 2^-k T for k = coarsest..finest."""
        if self.ladder.deltas is not None:
            return list(self.ladder.deltas)
        horizon = self.model.horizon
        return [horizon * 2.0**-k for k in range(self.ladder.coarsest, self.ladder.finest + 1)]


def _key_path(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<root>"


def validate_section(model: type, data: Dict[str, Any], prefix: str = "") -> Any:
    """Validate data into a config model, naming the first offending key.

    Raises:
        ConfigError: On any validation error
    """
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = _key_path(first)
        raise ConfigError(first["msg"], f"{prefix}{key}" if prefix else key) from e


def parse_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a configuration tree."""
    if not isinstance(data, dict):
        raise ConfigError("the configuration must be a mapping")
    return validate_section(ExperimentConfig, data)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load and validate a YAML or JSON experiment file.

    Raises:
        ConfigError: If the file is missing, unreadable or invalid
    """
    try:
        data = load_config(Path(path))
    except (FileNotFoundError, ValueError, yaml.YAMLError) as e:
        raise ConfigError(str(e)) from e
    logger.debug("loaded configuration from %s", path)
    return parse_experiment_config(data)


def _preset_root() -> Any:
    return resources.files(PRESET_PACKAGE).joinpath(PRESET_DIR)


def preset_names() -> List[str]:
    """Names of the built-in presets."""
    return sorted(
        entry.name[: -len(".yaml")]
        for entry in _preset_root().iterdir()
        if entry.name.endswith(".yaml")
    )


def load_preset(name: str) -> ExperimentConfig:
    """Load a built-in preset by name.

    Raises:
        ConfigError: If no preset has that name
    """
    entry = _preset_root().joinpath(f"{name}.yaml")
    if not entry.is_file():
        raise ConfigError(
            f"unknown preset '{name}' (choose from {', '.join(preset_names())})", "preset"
        )
    data = yaml.safe_load(entry.read_text()) or {}
    return parse_experiment_config(data)


def preset_description(name: str) -> str:
    """First comment line of a preset file."""
    text = _preset_root().joinpath(f"{name}.yaml").read_text()
    for line in text.splitlines():
        if line.startswith("#"):
            return line.lstrip("# ").strip()
    return ""
