"""Core data models for stablelab."""

import math
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SphereFunction = Callable[[np.ndarray], np.ndarray]


class AlphaRegime(str, Enum):
    """Form of the Euler step, fixed by the stability index."""

    SUB_ONE = "sub-1"
    EQ_ONE = "eq-1"
    SUPER_ONE = "super-1"
    GAUSSIAN = "gaussian"

    @classmethod
    def from_alpha(cls, alpha: float) -> "AlphaRegime":
        """Classify a stability index.

        Args:
            alpha: Index in (0, 2]

        Returns:
            Matching regime
        """
        if alpha == 2.0:
            return cls.GAUSSIAN
        if alpha == 1.0:
            return cls.EQ_ONE
        if alpha < 1.0:
            return cls.SUB_ONE
        return cls.SUPER_ONE


class ReferenceKind(str, Enum):
    """Source of the reference value in a weak-error study."""

    AUTO = "auto"
    ORACLE = "oracle"
    FINE_GRID = "fine-grid"


class RecordMode(str, Enum):
    """Which grid points a simulated batch keeps."""

    FULL = "full"
    ENDPOINTS = "endpoints"


class StableLaw(BaseModel):
    """Parameters of a possibly anisotropic alpha-stable driving law.

    A directional density of None stands for the isotropic case m = 1.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    alpha: float = Field(gt=0.0, le=2.0)
    dim: int = Field(ge=1)
    directional_density: Optional[SphereFunction] = None
    cut_eps: float = Field(default=0.1, gt=0.0)

    @property
    def is_isotropic(self) -> bool:
        return self.directional_density is None

    def density(self, w: np.ndarray) -> np.ndarray:
        """Evaluate the directional density on sphere points of shape (k, dim)."""
        if self.directional_density is None:
            return np.ones(w.shape[0])
        return np.asarray(self.directional_density(w), dtype=float)


class TimeGrid(BaseModel):
    """Partition 0 = t_0 < ... < t_n = T."""

    model_config = ConfigDict(frozen=True)

    nodes: Tuple[float, ...]
    delta: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _check_partition(self) -> "TimeGrid":
        if len(self.nodes) < 2:
            raise ValueError("a time grid needs at least two nodes")
        if self.nodes[0] != 0.0:
            raise ValueError("a time grid must start at 0")
        steps = np.diff(self.nodes)
        if np.any(steps <= 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        if steps.max() > self.delta * (1.0 + 1e-12):
            raise ValueError("a grid step exceeds delta")
        return self

    @property
    def horizon(self) -> float:
        return self.nodes[-1]

    @property
    def n_steps(self) -> int:
        return len(self.nodes) - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(np.asarray(self.nodes))


class PathBatch(BaseModel):
    """Euler trajectories of many paths at recorded grid points.

    states has shape (n_paths, len(recorded), dim). Path p draws from the
    stream (master_seed, p); block_size only records how paths were grouped.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    states: np.ndarray
    grid: TimeGrid
    recorded: List[int]
    master_seed: int
    block_size: int

    @property
    def n_paths(self) -> int:
        return int(self.states.shape[0])

    @property
    def dim(self) -> int:
        return int(self.states.shape[2])

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.grid.nodes)[self.recorded]

    @property
    def terminal(self) -> np.ndarray:
        """States at the horizon, shape (n_paths, dim)."""
        return self.states[:, -1, :]

    @property
    def stream_ids(self) -> np.ndarray:
        return np.arange(self.n_paths)


class McEstimate(BaseModel):
    """Monte-Carlo mean with its standard error."""

    mean: float
    stderr: float = Field(ge=0.0)
    n_paths: int = Field(ge=1)
    ci95: Tuple[float, float]

    @classmethod
    def from_samples(cls, values: np.ndarray) -> "McEstimate":
        """Summarize i.i.d. samples.

        Args:
            values: One value per path

        Returns:
            Estimate with stderr = sample_std / sqrt(n)
        """
        values = np.asarray(values, dtype=float).ravel()
        n = values.size
        if n == 0:
            raise ValueError("cannot estimate from an empty sample")
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls.from_moments(mean, stderr, n)

    @classmethod
    def from_moments(cls, mean: float, stderr: float, n_paths: int) -> "McEstimate":
        half = 1.96 * stderr
        return cls(mean=mean, stderr=stderr, n_paths=n_paths, ci95=(mean - half, mean + half))

    def z_score(self, reference: float) -> float:
        """Signed distance to a reference value in units of stderr."""
        if self.stderr == 0.0:
            return 0.0 if self.mean == reference else math.copysign(math.inf, self.mean - reference)
        return (self.mean - reference) / self.stderr


class RateFit(BaseModel):
    """Weak errors along a step-size ladder and their log-log fit.

    slope is None when no ladder point cleared the noise floor.
    """

    deltas: List[float]
    errors: List[float]
    stderrs: List[float]
    used: List[bool]
    slope: Optional[float] = None
    slope_stderr: Optional[float] = None
    intercept: Optional[float] = None
    r_squared: Optional[float] = None
    predicted_kappa: Optional[float] = None
    reference_value: Optional[float] = None
    reference_stderr: Optional[float] = None
    n_paths: Optional[int] = None
    reference_kind: Optional[str] = None
    exploratory: bool = False

    @property
    def conclusive(self) -> bool:
        return self.slope is not None

    @property
    def slope_ci(self) -> Optional[Tuple[float, float]]:
        if self.slope is None or self.slope_stderr is None:
            return None
        half = 1.96 * self.slope_stderr
        return (self.slope - half, self.slope + half)

    def passes(self, tolerance: float = 0.15) -> Optional[bool]:
        """Check the fitted slope against the predicted rate.

        The predicted rate bounds the error from above, so a steeper slope
        passes and a shallower one fails.

        Args:
            tolerance: Allowed shortfall below the predicted rate

        Returns:
            Verdict, or None when there is nothing to compare
        """
        if self.slope is None or self.predicted_kappa is None:
            return None
        return self.slope >= self.predicted_kappa - tolerance


class QuadratureSpec(BaseModel):
    """Radial and spherical nodes used to evaluate the generator.

    The radial axis is split into a Taylor-compensated core [0, r0], a
    log-spaced shell [r0, 1] and a uniform tail [1, r_max].
    """

    model_config = ConfigDict(frozen=True)

    r0: float = Field(default=1e-3, gt=0.0, lt=1.0)
    r_max: float = Field(default=1e3, gt=1.0)
    core_nodes: int = Field(default=16, ge=2)
    shell_panels: int = Field(default=12, ge=1)
    shell_nodes: int = Field(default=8, ge=2)
    tail_panel_width: float = Field(default=0.5, gt=0.0)
    tail_nodes: int = Field(default=8, ge=2)
    sphere_points: int = Field(default=64, ge=4)
    rtol: float = Field(default=1e-4, gt=0.0)
    atol: float = Field(default=1e-8, ge=0.0)

    def refined(self) -> "QuadratureSpec":
        """Double every node count."""
        return self.model_copy(
            update={
                "core_nodes": 2 * self.core_nodes,
                "shell_nodes": 2 * self.shell_nodes,
                "tail_nodes": 2 * self.tail_nodes,
                "sphere_points": 2 * self.sphere_points,
            }
        )

    def coarsened(self) -> "QuadratureSpec":
        """Halve every node count."""
        return self.model_copy(
            update={
                "core_nodes": max(2, self.core_nodes // 2),
                "shell_nodes": max(2, self.shell_nodes // 2),
                "tail_nodes": max(2, self.tail_nodes // 2),
                "sphere_points": max(4, self.sphere_points // 2),
            }
        )


class ValidationIssue(BaseModel):
    """One failed model assumption."""

    assumption: str
    message: str
    probe: Optional[List[float]] = None
    value: Optional[float] = None


class ValidationReport(BaseModel):
    """Outcome of model validation."""

    model_name: str = ""
    issues: List[ValidationIssue] = Field(default_factory=list)
    mu: Optional[float] = None
    n_probes: int = 0

    @property
    def passed(self) -> bool:
        return not self.issues

    def add_issue(
        self,
        assumption: str,
        message: str,
        probe: Optional[np.ndarray] = None,
        value: Optional[float] = None,
    ) -> None:
        """Record a failed assumption with the probe point that broke it."""
        self.issues.append(
            ValidationIssue(
                assumption=assumption,
                message=message,
                probe=None if probe is None else [float(v) for v in np.ravel(probe)],
                value=None if value is None else float(value),
            )
        )


class OutputWorkspace(BaseModel):
    """Output directory structure of one experiment."""

    root: Path
    data: Path
    reports: Path
    config: Path

    @classmethod
    def create(cls, output_dir: Path) -> "OutputWorkspace":
        """Lay out the output directory (without touching the disk)."""
        root = Path(output_dir)
        return cls(root=root, data=root / "data", reports=root / "reports", config=root / "config")

    def ensure_exists(self) -> None:
        """Create all directories."""
        for path in [self.root, self.data, self.reports, self.config]:
            path.mkdir(parents=True, exist_ok=True)

    @field_validator("root", "data", "reports", "config")
    @classmethod
    def _as_path(cls, value: Path) -> Path:
        return Path(value)
