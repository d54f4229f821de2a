"""Exception hierarchy for stablelab.

Every error carries the process exit code the CLI maps it to.
"""

from typing import Any, List, Optional


class StableLabError(Exception):
    """Base class for all stablelab errors."""

    exit_code: int = 1


class ConfigError(StableLabError):
    """Raised when an experiment configuration is invalid.

    Attributes:
        key_path: Dotted path of the offending configuration key, if known
    """

    exit_code = 2

    def __init__(self, message: str, key_path: Optional[str] = None) -> None:
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)


class DomainError(StableLabError, ValueError):
    """Raised when a parameter lies outside its admissible range."""

    exit_code = 2


class PathFormatError(StableLabError, ValueError):
    """Raised when a file is not a valid path batch or grid function."""

    exit_code = 2


class ModelValidationError(StableLabError):
    """Raised when a model fails its assumption checks.

    Attributes:
        report: The ValidationReport listing every failed assumption
    """

    exit_code = 2

    def __init__(self, report: Any) -> None:
        self.report = report
        lines = [f"{issue.assumption}: {issue.message}" for issue in report.issues]
        super().__init__("Model validation failed:\n  " + "\n  ".join(lines))


class NumericalError(StableLabError):
    """Base class for runtime numerical failures."""

    exit_code = 1


class QuadratureError(NumericalError):
    """Raised when a quadrature rule does not converge."""

    pass


class GeneratorConvergenceError(QuadratureError):
    """Raised when two refinement levels of the generator disagree.

    Attributes:
        residual: Absolute difference between the two levels
    """

    def __init__(self, message: str, residual: float) -> None:
        self.residual = residual
        super().__init__(f"{message} (residual={residual:.3e})")


class JumpBudgetError(NumericalError):
    """Raised when the expected jump count per step exceeds the budget."""

    pass


class LevyMeasureError(NumericalError):
    """Raised when a Levy measure region has non-finite mass."""

    pass


class NonFiniteStateError(NumericalError):
    """Raised when an Euler state becomes NaN or infinite.

    Attributes:
        step: Index of the step that produced the non-finite state
    """

    def __init__(self, step: int, path: Optional[int] = None) -> None:
        self.step = step
        self.path = path
        where = f"step {step}" if path is None else f"step {step}, path {path}"
        super().__init__(f"Non-finite Euler state at {where}")


class BatchSimulationError(NumericalError):
    """Raised when one or more path blocks of a batch fail.

    Attributes:
        failures: One message per failed block
    """

    def __init__(self, failures: List[str]) -> None:
        self.failures = failures
        super().__init__(
            f"{len(failures)} path block(s) failed:\n  " + "\n  ".join(failures)
        )


class OracleError(NumericalError):
    """Raised when the Fourier oracle cannot be applied."""

    pass


class InconclusiveStudyError(StableLabError):
    """Raised when every ladder point is below the Monte-Carlo noise floor."""

    exit_code = 3


class AliasingWarning(UserWarning):
    """Spectral mass close to the Nyquist shell of an oracle grid."""

    pass


class TruncationWarning(UserWarning):
    """A truncated sampler or quadrature left a non-negligible remainder."""

    pass
