"""Built-in model families addressable by name from experiment configs."""

import inspect
import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from core.config import ModelConfig, TestFunctionConfig
from core.errors import ConfigError, DomainError
from skills.levy_component import DensityMeasure, LevyComponent, TemperedStableMeasure
from skills.model import (
    ModelSpec,
    TestFunction,
    constant_test_function,
    cosine_test_function,
    linear_test_function,
    quadratic_test_function,
    weierstrass_coefficient,
    weierstrass_test_function,
)

logger = logging.getLogger(__name__)

ModelBuilder = Callable[..., ModelSpec]

_REGISTRY: Dict[str, ModelBuilder] = {}
_DEFAULT_ALPHA: Dict[str, float] = {}


def register(name: str, default_alpha: float) -> Callable[[ModelBuilder], ModelBuilder]:
    """Register a model family builder under a config name."""

    def decorator(builder: ModelBuilder) -> ModelBuilder:
        _REGISTRY[name] = builder
        _DEFAULT_ALPHA[name] = default_alpha
        return builder

    return decorator


def family_names() -> List[str]:
    return sorted(_REGISTRY)


def _start(x0: Optional[Sequence[float]], dim: int) -> np.ndarray:
    if x0 is None:
        return np.zeros(dim)
    return np.asarray(x0, dtype=float)


def _scalar_times_identity(fn: Callable[[np.ndarray], np.ndarray], dim: int) -> Callable:
    eye = np.eye(dim)

    def field(x: np.ndarray) -> np.ndarray:
        return fn(x)[:, None, None] * eye

    return field


def _unit_direction(dim: int) -> np.ndarray:
    return np.ones(dim) / math.sqrt(dim)


@register("isotropic-stable-const", default_alpha=1.5)
def isotropic_stable_const(
    alpha: float,
    dim: int,
    horizon: float,
    x0: Optional[Sequence[float]],
    scale: float = 1.0,
    drift: Optional[Sequence[float]] = None,
) -> ModelSpec:
    """Constant coefficients c = scale * I (b at alpha = 2), h = 1, constant drift."""
    if scale <= 0.0:
        raise DomainError(f"scale must be positive, got {scale}")
    a0 = np.zeros(dim) if drift is None else np.asarray(drift, dtype=float)
    matrix = scale * np.eye(dim)

    def constant_drift(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(a0, x.shape).copy()

    def constant_matrix(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(matrix, (x.shape[0], dim, dim))

    return ModelSpec(
        name="isotropic-stable-const",
        alpha=alpha,
        dim=dim,
        horizon=horizon,
        x0=_start(x0, dim),
        drift=constant_drift if np.any(a0) else None,
        diffusion=constant_matrix if alpha == 2.0 else None,
        jump_scale=constant_matrix if alpha < 2.0 else None,
        constant_coefficients=True,
    )


@register("weierstrass-c", default_alpha=1.5)
def weierstrass_c(
    alpha: float,
    dim: int,
    horizon: float,
    x0: Optional[Sequence[float]],
    beta: float = 0.75,
    amplitude: float = 0.25,
    levels: int = 12,
) -> ModelSpec:
    """Isotropic driver scaled by the C^beta coefficient 1 + amplitude * W_beta(x_1)."""
    coefficient = weierstrass_coefficient(beta, amplitude, levels)
    field = _scalar_times_identity(coefficient, dim)
    return ModelSpec(
        name="weierstrass-c",
        alpha=alpha,
        dim=dim,
        horizon=horizon,
        x0=_start(x0, dim),
        diffusion=field if alpha == 2.0 else None,
        jump_scale=field if alpha < 2.0 else None,
        holder_beta=beta,
    )


@register("levy-tempered", default_alpha=1.5)
def levy_tempered(
    alpha: float,
    dim: int,
    horizon: float,
    x0: Optional[Sequence[float]],
    index: Optional[float] = None,
    tempering: float = 1.0,
    levy_scale: float = 0.5,
    drift_amplitude: float = 0.2,
) -> ModelSpec:
    """Isotropic driver plus tempered-stable jumps l(x, v) = s (1 + 0.2 cos x_1) v e.

    The tempered index defaults to alpha / 2 so that the alpha-moment on U1
    stays finite.
    """
    index = 0.5 * alpha if index is None else index
    if index >= alpha:
        raise DomainError(f"index must be below alpha={alpha}, got {index}")
    direction = _unit_direction(dim)

    def drift(x: np.ndarray) -> np.ndarray:
        return drift_amplitude * np.sin(x)

    def jump_map(x: np.ndarray, marks: np.ndarray) -> np.ndarray:
        return (levy_scale * (1.0 + 0.2 * np.cos(x[:, 0])) * marks)[:, None] * direction

    levy = LevyComponent(
        measure=TemperedStableMeasure(index=index, tempering=tempering),
        jump_map=jump_map,
        odd_jump_map=True,
    )
    return ModelSpec(
        name="levy-tempered",
        alpha=alpha,
        dim=dim,
        horizon=horizon,
        x0=_start(x0, dim),
        drift=drift if drift_amplitude else None,
        levy=levy,
    )


@register("brownian-smooth", default_alpha=2.0)
def brownian_smooth(
    alpha: float,
    dim: int,
    horizon: float,
    x0: Optional[Sequence[float]],
    drift_amplitude: float = 0.3,
    diffusion_amplitude: float = 0.3,
) -> ModelSpec:
    """Diffusion with a = 0.3 sin x and b = diag(1 + 0.3 cos x)."""
    if alpha != 2.0:
        raise DomainError(f"brownian-smooth needs alpha = 2, got {alpha}")
    if not 0.0 <= diffusion_amplitude < 1.0:
        raise DomainError(f"diffusion_amplitude must lie in [0, 1), got {diffusion_amplitude}")

    def drift(x: np.ndarray) -> np.ndarray:
        return drift_amplitude * np.sin(x)

    def diffusion(x: np.ndarray) -> np.ndarray:
        diag = 1.0 + diffusion_amplitude * np.cos(x)
        return diag[:, :, None] * np.eye(dim)

    return ModelSpec(
        name="brownian-smooth",
        alpha=2.0,
        dim=dim,
        horizon=horizon,
        x0=_start(x0, dim),
        drift=drift,
        diffusion=diffusion,
    )


@register("prop2-levy-driven", default_alpha=1.5)
def prop2_levy_driven(
    alpha: float,
    dim: int,
    horizon: float,
    x0: Optional[Sequence[float]],
    beta: float = 0.75,
    amplitude: float = 0.25,
    levels: int = 12,
    levy_scale: float = 0.5,
    index: Optional[float] = None,
    support: float = 2.0,
) -> ModelSpec:
    """dX = c(X) dZ0 + C(X) dZ with c = W_beta I and C = s W_beta e.

    Z has the symmetric Levy density |v|^(-1-index) on |v| <= support, so
    l(x, v) = C(x) v. At alpha = 2 the stable part becomes b = W_beta I.
    """
    index = 0.5 * min(alpha, 1.8) if index is None else index
    if index >= alpha:
        raise DomainError(f"index must be below alpha={alpha}, got {index}")
    coefficient = weierstrass_coefficient(beta, amplitude, levels)
    field = _scalar_times_identity(coefficient, dim)
    direction = _unit_direction(dim)

    def power_density(v: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.abs(v) ** (-1.0 - index)

    def jump_map(x: np.ndarray, marks: np.ndarray) -> np.ndarray:
        return (levy_scale * coefficient(x) * marks)[:, None] * direction

    levy = LevyComponent(
        measure=DensityMeasure(power_density, support_radius=support, is_symmetric=True),
        jump_map=jump_map,
        odd_jump_map=True,
    )
    return ModelSpec(
        name="prop2-levy-driven",
        alpha=alpha,
        dim=dim,
        horizon=horizon,
        x0=_start(x0, dim),
        diffusion=field if alpha == 2.0 else None,
        jump_scale=field if alpha < 2.0 else None,
        levy=levy,
        holder_beta=beta,
    )


@register("anisotropic-stable", default_alpha=1.5)
def anisotropic_stable(
    alpha: float,
    dim: int,
    horizon: float,
    x0: Optional[Sequence[float]],
    kappa: float = 0.3,
    swirl: float = 0.5,
) -> ModelSpec:
    """Stable driver with h(x, w) = 1 + kappa (w_1 + swirl sin(x_1) w_2).

    The modulation is odd in w, so alpha = 1 is excluded. swirl = 0 gives a
    constant-coefficient model.
    """
    if alpha >= 2.0 or alpha == 1.0:
        raise DomainError(f"anisotropic-stable needs alpha in (0, 1) or (1, 2), got {alpha}")
    if abs(kappa) * (1.0 + abs(swirl)) >= 1.0:
        raise DomainError("kappa * (1 + |swirl|) must stay below 1 to keep h positive")

    def modulation(x: np.ndarray, w: np.ndarray) -> np.ndarray:
        out = 1.0 + kappa * w[:, 0]
        if w.shape[1] > 1:
            out = out + kappa * swirl * np.sin(x[:, 0]) * w[:, 1]
        return out

    return ModelSpec(
        name="anisotropic-stable",
        alpha=alpha,
        dim=dim,
        horizon=horizon,
        x0=_start(x0, dim),
        direction_modulation=modulation,
        constant_coefficients=swirl == 0.0 or dim == 1,
    )


def build_model(
    name: str,
    alpha: Optional[float] = None,
    dim: int = 1,
    horizon: float = 1.0,
    x0: Optional[Sequence[float]] = None,
    params: Optional[Dict[str, Any]] = None,
) -> ModelSpec:
    """Build a named model family.

    Args:
        name: Family name, one of family_names()
        alpha: Stability index, the family default when None
        dim: Spatial dimension
        horizon: Time horizon T
        x0: Start point, the origin when None
        params: Family-specific parameters

    Returns:
        ModelSpec

    Raises:
        ConfigError: If the family or one of its parameters is unknown
        DomainError: If a parameter is out of range
    """
    if name not in _REGISTRY:
        raise ConfigError(
            f"unknown model family '{name}' (choose from {', '.join(family_names())})",
            "model.name",
        )
    builder = _REGISTRY[name]
    params = dict(params or {})
    accepted = set(inspect.signature(builder).parameters) - {"alpha", "dim", "horizon", "x0"}
    for key in params:
        if key not in accepted:
            raise ConfigError(f"unknown parameter for '{name}'", f"model.params.{key}")
    alpha = _DEFAULT_ALPHA[name] if alpha is None else alpha
    if x0 is not None and len(x0) != dim:
        raise ConfigError(f"x0 has {len(x0)} entries, expected {dim}", "model.x0")
    logger.debug("building %s (alpha=%s, dim=%d) with %s", name, alpha, dim, params)
    return builder(alpha, dim, horizon, x0, **params)


def model_from_config(config: ModelConfig) -> ModelSpec:
    """Build the model described by the model section of an experiment config."""
    return build_model(
        config.name,
        alpha=config.alpha,
        dim=config.dim,
        horizon=config.horizon,
        x0=config.x0,
        params=config.params,
    )


def build_test_function(config: TestFunctionConfig, dim: int) -> TestFunction:
    """Build g from the test_function section of an experiment config.

    Raises:
        ConfigError: If a frequency or coefficient vector has the wrong length
    """
    kind = config.kind
    if kind in ("cosine", "linear"):
        vector = [1.0] + [0.0] * (dim - 1) if config.frequency is None else config.frequency
        if len(vector) != dim:
            raise ConfigError(
                f"has {len(vector)} entries, expected {dim}", "test_function.frequency"
            )
        if kind == "cosine":
            return cosine_test_function(np.asarray(vector, dtype=float), config.phase)
        return linear_test_function(np.asarray(vector, dtype=float), config.value)
    if kind == "weierstrass":
        if config.axis >= dim:
            raise ConfigError(f"axis must be below dim={dim}", "test_function.axis")
        return weierstrass_test_function(
            config.beta, config.amplitude, config.levels, config.axis, dim
        )
    if kind == "quadratic":
        return quadratic_test_function(dim)
    return constant_test_function(config.value)
