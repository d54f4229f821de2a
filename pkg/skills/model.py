"""Declarative SDE model, test functions and assumption checks.

Coefficient callables are vectorized over states:
    drift a:               x (n, d) -> (n, d)
    diffusion b:           x (n, d) -> (n, d, d)
    jump_scale c:          x (n, d) -> (n, d, d)
    direction_modulation:  x (k, d), w (k, d) -> (k,)
None stands for the neutral coefficient (a = 0, b = c = identity, h = 1).
"""

import logging
import math
from typing import Callable, ClassVar, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.stats import qmc

from core.errors import DomainError, LevyMeasureError, ModelValidationError, QuadratureError
from core.models import AlphaRegime, ValidationReport
from skills.levy_component import LevyComponent, region_integral
from skills.quadrature import sphere_grid

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]
MatrixField = Callable[[np.ndarray], np.ndarray]
DirectionModulation = Callable[[np.ndarray, np.ndarray], np.ndarray]

N_PROBES = 256
N_DIRECTIONS = 64
COEFFICIENT_BOUND = 1e6
DET_FLOOR = 1e-10


class ModelSpec(BaseModel):
    """Coefficients, regime and start point of the SDE."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = "custom"
    alpha: float = Field(gt=0.0, le=2.0)
    dim: int = Field(ge=1)
    horizon: float = Field(gt=0.0)
    x0: np.ndarray
    drift: Optional[VectorField] = None
    diffusion: Optional[MatrixField] = None
    jump_scale: Optional[MatrixField] = None
    direction_modulation: Optional[DirectionModulation] = None
    levy: Optional[LevyComponent] = None
    holder_beta: Optional[float] = None
    constant_coefficients: bool = False
    gaussian_small_jumps: bool = False
    cut_eps: Optional[float] = Field(default=None, gt=0.0)
    jump_budget: float = Field(default=1e6, gt=0.0)
    nondegeneracy_mu: float = Field(default=1e-8, gt=0.0)
    probe_radius: float = Field(default=4.0, gt=0.0)

    @field_validator("x0", mode="before")
    @classmethod
    def _as_vector(cls, value: object) -> np.ndarray:
        return np.atleast_1d(np.asarray(value, dtype=float))

    @model_validator(mode="after")
    def _check_x0(self) -> "ModelSpec":
        if self.x0.shape != (self.dim,):
            raise ValueError(f"x0 must have shape ({self.dim},), got {self.x0.shape}")
        return self

    @property
    def regime(self) -> AlphaRegime:
        return AlphaRegime.from_alpha(self.alpha)

    @property
    def is_isotropic(self) -> bool:
        """Whether the stable part can be sampled exactly (h = 1)."""
        return self.direction_modulation is None

    @property
    def additive_noise(self) -> bool:
        """Whether driver increments do not depend on the state."""
        return self.levy is None and (self.alpha == 2.0 or self.is_isotropic)

    def a(self, x: np.ndarray) -> np.ndarray:
        if self.drift is None:
            return np.zeros_like(x)
        return np.asarray(self.drift(x), dtype=float)

    def b(self, x: np.ndarray) -> np.ndarray:
        if self.diffusion is None:
            return np.broadcast_to(np.eye(self.dim), (x.shape[0], self.dim, self.dim))
        return np.asarray(self.diffusion(x), dtype=float)

    def c(self, x: np.ndarray) -> np.ndarray:
        if self.jump_scale is None:
            return np.broadcast_to(np.eye(self.dim), (x.shape[0], self.dim, self.dim))
        return np.asarray(self.jump_scale(x), dtype=float)

    def h(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        if self.direction_modulation is None:
            return np.ones(w.shape[0])
        return np.asarray(self.direction_modulation(x, w), dtype=float)


class TestFunction(BaseModel):
    """Test function g (or f, u) with optional analytic derivatives.

    trig_frequency marks g(x) = cos(xi . x + trig_phase), whose expectation
    under a constant-coefficient process has closed form.
    far_field_mean is the average of g far from any point (0 for oscillating
    functions), used for the generator tail beyond the radial cutoff.
    """

    __test__: ClassVar[bool] = False

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    declared_smoothness: float = Field(gt=0.0)
    closed_form_cf_expectation: bool = False
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    trig_frequency: Optional[np.ndarray] = None
    trig_phase: float = 0.0
    max_frequency: Optional[float] = None
    bounded: bool = True
    far_field_mean: Optional[float] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluate(np.atleast_2d(x)), dtype=float)

    def grad(self, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """Gradient, by central differences when no analytic form is set."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        out = np.empty_like(x)
        for j in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[j] = step
            out[:, j] = (self(x + e) - self(x - e)) / (2.0 * step)
        return out

    def hess(self, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
        """Hessian, by central differences of the gradient when not analytic."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.hessian is not None:
            return np.asarray(self.hessian(x), dtype=float)
        n, d = x.shape
        out = np.empty((n, d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = step
            out[:, :, j] = (self.grad(x + e) - self.grad(x - e)) / (2.0 * step)
        return 0.5 * (out + np.swapaxes(out, 1, 2))


def cosine_test_function(xi: np.ndarray, phase: float = 0.0) -> TestFunction:
    """g(x) = cos(xi . x + phase)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))

    def evaluate(x: np.ndarray) -> np.ndarray:
        return np.cos(x @ xi + phase)

    def gradient(x: np.ndarray) -> np.ndarray:
        return -np.sin(x @ xi + phase)[:, None] * xi

    def hessian(x: np.ndarray) -> np.ndarray:
        return -np.cos(x @ xi + phase)[:, None, None] * np.outer(xi, xi)

    return TestFunction(
        name="cosine",
        evaluate=evaluate,
        declared_smoothness=math.inf,
        closed_form_cf_expectation=True,
        gradient=gradient,
        hessian=hessian,
        trig_frequency=xi,
        trig_phase=phase,
        max_frequency=float(np.abs(xi).max()),
        far_field_mean=0.0,
    )


def linear_test_function(coef: np.ndarray, offset: float = 0.0) -> TestFunction:
    """g(x) = coef . x + offset."""
    coef = np.atleast_1d(np.asarray(coef, dtype=float))
    return TestFunction(
        name="linear",
        evaluate=lambda x: x @ coef + offset,
        declared_smoothness=math.inf,
        gradient=lambda x: np.broadcast_to(coef, x.shape).copy(),
        hessian=lambda x: np.zeros((x.shape[0], coef.size, coef.size)),
        max_frequency=0.0,
        bounded=False,
    )


def quadratic_test_function(dim: int) -> TestFunction:
    """g(x) = |x|^2."""
    return TestFunction(
        name="quadratic",
        evaluate=lambda x: np.sum(x**2, axis=1),
        declared_smoothness=math.inf,
        gradient=lambda x: 2.0 * x,
        hessian=lambda x: np.broadcast_to(2.0 * np.eye(dim), (x.shape[0], dim, dim)).copy(),
        max_frequency=0.0,
        bounded=False,
    )


def constant_test_function(value: float = 1.0) -> TestFunction:
    """g(x) = value."""
    return TestFunction(
        name="constant",
        evaluate=lambda x: np.full(x.shape[0], value),
        declared_smoothness=math.inf,
        gradient=lambda x: np.zeros_like(x),
        hessian=lambda x: np.zeros((x.shape[0], x.shape[1], x.shape[1])),
        max_frequency=0.0,
        far_field_mean=value,
    )


class WeierstrassFunction(BaseModel):
    """offset + amplitude * sum_{k=0}^{levels} 2^(-beta k) cos(2^k x_axis).

    Calling it accepts points of shape (n, d) (coordinate `axis` is used) or
    plain arrays of first-coordinate values.
    """

    model_config = ConfigDict(frozen=True)

    beta: float = Field(gt=0.0)
    amplitude: float
    levels: int = Field(ge=0)
    offset: float = 1.0
    axis: int = Field(default=0, ge=0)

    @property
    def coefficients(self) -> np.ndarray:
        return self.amplitude * 2.0 ** (-self.beta * np.arange(self.levels + 1))

    @property
    def frequencies(self) -> np.ndarray:
        return 2.0 ** np.arange(self.levels + 1)

    @property
    def lower_bound(self) -> float:
        return self.offset - abs(self.amplitude) * float(
            np.sum(2.0 ** (-self.beta * np.arange(self.levels + 1)))
        )

    def _coordinate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x[..., self.axis] if x.ndim >= 2 else x

    def __call__(self, x: np.ndarray) -> np.ndarray:
        t = self._coordinate(x)
        return self.offset + np.cos(np.multiply.outer(t, self.frequencies)) @ self.coefficients

    def derivative(self, x: np.ndarray) -> np.ndarray:
        t = self._coordinate(x)
        return -np.sin(np.multiply.outer(t, self.frequencies)) @ (
            self.coefficients * self.frequencies
        )

    def second_derivative(self, x: np.ndarray) -> np.ndarray:
        t = self._coordinate(x)
        return -np.cos(np.multiply.outer(t, self.frequencies)) @ (
            self.coefficients * self.frequencies**2
        )


def weierstrass_coefficient(beta: float, amplitude: float, levels: int) -> WeierstrassFunction:
    """Positive C^beta coefficient built from dyadic cosine blocks.

    Args:
        beta: Hoelder exponent in (0, 1)
        amplitude: Perturbation size, |amplitude| < 1
        levels: Highest dyadic block, >= 8

    Returns:
        x -> 1 + amplitude * sum_{k<=levels} 2^(-beta k) cos(2^k x_1)

    Raises:
        DomainError: If a parameter is out of range or the function can reach 0
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    if not abs(amplitude) < 1.0:
        raise DomainError(f"|amplitude| must be < 1, got {amplitude}")
    if levels < 8:
        raise DomainError(f"levels must be >= 8, got {levels}")
    func = WeierstrassFunction(beta=beta, amplitude=amplitude, levels=levels)
    if func.lower_bound <= 0.0:
        raise DomainError(
            f"amplitude={amplitude}, beta={beta} lets the coefficient reach "
            f"{func.lower_bound:.4f} <= 0"
        )
    return func


def weierstrass_test_function(
    beta: float, amplitude: float = 1.0, levels: int = 14, axis: int = 0, dim: int = 1
) -> TestFunction:
    """C^beta test function amplitude * sum 2^(-beta k) cos(2^k x_axis)."""
    if beta <= 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    func = WeierstrassFunction(beta=beta, amplitude=amplitude, levels=levels, offset=0.0, axis=axis)

    def gradient(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        out[:, axis] = func.derivative(x)
        return out

    def hessian(x: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[0], dim, dim))
        out[:, axis, axis] = func.second_derivative(x)
        return out

    return TestFunction(
        name="weierstrass",
        evaluate=func,
        declared_smoothness=beta,
        gradient=gradient,
        hessian=hessian,
        max_frequency=float(2.0**levels),
        far_field_mean=0.0,
    )


def _sphere_first_moment(spec: ModelSpec, x: np.ndarray, rtol: float = 1e-6) -> np.ndarray:
    """Integral of h(x, w) w over the sphere, refined until stable."""
    n, d = x.shape
    points = 32
    previous: Optional[np.ndarray] = None
    for _ in range(12):
        grid = sphere_grid(d, points)
        k = grid.nodes.shape[0]
        h = spec.h(np.repeat(x, k, axis=0), np.tile(grid.nodes, (n, 1))).reshape(n, k)
        value = (h * grid.weights) @ grid.nodes
        if d == 1:
            return value
        if previous is not None:
            scale = max(float(np.abs(value).max()), 1.0)
            if float(np.abs(value - previous).max()) <= rtol * scale:
                return value
        previous = value
        points *= 2
    raise QuadratureError("sphere integral of the direction modulation did not converge")


def effective_drift_a_alpha(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Drift a_alpha(x) of the compensated form of the SDE.

    alpha < 1: c/(1-alpha) * int h w dmu + int_{U1} l dpi (no model drift);
    alpha = 1: a + int_{U1} l dpi;
    alpha in (1, 2): a - c/(alpha-1) * int h w dmu;
    alpha = 2: a.

    Args:
        spec: Model
        x: State (d,) or states (n, d)

    Returns:
        Array with the shape of x
    """
    single = np.ndim(x) == 1
    states = np.atleast_2d(np.asarray(x, dtype=float))
    regime = spec.regime
    out = np.zeros_like(states)
    if regime is not AlphaRegime.SUB_ONE:
        out += spec.a(states)

    if regime in (AlphaRegime.SUB_ONE, AlphaRegime.SUPER_ONE) and not spec.is_isotropic:
        moment = _sphere_first_moment(spec, states)
        ball = np.einsum("nij,nj->ni", spec.c(states), moment)
        if regime is AlphaRegime.SUB_ONE:
            out += ball / (1.0 - spec.alpha)
        else:
            out -= ball / (spec.alpha - 1.0)

    if spec.levy is not None and regime in (AlphaRegime.SUB_ONE, AlphaRegime.EQ_ONE):
        out += region_integral(spec.levy, states, 0.0, 1.0)

    return out[0] if single else out


def probe_points(spec: ModelSpec, n: int = N_PROBES) -> np.ndarray:
    """Deterministic Halton probes in a box around x0, with x0 appended."""
    halton = qmc.Halton(d=spec.dim, scramble=False).random(n + 1)[1:]
    box = spec.x0 + spec.probe_radius * (2.0 * halton - 1.0)
    return np.vstack([box, spec.x0[None]])


def validate(spec: ModelSpec) -> ValidationReport:
    """Check boundedness, non-degeneracy, symmetry and Levy moments on probes.

    Args:
        spec: Model

    Returns:
        ValidationReport; passed is True when no issue was found
    """
    report = ValidationReport(model_name=spec.name)
    probes = probe_points(spec)
    report.n_probes = probes.shape[0]
    d = spec.dim
    directions = sphere_grid(d, N_DIRECTIONS).nodes

    # Step 1: boundedness of the coefficients
    fields = {"drift": spec.a(probes)}
    if spec.alpha == 2.0:
        fields["diffusion"] = spec.b(probes)
    else:
        fields["jump_scale"] = spec.c(probes)
    for label, values in fields.items():
        size = np.abs(values).reshape(values.shape[0], -1).max(axis=1)
        bad = ~np.isfinite(size) | (size > COEFFICIENT_BOUND)
        if bad.any():
            i = int(np.argmax(np.where(np.isfinite(size), size, np.inf)))
            report.add_issue("boundedness", f"{label} is not bounded", probes[i], size[i])

    # Step 2: non-degeneracy
    if spec.alpha == 2.0:
        b = spec.b(probes)
        big_b = b @ np.swapaxes(b, 1, 2)
        quad = np.einsum("mi,nij,mj->nm", directions, big_b, directions)
        mu = float(quad.min())
        if not mu >= spec.nondegeneracy_mu:
            i = int(np.unravel_index(np.argmin(quad), quad.shape)[0])
            report.add_issue("nondegeneracy", f"(B xi, xi) = {mu:.3g} < mu", probes[i], mu)
        report.mu = mu
    else:
        c = spec.c(probes)
        det = np.abs(np.linalg.det(c))
        if det.min() < DET_FLOOR:
            i = int(np.argmin(det))
            report.add_issue("det-c", f"|det c(x)| = {det[i]:.3g} vanishes", probes[i], det[i])
        else:
            grid = sphere_grid(d, 4 * N_DIRECTIONS)
            k = grid.nodes.shape[0]
            n = probes.shape[0]
            h = spec.h(np.repeat(probes, k, axis=0), np.tile(grid.nodes, (n, 1))).reshape(n, k)
            if np.any(~np.isfinite(h)) or np.any(h <= 0.0):
                i = int(np.argmin(np.where(np.isfinite(h), h, -np.inf).min(axis=1)))
                report.add_issue("modulation", "h must be finite and positive", probes[i])
            else:
                cw = np.einsum("nij,kj->nki", c, grid.nodes)
                proj = np.abs(cw @ directions.T) ** spec.alpha
                symbol = np.einsum("nkm,nk,k->nm", proj, h**spec.alpha, grid.weights)
                mu = float(symbol.min())
                if not mu >= spec.nondegeneracy_mu:
                    i = int(np.unravel_index(np.argmin(symbol), symbol.shape)[0])
                    report.add_issue(
                        "nondegeneracy", f"angular symbol {mu:.3g} < mu", probes[i], mu
                    )
                report.mu = mu

                # Step 3: symmetry of m_1 at alpha = 1
                if spec.alpha == 1.0 and not spec.is_isotropic:
                    h_flip = spec.h(
                        np.repeat(probes, k, axis=0), -np.tile(grid.nodes, (n, 1))
                    ).reshape(n, k)
                    gap = np.abs(h - h_flip).max(axis=1)
                    if gap.max() > 1e-10 * max(1.0, float(np.abs(h).max())):
                        i = int(np.argmax(gap))
                        report.add_issue(
                            "m1-symmetry", "h(x, -w) != h(x, w) at alpha = 1", probes[i], gap[i]
                        )

    # Step 4: Levy moments
    if spec.levy is not None:
        levy = spec.levy
        try:
            large = levy.large_mass
            if not math.isfinite(large):
                report.add_issue("levy-mass", "pi(U1^c) is not finite", value=large)
        except LevyMeasureError as e:
            report.add_issue("levy-mass", str(e))
        sample = probes[-9:]
        alpha = spec.alpha

        def moment(marks: np.ndarray) -> np.ndarray:
            m = marks.size
            values = levy.jumps(np.tile(sample, (m, 1)), np.repeat(marks, sample.shape[0]))
            return (np.linalg.norm(values, axis=1) ** alpha).reshape(m, sample.shape[0])

        try:
            moments = np.asarray(levy.measure.integrate(moment, 0.0, 1.0))
            if not np.all(np.isfinite(moments)):
                raise LevyMeasureError("alpha-moment over U1 is not finite")
        except LevyMeasureError as e:
            report.add_issue("levy-moment", str(e))

    logger.debug("validated %s: %d issue(s)", spec.name, len(report.issues))
    return report


def validate_or_raise(spec: ModelSpec) -> ModelSpec:
    """Validate and return the model, raising on any failed assumption."""
    report = validate(spec)
    if not report.passed:
        raise ModelValidationError(report)
    return spec
