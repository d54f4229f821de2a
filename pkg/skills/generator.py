"""Generator of the SDE on test functions, mollification and Dynkin residuals.

With y = rho w the stable part of the generator reads

    int_S mu(dw) int_0^inf [u(x + rho v) - u(x) - chi(rho) rho (grad u, v)] rho^(-1-alpha) d rho

where v = c(x) h(x, w) w and chi = 1{rho <= 1} at alpha = 1, 1 for alpha in
(1, 2) and 0 for alpha < 1. The drift (a, grad u) enters for alpha >= 1.
"""

import logging
import math
import warnings
from typing import Callable, Optional, Tuple

import numpy as np

from core.errors import DomainError, GeneratorConvergenceError, TruncationWarning
from core.models import McEstimate, QuadratureSpec, RecordMode
from skills.euler import simulate_batch, uniform_grid
from skills.model import ModelSpec, TestFunction
from skills.quadrature import (
    SphereGrid,
    aligned_sphere_grid,
    gauss_jacobi_power,
    gauss_legendre,
    sphere_grid,
)

logger = logging.getLogger(__name__)

# points evaluated per vectorized call of u
_CHUNK = 1 << 18
MAX_MOLLIFIER_NODES = 1 << 20
DYNKIN_SUBSTEPS = 64


def _composite_rule(edges: np.ndarray, n_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(n_nodes, lo, hi)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _direction_grid(
    spec: ModelSpec, u: TestFunction, x: np.ndarray, quad: QuadratureSpec
) -> SphereGrid:
    if u.trig_frequency is not None and spec.dim in (2, 3):
        c = spec.c(x[None])[0]
        n_nodes = max(4, quad.sphere_points // 8)
        return aligned_sphere_grid(
            spec.dim, c.T @ u.trig_frequency, n_panels=12, n_nodes=n_nodes
        )
    return sphere_grid(spec.dim, quad.sphere_points)


def _difference_integral(
    u: TestFunction,
    x: np.ndarray,
    v: np.ndarray,
    rho: np.ndarray,
    weights: np.ndarray,
    chi: float,
    ux: float,
    slope: np.ndarray,
) -> np.ndarray:
    """Per direction k: sum_j weights_j [u(x + rho_j v_k) - u(x) - chi rho_j slope_k]."""
    k, d = v.shape
    out = np.zeros(k)
    chunk = max(1, _CHUNK // k)
    for start in range(0, rho.size, chunk):
        r = rho[start : start + chunk]
        points = x + r[:, None, None] * v[None]
        values = u(points.reshape(-1, d)).reshape(r.size, k)
        diff = values - ux - chi * r[:, None] * slope[None, :]
        out += weights[start : start + chunk] @ diff
    return out


def _stable_part(spec: ModelSpec, u: TestFunction, x: np.ndarray, quad: QuadratureSpec) -> float:
    alpha, d = spec.alpha, spec.dim
    grid = _direction_grid(spec, u, x, quad)
    k = grid.nodes.shape[0]
    state = x[None]
    h = spec.h(np.repeat(state, k, axis=0), grid.nodes)
    v = (h[:, None] * grid.nodes) @ spec.c(state)[0].T
    ux = float(u(state)[0])
    slope = v @ u.grad(state)[0]
    chi_inner = 0.0 if alpha < 1.0 else 1.0
    chi_outer = 1.0 if alpha > 1.0 else 0.0

    # Step 1: core [0, r0], second-order Taylor remainder at the midpoint
    rho, w = gauss_jacobi_power(quad.core_nodes, quad.r0, 1.0 - alpha)
    midpoints = x + 0.5 * rho[:, None, None] * v[None]
    hess = u.hess(midpoints.reshape(-1, d)).reshape(rho.size, k, d, d)
    core = 0.5 * w @ np.einsum("kd,mkde,ke->mk", v, hess, v)
    if alpha < 1.0:
        core = core + slope * quad.r0 ** (1.0 - alpha) / (1.0 - alpha)

    # Step 2: shell [r0, 1] on log-spaced panels
    log_edges = np.linspace(math.log(quad.r0), 0.0, quad.shell_panels + 1)
    s, ws = _composite_rule(log_edges, quad.shell_nodes)
    rho = np.exp(s)
    shell = _difference_integral(u, x, v, rho, ws * rho ** (-alpha), chi_inner, ux, slope)

    # Step 3: tail [1, r_max], panels narrow enough to follow oscillations
    width = quad.tail_panel_width
    if u.max_frequency:
        reach = float(np.linalg.norm(v, axis=1).max()) * math.sqrt(d) * u.max_frequency
        width = min(width, 2.0 / reach)
    n_panels = int(math.ceil((quad.r_max - 1.0) / width))
    rho, wt = _composite_rule(np.linspace(1.0, quad.r_max, n_panels + 1), quad.tail_nodes)
    tail = _difference_integral(u, x, v, rho, wt * rho ** (-1.0 - alpha), chi_outer, ux, slope)

    # Step 4: analytic remainder beyond r_max
    beyond = np.zeros(k)
    if u.bounded:
        mean = u.far_field_mean if u.far_field_mean is not None else 0.0
        beyond = beyond - (ux - mean) * quad.r_max ** (-alpha) / alpha
        if alpha > 1.0:
            beyond = beyond - slope * quad.r_max ** (1.0 - alpha) / (alpha - 1.0)
        logger.debug(
            "generator tail cut at r_max=%g, dropped oscillating part <= %.3e",
            quad.r_max,
            2.0 * abs(ux) * float(grid.weights.sum()) * quad.r_max ** (-alpha) / alpha,
        )

    return float(grid.weights @ (core + shell + tail + beyond))


def _levy_part(spec: ModelSpec, u: TestFunction, x: np.ndarray) -> float:
    comp = spec.levy
    if comp is None:
        return 0.0
    state = x[None]
    ux = float(u(state)[0])
    grad = u.grad(state)[0]
    compensate = spec.alpha > 1.0

    def large(marks: np.ndarray) -> np.ndarray:
        jumps = comp.jumps(np.repeat(state, marks.size, axis=0), marks)
        return u(state + jumps) - ux

    def small(marks: np.ndarray) -> np.ndarray:
        jumps = comp.jumps(np.repeat(state, marks.size, axis=0), marks)
        out = u(state + jumps) - ux
        if compensate:
            out = out - jumps @ grad
        return out

    value = comp.measure.integrate(large, 1.0, math.inf) + comp.measure.integrate(small, 0.0, 1.0)
    return float(value)


def _generator_once(
    spec: ModelSpec, u: TestFunction, x: np.ndarray, quad: QuadratureSpec
) -> float:
    state = x[None]
    total = 0.0
    if spec.alpha >= 1.0:
        total += float(spec.a(state)[0] @ u.grad(state)[0])
    if spec.alpha == 2.0:
        b = spec.b(state)[0]
        total += 0.5 * float(np.sum((b @ b.T) * u.hess(state)[0]))
    else:
        total += _stable_part(spec, u, x, quad)
    return total


def apply_generator(
    spec: ModelSpec,
    u: TestFunction,
    x: np.ndarray,
    quad: Optional[QuadratureSpec] = None,
) -> float:
    """Evaluate the generator of the SDE on u at x.

    Args:
        spec: Model
        u: Test function with two continuous derivatives
        x: Point of shape (d,)
        quad: Quadrature settings, defaults to QuadratureSpec()

    Returns:
        (A + B) u (x)

    Raises:
        GeneratorConvergenceError: If the result and its coarsened counterpart
            differ by more than atol + rtol * |result|
    """
    quad = quad or QuadratureSpec()
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    levy = _levy_part(spec, u, x)
    value = _generator_once(spec, u, x, quad) + levy
    if spec.alpha < 2.0:
        coarse = _generator_once(spec, u, x, quad.coarsened()) + levy
        residual = abs(value - coarse)
        if residual > quad.atol + quad.rtol * abs(value):
            raise GeneratorConvergenceError(
                f"generator of {u.name} at x={x.tolist()} did not converge", residual
            )
    return value


def _bump_derivatives(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bump w, its gradient and Hessian at nodes z of shape (m, d)."""
    d = z.shape[1]
    s = 1.0 - np.sum(z**2, axis=1)
    inside = s > 0.0
    w = np.zeros(z.shape[0])
    w[inside] = np.exp(-1.0 / s[inside])
    safe = np.where(inside, s, 1.0)
    grad = (-2.0 * w / safe**2)[:, None] * z
    outer = np.einsum("mi,mj->mij", z, z)
    hess = (w / safe**2)[:, None, None] * (-2.0 * np.eye(d)) + (
        w * (4.0 / safe**4 - 8.0 / safe**3)
    )[:, None, None] * outer
    return w, grad, hess


def mollify(f: TestFunction, eps: float, dim: int = 1) -> TestFunction:
    """Convolve f with the scaled bump kernel w_eps(x) = eps^(-d) w(x / eps).

    w is proportional to exp(-1 / (1 - |x|^2)) on the unit ball, normalized
    on the quadrature nodes so that constants and linear functions are
    reproduced exactly. Derivatives of order k use the analytic derivatives of
    f when f declares smoothness >= k, and differentiate the kernel otherwise.

    Args:
        f: Bounded test function
        eps: Radius in (0, 1)
        dim: Spatial dimension of the arguments

    Returns:
        TestFunction f^eps with analytic gradient and Hessian
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    per_axis = 32 + int(math.ceil(3.0 * (f.max_frequency or 0.0) * eps))
    if per_axis**dim > MAX_MOLLIFIER_NODES:
        capped = int(MAX_MOLLIFIER_NODES ** (1.0 / dim))
        warnings.warn(
            f"mollifier nodes capped at {capped} per axis (needed {per_axis})",
            TruncationWarning,
            stacklevel=2,
        )
        per_axis = capped
    t, wt = gauss_legendre(per_axis, -1.0, 1.0)
    mesh = np.meshgrid(*([t] * dim), indexing="ij")
    z = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.ones(1)
    for _ in range(dim):
        weights = np.multiply.outer(weights, wt).ravel()
    kernel, kernel_grad, kernel_hess = _bump_derivatives(z)
    mass = float(weights @ kernel)
    keep = kernel > 0.0
    z, weights = z[keep], weights[keep] / mass
    kernel, kernel_grad, kernel_hess = kernel[keep], kernel_grad[keep], kernel_hess[keep]

    def shifted(x: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        points = (x[:, None, :] - eps * z[None]).reshape(-1, dim)
        values = np.asarray(fn(points), dtype=float)
        return values.reshape((x.shape[0], z.shape[0]) + values.shape[1:])

    def samples(x: np.ndarray) -> np.ndarray:
        return shifted(x, f)

    def evaluate(x: np.ndarray) -> np.ndarray:
        return samples(x) @ (weights * kernel)

    def gradient(x: np.ndarray) -> np.ndarray:
        if f.gradient is not None and f.declared_smoothness >= 1.0:
            return np.einsum("nmi,m->ni", shifted(x, f.gradient), weights * kernel)
        return samples(x) @ (weights[:, None] * kernel_grad) / eps

    def hessian(x: np.ndarray) -> np.ndarray:
        if f.hessian is not None and f.declared_smoothness >= 2.0:
            return np.einsum("nmij,m->nij", shifted(x, f.hessian), weights * kernel)
        return np.einsum("nm,mij->nij", samples(x), weights[:, None, None] * kernel_hess) / eps**2

    return TestFunction(
        name=f"{f.name}-mollified",
        evaluate=evaluate,
        declared_smoothness=math.inf,
        gradient=gradient,
        hessian=hessian,
        max_frequency=f.max_frequency,
        bounded=f.bounded,
        far_field_mean=f.far_field_mean,
    )


def dynkin_residual(
    spec: ModelSpec,
    u: TestFunction,
    x: np.ndarray,
    h: float,
    n_paths: int,
    seed: int,
    quad: Optional[QuadratureSpec] = None,
    workers: int = 1,
) -> McEstimate:
    """Estimate (E u(X_h) - u(x)) / h - (A + B) u(x).

    X_h is approximated by Euler paths from x on a grid of step h / 64.

    Args:
        spec: Model
        u: Smooth test function
        x: Start point (d,)
        h: Small time in (0, T]
        n_paths: Monte-Carlo paths
        seed: Master seed
        quad: Generator quadrature settings
        workers: Parallel workers

    Returns:
        McEstimate of the residual
    """
    if not 0.0 < h <= spec.horizon:
        raise DomainError(f"h must lie in (0, {spec.horizon}], got {h}")
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    local = spec.model_copy(update={"x0": x, "horizon": h})
    batch = simulate_batch(
        local, uniform_grid(h, DYNKIN_SUBSTEPS), n_paths, seed, workers, record=RecordMode.ENDPOINTS
    )
    generator_value = apply_generator(spec, u, x, quad)
    increments = (u(batch.terminal) - float(u(x[None])[0])) / h
    return McEstimate.from_samples(increments - generator_value)
