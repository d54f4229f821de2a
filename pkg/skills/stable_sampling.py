"""Samplers for the alpha-stable driving noise.

Unit laws are normalized to the characteristic function exp(-|xi|^alpha).
The driver with Levy measure dy/|y|^(d+alpha) is reached through
scale_to_driver_intensity, the single conversion point between the two.
"""

import logging
import math
import warnings
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np

from core.errors import DomainError, JumpBudgetError, TruncationWarning
from core.models import AlphaRegime, StableLaw
from core.rng import RngLike, as_generator
from skills.quadrature import (
    SphereGrid,
    sphere_area,
    sphere_grid,
    sphere_moment,
    stable_radial_constant,
)

logger = logging.getLogger(__name__)

DEFAULT_JUMP_BUDGET = 1e6
# thinning bound over the grid maximum of the directional density
ENVELOPE_MARGIN = 1.25

Modulation = Callable[[np.ndarray, np.ndarray], np.ndarray]


class StableIncrement(NamedTuple):
    """Truncated stable increments for a batch of frozen states."""

    jump_sum: np.ndarray
    compensator: np.ndarray
    counts: np.ndarray


def _check_alpha(alpha: float, upper_open: bool = False) -> None:
    upper_ok = alpha < 2.0 if upper_open else alpha <= 2.0
    if not (alpha > 0.0 and upper_ok):
        bracket = ")" if upper_open else "]"
        raise DomainError(f"alpha must lie in (0, 2{bracket}, got {alpha}")


def cms_standard_stable(
    alpha: float, rng: RngLike, size: Optional[Union[int, tuple]] = None
) -> Union[float, np.ndarray]:
    """Draw symmetric stable variates with characteristic function exp(-|xi|^alpha).

    Chambers-Mallows-Stuck construction. alpha = 2 returns N(0, 2) draws.

    Args:
        alpha: Stability index in (0, 2]
        rng: Random stream or generator
        size: Output shape, None for a scalar

    Returns:
        One draw or an array of draws

    Raises:
        DomainError: If alpha is outside (0, 2]
    """
    _check_alpha(alpha)
    gen = as_generator(rng)
    if alpha == 2.0:
        return math.sqrt(2.0) * gen.standard_normal(size)

    u = gen.uniform(-math.pi / 2.0, math.pi / 2.0, size)
    w = gen.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(u)
    return (
        np.sin(alpha * u)
        / np.cos(u) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)
    )


def positive_stable(
    alpha_half: float, rng: RngLike, size: Optional[Union[int, tuple]] = None
) -> Union[float, np.ndarray]:
    """Draw positive stable variates with Laplace transform exp(-lambda^alpha_half).

    Kanter's representation.

    Args:
        alpha_half: Index in (0, 1)
        rng: Random stream or generator
        size: Output shape, None for a scalar

    Returns:
        Strictly positive draw(s)

    Raises:
        DomainError: If alpha_half is outside (0, 1)
    """
    if not 0.0 < alpha_half < 1.0:
        raise DomainError(f"alpha_half must lie in (0, 1), got {alpha_half}")
    gen = as_generator(rng)
    a = alpha_half
    u = math.pi * (1.0 - gen.random(size))
    e = gen.standard_exponential(size)
    kernel = (np.sin(a * u) ** a * np.sin((1.0 - a) * u) ** (1.0 - a) / np.sin(u)) ** (
        1.0 / (1.0 - a)
    )
    return (kernel / e) ** ((1.0 - a) / a)


def isotropic_stable_vector(
    alpha: float, dim: int, rng: RngLike, size: Optional[int] = None
) -> np.ndarray:
    """Draw isotropic stable vectors with characteristic function exp(-|xi|^alpha).

    Sub-Gaussian construction sqrt(2 S) G with S positive (alpha/2)-stable.

    Args:
        alpha: Stability index in (0, 2]
        dim: Spatial dimension
        rng: Random stream or generator
        size: Number of vectors, None for a single vector

    Returns:
        Array of shape (dim,) or (size, dim)
    """
    _check_alpha(alpha)
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    gen = as_generator(rng)
    n = 1 if size is None else size
    if alpha == 2.0:
        out = math.sqrt(2.0) * gen.standard_normal((n, dim))
    else:
        s = positive_stable(alpha / 2.0, gen, size=n)
        out = np.sqrt(2.0 * s)[:, None] * gen.standard_normal((n, dim))
    return out[0] if size is None else out


def scale_to_driver_intensity(alpha: float, dim: int) -> float:
    """Constant K(d, alpha) of the driver with Levy measure dy/|y|^(d+alpha).

    The time-t increment of that driver equals (K t)^(1/alpha) times a unit
    isotropic_stable_vector draw.

    Args:
        alpha: Index in (0, 2)
        dim: Spatial dimension

    Returns:
        K(d, alpha) > 0
    """
    _check_alpha(alpha, upper_open=True)
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    return stable_radial_constant(alpha) * sphere_moment(alpha, dim)


def isotropic_driver_increment(
    alpha: float,
    dim: int,
    dt: Union[float, np.ndarray],
    rng: RngLike,
    size: Optional[int] = None,
) -> np.ndarray:
    """Exact time-dt increment of the isotropic driver dy/|y|^(d+alpha).

    dt may be an array of shape (size,) holding one step length per row.
    """
    scale = (scale_to_driver_intensity(alpha, dim) * np.asarray(dt, dtype=float)) ** (1.0 / alpha)
    draws = isotropic_stable_vector(alpha, dim, rng, size=size)
    return (scale[:, None] if scale.ndim else scale) * draws


def default_cut_eps(dt: float, alpha: float) -> float:
    """Default small-jump truncation radius dt^(1/alpha)."""
    return dt ** (1.0 / alpha)


def sample_sphere_directions(dim: int, rng: RngLike, size: int) -> np.ndarray:
    """Uniform directions on S^(dim-1), shape (size, dim)."""
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    gen = as_generator(rng)
    g = gen.standard_normal((size, dim))
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    return g / np.where(norm > 0.0, norm, 1.0)


def jump_intensity(law: StableLaw, eps: Optional[float] = None, sphere_points: int = 256) -> float:
    """Rate Lambda(eps) of jumps larger than eps.

    Args:
        law: Stable law (its directional density weights the sphere)
        eps: Truncation radius, defaults to law.cut_eps
        sphere_points: Sphere quadrature size for non-constant densities

    Returns:
        eps^(-alpha) / alpha times the integral of the density over the sphere
    """
    eps = law.cut_eps if eps is None else eps
    grid = sphere_grid(law.dim, sphere_points)
    mass = float(law.density(grid.nodes) @ grid.weights)
    return eps ** (-law.alpha) * mass / law.alpha


class JumpCandidates(NamedTuple):
    """Jumps of the dominating law bound * rho^(-1-alpha) d rho dw above the cut.

    slots names the row (a state, or a step of one path) each candidate
    belongs to; levels are the uniform thinning levels.
    """

    slots: np.ndarray
    directions: np.ndarray
    radii: np.ndarray
    levels: np.ndarray


def candidate_rate(
    alpha: float, dim: int, bound: Union[float, np.ndarray], dt: np.ndarray, eps: np.ndarray
) -> np.ndarray:
    """Expected candidate count dt * bound * |S| * eps^(-alpha) / alpha per row."""
    return dt * bound * sphere_area(dim) * eps ** (-alpha) / alpha


def jump_candidates(
    alpha: float,
    dim: int,
    rates: np.ndarray,
    eps: np.ndarray,
    rng: RngLike,
    jump_budget: float = DEFAULT_JUMP_BUDGET,
) -> JumpCandidates:
    """Draw Poisson candidates for each row with uniform directions and Pareto radii.

    Args:
        alpha: Stability index in (0, 2)
        dim: Spatial dimension
        rates: Expected candidate count per row, shape (r,)
        eps: Truncation radius per row, shape (r,)
        rng: Random stream or generator
        jump_budget: Maximal expected count per row

    Returns:
        JumpCandidates sorted by slot

    Raises:
        JumpBudgetError: If a rate exceeds the budget
    """
    rates = np.asarray(rates, dtype=float)
    worst = float(rates.max()) if rates.size else 0.0
    if worst > jump_budget:
        raise JumpBudgetError(
            f"expected {worst:.3g} jumps per step exceeds the budget {jump_budget:.3g} "
            f"(cut_eps={float(np.min(eps)):.3g})"
        )
    gen = as_generator(rng)
    counts = gen.poisson(rates)
    slots = np.repeat(np.arange(rates.size), counts)
    directions = sample_sphere_directions(dim, gen, slots.size)
    radii = np.asarray(eps, dtype=float)[slots] * (1.0 - gen.random(slots.size)) ** (-1.0 / alpha)
    levels = gen.random(slots.size)
    return JumpCandidates(slots=slots, directions=directions, radii=radii, levels=levels)


def _effective_density(
    law: StableLaw, modulation: Optional[Modulation], w: np.ndarray, owners: np.ndarray
) -> np.ndarray:
    m = law.density(w)
    if modulation is not None:
        h = np.asarray(modulation(w, owners), dtype=float)
        if np.any(~np.isfinite(h)) or np.any(h <= 0.0):
            raise DomainError("direction modulation must be finite and positive")
        m = m * h**law.alpha
    return m


def _gaussian_small_jumps(
    m: np.ndarray,
    grid: SphereGrid,
    linear_maps: np.ndarray,
    eps: float,
    alpha: float,
    dt: float,
    normals: np.ndarray,
) -> np.ndarray:
    """Covariance-matched Gaussian for the jumps below eps."""
    w = grid.nodes
    second = np.einsum("nk,ki,kj->nij", m * grid.weights, w, w)
    cov = dt * eps ** (2.0 - alpha) / (2.0 - alpha) * linear_maps @ second @ np.swapaxes(
        linear_maps, 1, 2
    )
    vals, vecs = np.linalg.eigh(cov)
    return np.einsum("nij,nj->ni", vecs, np.sqrt(np.clip(vals, 0.0, None)) * normals)


def grid_density(
    law: StableLaw, modulation: Optional[Modulation], n: int, sphere_points: int = 64
) -> Tuple[SphereGrid, np.ndarray]:
    """Effective directional density of n frozen states on a sphere grid.

    Returns:
        (grid, m) with m of shape (n, k)
    """
    grid = sphere_grid(law.dim, sphere_points)
    k = grid.nodes.shape[0]
    owners = np.repeat(np.arange(n), k)
    m = _effective_density(law, modulation, np.tile(grid.nodes, (n, 1)), owners)
    return grid, m.reshape(n, k)


def apply_candidates(
    law: StableLaw,
    modulation: Optional[Modulation],
    linear_maps: np.ndarray,
    dt: float,
    alpha_regime: Union[AlphaRegime, str],
    candidates: JumpCandidates,
    bound: Union[float, np.ndarray],
    normals: Optional[np.ndarray] = None,
    sphere_points: int = 64,
) -> StableIncrement:
    """Thin pre-drawn candidates to the effective density of frozen states.

    A candidate of state i survives when level * bound <= m_i(direction),
    which leaves a Poisson measure with intensity m_i rho^(-1-alpha).

    Args:
        law: Stable law; cut_eps is the truncation radius
        modulation: Frozen h as (w (k, d), owner index (k,)) -> (k,), None for h = 1
        linear_maps: Frozen c per state, shape (n, d, d)
        dt: Time step
        alpha_regime: sub-1, eq-1 or super-1
        candidates: Candidates whose slots index the states
        bound: Thinning bound, scalar or one value per state
        normals: Standard normals of shape (n, d) for Gaussian small jumps, None
            to drop the jumps below cut_eps
        sphere_points: Sphere quadrature size for the compensator

    Returns:
        StableIncrement with jump_sum, compensator (a displacement that already
        includes dt) and per-state counts of accepted jumps

    Raises:
        DomainError: On invalid parameters
    """
    regime = AlphaRegime(alpha_regime)
    if regime is AlphaRegime.GAUSSIAN:
        raise DomainError("the truncated stable sampler needs alpha < 2")
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    alpha, eps = law.alpha, law.cut_eps
    linear_maps = np.asarray(linear_maps, dtype=float)
    n, d = linear_maps.shape[0], law.dim
    grid, m = grid_density(law, modulation, n, sphere_points)

    # Step 1: thinning
    owners = candidates.slots
    level = np.broadcast_to(np.asarray(bound, dtype=float), (n,))[owners]
    value = _effective_density(law, modulation, candidates.directions, owners)
    if np.any(value > level):
        warnings.warn(
            "directional density exceeds its thinning bound; jump directions are biased",
            TruncationWarning,
            stacklevel=2,
        )
    keep = candidates.levels * level <= value
    owners = owners[keep]
    steps = candidates.radii[keep][:, None] * candidates.directions[keep]
    jumps = np.einsum("kij,kj->ki", linear_maps[owners], steps)
    jump_sum = np.zeros((n, d))
    for j in range(d):
        jump_sum[:, j] = np.bincount(owners, weights=jumps[:, j], minlength=n)
    counts = np.bincount(owners, minlength=n)
    logger.debug("stable sampler: kept %d of %d candidates", owners.size, keep.size)

    # Step 2: compensator per regime
    first_moment = (m * grid.weights) @ grid.nodes
    if regime is AlphaRegime.SUPER_ONE:
        drift = -(eps ** (1.0 - alpha)) / (alpha - 1.0) * first_moment
    elif regime is AlphaRegime.EQ_ONE:
        h_ball = m ** (1.0 / alpha)
        log_part = np.log(np.maximum(h_ball / eps, 1.0))
        drift = -(m * log_part * grid.weights) @ grid.nodes
    elif normals is not None:
        drift = eps ** (1.0 - alpha) / (1.0 - alpha) * first_moment
    else:
        drift = np.zeros((n, d))
    compensator = dt * np.einsum("nij,nj->ni", linear_maps, drift)

    if normals is not None:
        jump_sum = jump_sum + _gaussian_small_jumps(m, grid, linear_maps, eps, alpha, dt, normals)

    return StableIncrement(jump_sum=jump_sum, compensator=compensator, counts=counts)


def anisotropic_stable_batch(
    law: StableLaw,
    modulation: Optional[Modulation],
    linear_maps: np.ndarray,
    dt: float,
    alpha_regime: Union[AlphaRegime, str],
    rng: RngLike,
    gaussian_small_jumps: bool = False,
    jump_budget: float = DEFAULT_JUMP_BUDGET,
    sphere_points: int = 64,
) -> StableIncrement:
    """Truncated stable increments for a batch of frozen states.

    Jumps rho*w have intensity m(w) rho^(-1-alpha) d rho mu(dw) with the
    effective density m = law density * h^alpha. Jumps with rho > eps form a
    compound Poisson sum mapped through the frozen linear map; each state is
    thinned against its own grid maximum of m with a margin.

    Args:
        law: Stable law; cut_eps is the truncation radius
        modulation: Frozen h as (w (k, d), owner index (k,)) -> (k,), None for h = 1
        linear_maps: Frozen c per state, shape (n, d, d)
        dt: Time step
        alpha_regime: sub-1, eq-1 or super-1
        rng: Random stream or generator
        gaussian_small_jumps: Replace jumps below eps by a matched Gaussian
        jump_budget: Maximal expected candidate count per state and step
        sphere_points: Sphere quadrature size for the bound and the compensator

    Returns:
        StableIncrement with jump_sum, compensator and per-state jump counts

    Raises:
        DomainError: On invalid parameters
        JumpBudgetError: If the expected count exceeds the budget
    """
    if AlphaRegime(alpha_regime) is AlphaRegime.GAUSSIAN:
        raise DomainError("the truncated stable sampler needs alpha < 2")
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    n = np.asarray(linear_maps).shape[0]
    gen = as_generator(rng)
    _, m = grid_density(law, modulation, n, sphere_points)
    bound = ENVELOPE_MARGIN * m.max(axis=1)
    eps = np.full(n, law.cut_eps)
    rates = candidate_rate(law.alpha, law.dim, bound, np.full(n, dt), eps)
    candidates = jump_candidates(law.alpha, law.dim, rates, eps, gen, jump_budget)
    normals = gen.standard_normal((n, law.dim)) if gaussian_small_jumps else None
    return apply_candidates(
        law, modulation, linear_maps, dt, alpha_regime, candidates, bound, normals, sphere_points
    )


def anisotropic_stable_increment(
    law: StableLaw,
    modulation: Optional[Callable[[np.ndarray], np.ndarray]],
    linear_map: np.ndarray,
    dt: float,
    alpha_regime: Union[AlphaRegime, str],
    rng: RngLike,
    gaussian_small_jumps: bool = False,
    jump_budget: float = DEFAULT_JUMP_BUDGET,
) -> tuple[np.ndarray, np.ndarray]:
    """Truncated stable increment for one frozen state.

    Args:
        law: Stable law
        modulation: Frozen h as w (k, d) -> (k,), None for h = 1
        linear_map: Frozen c, shape (d, d)
        dt: Time step
        alpha_regime: sub-1, eq-1 or super-1
        rng: Random stream or generator
        gaussian_small_jumps: Replace jumps below cut_eps by a matched Gaussian
        jump_budget: Maximal expected jump count per step

    Returns:
        (jump_sum, compensator), each of shape (d,)
    """
    batch_modulation = None
    if modulation is not None:
        batch_modulation = lambda w, owners: modulation(w)  # noqa: E731
    result = anisotropic_stable_batch(
        law,
        batch_modulation,
        np.asarray(linear_map, dtype=float)[None],
        dt,
        alpha_regime,
        rng,
        gaussian_small_jumps=gaussian_small_jumps,
        jump_budget=jump_budget,
    )
    return result.jump_sum[0], result.compensator[0]


def empirical_characteristic_function(samples: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Sample mean of exp(i xi . X) for each row xi of freqs.

    Args:
        samples: Draws of shape (n,) or (n, d)
        freqs: Frequencies of shape (m,) or (m, d)

    Returns:
        Complex array of shape (m,)
    """
    x = np.asarray(samples, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    xi = np.asarray(freqs, dtype=float)
    xi = xi[:, None] if xi.ndim == 1 else xi
    return np.exp(1j * (x @ xi.T)).mean(axis=0)


def probe_frequencies(dim: int, n: int = 8) -> np.ndarray:
    """Deterministic probe frequencies with radii between 0.25 and 3.

    Directions turn by pi / n in the (x1, x2) plane.
    """
    radii = np.geomspace(0.25, 3.0, n)
    out = np.zeros((n, dim))
    angles = np.pi * np.arange(n) / n
    out[:, 0] = radii * np.cos(angles) if dim > 1 else radii
    if dim > 1:
        out[:, 1] = radii * np.sin(angles)
    return out
