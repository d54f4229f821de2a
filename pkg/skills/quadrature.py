"""Quadrature rules shared by the samplers, the generator and the oracle."""

import math
from typing import NamedTuple, Tuple

import numpy as np
from scipy import special, stats
from scipy.stats import qmc

from core.errors import DomainError

_SOBOL_SEED = 20240611


class SphereGrid(NamedTuple):
    """Nodes on S^{d-1} (shape (k, d)) with surface weights summing to the area."""

    nodes: np.ndarray
    weights: np.ndarray


def gauss_legendre(n: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule mapped to [a, b]."""
    x, w = special.roots_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gauss_jacobi_power(n: int, b: float, power: float) -> Tuple[np.ndarray, np.ndarray]:
    """Rule for integrals of rho^power * f(rho) over [0, b].

    Args:
        n: Number of nodes
        b: Right endpoint
        power: Exponent of the weight, > -1

    Returns:
        (nodes, weights) such that sum(weights * f(nodes)) approximates the integral
    """
    # weight (1 - t)^0 (1 + t)^power on [-1, 1]
    t, w = special.roots_jacobi(n, 0.0, power)
    scale = 0.5 * b
    return scale * (t + 1.0), w * scale ** (power + 1.0)


def graded_rule(
    a: float,
    b: float,
    n_panels: int,
    n_nodes: int,
    toward: str = "a",
    ratio: float = 0.25,
) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule with panels shrinking geometrically.

    Suited to integrands with an integrable singularity at one endpoint.

    Args:
        a: Left endpoint
        b: Right endpoint
        n_panels: Number of panels
        n_nodes: Nodes per panel
        toward: Endpoint ("a" or "b") the panels accumulate at
        ratio: Width ratio between consecutive panels

    Returns:
        (nodes, weights)
    """
    length = b - a
    # distances from the singular endpoint, largest first
    dist = length * ratio ** np.arange(n_panels)
    edges = np.concatenate([dist, [0.0]])
    nodes, weights = [], []
    for far, near in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(n_nodes, near, far)
        nodes.append(x)
        weights.append(w)
    dist_nodes = np.concatenate(nodes)
    all_weights = np.concatenate(weights)
    if toward == "a":
        return a + dist_nodes, all_weights
    return b - dist_nodes, all_weights


def sphere_area(dim: int) -> float:
    """Surface measure of S^{dim-1} (2 for dim = 1)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def sphere_moment(alpha: float, dim: int) -> float:
    """Closed form of the integral of |w_1|^alpha over S^{dim-1}."""
    return (
        2.0
        * math.pi ** ((dim - 1) / 2.0)
        * math.gamma((alpha + 1.0) / 2.0)
        / math.gamma((dim + alpha) / 2.0)
    )


def stable_radial_constant(alpha: float) -> float:
    """Integral of (1 - cos t) t^(-1-alpha) over (0, inf).

    Args:
        alpha: Index in (0, 2)

    Returns:
        Positive constant, pi/2 at alpha = 1
    """
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    if alpha == 1.0:
        return math.pi / 2.0
    return math.gamma(2.0 - alpha) * math.cos(math.pi * alpha / 2.0) / (alpha * (1.0 - alpha))


def sphere_grid(dim: int, n: int = 64) -> SphereGrid:
    """Antipodally symmetric quadrature grid on the unit sphere.

    Args:
        dim: Ambient dimension
        n: Target number of nodes (exact for dim = 2)

    Returns:
        SphereGrid whose weights sum to sphere_area(dim)
    """
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    if dim == 1:
        return SphereGrid(np.array([[1.0], [-1.0]]), np.array([1.0, 1.0]))

    if dim == 2:
        n = max(4, n + (n % 2))
        theta = 2.0 * math.pi * (np.arange(n) + 0.5) / n
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        return SphereGrid(nodes, np.full(n, 2.0 * math.pi / n))

    if dim == 3:
        n_t = max(4, int(round(math.sqrt(n / 2.0))))
        n_phi = 2 * n_t
        t, w_t = special.roots_legendre(n_t)
        phi = 2.0 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
        tt, pp = np.meshgrid(t, phi, indexing="ij")
        radius = np.sqrt(1.0 - tt**2)
        nodes = np.stack([radius * np.cos(pp), radius * np.sin(pp), tt], axis=-1).reshape(-1, 3)
        weights = np.repeat(w_t, n_phi) * (2.0 * math.pi / n_phi)
        return SphereGrid(nodes, weights)

    # quasi-random directions, mirrored so odd moments vanish exactly
    m = max(2, int(2 ** math.ceil(math.log2(max(n // 2, 2)))))
    sobol = qmc.Sobol(d=dim, scramble=True, seed=_SOBOL_SEED).random(m)
    gauss = stats.norm.ppf(np.clip(sobol, 1e-12, 1.0 - 1e-12))
    half = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    nodes = np.vstack([half, -half])
    return SphereGrid(nodes, np.full(2 * m, sphere_area(dim) / (2 * m)))


def aligned_sphere_grid(
    dim: int,
    direction: np.ndarray,
    n_panels: int = 12,
    n_nodes: int = 8,
) -> SphereGrid:
    """Sphere grid graded toward the great circle orthogonal to a direction.

    Integrands of the form F((w, direction)) with a kink or logarithmic
    singularity at (w, direction) = 0 are integrated to near machine accuracy.

    Args:
        dim: Ambient dimension (graded for dim 2 and 3)
        direction: Non-zero vector of shape (dim,)
        n_panels: Graded panels per singular endpoint
        n_nodes: Gauss-Legendre nodes per panel

    Returns:
        SphereGrid
    """
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if dim == 1 or norm == 0.0:
        return sphere_grid(dim, 2 * n_panels * n_nodes)
    e = direction / norm

    if dim == 2:
        e_perp = np.array([-e[1], e[0]])
        quarter = math.pi / 2.0
        pieces = [
            graded_rule(0.0, quarter, n_panels, n_nodes, toward="b"),
            graded_rule(quarter, math.pi, n_panels, n_nodes, toward="a"),
            graded_rule(-quarter, 0.0, n_panels, n_nodes, toward="a"),
            graded_rule(-math.pi, -quarter, n_panels, n_nodes, toward="b"),
        ]
        theta = np.concatenate([p[0] for p in pieces])
        weights = np.concatenate([p[1] for p in pieces])
        nodes = np.outer(np.cos(theta), e) + np.outer(np.sin(theta), e_perp)
        return SphereGrid(nodes, weights)

    if dim == 3:
        basis = np.linalg.svd(e[None, :])[2][1:]
        t_pos, w_pos = graded_rule(0.0, 1.0, n_panels, n_nodes, toward="a")
        t = np.concatenate([t_pos, -t_pos])
        w_t = np.concatenate([w_pos, w_pos])
        n_phi = 4 * n_nodes
        phi = 2.0 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
        tt, pp = np.meshgrid(t, phi, indexing="ij")
        radius = np.sqrt(1.0 - tt**2)
        nodes = (
            tt[..., None] * e
            + (radius * np.cos(pp))[..., None] * basis[0]
            + (radius * np.sin(pp))[..., None] * basis[1]
        ).reshape(-1, 3)
        weights = np.repeat(w_t, n_phi) * (2.0 * math.pi / n_phi)
        return SphereGrid(nodes, weights)

    return sphere_grid(dim, 2 * n_panels * n_nodes)
