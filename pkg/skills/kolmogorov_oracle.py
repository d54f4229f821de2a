"""Exact expectations for constant-coefficient models via the Fourier symbol.

For a process with E exp(i(xi, X_t - x)) = exp(t psi(xi)) the expectation
E g(X_t) is obtained by multiplying the Fourier coefficients of g by
exp(t psi). The stable part of psi for a directional density r is

    -N int |(w, xi)|^alpha [1 - i tan(alpha pi / 2) sgn(w, xi)] r(w) mu(dw)     alpha != 1
    -N int |(w, xi)| [1 + (2 / pi) i sgn(w, xi) ln|(w, xi)|] r(w) mu(dw)       alpha = 1

with N = stable_radial_constant(alpha), which makes r = 1 the driver with
Levy measure dy/|y|^(d+alpha).
"""

import logging
import math
import warnings
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import fft
from scipy.interpolate import CubicSpline

from core.errors import AliasingWarning, OracleError, PathFormatError
from core.utils import read_csv, write_csv
from skills.levy_component import LevyComponent
from skills.model import ModelSpec, TestFunction
from skills.quadrature import (
    SphereGrid,
    aligned_sphere_grid,
    sphere_grid,
    sphere_moment,
    stable_radial_constant,
)

logger = logging.getLogger(__name__)

SphereDensity = Union[None, float, Callable[[np.ndarray], np.ndarray]]
Symbol = Callable[[np.ndarray], np.ndarray]

ALIASING_TOLERANCE = 1e-8
PROFILE_ANGLES = 1024
MAX_ORACLE_DIM = 2


def _direction_sum(
    s: np.ndarray, weights: np.ndarray, alpha: float, norm: float
) -> np.ndarray:
    """Stable symbol from projections s = (w, xi) (shape (m, k)) and weights r * mu."""
    size = np.abs(s)
    if alpha == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            log_term = np.where(size > 0.0, s * np.log(np.where(size > 0.0, size, 1.0)), 0.0)
        return -norm * (size @ weights) - 1j * (log_term @ weights)
    tilt = math.tan(math.pi * alpha / 2.0)
    return -norm * ((size**alpha) @ weights) + 1j * norm * tilt * (
        (np.sign(s) * size**alpha) @ weights
    )


def _grid_for(dim: int, direction: np.ndarray) -> SphereGrid:
    if dim == 1:
        return sphere_grid(1)
    return aligned_sphere_grid(dim, direction)


def _stable_symbol(xi: np.ndarray, alpha: float, r: SphereDensity) -> np.ndarray:
    m, d = xi.shape
    norm = stable_radial_constant(alpha)
    if r is None:
        return np.zeros(m, dtype=complex)
    if not callable(r):
        # isotropic: imaginary parts cancel over antipodal directions
        size = np.linalg.norm(xi, axis=1)
        return (-norm * float(r) * sphere_moment(alpha, d) * size**alpha).astype(complex)

    if d == 1:
        grid = sphere_grid(1)
        weights = np.asarray(r(grid.nodes), dtype=float) * grid.weights
        return _direction_sum(xi @ grid.nodes.T, weights, alpha, norm)

    if d == 2 and m > PROFILE_ANGLES // 4:
        return _profile_symbol(xi, alpha, r, norm)

    out = np.empty(m, dtype=complex)
    for j in range(m):
        if not np.any(xi[j]):
            out[j] = 0.0
            continue
        grid = _grid_for(d, xi[j])
        weights = np.asarray(r(grid.nodes), dtype=float) * grid.weights
        out[j] = _direction_sum((grid.nodes @ xi[j])[None], weights, alpha, norm)[0]
    return out


def _profile_symbol(
    xi: np.ndarray, alpha: float, r: Callable[[np.ndarray], np.ndarray], norm: float
) -> np.ndarray:
    """Planar symbol from its angular profile, using homogeneity in |xi|."""
    angles = 2.0 * math.pi * np.arange(PROFILE_ANGLES) / PROFILE_ANGLES
    profile = np.empty(PROFILE_ANGLES, dtype=complex)
    first_moment = np.empty(PROFILE_ANGLES)
    for j, theta in enumerate(angles):
        e = np.array([math.cos(theta), math.sin(theta)])
        grid = _grid_for(2, e)
        weights = np.asarray(r(grid.nodes), dtype=float) * grid.weights
        s = (grid.nodes @ e)[None]
        profile[j] = _direction_sum(s, weights, alpha, norm)[0]
        first_moment[j] = float(s[0] @ weights)
    closed = np.append(angles, 2.0 * math.pi)
    spline_re = CubicSpline(closed, np.append(profile.real, profile.real[0]), bc_type="periodic")
    spline_im = CubicSpline(closed, np.append(profile.imag, profile.imag[0]), bc_type="periodic")
    spline_m1 = CubicSpline(closed, np.append(first_moment, first_moment[0]), bc_type="periodic")

    size = np.linalg.norm(xi, axis=1)
    theta = np.mod(np.arctan2(xi[:, 1], xi[:, 0]), 2.0 * math.pi)
    out = size**alpha * (spline_re(theta) + 1j * spline_im(theta))
    if alpha == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            log_size = np.where(size > 0.0, np.log(np.where(size > 0.0, size, 1.0)), 0.0)
        out = out - 1j * size * log_size * spline_m1(theta)
    return np.where(size > 0.0, out, 0.0)


def symbol_psi0(
    xi: np.ndarray,
    alpha: float,
    r: SphereDensity = None,
    a1: Optional[np.ndarray] = None,
    B: Optional[np.ndarray] = None,
) -> Union[complex, np.ndarray]:
    """Fourier symbol psi of a constant-coefficient generator.

    Args:
        xi: Frequency (d,) or frequencies (m, d)
        alpha: Index in (0, 2]
        r: Directional density of the stable part: None (no stable part), a
            constant or a callable on sphere points (k, d) -> (k,)
        a1: Drift, entering as +i (a1, xi)
        B: Diffusion matrix, entering as -(B xi, xi) at alpha = 2

    Returns:
        psi(xi) as a complex number, or an array of shape (m,)
    """
    if not 0.0 < alpha <= 2.0:
        raise OracleError(f"alpha must lie in (0, 2], got {alpha}")
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    freqs = np.atleast_2d(xi)
    out = np.zeros(freqs.shape[0], dtype=complex)
    if alpha < 2.0:
        out += _stable_symbol(freqs, alpha, r)
    elif B is not None:
        out -= np.einsum("mi,ij,mj->m", freqs, np.asarray(B, dtype=float), freqs)
    if a1 is not None:
        out += 1j * (freqs @ np.asarray(a1, dtype=float))
    return complex(out[0]) if single else out


def _levy_symbol(comp: LevyComponent, x: np.ndarray, xi: np.ndarray, alpha: float) -> np.ndarray:
    """Levy part of psi for jumps l(x, v) frozen at x."""
    m = xi.shape[0]
    compensate = alpha > 1.0

    def integrand(marks: np.ndarray, small: bool) -> np.ndarray:
        jumps = comp.jumps(np.repeat(x[None], marks.size, axis=0), marks)
        phase = jumps @ xi.T
        re = np.cos(phase) - 1.0
        im = np.sin(phase)
        if small and compensate:
            im = im - phase
        return np.stack([re, im], axis=-1)

    large = comp.measure.integrate(lambda v: integrand(v, False), 1.0, math.inf)
    small = comp.measure.integrate(lambda v: integrand(v, True), 0.0, 1.0)
    total = np.asarray(large + small).reshape(m, 2)
    return total[:, 0] + 1j * total[:, 1]


def model_symbol(spec: ModelSpec) -> Symbol:
    """Symbol of a constant-coefficient model.

    The jump y -> c h(w) y turns the stable part into the symbol with
    frequency c^T xi and directional density h^alpha. The drift enters for
    alpha >= 1 and the diffusion as B = b b^T / 2.

    Raises:
        OracleError: If the model does not have constant coefficients
    """
    if not spec.constant_coefficients:
        raise OracleError(f"model '{spec.name}' does not have constant coefficients")
    x = spec.x0
    state = x[None]
    alpha = spec.alpha
    a1 = spec.a(state)[0] if alpha >= 1.0 else None
    B = None
    c = None
    r: SphereDensity = None
    if alpha == 2.0:
        b = spec.b(state)[0]
        B = 0.5 * b @ b.T
    else:
        c = spec.c(state)[0]
        if spec.is_isotropic:
            r = 1.0
        else:

            def modulation_power(w: np.ndarray) -> np.ndarray:
                return spec.h(np.repeat(state, w.shape[0], axis=0), w) ** alpha

            r = modulation_power

    def psi(xi: np.ndarray) -> np.ndarray:
        freqs = np.atleast_2d(np.asarray(xi, dtype=float))
        stable_freqs = freqs if c is None else freqs @ c
        out = np.asarray(symbol_psi0(stable_freqs, alpha, r, None, B), dtype=complex)
        if a1 is not None:
            out = out + 1j * (freqs @ a1)
        if spec.levy is not None:
            out = out + _levy_symbol(spec.levy, x, freqs, alpha)
        return out

    return psi


class SymbolGrid(BaseModel):
    """Periodic spatial box centred at a point with the symbol on its dual grid.

    The box is [center - L, center + L) with n points per axis; the centre is
    the grid node with index n // 2 on every axis.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: int = Field(ge=1, le=MAX_ORACLE_DIM)
    center: np.ndarray
    half_width: float = Field(gt=0.0)
    n: int = Field(ge=2)
    alpha: float = Field(gt=0.0, le=2.0)
    psi: np.ndarray
    mu_prime: float

    @model_validator(mode="after")
    def _check(self) -> "SymbolGrid":
        if self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if self.psi.shape != (self.n,) * self.dim:
            raise ValueError("psi does not match the grid shape")
        return self

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def axes(self) -> Tuple[np.ndarray, ...]:
        offsets = -self.half_width + self.spacing * np.arange(self.n)
        return tuple(self.center[j] + offsets for j in range(self.dim))

    @property
    def points(self) -> np.ndarray:
        """Spatial nodes, shape (n^d, d) in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def center_index(self) -> Tuple[int, ...]:
        return (self.n // 2,) * self.dim

    def frequencies(self) -> np.ndarray:
        """Dual frequencies, shape (n^d, d) in C order."""
        k = 2.0 * math.pi * fft.fftfreq(self.n, d=self.spacing)
        mesh = np.meshgrid(*([k] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def sample(self, g: TestFunction) -> np.ndarray:
        """Values of g on the spatial grid, shape (n,) * d."""
        return g(self.points).reshape((self.n,) * self.dim)


def default_half_width(alpha: float, horizon: float, x0: np.ndarray) -> float:
    """16 (T^(1/alpha) + |x0|), rounded up to a multiple of pi."""
    raw = 16.0 * (horizon ** (1.0 / alpha) + float(np.linalg.norm(x0)))
    return math.pi * max(1, math.ceil(raw / math.pi))


def build_symbol_grid(
    symbol: Symbol,
    alpha: float,
    center: np.ndarray,
    half_width: float,
    n: int = 1024,
    mu_prime: Optional[float] = None,
) -> SymbolGrid:
    """Tabulate a symbol on the dual grid of a periodic box.

    Args:
        symbol: psi as a function of frequencies (m, d) -> (m,)
        alpha: Index used for the ellipticity ratio
        center: Box centre (d,)
        half_width: Half side length L
        n: Points per axis, a power of two
        mu_prime: Required lower bound of -Re psi / |xi|^alpha on |xi| >= 1

    Returns:
        SymbolGrid

    Raises:
        OracleError: If d > 2 or the ellipticity bound fails
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    dim = center.size
    if dim > MAX_ORACLE_DIM:
        raise OracleError(f"the Fourier oracle supports d <= {MAX_ORACLE_DIM}, got d={dim}")
    if n & (n - 1) or n < 2:
        raise OracleError(f"n must be a power of two, got {n}")
    spacing = 2.0 * half_width / n
    k = 2.0 * math.pi * fft.fftfreq(n, d=spacing)
    mesh = np.meshgrid(*([k] * dim), indexing="ij")
    freqs = np.stack([m.ravel() for m in mesh], axis=1)
    psi = np.asarray(symbol(freqs), dtype=complex)

    size = np.linalg.norm(freqs, axis=1)
    outer = size >= 1.0
    ratio = -psi.real[outer] / size[outer] ** alpha
    mu = float(ratio.min()) if ratio.size else math.inf
    if mu_prime is not None and mu < mu_prime:
        raise OracleError(f"symbol ellipticity {mu:.3g} is below mu'={mu_prime:.3g}")
    logger.debug("symbol grid n=%d, L=%.3g, ellipticity %.4g", n, half_width, mu)
    return SymbolGrid(
        dim=dim,
        center=center,
        half_width=half_width,
        n=n,
        alpha=alpha,
        psi=psi.reshape((n,) * dim),
        mu_prime=mu,
    )


def semigroup_apply(g: np.ndarray, t: float, grid: SymbolGrid) -> np.ndarray:
    """Apply exp(t psi) to grid values of g.

    Args:
        g: Values on the spatial grid, shape (n,) * d
        t: Time >= 0
        grid: Symbol grid

    Returns:
        E g(X_t) started at every grid node, same shape as g
    """
    if t < 0.0:
        raise OracleError(f"t must be non-negative, got {t}")
    g = np.asarray(g)
    if g.shape != grid.psi.shape:
        raise OracleError(f"grid function has shape {g.shape}, expected {grid.psi.shape}")
    if t == 0.0:
        return g.copy()
    spectrum = np.exp(t * grid.psi) * fft.fftn(g)

    # aliasing guard on the outer 10% of the dual frequencies
    index = np.abs(fft.fftfreq(grid.n) * grid.n)
    shell_1d = index >= 0.9 * (grid.n // 2)
    shell = np.zeros(grid.psi.shape, dtype=bool)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.n
        shell |= shell_1d.reshape(shape)
    power = np.abs(spectrum)
    total = float(power.sum())
    if total > 0.0:
        fraction = float(power[shell].sum()) / total
        if fraction > ALIASING_TOLERANCE:
            message = f"{fraction:.2e} of the spectral mass lies in the outer frequency shell"
            logger.warning(message)
            warnings.warn(message, AliasingWarning, stacklevel=2)

    out = fft.ifftn(spectrum)
    return out.real if np.isrealobj(g) else out


def exact_expectation_trig(
    x0: np.ndarray,
    t: float,
    xi: np.ndarray,
    alpha: float,
    r: SphereDensity = None,
    a1: Optional[np.ndarray] = None,
    B: Optional[np.ndarray] = None,
    phase: float = 0.0,
) -> float:
    """E cos(xi . X_t + phase) = Re exp(i (xi . x0 + phase) + t psi(xi))."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    psi = symbol_psi0(xi, alpha, r, a1, B)
    return _trig_value(x0, t, xi, complex(psi), phase)


def _trig_value(x0: np.ndarray, t: float, xi: np.ndarray, psi: complex, phase: float) -> float:
    exponent = 1j * (float(np.dot(xi, np.asarray(x0, dtype=float))) + phase) + t * psi
    return float(np.exp(exponent).real)


def oracle_expectation(
    spec: ModelSpec, g: TestFunction, t: Optional[float] = None, n: int = 1024
) -> float:
    """Exact E g(X_t) for a constant-coefficient model started at x0.

    Cosine test functions use the closed form; other functions go through
    semigroup_apply on a box centred at x0.
    """
    t = spec.horizon if t is None else t
    psi = model_symbol(spec)
    if g.trig_frequency is not None:
        value = complex(psi(g.trig_frequency[None])[0])
        return _trig_value(spec.x0, t, g.trig_frequency, value, g.trig_phase)
    if spec.dim > MAX_ORACLE_DIM:
        raise OracleError(f"the Fourier oracle supports d <= {MAX_ORACLE_DIM}, got d={spec.dim}")
    half_width = default_half_width(spec.alpha, t, spec.x0)
    grid = build_symbol_grid(psi, spec.alpha, spec.x0, half_width, n)
    values = semigroup_apply(grid.sample(g), t, grid)
    return float(values[grid.center_index])


def write_grid_csv(path: Union[str, Path], points: np.ndarray, columns: dict) -> int:
    """Write grid points with named value columns (x1..xd, then columns)."""
    points = np.atleast_2d(points)
    names = list(columns)
    header = [f"x{j + 1}" for j in range(points.shape[1])] + names
    values = [np.asarray(columns[name], dtype=float).ravel() for name in names]
    rows = (
        [float(v) for v in points[i]] + [float(col[i]) for col in values]
        for i in range(points.shape[0])
    )
    return write_csv(Path(path), header, rows)


def read_grid_csv(path: Union[str, Path]) -> Tuple[np.ndarray, dict]:
    """Read a file written by write_grid_csv into (points, columns).

    Raises:
        PathFormatError: If the file has no coordinate columns or a value is not a number
    """
    rows = read_csv(Path(path))
    if not rows:
        return np.empty((0, 0)), {}
    keys = list(rows[0])
    coords = [k for k in keys if k.startswith("x") and k[1:].isdigit()]
    if not coords:
        raise PathFormatError(f"{path} has no x1..xd coordinate columns")
    try:
        points = np.array([[float(row[k]) for k in coords] for row in rows])
        columns = {
            k: np.array([float(row[k]) for row in rows]) for k in keys if k not in coords
        }
    except (TypeError, ValueError) as e:
        raise PathFormatError(f"{path} is not a grid function file: {e}") from e
    return points, columns
