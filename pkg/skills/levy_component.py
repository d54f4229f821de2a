"""Subordinated Levy part of the SDE: point and martingale integrals of l(x, v).

Marks v are scalar. U1 is the unit ball {|v| <= 1}; every region below is a
shell {lo < |v| <= hi}.
"""

import logging
import math
import warnings
from abc import ABC, abstractmethod
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate

from core.errors import DomainError, LevyMeasureError
from core.models import AlphaRegime
from core.rng import RngLike, as_generator

logger = logging.getLogger(__name__)

MarkFunction = Callable[[np.ndarray], np.ndarray]
JumpMap = Callable[[np.ndarray, np.ndarray], np.ndarray]

DEFAULT_JUMP_TARGET = 10.0


class LevyMeasure(ABC):
    """Sigma-finite measure pi on the real line of marks."""

    @abstractmethod
    def mass(self, lo: float, hi: float = math.inf) -> float:
        """Measure of the shell {lo < |v| <= hi}."""

    @abstractmethod
    def sample(self, lo: float, hi: float, rng: RngLike, size: int) -> np.ndarray:
        """Draw marks from pi restricted to the shell and normalized."""

    @abstractmethod
    def integrate(self, fn: MarkFunction, lo: float, hi: float = math.inf) -> np.ndarray:
        """Integral of fn over the shell; fn maps marks (k,) to (k, ...)."""

    @property
    def symmetric(self) -> bool:
        """Whether pi(-A) = pi(A)."""
        return False


class _DensityMeasure(LevyMeasure):
    """Shared quadrature for measures with a density on the line."""

    @abstractmethod
    def density(self, v: np.ndarray) -> np.ndarray:
        """Density of pi at marks v."""

    def _upper(self, hi: float) -> float:
        return hi

    def _side_mass(self, sign: float, lo: float, hi: float) -> float:
        hi = self._upper(hi)
        if hi <= lo:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                value, _ = integrate.quad(
                    lambda u: float(self.density(np.array([sign * u]))[0]), lo, hi, limit=200
                )
            except integrate.IntegrationWarning as e:
                raise LevyMeasureError(
                    f"mass of {{{lo} < |v| <= {hi}}} did not converge: {e}"
                ) from e
        if not math.isfinite(value):
            raise LevyMeasureError(f"mass of {{{lo} < |v| <= {hi}}} is not finite")
        return value

    def mass(self, lo: float, hi: float = math.inf) -> float:
        return self._side_mass(1.0, lo, hi) + self._side_mass(-1.0, lo, hi)

    def integrate(self, fn: MarkFunction, lo: float, hi: float = math.inf) -> np.ndarray:
        hi = self._upper(hi)
        total: Optional[np.ndarray] = None
        for sign in (1.0, -1.0):
            if hi <= lo:
                continue

            def integrand(u: float, sign: float = sign) -> np.ndarray:
                v = np.array([sign * u])
                return np.asarray(fn(v))[0] * self.density(v)[0]

            value, _ = integrate.quad_vec(
                integrand, lo, hi, epsabs=1e-12, epsrel=1e-9, limit=4000
            )
            if not np.all(np.isfinite(value)):
                raise LevyMeasureError(f"integral over {{{lo} < |v| <= {hi}}} is not finite")
            total = value if total is None else total + value
        if total is None:
            return np.asarray(fn(np.array([1.0])))[0] * 0.0
        return total


class AtomicMeasure(LevyMeasure):
    """Finite measure sum_j weight_j * delta(atom_j)."""

    def __init__(self, atoms: np.ndarray, weights: np.ndarray) -> None:
        self.atoms = np.asarray(atoms, dtype=float).ravel()
        self.weights = np.asarray(weights, dtype=float).ravel()
        if self.atoms.shape != self.weights.shape:
            raise DomainError("atoms and weights must have the same length")
        if np.any(self.weights < 0.0) or not np.all(np.isfinite(self.weights)):
            raise DomainError("atom weights must be finite and non-negative")

    def _mask(self, lo: float, hi: float) -> np.ndarray:
        size = np.abs(self.atoms)
        return (size > lo) & (size <= hi)

    def mass(self, lo: float, hi: float = math.inf) -> float:
        return float(self.weights[self._mask(lo, hi)].sum())

    def sample(self, lo: float, hi: float, rng: RngLike, size: int) -> np.ndarray:
        mask = self._mask(lo, hi)
        atoms, weights = self.atoms[mask], self.weights[mask]
        if size == 0:
            return np.empty(0)
        gen = as_generator(rng)
        return gen.choice(atoms, size=size, p=weights / weights.sum())

    def integrate(self, fn: MarkFunction, lo: float, hi: float = math.inf) -> np.ndarray:
        mask = self._mask(lo, hi)
        if not mask.any():
            return np.asarray(fn(np.array([1.0])))[0] * 0.0
        values = np.asarray(fn(self.atoms[mask]))
        return np.tensordot(self.weights[mask], values, axes=(0, 0))

    @property
    def symmetric(self) -> bool:
        order = np.argsort(self.atoms)
        mirror = np.argsort(-self.atoms)
        return bool(
            np.allclose(self.atoms[order], -self.atoms[mirror])
            and np.allclose(self.weights[order], self.weights[mirror])
        )


class DensityMeasure(_DensityMeasure):
    """Measure with a user density on [-support_radius, support_radius].

    Sampling inverts a tabulated distribution function on the requested shell.
    """

    def __init__(
        self,
        density: Callable[[np.ndarray], np.ndarray],
        support_radius: float,
        table_points: int = 4096,
        is_symmetric: bool = False,
    ) -> None:
        if support_radius <= 0.0:
            raise DomainError("support_radius must be positive")
        self._density = density
        self.support_radius = support_radius
        self.table_points = table_points
        self._is_symmetric = is_symmetric

    def density(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        inside = np.abs(v) <= self.support_radius
        out = np.zeros_like(v)
        out[inside] = np.asarray(self._density(v[inside]), dtype=float)
        return out

    def _upper(self, hi: float) -> float:
        return min(hi, self.support_radius)

    def sample(self, lo: float, hi: float, rng: RngLike, size: int) -> np.ndarray:
        if size == 0:
            return np.empty(0)
        gen = as_generator(rng)
        hi = self._upper(hi)
        if lo > 0.0:
            grid = np.geomspace(lo, hi, self.table_points)
        else:
            grid = np.concatenate([[0.0], np.geomspace(hi * 1e-9, hi, self.table_points - 1)])
        tables = []
        for sign in (1.0, -1.0):
            dens = self.density(sign * grid)
            dens[~np.isfinite(dens)] = 0.0
            cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
            tables.append(cdf)
        side_mass = np.array([tables[0][-1], tables[1][-1]])
        if side_mass.sum() <= 0.0:
            raise LevyMeasureError(f"shell {{{lo} < |v| <= {hi}}} carries no mass")
        positive = gen.random(size) < side_mass[0] / side_mass.sum()
        u = gen.random(size)
        out = np.empty(size)
        for flag, sign, cdf in ((True, 1.0, tables[0]), (False, -1.0, tables[1])):
            sel = positive == flag
            if sel.any():
                out[sel] = sign * np.interp(u[sel] * cdf[-1], cdf, grid)
        return out

    @property
    def symmetric(self) -> bool:
        return self._is_symmetric


class TemperedStableMeasure(_DensityMeasure):
    """Density c_pm |v|^(-1-index) exp(-tempering |v|) on each half line."""

    def __init__(
        self,
        index: float,
        c_plus: float = 1.0,
        c_minus: float = 1.0,
        tempering: float = 1.0,
    ) -> None:
        if not 0.0 < index < 2.0:
            raise DomainError(f"index must lie in (0, 2), got {index}")
        if c_plus < 0.0 or c_minus < 0.0 or tempering < 0.0:
            raise DomainError("c_plus, c_minus and tempering must be non-negative")
        self.index = index
        self.c_plus = c_plus
        self.c_minus = c_minus
        self.tempering = tempering

    def density(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        size = np.abs(v)
        with np.errstate(divide="ignore"):
            base = size ** (-1.0 - self.index) * np.exp(-self.tempering * size)
        return np.where(v > 0.0, self.c_plus, self.c_minus) * np.where(size > 0.0, base, 0.0)

    def _side_mass(self, sign: float, lo: float, hi: float) -> float:
        if lo <= 0.0 and (self.c_plus if sign > 0 else self.c_minus) > 0.0:
            raise LevyMeasureError("a tempered stable measure has infinite mass near 0")
        if hi == math.inf and self.tempering == 0.0:
            c = self.c_plus if sign > 0 else self.c_minus
            return c * lo ** (-self.index) / self.index
        return super()._side_mass(sign, lo, hi)

    def sample(self, lo: float, hi: float, rng: RngLike, size: int) -> np.ndarray:
        if size == 0:
            return np.empty(0)
        gen = as_generator(rng)
        masses = np.array([self._side_mass(1.0, lo, hi), self._side_mass(-1.0, lo, hi)])
        signs = np.where(gen.random(size) < masses[0] / masses.sum(), 1.0, -1.0)
        gamma = self.index
        top = lo ** (-gamma)
        bottom = 0.0 if hi == math.inf else hi ** (-gamma)
        out = np.empty(size)
        pending = np.arange(size)
        # truncated Pareto proposals thinned by the exponential tempering
        while pending.size:
            p = gen.random(pending.size)
            proposal = (top - p * (top - bottom)) ** (-1.0 / gamma)
            accept = gen.random(pending.size) <= np.exp(-self.tempering * (proposal - lo))
            out[pending[accept]] = proposal[accept]
            pending = pending[~accept]
        return signs * out

    @property
    def symmetric(self) -> bool:
        return self.c_plus == self.c_minus


class LevyComponent(BaseModel):
    """Levy part (l, pi) of the SDE.

    The large-jump measure is pi restricted to the complement of U1, the
    small-jump measure its restriction to U1. small_cut is the inner
    truncation of the sigma-finite small-jump part; None picks
    default_small_cut per step size.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    measure: LevyMeasure
    jump_map: JumpMap
    small_cut: Optional[float] = Field(default=None, ge=0.0, lt=1.0)
    odd_jump_map: bool = False

    @property
    def large_mass(self) -> float:
        return self.measure.mass(1.0, math.inf)

    def cut_for(self, dt: float) -> float:
        if self.small_cut is not None:
            return self.small_cut
        return default_small_cut(self.measure, dt)

    def jumps(self, x: np.ndarray, marks: np.ndarray) -> np.ndarray:
        """Evaluate l(x, v) row-wise, shapes (k, d) and (k,) -> (k, d)."""
        return np.asarray(self.jump_map(x, marks), dtype=float)


def default_small_cut(
    measure: LevyMeasure, dt: float, target: float = DEFAULT_JUMP_TARGET
) -> float:
    """Smallest inner cut keeping dt * pi(cut < |v| <= 1) below a jump target.

    Args:
        measure: Levy measure
        dt: Time step
        target: Expected number of small jumps per step

    Returns:
        Cut in [0, 1); 0 when the whole unit ball fits the target
    """
    def fits(cut: float) -> bool:
        try:
            return dt * measure.mass(cut, 1.0) <= target
        except LevyMeasureError:
            return False

    if fits(0.0):
        return 0.0
    lo, hi = -12.0, 0.0
    if fits(10.0**lo):
        return 10.0**lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if fits(10.0**mid):
            hi = mid
        else:
            lo = mid
    return 10.0**hi


def region_integral(
    comp: LevyComponent, x: np.ndarray, lo: float, hi: float = math.inf
) -> np.ndarray:
    """Integral of l(x, v) over the shell {lo < |v| <= hi} for each state.

    Args:
        comp: Levy component
        x: States, shape (n, d)
        lo: Inner radius
        hi: Outer radius

    Returns:
        Array of shape (n, d)
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    if comp.odd_jump_map and comp.measure.symmetric:
        return np.zeros((n, d))

    def fn(marks: np.ndarray) -> np.ndarray:
        k = marks.size
        values = comp.jumps(np.tile(x, (k, 1)), np.repeat(marks, n))
        return values.reshape(k, n, d)

    return np.asarray(comp.measure.integrate(fn, lo, hi)).reshape(n, d)


class MarkDraws(NamedTuple):
    """Compound Poisson marks; slots names the row (state or step) of each mark."""

    slots: np.ndarray
    marks: np.ndarray


def draw_marks(
    comp: LevyComponent, lo: np.ndarray, hi: float, dt: np.ndarray, rng: RngLike
) -> MarkDraws:
    """Marks of the shells {lo_r < |v| <= hi} over time dt_r, one row r at a time.

    Args:
        comp: Levy component
        lo: Inner radius per row, shape (r,)
        hi: Outer radius
        dt: Time per row, shape (r,)
        rng: Random stream or generator

    Returns:
        MarkDraws sorted by slot

    Raises:
        LevyMeasureError: If a shell has infinite mass
    """
    lo = np.asarray(lo, dtype=float)
    cuts = np.unique(lo)
    masses = {}
    for cut in cuts:
        mass = comp.measure.mass(float(cut), hi) if hi > cut else 0.0
        if not math.isfinite(mass):
            raise LevyMeasureError(f"shell {{{cut} < |v| <= {hi}}} has infinite mass")
        masses[float(cut)] = mass
    rates = np.asarray(dt, dtype=float) * np.array([masses[float(cut)] for cut in lo])
    gen = as_generator(rng)
    counts = gen.poisson(rates)
    slots = np.repeat(np.arange(lo.size), counts)
    marks = np.empty(slots.size)
    shell = lo[slots]
    for cut in cuts:
        pick = shell == cut
        if pick.any():
            marks[pick] = comp.measure.sample(float(cut), hi, gen, int(pick.sum()))
    return MarkDraws(slots=slots, marks=marks)


def mark_jumps(
    comp: LevyComponent, x: np.ndarray, owners: np.ndarray, marks: np.ndarray
) -> np.ndarray:
    """Sum l(x_owner, mark) per state, shape (n, d)."""
    n, d = x.shape
    out = np.zeros((n, d))
    if owners.size == 0:
        return out
    jumps = comp.jumps(x[owners], marks)
    for j in range(d):
        out[:, j] = np.bincount(owners, weights=jumps[:, j], minlength=n)
    return out


def small_jump_compensator(
    comp: LevyComponent,
    x: np.ndarray,
    dt: float,
    cut: float,
    alpha_regime: Union[AlphaRegime, str],
) -> np.ndarray:
    """Displacement that completes the truncated U1 jumps, including dt.

    For alpha > 1 the sampled shell is q-compensated, so the compensator is
    minus dt times its pi-integral. For alpha <= 1 the U1 part is a p-integral;
    the compensator is the mean of the dropped jumps below the cut.
    """
    regime = AlphaRegime(alpha_regime)
    if regime in (AlphaRegime.SUPER_ONE, AlphaRegime.GAUSSIAN):
        return -dt * region_integral(comp, x, cut, 1.0)
    if cut > 0.0:
        return dt * region_integral(comp, x, 0.0, cut)
    return np.zeros(x.shape)


def large_jump_batch(
    comp: LevyComponent, x: np.ndarray, dt: float, rng: RngLike
) -> np.ndarray:
    """Compound Poisson sums over the complement of U1 for a batch of states."""
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    x = np.atleast_2d(x)
    n = x.shape[0]
    draws = draw_marks(comp, np.ones(n), math.inf, np.full(n, dt), rng)
    return mark_jumps(comp, x, draws.slots, draws.marks)


def small_jump_batch(
    comp: LevyComponent,
    x: np.ndarray,
    dt: float,
    alpha_regime: Union[AlphaRegime, str],
    rng: RngLike,
) -> Tuple[np.ndarray, np.ndarray]:
    """Truncated U1 jumps and their compensator for a batch of states.

    Returns:
        (jump_sum, compensator), each of shape (n, d); the compensator already
        includes dt
    """
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    x = np.atleast_2d(x)
    n = x.shape[0]
    cut = comp.cut_for(dt)
    draws = draw_marks(comp, np.full(n, cut), 1.0, np.full(n, dt), rng)
    jump_sum = mark_jumps(comp, x, draws.slots, draws.marks)
    return jump_sum, small_jump_compensator(comp, x, dt, cut, alpha_regime)


def sample_large_jumps(
    comp: LevyComponent, x_frozen: np.ndarray, dt: float, rng: RngLike
) -> np.ndarray:
    """Sum of the jumps l(x, v) with |v| > 1 over one step.

    Args:
        comp: Levy component
        x_frozen: Frozen state, shape (d,)
        dt: Time step
        rng: Random stream or generator

    Returns:
        Vector of shape (d,)
    """
    return large_jump_batch(comp, np.asarray(x_frozen, dtype=float)[None], dt, rng)[0]


def sample_small_jumps(
    comp: LevyComponent,
    x_frozen: np.ndarray,
    dt: float,
    alpha_regime: Union[AlphaRegime, str],
    rng: RngLike,
) -> Tuple[np.ndarray, np.ndarray]:
    """Truncated jumps with |v| <= 1 over one step and their compensator.

    Args:
        comp: Levy component
        x_frozen: Frozen state, shape (d,)
        dt: Time step
        alpha_regime: Regime deciding between p- and q-integration
        rng: Random stream or generator

    Returns:
        (jump_sum, compensator), each of shape (d,)
    """
    jump_sum, compensator = small_jump_batch(
        comp, np.asarray(x_frozen, dtype=float)[None], dt, alpha_regime, rng
    )
    return jump_sum[0], compensator[0]
