"""Weak Euler scheme with coefficients frozen at the left grid point.

Regimes:
    alpha < 1:   y + stable jumps (uncompensated) + Levy jumps (uncompensated)
    alpha = 1:   y + a dt + stable jumps (small ones compensated) + Levy jumps
    1 < alpha:   y + a dt + compensated stable jumps + Levy (U1 compensated)
    alpha = 2:   y + a dt + b sqrt(dt) G + Levy (U1 compensated)

Path p draws from RngStream(master_seed, stream_id=p). Its steps are cut into
chunks of STEPS_PER_COUNTER; chunk c is drawn in full from counter c before
the states of that chunk are known, so the draws of a path depend neither on
the other paths nor on block size or worker count.
"""

import logging
import math
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed

from core.errors import BatchSimulationError, DomainError, NonFiniteStateError, NumericalError
from core.models import AlphaRegime, PathBatch, RecordMode, StableLaw, TimeGrid
from core.rng import RngLike, RngStream, as_generator
from skills.levy_component import MarkDraws, draw_marks, mark_jumps, small_jump_compensator
from skills.model import ModelSpec, probe_points
from skills.quadrature import sphere_grid
from skills.stable_sampling import (
    ENVELOPE_MARGIN,
    JumpCandidates,
    apply_candidates,
    candidate_rate,
    default_cut_eps,
    isotropic_driver_increment,
    jump_candidates,
)

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 4096
STEPS_PER_COUNTER = 64
BOUND_DIRECTIONS = 256


def uniform_grid(horizon: float, n: int) -> TimeGrid:
    """Uniform partition of [0, horizon] into n steps.

    Args:
        horizon: Final time T > 0
        n: Number of steps, >= 1

    Returns:
        TimeGrid with nodes i T / n (the last node is exactly T) and delta T / n
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if horizon <= 0.0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    nodes = tuple(horizon * i / n for i in range(n)) + (float(horizon),)
    return TimeGrid(nodes=nodes, delta=horizon / n)


def driver_increments(spec: ModelSpec, dts: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """State-independent driver increments, one row per step length, shape (k, d).

    Brownian sqrt(dt) G at alpha = 2, otherwise the exact increment of the
    isotropic driver with Levy measure dy/|y|^(d+alpha).
    """
    dts = np.asarray(dts, dtype=float)
    if spec.alpha == 2.0:
        return np.sqrt(dts)[:, None] * gen.standard_normal((dts.size, spec.dim))
    return isotropic_driver_increment(spec.alpha, spec.dim, dts, gen, size=dts.size)


def thinning_bound(spec: ModelSpec) -> float:
    """Upper bound of h^alpha used to thin the anisotropic stable jumps.

    The maximum over the probe box and a sphere grid, times ENVELOPE_MARGIN.
    It depends on the model alone, so every path thins against the same bound.
    """
    probes = probe_points(spec)
    nodes = sphere_grid(spec.dim, BOUND_DIRECTIONS).nodes
    k = nodes.shape[0]
    h = spec.h(np.repeat(probes, k, axis=0), np.tile(nodes, (probes.shape[0], 1)))
    if np.any(~np.isfinite(h)) or np.any(h <= 0.0):
        raise DomainError("direction modulation must be finite and positive")
    return ENVELOPE_MARGIN * float(h.max()) ** spec.alpha


class StepPlan(NamedTuple):
    """Per-step constants of a grid, shared by every path."""

    steps: np.ndarray
    cut_eps: np.ndarray
    small_cuts: np.ndarray
    bound: float


def step_plan(spec: ModelSpec, steps: np.ndarray) -> StepPlan:
    """Truncation radii, Levy cuts and the thinning bound for the given steps."""
    steps = np.asarray(steps, dtype=float)
    if spec.cut_eps is not None:
        cut_eps = np.full(steps.size, spec.cut_eps)
    else:
        cut_eps = np.array([default_cut_eps(float(dt), spec.alpha) for dt in steps])
    small_cuts = np.zeros(steps.size)
    if spec.levy is not None:
        cache: Dict[str, float] = {}
        for i, dt in enumerate(steps):
            key = f"{dt:.12g}"
            if key not in cache:
                cache[key] = spec.levy.cut_for(float(dt))
            small_cuts[i] = cache[key]
    bound = 1.0 if spec.alpha == 2.0 or spec.is_isotropic else thinning_bound(spec)
    return StepPlan(steps=steps, cut_eps=cut_eps, small_cuts=small_cuts, bound=bound)


class PathNoise(NamedTuple):
    """Randomness of one path over a chunk of steps."""

    driver: Optional[np.ndarray]
    stable: Optional[JumpCandidates]
    normals: Optional[np.ndarray]
    large: Optional[MarkDraws]
    small: Optional[MarkDraws]


def draw_path_noise(
    spec: ModelSpec, plan: StepPlan, lo: int, hi: int, gen: np.random.Generator
) -> PathNoise:
    """Draw everything steps lo..hi-1 of one path need, in a fixed order.

    Slots of the variable-length draws count steps from lo.
    """
    dts = plan.steps[lo:hi]
    driver = stable = normals = large = small = None
    if spec.alpha == 2.0 or spec.is_isotropic:
        driver = driver_increments(spec, dts, gen)
    else:
        eps = plan.cut_eps[lo:hi]
        rates = candidate_rate(spec.alpha, spec.dim, plan.bound, dts, eps)
        stable = jump_candidates(spec.alpha, spec.dim, rates, eps, gen, spec.jump_budget)
        if spec.gaussian_small_jumps:
            normals = gen.standard_normal((dts.size, spec.dim))
    if spec.levy is not None:
        large = draw_marks(spec.levy, np.ones(dts.size), math.inf, dts, gen)
        small = draw_marks(spec.levy, plan.small_cuts[lo:hi], 1.0, dts, gen)
    return PathNoise(driver=driver, stable=stable, normals=normals, large=large, small=small)


class StepTable:
    """Variable-length draws of many paths regrouped step by step.

    Rows are ordered by step, then path, then draw order within the path.
    """

    def __init__(self, slots: List[np.ndarray], n_steps: int, **fields: List[np.ndarray]) -> None:
        owners = np.concatenate([np.full(s.size, row) for row, s in enumerate(slots)])
        steps = np.concatenate(slots)
        order = np.lexsort((np.arange(steps.size), owners, steps))
        self.owners = owners[order]
        self.fields = {name: np.concatenate(parts)[order] for name, parts in fields.items()}
        self.bounds = np.searchsorted(steps[order], np.arange(n_steps + 1))

    def step(self, k: int) -> Dict[str, np.ndarray]:
        """Draws of step k with an "owners" entry naming their path row."""
        lo, hi = self.bounds[k], self.bounds[k + 1]
        out = {name: values[lo:hi] for name, values in self.fields.items()}
        out["owners"] = self.owners[lo:hi]
        return out


class BlockNoise:
    """Noise of a block of paths over one chunk, ready to be applied step by step."""

    def __init__(self, noises: List[PathNoise], n_steps: int) -> None:
        first = noises[0]
        self.driver = None if first.driver is None else np.stack([p.driver for p in noises])
        self.normals = None if first.normals is None else np.stack([p.normals for p in noises])
        self.stable = None
        if first.stable is not None:
            self.stable = StepTable(
                [p.stable.slots for p in noises],
                n_steps,
                directions=[p.stable.directions for p in noises],
                radii=[p.stable.radii for p in noises],
                levels=[p.stable.levels for p in noises],
            )
        self.large = self.small = None
        if first.large is not None:
            self.large = StepTable(
                [p.large.slots for p in noises], n_steps, marks=[p.large.marks for p in noises]
            )
            self.small = StepTable(
                [p.small.slots for p in noises], n_steps, marks=[p.small.marks for p in noises]
            )


def _additive_update(spec: ModelSpec, y: np.ndarray, dt: float, z: np.ndarray) -> np.ndarray:
    matrix = spec.b(y) if spec.alpha == 2.0 else spec.c(y)
    out = y + np.einsum("nij,nj->ni", matrix, z)
    if spec.regime is not AlphaRegime.SUB_ONE:
        out = out + spec.a(y) * dt
    return out


def _apply_step(
    spec: ModelSpec, plan: StepPlan, y: np.ndarray, i: int, noise: BlockNoise, k: int
) -> np.ndarray:
    """Step i of the grid for a block of frozen states; k indexes it within the chunk."""
    regime = spec.regime
    dt = float(plan.steps[i])

    # Step 1: stable or Brownian part with frozen coefficients
    if noise.driver is not None:
        out = _additive_update(spec, y, dt, noise.driver[:, k])
    else:
        draws = noise.stable.step(k)
        candidates = JumpCandidates(
            slots=draws["owners"],
            directions=draws["directions"],
            radii=draws["radii"],
            levels=draws["levels"],
        )

        def modulation(w: np.ndarray, owners: np.ndarray) -> np.ndarray:
            return spec.h(y[owners], w)

        increment = apply_candidates(
            StableLaw(alpha=spec.alpha, dim=spec.dim, cut_eps=float(plan.cut_eps[i])),
            modulation,
            spec.c(y),
            dt,
            regime,
            candidates,
            plan.bound,
            None if noise.normals is None else noise.normals[:, k],
        )
        out = y + increment.jump_sum + increment.compensator
        if regime is not AlphaRegime.SUB_ONE:
            out = out + spec.a(y) * dt

    # Step 2: Levy part, large jumps first
    if spec.levy is not None:
        large = noise.large.step(k)
        out = out + mark_jumps(spec.levy, y, large["owners"], large["marks"])
        small = noise.small.step(k)
        out = out + mark_jumps(spec.levy, y, small["owners"], small["marks"])
        out = out + small_jump_compensator(spec.levy, y, dt, float(plan.small_cuts[i]), regime)
    return out


def _check_finite(states: np.ndarray, step: int, offset: int = 0) -> None:
    finite = np.isfinite(states).all(axis=1)
    if not finite.all():
        raise NonFiniteStateError(step, offset + int(np.argmin(finite)))


def euler_step(spec: ModelSpec, y: np.ndarray, dt: float, rng: RngLike) -> np.ndarray:
    """One Euler step from y with all coefficients frozen at y.

    A path of a one-step batch is this step applied to x0 with the path's
    stream.

    Args:
        spec: Model
        y: Current state, shape (d,)
        dt: Step size in (0, T]
        rng: Random stream or generator

    Returns:
        Next state, shape (d,)

    Raises:
        DomainError: If dt is out of range
        NonFiniteStateError: If the new state is not finite
    """
    if not 0.0 < dt <= spec.horizon * (1.0 + 1e-12):
        raise DomainError(f"dt must lie in (0, {spec.horizon}], got {dt}")
    state = np.asarray(y, dtype=float).reshape(1, spec.dim)
    plan = step_plan(spec, np.array([dt]))
    noise = BlockNoise([draw_path_noise(spec, plan, 0, 1, as_generator(rng))], 1)
    out = _apply_step(spec, plan, state, 0, noise, 0)
    step = rng.counter if isinstance(rng, RngStream) else 0
    _check_finite(out, step)
    return out[0]


def _recorded_steps(grid: TimeGrid, record: RecordMode) -> List[int]:
    if record is RecordMode.FULL:
        return list(range(grid.n_steps + 1))
    return [0, grid.n_steps]


def _blocks(n_paths: int, block_size: int) -> List[tuple]:
    return [(start, min(start + block_size, n_paths)) for start in range(0, n_paths, block_size)]


def _chunks(n_steps: int) -> List[tuple]:
    return [
        (c, lo, min(lo + STEPS_PER_COUNTER, n_steps))
        for c, lo in enumerate(range(0, n_steps, STEPS_PER_COUNTER))
    ]


def _block_noise(
    spec: ModelSpec, plan: StepPlan, streams: List[RngStream], chunk: tuple
) -> BlockNoise:
    c, lo, hi = chunk
    noises = [draw_path_noise(spec, plan, lo, hi, s.at(c).generator()) for s in streams]
    return BlockNoise(noises, hi - lo)


def _path_streams(master_seed: int, start: int, stop: int) -> List[RngStream]:
    return [RngStream(master_seed=master_seed, stream_id=p) for p in range(start, stop)]


def _simulate_block(
    spec: ModelSpec,
    grid: TimeGrid,
    master_seed: int,
    recorded: List[int],
    plan: StepPlan,
    start: int,
    stop: int,
) -> np.ndarray:
    n = stop - start
    streams = _path_streams(master_seed, start, stop)
    y = np.tile(spec.x0, (n, 1))
    out = np.empty((n, len(recorded), spec.dim))
    slot = {step: k for k, step in enumerate(recorded)}
    out[:, slot[0]] = y
    for chunk in _chunks(grid.n_steps):
        noise = _block_noise(spec, plan, streams, chunk)
        lo, hi = chunk[1], chunk[2]
        for k in range(hi - lo):
            i = lo + k
            y = _apply_step(spec, plan, y, i, noise, k)
            _check_finite(y, i, start)
            if i + 1 in slot:
                out[:, slot[i + 1]] = y
    return out


def _run_blocks(
    task: Callable[..., Any],
    args: tuple,
    n_paths: int,
    block_size: int,
    workers: int,
) -> List[Any]:
    """Run task(*args, start, stop) over path blocks and collect per-block failures."""

    def guarded(block: int, start: int, stop: int) -> Any:
        try:
            return task(*args, start, stop)
        except NumericalError as e:
            return f"block {block} (paths {start}-{stop - 1}): {e}"

    blocks = _blocks(n_paths, block_size)
    logger.debug("simulating %d paths in %d block(s), workers=%d", n_paths, len(blocks), workers)
    results = Parallel(n_jobs=workers, prefer="threads")(
        delayed(guarded)(k, start, stop) for k, (start, stop) in enumerate(blocks)
    )
    failures = [r for r in results if isinstance(r, str)]
    if failures:
        raise BatchSimulationError(failures)
    return results


def simulate_batch(
    spec: ModelSpec,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
    record: Union[RecordMode, str] = RecordMode.FULL,
) -> PathBatch:
    """Simulate Euler paths on a grid.

    Args:
        spec: Model
        grid: Time grid
        n_paths: Number of paths, >= 1
        master_seed: Master seed of every path stream
        workers: Parallel workers; results are identical for any value
        block_size: Paths simulated together; results are identical for any value
        record: full (every grid point) or endpoints

    Returns:
        PathBatch

    Raises:
        BatchSimulationError: If any block fails
    """
    if n_paths < 1:
        raise DomainError(f"n_paths must be >= 1, got {n_paths}")
    if block_size < 1:
        raise DomainError(f"block_size must be >= 1, got {block_size}")
    recorded = _recorded_steps(grid, RecordMode(record))
    plan = step_plan(spec, grid.steps)
    parts = _run_blocks(
        _simulate_block, (spec, grid, master_seed, recorded, plan), n_paths, block_size, workers
    )
    return PathBatch(
        states=np.concatenate(parts, axis=0),
        grid=grid,
        recorded=recorded,
        master_seed=master_seed,
        block_size=block_size,
    )


def _nested(grids: Sequence[TimeGrid]) -> Optional[int]:
    """Index of the finest grid if every grid is a uniform coarsening of it."""
    finest = int(np.argmax([g.n_steps for g in grids]))
    fine = grids[finest]
    fine_steps = fine.steps
    if not np.allclose(fine_steps, fine_steps[0], rtol=1e-12, atol=0.0):
        return None
    for g in grids:
        if g.n_steps == 0 or fine.n_steps % g.n_steps or g.horizon != fine.horizon:
            return None
        if not np.allclose(g.steps, g.steps[0], rtol=1e-12, atol=0.0):
            return None
    return finest


def _simulate_ladder_block(
    spec: ModelSpec,
    grids: Sequence[TimeGrid],
    finest: int,
    master_seed: int,
    recorded: List[List[int]],
    plan: StepPlan,
    start: int,
    stop: int,
) -> List[np.ndarray]:
    n = stop - start
    fine = grids[finest]
    streams = _path_streams(master_seed, start, stop)
    ratios = [fine.n_steps // g.n_steps for g in grids]
    ys = [np.tile(spec.x0, (n, 1)) for _ in grids]
    sums = [np.zeros((n, spec.dim)) for _ in grids]
    slots = [{step: k for k, step in enumerate(rec)} for rec in recorded]
    outs = [np.empty((n, len(rec), spec.dim)) for rec in recorded]
    for r in range(len(grids)):
        outs[r][:, slots[r][0]] = ys[r]

    for chunk in _chunks(fine.n_steps):
        noise = _block_noise(spec, plan, streams, chunk)
        lo, hi = chunk[1], chunk[2]
        for k in range(hi - lo):
            j = lo + k
            for r, grid in enumerate(grids):
                sums[r] = sums[r] + noise.driver[:, k]
                if (j + 1) % ratios[r]:
                    continue
                i = (j + 1) // ratios[r] - 1
                ys[r] = _additive_update(spec, ys[r], float(grid.steps[i]), sums[r])
                _check_finite(ys[r], i, start)
                sums[r] = np.zeros((n, spec.dim))
                if i + 1 in slots[r]:
                    outs[r][:, slots[r][i + 1]] = ys[r]
    return outs


def simulate_ladder(
    spec: ModelSpec,
    grids: Sequence[TimeGrid],
    n_paths: int,
    master_seed: int,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
    record: Union[RecordMode, str] = RecordMode.ENDPOINTS,
) -> List[PathBatch]:
    """Simulate one batch per grid with common random numbers.

    For additive drivers on nested uniform grids every rung aggregates the
    driver increments of the finest grid, and the finest rung equals
    simulate_batch on that grid. Otherwise each rung is simulated with the
    same master seed and stream ids.

    Args:
        spec: Model
        grids: Time grids of the ladder
        n_paths: Paths per rung
        master_seed: Master seed
        workers: Parallel workers
        block_size: Paths per block
        record: full or endpoints

    Returns:
        One PathBatch per grid, in the order given
    """
    if not grids:
        raise DomainError("the ladder needs at least one grid")
    if n_paths < 1:
        raise DomainError(f"n_paths must be >= 1, got {n_paths}")
    mode = RecordMode(record)
    finest = _nested(grids) if spec.additive_noise else None
    if finest is None:
        logger.info("ladder without shared driver increments; rungs share seeds only")
        return [
            simulate_batch(spec, g, n_paths, master_seed, workers, block_size, mode)
            for g in grids
        ]

    recorded = [_recorded_steps(g, mode) for g in grids]
    plan = step_plan(spec, grids[finest].steps)
    parts = _run_blocks(
        _simulate_ladder_block,
        (spec, grids, finest, master_seed, recorded, plan),
        n_paths,
        block_size,
        workers,
    )
    return [
        PathBatch(
            states=np.concatenate([p[r] for p in parts], axis=0),
            grid=g,
            recorded=recorded[r],
            master_seed=master_seed,
            block_size=block_size,
        )
        for r, g in enumerate(grids)
    ]
