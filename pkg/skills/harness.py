"""Weak-error measurement and rate fitting along step-size ladders."""

import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np

from core.errors import DomainError, InconclusiveStudyError
from core.models import McEstimate, PathBatch, RateFit, RecordMode, ReferenceKind, TimeGrid
from core.rng import derive_seed
from skills.euler import DEFAULT_BLOCK_SIZE, simulate_batch, simulate_ladder, uniform_grid
from skills.kolmogorov_oracle import MAX_ORACLE_DIM, oracle_expectation
from skills.model import ModelSpec, TestFunction, probe_points

logger = logging.getLogger(__name__)

NOISE_FLOOR = 5.0
REFERENCE_TAG = 1
INDEPENDENT_TAG = 100
DEFAULT_PROBES = 8


def predicted_kappa(alpha: float, beta: Optional[float]) -> float:
    """Weak rate kappa(alpha, beta): beta / alpha below alpha, 1 above.

    Args:
        alpha: Stability index in (0, 2]
        beta: Holder exponent; None or inf for smooth data

    Returns:
        Predicted order

    Raises:
        DomainError: If beta is not positive, is an integer or equals alpha
    """
    if not 0.0 < alpha <= 2.0:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    if beta is None or math.isinf(beta):
        return 1.0
    if beta <= 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    if float(beta).is_integer():
        raise DomainError(f"beta must not be an integer, got {beta}")
    if beta == alpha:
        raise DomainError(f"beta must differ from alpha={alpha}")
    return beta / alpha if beta < alpha else 1.0


def _kappa_or_none(alpha: float, beta: Optional[float]) -> Optional[float]:
    try:
        return predicted_kappa(alpha, beta)
    except DomainError as e:
        logger.warning("no predicted rate: %s", e)
        return None


def fit_rate(
    deltas: Sequence[float],
    errors: Sequence[float],
    stderrs: Sequence[float],
    predicted: Optional[float] = None,
    noise_factor: float = NOISE_FLOOR,
    require_fit: bool = True,
) -> RateFit:
    """Weighted least squares of log error against log delta.

    Points whose error does not exceed noise_factor * stderr are kept in the
    result but left out of the fit. Weights are (error / stderr)^2, the
    inverse variance of log error; without error bars every point weighs the
    same.

    Args:
        deltas: Step sizes
        errors: Absolute weak errors
        stderrs: Standard errors of the errors
        predicted: Predicted order stored with the fit
        noise_factor: Noise-floor multiple
        require_fit: Raise instead of returning an empty fit

    Returns:
        RateFit

    Raises:
        InconclusiveStudyError: If fewer than two points clear the noise floor
    """
    d = np.asarray(deltas, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    s = np.asarray(stderrs, dtype=float)
    if not d.shape == e.shape == s.shape:
        raise DomainError("deltas, errors and stderrs must have the same length")
    used = (e > noise_factor * s) & (e > 0.0)
    fit = RateFit(
        deltas=d.tolist(),
        errors=e.tolist(),
        stderrs=s.tolist(),
        used=used.tolist(),
        predicted_kappa=predicted,
    )
    if used.sum() < 2:
        message = f"{int(used.sum())} of {d.size} ladder points clear the noise floor"
        if require_fit:
            raise InconclusiveStudyError(message)
        logger.info("no rate fit: %s", message)
        return fit

    x = np.log(d[used])
    y = np.log(e[used])
    su = s[used]
    weights = (e[used] / su) ** 2 if np.all(su > 0.0) else np.ones(x.size)
    design = np.column_stack([np.ones_like(x), x])
    normal = design.T @ (weights[:, None] * design)
    coef = np.linalg.solve(normal, design.T @ (weights * y))
    residual = y - design @ coef
    ybar = float(np.average(y, weights=weights))
    ss_tot = float(np.sum(weights * (y - ybar) ** 2))
    ss_res = float(np.sum(weights * residual**2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0

    cov = np.linalg.inv(normal)
    if x.size > 2:
        cov = cov * ss_res / (x.size - 2)
    elif not np.all(su > 0.0):
        cov = cov * 0.0
    return fit.model_copy(
        update={
            "slope": float(coef[1]),
            "intercept": float(coef[0]),
            "slope_stderr": float(math.sqrt(max(cov[1, 1], 0.0))),
            "r_squared": r_squared,
        }
    )


def ladder_grids(horizon: float, deltas: Sequence[float]) -> List[TimeGrid]:
    """Uniform grids for a decreasing ladder of step sizes dividing the horizon."""
    if len(deltas) == 0:
        raise DomainError("the ladder is empty")
    if any(later >= earlier for earlier, later in zip(deltas, deltas[1:])):
        raise DomainError("ladder deltas must be strictly decreasing")
    grids = []
    for delta in deltas:
        if not 0.0 < delta <= horizon:
            raise DomainError(f"delta must lie in (0, {horizon}], got {delta}")
        n = int(round(horizon / delta))
        if abs(n * delta - horizon) > 1e-9 * horizon:
            raise DomainError(f"delta={delta} does not divide the horizon {horizon}")
        grids.append(uniform_grid(horizon, n))
    return grids


def default_ladder(horizon: float, coarsest: int = 3, finest: int = 8) -> List[float]:
    """Step sizes 2^-coarsest T, ..., 2^-finest T."""
    return [horizon * 2.0**-k for k in range(coarsest, finest + 1)]


def _resolve_reference(
    spec: ModelSpec, g: TestFunction, reference: Union[ReferenceKind, str]
) -> ReferenceKind:
    kind = ReferenceKind(reference)
    if kind is not ReferenceKind.AUTO:
        return kind
    if spec.constant_coefficients and (g.trig_frequency is not None or spec.dim <= MAX_ORACLE_DIM):
        return ReferenceKind.ORACLE
    return ReferenceKind.FINE_GRID


def is_exploratory(spec: ModelSpec, g: TestFunction) -> bool:
    """Whether g is rougher than C^(alpha + beta) for the model's beta."""
    if spec.holder_beta is None:
        return False
    return g.declared_smoothness < spec.alpha + spec.holder_beta


def weak_error_study(
    spec: ModelSpec,
    g: TestFunction,
    deltas: Sequence[float],
    n_paths: int,
    reference: Union[ReferenceKind, str] = ReferenceKind.AUTO,
    seed: int = 0,
    workers: int = 1,
    crn: bool = True,
    reference_factor: int = 16,
    reference_paths_factor: int = 4,
    block_size: int = DEFAULT_BLOCK_SIZE,
    require_fit: bool = True,
) -> RateFit:
    """Measure |E g(Y_T^delta) - E g(X_T)| along a ladder and fit the order.

    Args:
        spec: Model
        g: Test function
        deltas: Strictly decreasing step sizes dividing T
        n_paths: Paths per rung
        reference: oracle, fine-grid or auto (oracle for constant coefficients)
        seed: Master seed
        workers: Parallel workers
        crn: Share random streams across rungs
        reference_factor: Fine reference step is min(deltas) / reference_factor
        reference_paths_factor: Paths of the fine reference per rung path
        block_size: Paths per block
        require_fit: Raise when the ladder is inconclusive

    Returns:
        RateFit

    Raises:
        InconclusiveStudyError: If require_fit and the noise floor dominates
        OracleError: If an oracle reference is requested for a model without one
    """
    grids = ladder_grids(spec.horizon, deltas)
    kind = _resolve_reference(spec, g, reference)
    exploratory = is_exploratory(spec, g)
    if exploratory:
        logger.warning(
            "g has smoothness %.3g < alpha + beta; the study is exploratory",
            g.declared_smoothness,
        )

    # Step 1: reference value
    if kind is ReferenceKind.ORACLE:
        ref_value = oracle_expectation(spec, g)
        ref_stderr = 0.0
    else:
        if reference_factor < 8:
            raise DomainError(f"reference_factor must be >= 8, got {reference_factor}")
        fine = uniform_grid(spec.horizon, grids[-1].n_steps * reference_factor)
        logger.info("fine-grid reference with %d steps", fine.n_steps)
        batch = simulate_batch(
            spec,
            fine,
            reference_paths_factor * n_paths,
            derive_seed(seed, REFERENCE_TAG),
            workers,
            block_size,
            RecordMode.ENDPOINTS,
        )
        estimate = McEstimate.from_samples(g(batch.terminal))
        ref_value, ref_stderr = estimate.mean, estimate.stderr

    # Step 2: ladder batches
    if crn:
        batches = simulate_ladder(spec, grids, n_paths, seed, workers, block_size)
    else:
        batches = [
            simulate_batch(
                spec,
                grid,
                n_paths,
                derive_seed(seed, INDEPENDENT_TAG + k),
                workers,
                block_size,
                RecordMode.ENDPOINTS,
            )
            for k, grid in enumerate(grids)
        ]

    # Step 3: errors with propagated error bars
    errors, stderrs = [], []
    for grid, batch in zip(grids, batches):
        estimate = McEstimate.from_samples(g(batch.terminal))
        errors.append(abs(estimate.mean - ref_value))
        stderrs.append(math.hypot(estimate.stderr, ref_stderr))
        logger.debug(
            "delta=%.4g: mean %.6g, error %.3g +- %.2g",
            grid.delta,
            estimate.mean,
            errors[-1],
            stderrs[-1],
        )

    fit = fit_rate(
        [g_.delta for g_ in grids],
        errors,
        stderrs,
        predicted=_kappa_or_none(spec.alpha, spec.holder_beta),
        require_fit=require_fit,
    )
    return fit.model_copy(
        update={
            "reference_value": ref_value,
            "reference_stderr": ref_stderr,
            "reference_kind": kind.value,
            "n_paths": n_paths,
            "exploratory": exploratory,
        }
    )


def successive_differences(batches: Sequence[PathBatch], g: TestFunction) -> List[McEstimate]:
    """Paired estimates of E[g(Y^delta_k) - g(Y^delta_(k+1))] for neighbouring rungs."""
    return [
        McEstimate.from_samples(g(coarse.terminal) - g(fine.terminal))
        for coarse, fine in zip(batches, batches[1:])
    ]


def one_step_check(
    spec: ModelSpec,
    f: TestFunction,
    deltas: Sequence[float],
    n_paths: int,
    seed: int = 0,
    probes: Optional[np.ndarray] = None,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
    require_fit: bool = True,
) -> RateFit:
    """Decay of sup_x |E f(Y_delta) - f(x)| for a single Euler step.

    Every start point and step size uses the same master seed.

    Args:
        spec: Model
        f: Test function; its declared smoothness is the exponent beta
        deltas: Strictly decreasing step sizes
        n_paths: Paths per start point
        seed: Master seed
        probes: Start points (k, d); defaults to probe_points(spec, 8)
        workers: Parallel workers
        block_size: Paths per block
        require_fit: Raise when the ladder is inconclusive

    Returns:
        RateFit with predicted_kappa(alpha, beta_f)
    """
    if any(later >= earlier for earlier, later in zip(deltas, deltas[1:])):
        raise DomainError("ladder deltas must be strictly decreasing")
    points = probe_points(spec, DEFAULT_PROBES) if probes is None else np.atleast_2d(probes)
    errors, stderrs = [], []
    for delta in deltas:
        if delta <= 0.0:
            raise DomainError(f"delta must be positive, got {delta}")
        grid = uniform_grid(delta, 1)
        worst: Optional[McEstimate] = None
        for x in points:
            local = spec.model_copy(update={"x0": np.asarray(x, dtype=float), "horizon": delta})
            batch = simulate_batch(
                local, grid, n_paths, seed, workers, block_size, RecordMode.ENDPOINTS
            )
            estimate = McEstimate.from_samples(f(batch.terminal) - float(f(x[None])[0]))
            if worst is None or abs(estimate.mean) > abs(worst.mean):
                worst = estimate
        assert worst is not None
        errors.append(abs(worst.mean))
        stderrs.append(worst.stderr)
        logger.debug("one step delta=%.4g: sup %.3g +- %.2g", delta, errors[-1], stderrs[-1])

    fit = fit_rate(
        deltas,
        errors,
        stderrs,
        predicted=_kappa_or_none(spec.alpha, f.declared_smoothness),
        require_fit=require_fit,
    )
    return fit.model_copy(update={"n_paths": n_paths})


def estimate_functional(batch: PathBatch, f: TestFunction) -> McEstimate:
    """Estimate E sum_i f(Y_tau_i) (tau_(i+1) - tau_i), the left-point time integral.

    Raises:
        DomainError: If the batch is empty or does not record every grid point
    """
    if batch.n_paths == 0:
        raise DomainError("the batch is empty")
    if list(batch.recorded) != list(range(len(batch.grid.nodes))):
        raise DomainError("the time integral needs a batch recorded at every grid point")
    steps = batch.grid.steps
    left = batch.states[:, :-1, :]
    values = f(left.reshape(-1, batch.dim)).reshape(batch.n_paths, -1)
    return McEstimate.from_samples(values @ steps)
