"""Unit tests for the Levy component."""

import math

import numpy as np
import pytest

from core.errors import DomainError, LevyMeasureError
from core.models import AlphaRegime
from skills.levy_component import (
    AtomicMeasure,
    DensityMeasure,
    LevyComponent,
    TemperedStableMeasure,
    default_small_cut,
    large_jump_batch,
    region_integral,
    sample_large_jumps,
    sample_small_jumps,
    small_jump_batch,
)


def additive_map(x: np.ndarray, marks: np.ndarray) -> np.ndarray:
    return np.tile(marks[:, None], (1, x.shape[1]))


@pytest.fixture
def rng():
    """Fixed generator."""
    return np.random.default_rng(7)


@pytest.fixture
def atomic_component():
    """Two large atoms and one small atom."""
    measure = AtomicMeasure(np.array([2.0, -3.0, 0.5]), np.array([1.0, 0.5, 4.0]))
    return LevyComponent(measure=measure, jump_map=additive_map)


def test_atomic_measure_mass_and_integral() -> None:
    """Test shell masses and integrals of an atomic measure."""
    measure = AtomicMeasure(np.array([2.0, -3.0, 0.5]), np.array([1.0, 0.5, 4.0]))
    assert measure.mass(1.0) == pytest.approx(1.5)
    assert measure.mass(0.0, 1.0) == pytest.approx(4.0)
    assert measure.integrate(lambda v: v, 1.0) == pytest.approx(0.5)
    assert measure.integrate(lambda v: v, 5.0) == pytest.approx(0.0)
    assert not measure.symmetric


def test_atomic_measure_validation() -> None:
    """Test mismatched or negative weights are rejected."""
    with pytest.raises(DomainError):
        AtomicMeasure(np.array([1.0, 2.0]), np.array([1.0]))
    with pytest.raises(DomainError):
        AtomicMeasure(np.array([1.0]), np.array([-1.0]))


def test_atomic_measure_symmetry() -> None:
    """Test symmetric atoms are detected."""
    measure = AtomicMeasure(np.array([-1.5, 1.5]), np.array([2.0, 2.0]))
    assert measure.symmetric


def test_density_measure_mass(rng) -> None:
    """Test a uniform density on [-2, 2]."""
    measure = DensityMeasure(lambda v: np.full_like(v, 0.25), support_radius=2.0)
    assert measure.mass(0.0) == pytest.approx(1.0)
    assert measure.mass(1.0) == pytest.approx(0.5)
    marks = measure.sample(1.0, math.inf, rng, 20_000)
    assert np.all((np.abs(marks) > 1.0 - 1e-9) & (np.abs(marks) <= 2.0))
    assert abs(np.mean(marks > 0.0) - 0.5) < 0.02


def test_density_measure_rejects_bad_support() -> None:
    """Test support_radius must be positive."""
    with pytest.raises(DomainError):
        DensityMeasure(lambda v: v, support_radius=0.0)


def test_tempered_stable_mass_closed_form() -> None:
    """Test the untempered tail mass c lo^-index / index."""
    measure = TemperedStableMeasure(index=0.5, tempering=0.0)
    assert measure.mass(1.0) == pytest.approx(2.0 * 1.0 / 0.5)
    with pytest.raises(LevyMeasureError):
        measure.mass(0.0, 1.0)


def test_tempered_stable_sampling_in_shell(rng) -> None:
    """Test tempered marks stay in the requested shell."""
    measure = TemperedStableMeasure(index=1.2, c_plus=1.0, c_minus=0.0, tempering=2.0)
    marks = measure.sample(0.1, 1.0, rng, 5000)
    assert np.all(marks > 0.1)
    assert np.all(marks <= 1.0)
    assert not measure.symmetric


def test_tempered_stable_rejects_bad_index() -> None:
    """Test the index domain check."""
    with pytest.raises(DomainError):
        TemperedStableMeasure(index=2.0)


def test_default_small_cut_finite_measure() -> None:
    """Test cut 0 when the whole unit ball fits the jump target."""
    measure = AtomicMeasure(np.array([0.5]), np.array([1.0]))
    assert default_small_cut(measure, 0.1) == 0.0


def test_default_small_cut_infinite_activity() -> None:
    """Test the bisected cut meets the expected jump target."""
    measure = TemperedStableMeasure(index=1.5, tempering=1.0)
    cut = default_small_cut(measure, 0.01, target=10.0)
    assert 0.0 < cut < 1.0
    assert 0.01 * measure.mass(cut, 1.0) <= 10.0 * (1.0 + 1e-6)


def test_region_integral_atomic(atomic_component) -> None:
    """Test the shell integral of l(x, v) = v."""
    x = np.zeros((3, 2))
    large = region_integral(atomic_component, x, 1.0)
    small = region_integral(atomic_component, x, 0.0, 1.0)
    assert large.shape == (3, 2)
    assert np.allclose(large, 0.5)
    assert np.allclose(small, 2.0)


def test_region_integral_odd_map_symmetric_measure() -> None:
    """Test the odd-map shortcut returns zeros."""
    comp = LevyComponent(
        measure=TemperedStableMeasure(index=0.7),
        jump_map=additive_map,
        odd_jump_map=True,
    )
    assert np.all(region_integral(comp, np.ones((4, 1)), 1.0) == 0.0)


def test_large_jump_batch_mean(atomic_component, rng) -> None:
    """Test the compound Poisson mean dt * integral of l over |v| > 1."""
    dt = 0.5
    x = np.zeros((100_000, 1))
    jumps = large_jump_batch(atomic_component, x, dt, rng)
    assert abs(jumps.mean() - dt * 0.5) < 0.03


def test_large_jump_batch_rejects_bad_dt(atomic_component, rng) -> None:
    """Test dt must be positive."""
    with pytest.raises(DomainError):
        large_jump_batch(atomic_component, np.zeros((1, 1)), 0.0, rng)


def test_small_jump_batch_compensated_mean(rng) -> None:
    """Test q-compensated small jumps have mean zero above alpha = 1."""
    comp = LevyComponent(
        measure=TemperedStableMeasure(index=1.4, c_plus=1.0, c_minus=0.2, tempering=1.0),
        jump_map=additive_map,
        small_cut=0.05,
    )
    jump_sum, compensator = small_jump_batch(
        comp, np.zeros((40_000, 1)), 0.1, AlphaRegime.SUPER_ONE, rng
    )
    total = jump_sum + compensator
    assert np.all(compensator == compensator[0])
    assert compensator[0, 0] < 0.0
    assert abs(total.mean()) < 5.0 * total.std() / math.sqrt(total.shape[0])


def test_small_jump_batch_sub_one_compensator(rng) -> None:
    """Test below alpha = 1 the compensator is the mean of the dropped jumps."""
    comp = LevyComponent(
        measure=TemperedStableMeasure(index=0.6, c_plus=1.0, c_minus=0.0),
        jump_map=additive_map,
        small_cut=0.1,
    )
    _, compensator = small_jump_batch(comp, np.zeros((2, 1)), 0.2, AlphaRegime.SUB_ONE, rng)
    expected = 0.2 * region_integral(comp, np.zeros((1, 1)), 0.0, 0.1)[0, 0]
    assert compensator[0, 0] == pytest.approx(expected)
    assert compensator[0, 0] > 0.0


def test_single_state_wrappers(atomic_component, rng) -> None:
    """Test the frozen-state wrappers return vectors."""
    x = np.array([0.3, -0.1])
    assert sample_large_jumps(atomic_component, x, 0.1, rng).shape == (2,)
    jump, comp = sample_small_jumps(atomic_component, x, 0.1, "sub-1", rng)
    assert jump.shape == (2,)
    assert comp.shape == (2,)
