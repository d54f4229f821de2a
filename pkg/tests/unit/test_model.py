"""Unit tests for the model layer: specs, test functions and assumption checks."""

import numpy as np
import pytest
from pydantic import ValidationError

from core.errors import DomainError, ModelValidationError
from core.models import AlphaRegime
from skills.model import (
    ModelSpec,
    constant_test_function,
    cosine_test_function,
    effective_drift_a_alpha,
    linear_test_function,
    probe_points,
    quadratic_test_function,
    validate,
    validate_or_raise,
    weierstrass_coefficient,
    weierstrass_test_function,
)


def tilted(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return 1.0 + 0.3 * w[:, 0]


def test_model_spec_regime_and_defaults() -> None:
    """Test regime classification and neutral coefficients."""
    spec = ModelSpec(alpha=0.7, dim=2, horizon=1.0, x0=[0.0, 1.0])
    x = np.ones((3, 2))

    assert spec.regime is AlphaRegime.SUB_ONE
    assert spec.is_isotropic
    assert spec.additive_noise
    assert np.all(spec.a(x) == 0.0)
    assert np.allclose(spec.c(x), np.eye(2))
    assert np.all(spec.h(x, x) == 1.0)


def test_model_spec_rejects_bad_x0() -> None:
    """Test x0 must match the dimension."""
    with pytest.raises(ValidationError):
        ModelSpec(alpha=1.5, dim=2, horizon=1.0, x0=[0.0])


def test_model_spec_rejects_alpha_out_of_range() -> None:
    """Test alpha must lie in (0, 2]."""
    with pytest.raises(ValidationError):
        ModelSpec(alpha=2.5, dim=1, horizon=1.0, x0=0.0)


def test_cosine_test_function_derivatives() -> None:
    """Test analytic and finite-difference derivatives agree."""
    g = cosine_test_function(np.array([1.0, -2.0]), phase=0.3)
    x = np.array([[0.2, 0.1], [-1.0, 0.5]])
    numeric = g.model_copy(update={"gradient": None, "hessian": None})

    assert g(x).shape == (2,)
    assert np.allclose(g.grad(x), numeric.grad(x), atol=1e-7)
    assert np.allclose(g.hess(x), numeric.hess(x), atol=1e-5)
    assert g.max_frequency == 2.0
    assert g.far_field_mean == 0.0


def test_simple_test_functions() -> None:
    """Test linear, quadratic and constant test functions."""
    x = np.array([[1.0, 2.0]])
    assert linear_test_function(np.array([1.0, 1.0]), 0.5)(x)[0] == pytest.approx(3.5)
    assert quadratic_test_function(2)(x)[0] == pytest.approx(5.0)
    assert constant_test_function(2.0)(x)[0] == 2.0
    assert not linear_test_function(np.array([1.0, 0.0])).bounded


def test_weierstrass_coefficient_positive() -> None:
    """Test the coefficient stays above its lower bound."""
    w = weierstrass_coefficient(0.75, 0.25, 12)
    x = np.linspace(-10.0, 10.0, 20001)

    assert w.lower_bound > 0.0
    assert np.min(w(x)) >= w.lower_bound - 1e-12
    peak = 1.0 + 0.25 * np.sum(2.0 ** (-0.75 * np.arange(13)))
    assert w(np.array([0.0]))[0] == pytest.approx(peak)


@pytest.mark.parametrize(
    "beta,amplitude,levels",
    [(1.0, 0.25, 12), (0.5, 1.0, 12), (0.75, 0.25, 4), (0.1, 0.9, 12)],
)
def test_weierstrass_coefficient_rejects(beta, amplitude, levels) -> None:
    """Test out-of-range parameters and a coefficient that reaches zero."""
    with pytest.raises(DomainError):
        weierstrass_coefficient(beta, amplitude, levels)


def test_weierstrass_test_function_axis() -> None:
    """Test the Weierstrass test function only reads its axis."""
    f = weierstrass_test_function(0.75, levels=10, axis=1, dim=2)
    x = np.array([[0.0, 0.4], [5.0, 0.4]])

    assert f(x)[0] == pytest.approx(f(x)[1])
    assert f.declared_smoothness == 0.75
    assert np.all(f.grad(x)[:, 0] == 0.0)


def test_effective_drift_isotropic_is_model_drift() -> None:
    """Test a_alpha = a for isotropic super-1 models."""
    spec = ModelSpec(alpha=1.5, dim=1, horizon=1.0, x0=0.0, drift=lambda x: 0.5 * x)
    assert effective_drift_a_alpha(spec, np.array([2.0]))[0] == pytest.approx(1.0)


@pytest.mark.parametrize("alpha,expected", [(0.5, 0.6 / 0.5), (1.5, -0.6 / 0.5)])
def test_effective_drift_tilted_modulation(alpha, expected) -> None:
    """Test the first sphere moment 2 * kappa enters with the regime sign."""
    spec = ModelSpec(
        alpha=alpha,
        dim=1,
        horizon=1.0,
        x0=0.0,
        drift=lambda x: np.ones_like(x),
        direction_modulation=tilted,
    )
    value = effective_drift_a_alpha(spec, np.array([0.0]))[0]
    # the model drift is dropped below alpha = 1
    shift = 0.0 if alpha < 1.0 else 1.0
    assert value == pytest.approx(expected + shift)


def test_probe_points_include_x0() -> None:
    """Test probe layout and determinism."""
    spec = ModelSpec(alpha=1.5, dim=2, horizon=1.0, x0=[1.0, -1.0])
    probes = probe_points(spec, 16)

    assert probes.shape == (17, 2)
    assert np.allclose(probes[-1], [1.0, -1.0])
    assert np.all(np.abs(probes - spec.x0) <= spec.probe_radius)
    assert np.array_equal(probes, probe_points(spec, 16))


def test_validate_passes_isotropic_model() -> None:
    """Test the neutral model passes every check."""
    report = validate(ModelSpec(alpha=1.2, dim=2, horizon=1.0, x0=[0.0, 0.0]))
    assert report.passed
    assert report.mu is not None and report.mu > 0.0
    assert report.n_probes == 257


def test_validate_degenerate_jump_scale() -> None:
    """Test a vanishing c is reported and raised."""
    spec = ModelSpec(
        alpha=1.5,
        dim=1,
        horizon=1.0,
        x0=0.0,
        jump_scale=lambda x: np.zeros((x.shape[0], 1, 1)),
    )
    report = validate(spec)

    assert not report.passed
    assert report.issues[0].assumption == "det-c"
    with pytest.raises(ModelValidationError):
        validate_or_raise(spec)


def test_validate_degenerate_diffusion() -> None:
    """Test (B xi, xi) below mu is reported at alpha = 2."""
    spec = ModelSpec(
        alpha=2.0,
        dim=2,
        horizon=1.0,
        x0=[0.0, 0.0],
        diffusion=lambda x: np.zeros((x.shape[0], 2, 2)),
    )
    issues = {issue.assumption for issue in validate(spec).issues}
    assert "nondegeneracy" in issues


def test_validate_unbounded_drift() -> None:
    """Test a drift beyond the coefficient bound is reported."""
    spec = ModelSpec(alpha=1.5, dim=1, horizon=1.0, x0=0.0, drift=lambda x: 1e9 * x)
    issues = {issue.assumption for issue in validate(spec).issues}
    assert "boundedness" in issues


def test_validate_asymmetric_modulation_at_alpha_one() -> None:
    """Test alpha = 1 needs h(x, -w) = h(x, w)."""
    spec = ModelSpec(
        alpha=1.0, dim=2, horizon=1.0, x0=[0.0, 0.0], direction_modulation=tilted
    )
    issues = {issue.assumption for issue in validate(spec).issues}
    assert "m1-symmetry" in issues


def test_validate_nonpositive_modulation() -> None:
    """Test a modulation with negative values is reported."""
    spec = ModelSpec(
        alpha=1.5,
        dim=2,
        horizon=1.0,
        x0=[0.0, 0.0],
        direction_modulation=lambda x, w: w[:, 0],
    )
    issues = {issue.assumption for issue in validate(spec).issues}
    assert "modulation" in issues
