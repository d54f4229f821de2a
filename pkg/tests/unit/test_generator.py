"""Unit tests for the generator, the mollifier and the Dynkin residual."""

import math

import numpy as np
import pytest

from core.errors import DomainError, GeneratorConvergenceError
from core.models import QuadratureSpec
from skills.families import build_model
from skills.generator import apply_generator, dynkin_residual, mollify
from skills.kolmogorov_oracle import model_symbol, symbol_psi0
from skills.levy_component import AtomicMeasure, LevyComponent
from skills.model import (
    constant_test_function,
    cosine_test_function,
    linear_test_function,
    weierstrass_test_function,
)

X = 0.3


def fourier_value(psi: complex, xi: np.ndarray, x: np.ndarray) -> float:
    return float((psi * np.exp(1j * float(np.dot(xi, x)))).real)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 1.9])
@pytest.mark.parametrize("xi", [0.5, 1.0, 2.0, 3.0])
def test_generator_on_cosine_matches_symbol(alpha, xi) -> None:
    """Test L cos(xi x) = Re[psi(xi) e^(i xi x)] for the isotropic driver."""
    spec = build_model("isotropic-stable-const", alpha=alpha, x0=[X])
    u = cosine_test_function(np.array([xi]))
    value = apply_generator(spec, u, np.array([X]))
    expected = fourier_value(symbol_psi0(np.array([xi]), alpha, r=1.0), np.array([xi]), [X])

    assert value == pytest.approx(expected, rel=1e-4)


def test_generator_in_two_dimensions() -> None:
    """Test the aligned sphere grid in d=2."""
    spec = build_model("isotropic-stable-const", alpha=1.5, dim=2, x0=[0.1, 0.2])
    xi = np.array([1.0, -0.5])
    x = np.array([0.1, 0.2])
    value = apply_generator(spec, cosine_test_function(xi), x)
    expected = fourier_value(symbol_psi0(xi, 1.5, r=1.0), xi, x)

    assert value == pytest.approx(expected, rel=1e-4)


def test_generator_with_drift() -> None:
    """Test the drift enters as (a, grad u) above alpha = 1."""
    spec = build_model("isotropic-stable-const", alpha=1.5, x0=[X], params={"drift": [0.7]})
    xi = np.array([2.0])
    value = apply_generator(spec, cosine_test_function(xi), np.array([X]))
    psi = symbol_psi0(xi, 1.5, r=1.0, a1=np.array([0.7]))

    assert value == pytest.approx(fourier_value(psi, xi, [X]), rel=1e-4)


def test_generator_gaussian_case() -> None:
    """Test L = 1/2 Laplacian for b = I."""
    spec = build_model("isotropic-stable-const", alpha=2.0, x0=[X])
    value = apply_generator(spec, cosine_test_function(np.array([2.0])), np.array([X]))
    assert value == pytest.approx(-0.5 * 4.0 * math.cos(2.0 * X), rel=1e-12)


def test_generator_is_linear() -> None:
    """Test L is linear on a phase-shifted cosine."""
    spec = build_model("isotropic-stable-const", alpha=1.2, x0=[X])
    xi, phi = np.array([1.5]), 0.4
    x = np.array([X])
    shifted = apply_generator(spec, cosine_test_function(xi, phi), x)
    plain = apply_generator(spec, cosine_test_function(xi), x)
    sine = apply_generator(spec, cosine_test_function(xi, -math.pi / 2.0), x)

    assert shifted == pytest.approx(math.cos(phi) * plain - math.sin(phi) * sine, rel=1e-10)


def test_generator_kills_constants() -> None:
    """Test L 1 = 0."""
    spec = build_model("isotropic-stable-const", alpha=0.8, x0=[X])
    value = apply_generator(spec, constant_test_function(3.0), np.array([X]))
    assert value == pytest.approx(0.0, abs=1e-12)


def test_generator_levy_part_matches_model_symbol() -> None:
    """Test generator and symbol agree with an atomic Levy component."""

    def additive(x: np.ndarray, marks: np.ndarray) -> np.ndarray:
        return marks[:, None] * np.ones((1, x.shape[1]))

    base = build_model("isotropic-stable-const", alpha=1.5, x0=[X])
    levy = LevyComponent(
        measure=AtomicMeasure(np.array([2.0, -0.5, 0.3]), np.array([0.4, 1.0, 2.0])),
        jump_map=additive,
    )
    spec = base.model_copy(update={"levy": levy})
    xi = np.array([1.3])
    value = apply_generator(spec, cosine_test_function(xi), np.array([X]))
    psi = complex(model_symbol(spec)(xi[None])[0])

    assert value == pytest.approx(fourier_value(psi, xi, [X]), rel=1e-4)


def test_generator_convergence_error() -> None:
    """Test an unreachable tolerance raises with the residual attached."""
    spec = build_model("isotropic-stable-const", alpha=1.5, x0=[X])
    quad = QuadratureSpec(rtol=1e-15, atol=0.0)
    with pytest.raises(GeneratorConvergenceError) as exc_info:
        apply_generator(spec, cosine_test_function(np.array([1.0])), np.array([X]), quad)
    assert exc_info.value.residual > 0.0


def test_mollify_reproduces_affine_functions() -> None:
    """Test constants and linear functions are unchanged."""
    x = np.array([[0.2], [1.7]])
    assert np.allclose(mollify(constant_test_function(2.0), 0.1)(x), 2.0, atol=1e-12)
    line = linear_test_function(np.array([3.0]), 1.0)
    assert np.allclose(mollify(line, 0.2)(x), line(x), atol=1e-12)
    assert np.allclose(mollify(line, 0.2).grad(x), 3.0, rtol=1e-4)


def test_mollify_derivatives_match_finite_differences() -> None:
    """Test the derivatives against finite differences of the mollified value."""
    smooth = mollify(cosine_test_function(np.array([2.0])), 0.3)
    x = np.array([[0.4]])
    step = 1e-5
    numeric = (smooth(x + step) - smooth(x - step)) / (2.0 * step)

    assert smooth.grad(x)[0, 0] == pytest.approx(numeric[0], rel=1e-4)
    assert smooth.hess(x)[0, 0, 0] == pytest.approx(
        (smooth.grad(x + step)[0, 0] - smooth.grad(x - step)[0, 0]) / (2.0 * step), rel=1e-4
    )


def test_mollify_hessian_of_cosine() -> None:
    """Test the Hessian of a mollified cosine is -|xi|^2 times its value."""
    smooth = mollify(cosine_test_function(np.array([2.0])), 0.3)
    x = np.array([[0.4], [1.1]])
    assert np.allclose(smooth.hess(x)[:, 0, 0], -4.0 * smooth(x), rtol=1e-10, atol=1e-12)
    shifted = mollify(cosine_test_function(np.array([2.0]), phase=math.pi / 2.0), 0.3)
    assert np.allclose(smooth.grad(x)[:, 0], 2.0 * shifted(x), rtol=1e-8, atol=1e-12)


def test_mollify_rejects_bad_radius() -> None:
    """Test eps must lie in (0, 1)."""
    with pytest.raises(DomainError):
        mollify(constant_test_function(), 1.0)


@pytest.mark.parametrize("beta", [0.5, 0.75])
def test_mollifier_exponents(beta) -> None:
    """Test ||f^eps - f|| ~ eps^beta and ||grad f^eps|| ~ eps^(beta - 1)."""
    f = weierstrass_test_function(beta, levels=14)
    eps = 2.0 ** -np.arange(2, 8)
    points = np.concatenate([[0.0], math.pi * 2.0 ** -np.arange(2.0, 13.0)])[:, None]
    gaps, slopes = [], []
    for e in eps:
        smooth = mollify(f, float(e))
        gaps.append(np.max(np.abs(smooth(points) - f(points))))
        slopes.append(np.max(np.abs(smooth.grad(points))))

    gap_exponent = np.polyfit(np.log(eps), np.log(gaps), 1)[0]
    grad_exponent = np.polyfit(np.log(eps), np.log(slopes), 1)[0]
    assert gap_exponent == pytest.approx(beta, abs=0.1)
    assert grad_exponent == pytest.approx(beta - 1.0, abs=0.15)


@pytest.mark.parametrize("alpha", [1.5, 2.0])
def test_dynkin_residual_small(alpha) -> None:
    """Test (E u(X_h) - u) / h - L u vanishes up to noise and O(h^(1/2))."""
    spec = build_model("isotropic-stable-const", alpha=alpha, x0=[X])
    u = cosine_test_function(np.array([1.0]))
    h = 2.0**-8
    estimate = dynkin_residual(spec, u, np.array([X]), h, 50_000, seed=3)

    assert abs(estimate.mean) <= max(3.0 * estimate.stderr, 10.0 * math.sqrt(h))


def test_dynkin_residual_rejects_bad_h() -> None:
    """Test h must lie in (0, T]."""
    spec = build_model("isotropic-stable-const", x0=[X])
    with pytest.raises(DomainError):
        dynkin_residual(spec, constant_test_function(), np.array([X]), 0.0, 10, seed=0)
