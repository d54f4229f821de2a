"""Unit tests for the Fourier symbol and the Kolmogorov oracle."""

import math
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from core.errors import AliasingWarning, OracleError, PathFormatError
from core.utils import write_csv
from skills.families import build_model
from skills.kolmogorov_oracle import (
    build_symbol_grid,
    default_half_width,
    exact_expectation_trig,
    model_symbol,
    oracle_expectation,
    read_grid_csv,
    semigroup_apply,
    symbol_psi0,
    write_grid_csv,
)
from skills.model import constant_test_function, cosine_test_function, weierstrass_test_function
from skills.stable_sampling import scale_to_driver_intensity


def heat_symbol(freqs: np.ndarray) -> np.ndarray:
    return symbol_psi0(freqs, 2.0, B=np.eye(freqs.shape[1]))


def bump(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.sum(x**2, axis=1))


def test_symbol_gaussian() -> None:
    """Test psi = -|xi|^2 for B = I."""
    xi = np.array([1.0, -2.0])
    assert symbol_psi0(xi, 2.0, B=np.eye(2)) == pytest.approx(-5.0)


def test_symbol_isotropic_stable() -> None:
    """Test psi = -K |xi|^alpha for the unit directional density."""
    psi = symbol_psi0(np.array([2.0]), 1.5, r=1.0)
    assert psi.real == pytest.approx(-scale_to_driver_intensity(1.5, 1) * 2.0**1.5, rel=1e-8)
    assert psi.imag == pytest.approx(0.0, abs=1e-12)


def test_symbol_vanishes_at_zero() -> None:
    """Test psi(0) = 0."""
    assert symbol_psi0(np.zeros(2), 1.3, r=1.0) == 0.0


def test_symbol_drift_term() -> None:
    """Test the drift adds i (a, xi)."""
    psi = symbol_psi0(np.array([3.0]), 2.0, a1=np.array([0.5]))
    assert psi == pytest.approx(1.5j)


def test_symbol_rejects_bad_alpha() -> None:
    """Test alpha outside (0, 2] is refused."""
    with pytest.raises(OracleError):
        symbol_psi0(np.array([1.0]), 2.5)


def test_model_symbol_rejects_variable_coefficients() -> None:
    """Test the oracle refuses state-dependent models."""
    with pytest.raises(OracleError):
        model_symbol(build_model("brownian-smooth"))


def test_semigroup_identity_at_time_zero() -> None:
    """Test P_0 g = g."""
    grid = build_symbol_grid(heat_symbol, 2.0, np.zeros(1), 4.0 * math.pi, n=64)
    g = np.sin(grid.points[:, 0])
    assert np.array_equal(semigroup_apply(g, 0.0, grid), g)


def test_semigroup_conserves_constants() -> None:
    """Test P_t 1 = 1 for a two-dimensional stable symbol."""
    spec = build_model("isotropic-stable-const", alpha=1.5, dim=2, x0=[0.0, 0.0])
    grid = build_symbol_grid(model_symbol(spec), 1.5, spec.x0, math.pi, n=32)
    out = semigroup_apply(grid.sample(constant_test_function(1.0)), 0.7, grid)
    assert np.allclose(out, 1.0, atol=1e-12)


def test_semigroup_cosine_eigenfunction() -> None:
    """Test P_t cos = exp(-t) cos under psi = -|xi|^2."""
    grid = build_symbol_grid(heat_symbol, 2.0, np.zeros(1), 4.0 * math.pi, n=64)
    g = np.cos(grid.points[:, 0])
    out = semigroup_apply(g, 0.8, grid)
    assert np.allclose(out, math.exp(-0.8) * g, atol=1e-10)


def test_semigroup_warns_on_aliasing() -> None:
    """Test rough grid data triggers the aliasing guard."""
    grid = build_symbol_grid(heat_symbol, 2.0, np.zeros(1), math.pi, n=64)
    noise = np.random.default_rng(0).standard_normal(64)
    with pytest.warns(AliasingWarning):
        semigroup_apply(noise, 1e-6, grid)


def test_semigroup_rejects_bad_input() -> None:
    """Test negative time and mismatched shapes."""
    grid = build_symbol_grid(heat_symbol, 2.0, np.zeros(1), math.pi, n=16)
    with pytest.raises(OracleError):
        semigroup_apply(np.zeros(16), -1.0, grid)
    with pytest.raises(OracleError):
        semigroup_apply(np.zeros(8), 1.0, grid)


def test_symbol_grid_limits() -> None:
    """Test the dimension and power-of-two checks."""
    with pytest.raises(OracleError):
        build_symbol_grid(heat_symbol, 2.0, np.zeros(3), math.pi, n=8)
    with pytest.raises(OracleError):
        build_symbol_grid(heat_symbol, 2.0, np.zeros(1), math.pi, n=100)


def test_symbol_grid_ellipticity_bound() -> None:
    """Test a demanded ellipticity above the symbol's is refused."""
    with pytest.raises(OracleError):
        build_symbol_grid(heat_symbol, 2.0, np.zeros(1), math.pi, n=16, mu_prime=2.0)


def test_exact_expectation_trig_heat() -> None:
    """Test E cos(X_t) = cos(x0) exp(-t/2) for Brownian motion."""
    value = exact_expectation_trig(
        np.array([0.3]), 1.0, np.array([1.0]), 2.0, B=0.5 * np.eye(1)
    )
    assert value == pytest.approx(math.cos(0.3) * math.exp(-0.5), rel=1e-12)


def test_oracle_expectation_uses_closed_form_for_cosines() -> None:
    """Test the cosine shortcut agrees with the closed form."""
    spec = build_model("isotropic-stable-const", alpha=1.5, x0=[0.5])
    value = oracle_expectation(spec, cosine_test_function(np.array([1.0])))
    exact = math.cos(0.5) * math.exp(-scale_to_driver_intensity(1.5, 1))
    assert value == pytest.approx(exact, rel=1e-8)


def test_oracle_expectation_on_grid_matches_series() -> None:
    """Test the FFT route on a Weierstrass sum under Brownian motion."""
    spec = build_model("isotropic-stable-const", alpha=2.0, x0=[0.3])
    beta, levels = 0.75, 4
    k = np.arange(levels + 1)
    freq = 2.0**k
    exact = np.sum(2.0 ** (-beta * k) * np.cos(freq * 0.3) * np.exp(-0.5 * freq**2))

    value = oracle_expectation(spec, weierstrass_test_function(beta, levels=levels))
    assert value == pytest.approx(exact, abs=1e-10)


def test_default_half_width_is_multiple_of_pi() -> None:
    """Test the box covers 16 (T^(1/alpha) + |x0|) in whole multiples of pi."""
    width = default_half_width(1.5, 1.0, np.array([0.0]))
    assert width == pytest.approx(6.0 * math.pi)
    assert default_half_width(2.0, 1.0, np.array([0.3])) == pytest.approx(7.0 * math.pi)


def test_grid_csv_roundtrip(tmp_path: Path) -> None:
    """Test grid functions survive the CSV file."""
    points = np.array([[0.0, 1.0], [0.5, -0.25], [1.0 / 3.0, 2.0]])
    columns = {"g": np.array([1.0, 0.1, -2.5]), "u_t": np.array([0.9, 0.2, 1e-17])}
    count = write_grid_csv(tmp_path / "grid.csv", points, columns)
    restored, values = read_grid_csv(tmp_path / "grid.csv")

    assert count == 3
    assert np.array_equal(restored, points)
    assert list(values) == ["g", "u_t"]
    assert np.array_equal(values["u_t"], columns["u_t"])


def test_read_grid_csv_rejects_foreign_files(tmp_path: Path) -> None:
    """Test missing coordinates and non-numeric values."""
    no_coords = tmp_path / "a.csv"
    write_csv(no_coords, ["a", "b"], [[1.0, 2.0]])
    with pytest.raises(PathFormatError):
        read_grid_csv(no_coords)

    text = tmp_path / "b.csv"
    write_csv(text, ["x1", "g"], [["zero", 1.0]])
    with pytest.raises(PathFormatError):
        read_grid_csv(text)


def test_semigroup_composes() -> None:
    """Test P_s P_t g = P_(s+t) g for a stable symbol."""
    spec = build_model("isotropic-stable-const", alpha=1.5, x0=[0.0])
    grid = build_symbol_grid(model_symbol(spec), 1.5, spec.x0, 8.0 * math.pi, n=256)
    g = grid.sample(bump)
    twice = semigroup_apply(semigroup_apply(g, 0.3, grid), 0.5, grid)
    once = semigroup_apply(g, 0.8, grid)
    assert np.allclose(twice, once, rtol=0.0, atol=1e-9)


def test_semigroup_maximum_principle() -> None:
    """Test 0 <= P_t g <= max g for a non-negative g in two dimensions."""
    spec = build_model("anisotropic-stable", alpha=1.5, dim=2, x0=[0.0, 0.0], params={"swirl": 0.0})
    grid = build_symbol_grid(model_symbol(spec), 1.5, spec.x0, 4.0 * math.pi, n=64)
    g = grid.sample(bump)
    out = semigroup_apply(g, 0.5, grid)
    assert out.min() >= -1e-7
    assert out.max() <= g.max() + 1e-7
    assert out.max() < g.max()


def test_isotropic_symbol_matches_levy_khintchine_integral() -> None:
    """Test Re psi = -K |xi|^alpha in d=2 against the polar Levy-Khintchine integral."""
    alpha = 1.5
    head, _ = integrate.quad(lambda t: (1.0 - math.cos(t)) * t ** (-1.0 - alpha), 0.0, 1.0)
    body, _ = integrate.quad(lambda t: t ** (-1.0 - alpha), 1.0, np.inf)
    osc, _ = integrate.quad(lambda t: t ** (-1.0 - alpha), 1.0, np.inf, weight="cos", wvar=1.0)
    angular, _ = integrate.quad(
        lambda theta: abs(math.cos(theta)) ** alpha,
        0.0,
        2.0 * math.pi,
        points=[0.5 * math.pi, 1.5 * math.pi],
    )

    xi = np.array([[1.0, -0.5], [0.0, 2.0]])
    size = np.linalg.norm(xi, axis=1)
    integral = -(head + body - osc) * angular * size**alpha
    spec = build_model("isotropic-stable-const", alpha=alpha, dim=2, x0=[0.0, 0.0])
    psi = model_symbol(spec)(xi)
    unit = symbol_psi0(xi[0], alpha, r=lambda w: np.ones(w.shape[0]))

    assert np.allclose(psi.real, integral, rtol=1e-6)
    assert np.allclose(psi.real, -scale_to_driver_intensity(alpha, 2) * size**alpha, rtol=1e-10)
    assert np.allclose(psi.imag, 0.0, atol=1e-12)
    assert unit.real == pytest.approx(integral[0], rel=1e-6)
