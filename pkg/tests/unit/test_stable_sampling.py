"""Unit tests for the stable samplers."""

import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.spatial.distance import cdist

from core.errors import DomainError, JumpBudgetError, TruncationWarning
from core.models import AlphaRegime, StableLaw
from core.rng import RngStream
from skills.quadrature import sphere_moment, stable_radial_constant
from skills.stable_sampling import (
    anisotropic_stable_batch,
    anisotropic_stable_increment,
    cms_standard_stable,
    default_cut_eps,
    empirical_characteristic_function,
    isotropic_driver_increment,
    isotropic_stable_vector,
    jump_intensity,
    positive_stable,
    probe_frequencies,
    sample_sphere_directions,
    scale_to_driver_intensity,
)

N_DRAWS = 100_000
CF_BOUND = 3.0 / math.sqrt(N_DRAWS)


@pytest.fixture
def rng():
    """Fixed generator for reproducible draws."""
    return np.random.default_rng(20240611)


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.5, 2.0])
def test_standard_stable_characteristic_function(alpha, rng) -> None:
    """Test empirical CF of CMS draws against exp(-|xi|^alpha)."""
    samples = cms_standard_stable(alpha, rng, size=N_DRAWS)
    freqs = probe_frequencies(1)
    ecf = empirical_characteristic_function(samples, freqs)
    exact = np.exp(-np.abs(freqs[:, 0]) ** alpha)

    assert samples.shape == (N_DRAWS,)
    assert np.max(np.abs(ecf - exact)) < CF_BOUND


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.5, 2.0])
def test_isotropic_vector_characteristic_function(alpha, rng) -> None:
    """Test empirical CF of isotropic vectors in d=2."""
    samples = isotropic_stable_vector(alpha, 2, rng, size=N_DRAWS)
    freqs = probe_frequencies(2)
    ecf = empirical_characteristic_function(samples, freqs)
    exact = np.exp(-np.linalg.norm(freqs, axis=1) ** alpha)

    assert samples.shape == (N_DRAWS, 2)
    assert np.max(np.abs(ecf - exact)) < CF_BOUND


def test_standard_stable_scalar_and_alpha_two(rng) -> None:
    """Test scalar draws and the N(0, 2) convention at alpha = 2."""
    assert np.ndim(cms_standard_stable(1.3, rng)) == 0
    gauss = cms_standard_stable(2.0, rng, size=N_DRAWS)
    assert abs(np.var(gauss) - 2.0) < 0.05


@pytest.mark.parametrize("alpha", [0.0, -0.5, 2.5, float("nan")])
def test_standard_stable_rejects_bad_alpha(alpha, rng) -> None:
    """Test DomainError outside (0, 2]."""
    with pytest.raises(DomainError):
        cms_standard_stable(alpha, rng, size=4)


def test_positive_stable_laplace_transform(rng) -> None:
    """Test E exp(-lam S) = exp(-lam^a) for Kanter draws."""
    a = 0.4
    samples = positive_stable(a, rng, size=N_DRAWS)
    assert np.all(samples > 0.0)
    for lam in (0.5, 1.0, 2.0):
        empirical = np.exp(-lam * samples).mean()
        assert abs(empirical - math.exp(-(lam**a))) < CF_BOUND



def test_cauchy_median(rng) -> None:
    """Test the alpha = 1 law is centred."""
    samples = cms_standard_stable(1.0, rng, size=N_DRAWS)
    assert abs(np.median(samples)) < 0.02


def test_positive_stable_tail_exponent(rng) -> None:
    """Test P(S > s) ~ s^(-1/2) over s in [10, 1000] for index 1/2."""
    samples = positive_stable(0.5, rng, size=N_DRAWS)
    s = np.geomspace(10.0, 1000.0, 9)
    tail = np.array([np.mean(samples > v) for v in s])
    slope = np.polyfit(np.log(s), np.log(tail), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


@pytest.mark.parametrize("a", [0.0, 1.0, 1.5])
def test_positive_stable_rejects_bad_index(a, rng) -> None:
    """Test DomainError outside (0, 1)."""
    with pytest.raises(DomainError):
        positive_stable(a, rng, size=3)


def test_isotropic_vector_gaussian_covariance(rng) -> None:
    """Test alpha = 2 coordinates are independent N(0, 2)."""
    samples = isotropic_stable_vector(2.0, 3, rng, size=N_DRAWS)
    assert np.allclose(np.cov(samples.T), 2.0 * np.eye(3), atol=0.1)


def test_isotropic_vector_angle_is_uniform(rng) -> None:
    """Test the planar angle passes a Kolmogorov-Smirnov test at 1%."""
    samples = isotropic_stable_vector(1.2, 2, rng, size=N_DRAWS)
    angle = np.mod(np.arctan2(samples[:, 1], samples[:, 0]), 2.0 * math.pi)
    result = stats.kstest(angle / (2.0 * math.pi), "uniform")
    assert result.statistic < 1.63 / math.sqrt(N_DRAWS)


def test_isotropic_vector_single_draw_shape(rng) -> None:
    """Test size=None returns one vector."""
    assert isotropic_stable_vector(1.2, 3, rng).shape == (3,)


def test_draws_reproducible_from_stream() -> None:
    """Test identical streams give identical draws."""
    stream = RngStream(master_seed=42, stream_id=3)
    first = cms_standard_stable(1.5, stream, size=1000)
    second = cms_standard_stable(1.5, stream, size=1000)
    other = cms_standard_stable(1.5, stream.spawn(4), size=1000)

    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)


def test_scale_to_driver_intensity_d1() -> None:
    """Test K(1, alpha) = 2 * N(alpha) with the two-point sphere."""
    for alpha in (0.5, 1.0, 1.5):
        assert scale_to_driver_intensity(alpha, 1) == pytest.approx(
            2.0 * stable_radial_constant(alpha)
        )
    assert scale_to_driver_intensity(1.0, 2) == pytest.approx(
        math.pi / 2.0 * sphere_moment(1.0, 2)
    )


def test_scale_to_driver_intensity_rejects_gaussian() -> None:
    """Test the driver constant is undefined at alpha = 2."""
    with pytest.raises(DomainError):
        scale_to_driver_intensity(2.0, 1)


def test_isotropic_driver_increment_characteristic_function(rng) -> None:
    """Test the dy/|y|^(1+alpha) driver has CF exp(-dt K |xi|^alpha)."""
    alpha, dt = 1.5, 0.25
    samples = isotropic_driver_increment(alpha, 1, dt, rng, size=N_DRAWS)
    freqs = probe_frequencies(1)
    k = scale_to_driver_intensity(alpha, 1)
    exact = np.exp(-dt * k * np.abs(freqs[:, 0]) ** alpha)
    ecf = empirical_characteristic_function(samples, freqs)

    assert np.max(np.abs(ecf - exact)) < CF_BOUND


def test_sphere_directions_are_unit(rng) -> None:
    """Test directions lie on the unit sphere."""
    w = sample_sphere_directions(3, rng, 500)
    assert w.shape == (500, 3)
    assert np.allclose(np.linalg.norm(w, axis=1), 1.0)


def test_jump_intensity_isotropic_closed_form() -> None:
    """Test Lambda(eps) = |S| eps^-alpha / alpha for m = 1."""
    law = StableLaw(alpha=1.5, dim=1, cut_eps=0.5)
    assert jump_intensity(law) == pytest.approx(2.0 * 0.5**-1.5 / 1.5)
    assert jump_intensity(law, eps=1.0) == pytest.approx(2.0 / 1.5)
    assert default_cut_eps(0.01, 2.0) == pytest.approx(0.1)


def test_anisotropic_batch_shapes_and_counts(rng) -> None:
    """Test batch output shapes and non-negative counts."""
    law = StableLaw(alpha=1.5, dim=2, cut_eps=0.05)
    maps = np.tile(np.eye(2), (64, 1, 1))
    result = anisotropic_stable_batch(law, None, maps, 0.01, AlphaRegime.SUPER_ONE, rng)

    assert result.jump_sum.shape == (64, 2)
    assert result.compensator.shape == (64, 2)
    assert result.counts.shape == (64,)
    assert np.all(result.counts >= 0)
    # symmetric density has no first moment
    assert np.allclose(result.compensator, 0.0)


def test_anisotropic_batch_matches_isotropic_law(rng) -> None:
    """Test the truncated sampler with Gaussian small jumps against the exact CF."""
    alpha, dt = 1.5, 0.5
    law = StableLaw(alpha=alpha, dim=1, cut_eps=default_cut_eps(dt, alpha) * 0.1)
    maps = np.tile(np.eye(1), (N_DRAWS, 1, 1))
    result = anisotropic_stable_batch(
        law, None, maps, dt, AlphaRegime.SUPER_ONE, rng, gaussian_small_jumps=True
    )
    samples = (result.jump_sum + result.compensator)[:, 0]
    freqs = probe_frequencies(1)
    k = scale_to_driver_intensity(alpha, 1)
    exact = np.exp(-dt * k * np.abs(freqs[:, 0]) ** alpha)
    ecf = empirical_characteristic_function(samples, freqs)

    assert np.max(np.abs(ecf - exact)) < 2.0 * CF_BOUND


def test_anisotropic_isotropic_jump_sum_is_centred(rng) -> None:
    """Test the truncated jump sum of the isotropic law has mean zero."""
    law = StableLaw(alpha=1.5, dim=2, cut_eps=0.1)
    maps = np.tile(np.eye(2), (N_DRAWS, 1, 1))
    result = anisotropic_stable_batch(law, None, maps, 0.01, AlphaRegime.SUPER_ONE, rng)

    mean = result.jump_sum.mean(axis=0)
    stderr = result.jump_sum.std(axis=0, ddof=1) / math.sqrt(N_DRAWS)
    # self-normalised sums of symmetric draws have sub-Gaussian tails
    assert np.all(np.abs(mean) < 4.0 * stderr)


def test_anisotropic_jump_count_mean(rng) -> None:
    """Test the Poisson count mean dt (2 pi) eps^(-alpha) / alpha."""
    dt = 0.01
    law = StableLaw(alpha=1.5, dim=2, cut_eps=0.1)
    maps = np.tile(np.eye(2), (N_DRAWS, 1, 1))
    result = anisotropic_stable_batch(law, None, maps, dt, AlphaRegime.SUPER_ONE, rng)

    expected = dt * 2.0 * math.pi * 0.1 ** (-1.5) / 1.5
    stderr = math.sqrt(expected / N_DRAWS)
    assert abs(result.counts.mean() - expected) < 3.0 * stderr
    assert jump_intensity(law) * dt == pytest.approx(expected, rel=1e-6)


def energy_statistic(distances: np.ndarray, labels: np.ndarray) -> float:
    a, b = labels, ~labels
    cross = distances[np.ix_(a, b)].mean()
    return 2.0 * cross - distances[np.ix_(a, a)].mean() - distances[np.ix_(b, b)].mean()


def test_anisotropic_rotation_is_a_pushforward() -> None:
    """Test c = R gives the law of the identity map followed by R."""
    n, angle = 600, 0.7
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    law = StableLaw(alpha=1.5, dim=2, cut_eps=0.3)
    stream = RngStream(master_seed=3, stream_id=0)
    super_one = AlphaRegime.SUPER_ONE
    mapped = anisotropic_stable_batch(
        law, None, np.tile(rotation, (n, 1, 1)), 0.5, super_one, stream
    )
    plain = anisotropic_stable_batch(
        law, None, np.tile(np.eye(2), (n, 1, 1)), 0.5, super_one, stream.spawn(1)
    )
    pooled = np.vstack([mapped.jump_sum, plain.jump_sum @ rotation.T])
    distances = cdist(pooled, pooled)
    labels = np.arange(2 * n) < n

    observed = energy_statistic(distances, labels)
    shuffle = np.random.default_rng(11)
    n_perm = 199
    exceed = sum(
        energy_statistic(distances, shuffle.permutation(labels)) >= observed
        for _ in range(n_perm)
    )
    assert (1 + exceed) / (1 + n_perm) > 0.01


def test_anisotropic_batch_jump_budget(rng) -> None:
    """Test JumpBudgetError when the truncation is too fine."""
    law = StableLaw(alpha=1.8, dim=1, cut_eps=1e-6)
    with pytest.raises(JumpBudgetError):
        anisotropic_stable_batch(
            law, None, np.eye(1)[None], 1.0, AlphaRegime.SUPER_ONE, rng, jump_budget=10.0
        )


def test_anisotropic_batch_rejects_gaussian_regime(rng) -> None:
    """Test the truncated sampler refuses alpha = 2."""
    law = StableLaw(alpha=2.0, dim=1)
    with pytest.raises(DomainError):
        anisotropic_stable_batch(law, None, np.eye(1)[None], 0.1, AlphaRegime.GAUSSIAN, rng)


def test_anisotropic_modulation_must_be_positive(rng) -> None:
    """Test a vanishing modulation is rejected."""
    law = StableLaw(alpha=0.8, dim=2, cut_eps=0.5)
    with pytest.raises(DomainError):
        anisotropic_stable_increment(
            law, lambda w: np.zeros(w.shape[0]), np.eye(2), 0.1, AlphaRegime.SUB_ONE, rng
        )


def test_anisotropic_single_increment(rng) -> None:
    """Test the single-state wrapper returns vectors."""
    law = StableLaw(
        alpha=0.8, dim=2, cut_eps=0.2, directional_density=lambda w: 1.0 + 0.3 * w[:, 0]
    )
    jump, comp = anisotropic_stable_increment(
        law, None, 2.0 * np.eye(2), 0.1, AlphaRegime.SUB_ONE, rng
    )
    assert jump.shape == (2,)
    assert comp.shape == (2,)
    assert np.all(np.isfinite(jump))


def test_probe_frequencies_layout() -> None:
    """Test probe radii and planar directions."""
    freqs = probe_frequencies(3, n=8)
    radii = np.linalg.norm(freqs, axis=1)
    assert freqs.shape == (8, 3)
    assert radii[0] == pytest.approx(0.25)
    assert radii[-1] == pytest.approx(3.0)
    assert np.all(freqs[:, 2] == 0.0)


def test_truncation_error_shrinks_with_cut(rng) -> None:
    """Test dropping jumps below eps moves the CF by the removed small-jump mass."""
    alpha, dt, xi, n = 1.5, 0.1, 1.0, 20_000
    exact = math.exp(-dt * scale_to_driver_intensity(alpha, 1) * xi**alpha)
    gaps = []
    for eps in (0.4, 0.1, 0.025):
        law = StableLaw(alpha=alpha, dim=1, cut_eps=eps)
        maps = np.tile(np.eye(1), (n, 1, 1))
        result = anisotropic_stable_batch(law, None, maps, dt, AlphaRegime.SUPER_ONE, rng)
        samples = (result.jump_sum + result.compensator)[:, 0]
        ecf = empirical_characteristic_function(samples, np.array([xi]))[0]
        removed, _ = integrate.quad(
            lambda y: (1.0 - math.cos(xi * y)) * y ** (-1.0 - alpha), 0.0, eps
        )
        assert abs(ecf - exact * math.exp(2.0 * dt * removed)) < 4.0 / math.sqrt(n)
        gaps.append(abs(ecf - exact))

    assert gaps[0] > gaps[1] > gaps[2]


def test_narrow_modulation_peak_warns(rng) -> None:
    """Test a modulation peak the sphere grid misses raises TruncationWarning."""

    def peaked(w: np.ndarray, owners: np.ndarray) -> np.ndarray:
        angle = np.arctan2(w[:, 1], w[:, 0])
        return 1.0 + 50.0 * np.exp(-((angle / 0.005) ** 2))

    law = StableLaw(alpha=1.5, dim=2, cut_eps=0.01)
    maps = np.tile(np.eye(2), (4, 1, 1))
    with pytest.warns(TruncationWarning):
        anisotropic_stable_batch(law, peaked, maps, 1.0, AlphaRegime.SUPER_ONE, rng)
