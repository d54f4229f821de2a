"""Unit tests for the named model families."""

import numpy as np
import pytest

from core.config import ModelConfig, TestFunctionConfig
from core.errors import ConfigError, DomainError
from skills.families import build_model, build_test_function, family_names, model_from_config
from skills.model import validate


def test_family_names() -> None:
    """Test every documented family is registered."""
    assert family_names() == sorted(
        [
            "anisotropic-stable",
            "brownian-smooth",
            "isotropic-stable-const",
            "levy-tempered",
            "prop2-levy-driven",
            "weierstrass-c",
        ]
    )


@pytest.mark.parametrize("name", family_names())
def test_family_defaults_pass_validation(name) -> None:
    """Test each family with default parameters satisfies the assumptions."""
    spec = build_model(name)
    assert spec.name == name
    assert validate(spec).passed


def test_isotropic_constant_coefficients() -> None:
    """Test the constant family scales c and carries its drift."""
    spec = build_model("isotropic-stable-const", alpha=1.2, dim=2, params={"scale": 2.0})
    x = np.zeros((3, 2))

    assert spec.constant_coefficients
    assert np.allclose(spec.c(x), 2.0 * np.eye(2))
    assert spec.drift is None


def test_weierstrass_family_records_beta() -> None:
    """Test the Holder exponent of the coefficient is attached."""
    spec = build_model("weierstrass-c", params={"beta": 0.6})
    assert spec.holder_beta == 0.6
    assert not spec.constant_coefficients


def test_levy_tempered_default_index() -> None:
    """Test the tempered index defaults to alpha / 2."""
    spec = build_model("levy-tempered", alpha=1.6)
    assert spec.levy is not None
    assert spec.levy.measure.index == pytest.approx(0.8)


def test_brownian_smooth_needs_alpha_two() -> None:
    """Test the diffusion family refuses alpha < 2."""
    with pytest.raises(DomainError):
        build_model("brownian-smooth", alpha=1.5)


def test_anisotropic_rejects_alpha_one() -> None:
    """Test the odd modulation excludes alpha = 1."""
    with pytest.raises(DomainError):
        build_model("anisotropic-stable", alpha=1.0, dim=2)
    with pytest.raises(DomainError):
        build_model("anisotropic-stable", dim=2, params={"kappa": 0.8, "swirl": 0.5})


def test_anisotropic_without_swirl_is_constant() -> None:
    """Test swirl = 0 gives constant coefficients."""
    spec = build_model("anisotropic-stable", dim=2, params={"swirl": 0.0})
    assert spec.constant_coefficients
    assert not spec.is_isotropic


def test_build_model_errors_name_the_key() -> None:
    """Test configuration errors carry the offending key path."""
    with pytest.raises(ConfigError) as exc_info:
        build_model("no-such-family")
    assert exc_info.value.key_path == "model.name"

    with pytest.raises(ConfigError) as exc_info:
        build_model("weierstrass-c", params={"gamma": 1.0})
    assert exc_info.value.key_path == "model.params.gamma"

    with pytest.raises(ConfigError) as exc_info:
        build_model("isotropic-stable-const", dim=2, x0=[0.0])
    assert exc_info.value.key_path == "model.x0"


def test_model_from_config() -> None:
    """Test the model section maps onto build_model."""
    config = ModelConfig(name="isotropic-stable-const", alpha=0.7, dim=2, x0=[1.0, 2.0])
    spec = model_from_config(config)
    assert spec.alpha == 0.7
    assert np.allclose(spec.x0, [1.0, 2.0])


def test_build_test_function_kinds() -> None:
    """Test each test-function kind builds with the right dimension."""
    x = np.zeros((1, 2))
    cosine = build_test_function(TestFunctionConfig(kind="cosine"), 2)
    assert cosine(x)[0] == pytest.approx(1.0)
    assert np.allclose(cosine.trig_frequency, [1.0, 0.0])

    rough = build_test_function(TestFunctionConfig(kind="weierstrass", beta=0.5, axis=1), 2)
    assert rough.declared_smoothness == 0.5

    assert build_test_function(TestFunctionConfig(kind="quadratic"), 2)(x)[0] == 0.0
    assert build_test_function(TestFunctionConfig(kind="constant", value=3.0), 2)(x)[0] == 3.0


def test_build_test_function_rejects_bad_shapes() -> None:
    """Test wrong frequency length and axis."""
    with pytest.raises(ConfigError) as exc_info:
        build_test_function(TestFunctionConfig(kind="cosine", frequency=[1.0]), 2)
    assert exc_info.value.key_path == "test_function.frequency"
    with pytest.raises(ConfigError):
        build_test_function(TestFunctionConfig(kind="weierstrass", axis=2), 2)
