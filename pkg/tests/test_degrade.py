import hashlib
import math

import numpy as np
import pytest

from isnrestore.degrade import (ATMOSPHERIC_LIGHT, DegradationSpec, apply_factored_degradation, apply_haze,
                                apply_noise, apply_rain, format_manifest_line, haze_transmission,
                                make_test_case, parse_manifest, synthetic_scene)
from isnrestore.errors import DimensionError, InvalidSpecError
from isnrestore.imaging import Image, encode_netpbm
from isnrestore.oracles import kron_degrade

# recorded at the first correct run of make_test_case(scene(32, 32, seed=3), (150, 300, 50, seed=7))
GOLDEN_CASE_SHA256 = "31ee3a574af140bf6c6ee70269bcb92227e1f8e63b9d26149cd429da3dcdcf5d"


@pytest.fixture
def scene():
    return synthetic_scene(32, 32, seed=3)


def test_noise_zero_is_identity(scene):
    np.testing.assert_array_equal(apply_noise(scene, 0, 1).pixels, scene.pixels)


def test_noise_std():
    flat = Image(np.full((1, 1, 256, 256), 0.5))
    diff = apply_noise(flat, 25, seed=11).pixels - flat.pixels
    assert abs(diff.std() - 25 / 255) <= 0.03 * 25 / 255


def test_noise_deterministic(scene):
    np.testing.assert_array_equal(apply_noise(scene, 10, 5).pixels, apply_noise(scene, 10, 5).pixels)
    assert not np.array_equal(apply_noise(scene, 10, 5).pixels, apply_noise(scene, 10, 6).pixels)


@pytest.mark.parametrize("fn,level", [(apply_noise, 50.5), (apply_rain, 301), (apply_haze, -1)])
def test_out_of_range_levels(scene, fn, level):
    with pytest.raises(InvalidSpecError):
        fn(scene, level, 0)


def test_rain_is_additive_and_deterministic(scene):
    np.testing.assert_array_equal(apply_rain(scene, 0, 3).pixels, scene.pixels)
    wet = apply_rain(scene, 300, 3)
    assert wet.pixels.mean() >= scene.pixels.mean()
    assert np.all(wet.pixels >= scene.pixels)
    np.testing.assert_array_equal(wet.pixels, apply_rain(scene, 300, 3).pixels)


def test_haze_closed_form():
    assert haze_transmission(150) == pytest.approx(math.exp(-2))
    black = apply_haze(Image(np.zeros((1, 3, 4, 4))), 150)
    np.testing.assert_allclose(black.pixels, 0.9 * (1 - math.exp(-2)), atol=1e-15)
    assert black.pixels[0, 0, 0, 0] == pytest.approx(0.7782, abs=1e-4)


@pytest.mark.parametrize("level", [0, 1, 75, 150])
def test_haze_white_stays_bounded(level):
    out = apply_haze(Image(np.ones((1, 3, 2, 2))), level)
    assert out.pixels.max() <= max(1.0, ATMOSPHERIC_LIGHT)


def test_factored_identity_and_noise():
    rng = np.random.default_rng(0)
    img, n = rng.random((2, 3, 4)), rng.random((2, 3, 4))
    eye_a, eye_b = np.stack([np.eye(3)] * 2), np.stack([np.eye(4)] * 2)
    np.testing.assert_array_equal(apply_factored_degradation(img, eye_a, eye_b, 0 * n), img)
    np.testing.assert_allclose(apply_factored_degradation(img, eye_a, eye_b, n), img + n)


def test_factored_matches_kronecker():
    rng = np.random.default_rng(1)
    a, img, b = rng.standard_normal((1, 3, 3)), rng.standard_normal((1, 3, 3)), rng.standard_normal((1, 3, 3))
    got = apply_factored_degradation(img, a, b, np.zeros_like(img))
    np.testing.assert_allclose(got, kron_degrade(img, a, b), atol=1e-12)


def test_factored_shape_errors():
    with pytest.raises(DimensionError):
        apply_factored_degradation(np.zeros((1, 3, 4)), np.zeros((1, 4, 4)), np.zeros((1, 4, 4)), np.zeros((1, 3, 4)))


def test_make_test_case_composition(scene):
    np.testing.assert_array_equal(make_test_case(scene, DegradationSpec()).pixels, scene.pixels)
    np.testing.assert_array_equal(make_test_case(scene, DegradationSpec(150, 0, 0, 9)).pixels,
                                  apply_haze(scene, 150).pixels)


def test_make_test_case_golden(scene):
    out = make_test_case(scene, DegradationSpec(150, 300, 50, 7))
    assert hashlib.sha256(encode_netpbm(out)).hexdigest() == GOLDEN_CASE_SHA256


def test_spec_validation():
    with pytest.raises(InvalidSpecError):
        DegradationSpec(seed=-1)
    with pytest.raises(InvalidSpecError):
        DegradationSpec(noise_level=float("nan"))
    assert len(set(DegradationSpec(seed=4).stage_seeds())) == 3


def test_manifest_round_trip():
    spec = DegradationSpec(12.5, 3, 0, 2**63)
    rows = parse_manifest(format_manifest_line("c.ppm", "d.ppm", spec) + "\n\n")
    assert rows == [("c.ppm", "d.ppm", spec)]
