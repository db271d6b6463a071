from importlib import resources

import numpy as np
import pytest

from nfimaging.errors import DimensionError, ParameterError
from nfimaging.scene import (
    GroundTruthScene,
    ar1_correlation,
    builtin_raster,
    generate_scene,
    load_raster,
    render_bitmap,
    scene_to_images,
)


def test_ar1_examples():
    np.testing.assert_array_equal(ar1_correlation(5, 0.0), np.eye(5))
    np.testing.assert_allclose(ar1_correlation(4, 0.99)[0], [1, 0.99, 0.9801, 0.970299], rtol=1e-15)
    np.linalg.cholesky(ar1_correlation(16, 0.999))
    psi = ar1_correlation(6, -0.4)
    np.testing.assert_array_equal(psi, psi.T)
    assert psi[2, 5] == pytest.approx((-0.4) ** 3)
    for bad in (1.0, -1.0, 1.5):
        with pytest.raises(ParameterError):
            ar1_correlation(4, bad)


def test_empty_mask_gives_zero_scene():
    sc = generate_scene(np.zeros(9, bool), np.zeros(9), 0.9, seed=1)
    assert not np.any(sc.coeffs)
    assert not np.any(sc.rcs)


def test_scene_determinism_and_support():
    mask = np.array([1, 0, 1, 1, 0, 0], bool)
    mags = np.where(mask, 0.7, 0.0)
    a = generate_scene(mask, mags, 0.99, seed=7)
    b = generate_scene(mask, mags, 0.99, seed=7)
    c = generate_scene(mask, mags, 0.99, seed=8)
    assert a.coeffs.tobytes() == b.coeffs.tobytes()
    assert not np.array_equal(a.coeffs, c.coeffs)
    norms = np.linalg.norm(a.coeffs, axis=1)
    np.testing.assert_array_equal(norms > 0, mask)
    np.testing.assert_allclose(a.rcs, np.where(mask, 0.49, 0.0))
    np.testing.assert_allclose(np.diag(a.psi), 1.0)


def test_first_subcarrier_carries_prescribed_magnitudes():
    mask = np.ones(5, bool)
    mags = np.linspace(0.3, 1.0, 5)
    sc = generate_scene(mask, mags, 0.99, seed=3)
    np.testing.assert_allclose(np.abs(sc.coeffs[:, 0]), mags, rtol=1e-14)


def test_scene_dimension_errors():
    with pytest.raises(DimensionError):
        generate_scene(np.ones(3, bool), np.ones(4), 0.5, seed=0)
    with pytest.raises(DimensionError):
        generate_scene(np.array([1, 0], bool), np.array([1.0, 0.5]), 0.5, seed=0)
    with pytest.raises(ParameterError):
        generate_scene(np.ones(2, bool), np.ones(2), 1.0, seed=0)


@pytest.mark.parametrize("initial", ["fixed", "gaussian"])
def test_row_covariance_matches_model(initial):
    # 1e5 independent rows sharing one RCS value act as 1e5 seeded draws
    q, n, psi = 100_000, 4, 0.99
    gamma = 0.64
    sc = generate_scene(np.ones(q, bool), np.full(q, np.sqrt(gamma)), psi, seed=11,
                        n_subcarriers=n, initial=initial)
    emp = sc.coeffs.T @ sc.coeffs.conj() / q
    target = gamma * ar1_correlation(n, psi)
    assert np.linalg.norm(emp - target) / np.linalg.norm(target) < 0.02
    np.testing.assert_allclose(np.mean(np.abs(sc.coeffs) ** 2, axis=0), gamma, rtol=0.02)


def test_zero_coefficient_decorrelates_subcarriers():
    q = 50_000
    sc = generate_scene(np.ones(q, bool), np.ones(q), 0.0, seed=5, n_subcarriers=3)
    emp = sc.coeffs.T @ sc.coeffs.conj() / q
    off = emp[~np.eye(3, dtype=bool)]
    assert np.max(np.abs(off)) < 0.02


def test_render_bitmap_examples():
    mask, mags = render_bitmap(np.zeros((4, 4)), 4)
    assert not mask.any() and not mags.any()
    one = np.zeros((4, 4))
    one[2, 1] = 1
    mask, mags = render_bitmap(one, 4)
    assert mask.sum() == 1 and mags[9] == 1.0
    with pytest.raises(DimensionError):
        render_bitmap(np.ones((3, 3)), 4)


def test_render_bitmap_ramp_top_to_bottom():
    raster = np.zeros((5, 5))
    raster[1, :] = 1
    raster[4, 2] = 1
    raster[2, 3] = 1
    mask, mags = render_bitmap(raster, 5, 1.0, 0.3)
    grid = mags.reshape(5, 5)
    np.testing.assert_allclose(grid[1, mask.reshape(5, 5)[1]], 1.0)
    assert grid[4, 2] == pytest.approx(0.3)
    assert grid[2, 3] == pytest.approx(1.0 - 0.7 / 3)
    assert mags.max() == 1.0


def test_bundled_raster_bit_count():
    text = (resources.files("nfimaging") / "assets" / "tu_berlin.txt").read_text()
    ones = text.count("1")
    mask, mags = render_bitmap("tu_berlin", 20)
    assert mask.sum() == ones == 72
    assert builtin_raster().shape == (20, 20)
    with pytest.raises(ParameterError):
        builtin_raster("nope")


def test_user_raster_file(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("# comment\n010\n1 1 0\n000\n")
    np.testing.assert_array_equal(load_raster(path), [[0, 1, 0], [1, 1, 0], [0, 0, 0]])
    mask, _ = render_bitmap(str(path), 3)
    assert mask.sum() == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("012\n")
    with pytest.raises(DimensionError):
        load_raster(bad)
    ragged = tmp_path / "ragged.txt"
    ragged.write_text("01\n011\n")
    with pytest.raises(DimensionError):
        load_raster(ragged)


def test_scene_to_images():
    psi = ar1_correlation(2, 0.5)
    zero = GroundTruthScene(np.zeros((9, 2), complex), np.zeros(9, bool), np.zeros(9), psi)
    assert not scene_to_images(zero).any()
    coeffs = np.zeros((9, 2), complex)
    coeffs[0, :] = 1.0
    one = GroundTruthScene(coeffs, coeffs[:, 0] != 0, np.abs(coeffs[:, 0]), psi)
    imgs = scene_to_images(one)
    assert imgs.shape == (2, 3, 3)
    assert imgs[0, 0, 0] == 1.0 and imgs.sum() == 2.0
    rng = np.random.default_rng(0)
    c = rng.standard_normal((9, 2)) + 1j * rng.standard_normal((9, 2))
    a = GroundTruthScene(c, np.ones(9, bool), np.ones(9), psi)
    b = GroundTruthScene(c * np.exp(1j * 0.7), np.ones(9, bool), np.ones(9), psi)
    np.testing.assert_allclose(scene_to_images(a), scene_to_images(b), rtol=1e-14)
    # row-major from the top-left
    np.testing.assert_allclose(scene_to_images(a)[1].ravel(), np.abs(c[:, 1]))
