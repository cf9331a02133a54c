"""Diffusion invariants, intensity mapping and the resize oracle."""

import numpy as np
import pytest

from noduleforge import imgproc
from noduleforge.imgproc import (DiffusionConfig, center_crop_resize, conductance,
                                 denormalize, linear_diffusion,
                                 normalize_to_model_range, perona_malik,
                                 read_grayscale, write_grayscale)


def pm_single_step_oracle(img, kappa, lam, kind):
    """One explicit update applied pixel by pixel, independent of the engine."""
    h, w = img.shape
    out = img.copy()

    def g(s):
        if kind == "rational":
            return 1.0 / (1.0 + (s / kappa) ** 2)
        return np.exp(-((s / kappa) ** 2))

    for i in range(h):
        for j in range(w):
            total = 0.0
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ni, nj = i + di, j + dj
                if 0 <= ni < h and 0 <= nj < w:
                    d = img[ni, nj] - img[i, j]
                    total += g(abs(d)) * d
            out[i, j] = img[i, j] + lam * total
    return out


class TestPeronaMalik:
    def test_constant_image_unchanged(self):
        img = np.full((9, 9), 7.5)
        out = perona_malik(img, DiffusionConfig(iterations=10))
        np.testing.assert_allclose(out, img, atol=1e-12)

    def test_conductance_is_one_at_zero(self):
        z = np.array([0.0])
        assert conductance(z, 30.0, "exponential")[0] == 1.0
        assert conductance(z, 30.0, "rational")[0] == 1.0

    def test_single_step_hand_oracle_3x3(self):
        img = np.array([[0.0, 0.0, 0.0], [0.0, 9.0, 0.0], [0.0, 0.0, 0.0]])
        cfg = DiffusionConfig(iterations=1, kappa=1.0, lam=0.25,
                              conductance="rational")
        out = perona_malik(img, cfg)
        expected = pm_single_step_oracle(img, 1.0, 0.25, "rational")
        np.testing.assert_array_equal(out, expected)
        # the worked values: center sheds 9/82 split equally to the 4 edges
        np.testing.assert_allclose(out[1, 1], 9.0 - 9.0 / 82.0, atol=1e-15)
        np.testing.assert_allclose(out[0, 1], 0.25 * 9.0 / 82.0, atol=1e-15)
        np.testing.assert_allclose(out[0, 0], 0.0, atol=1e-15)

    def test_multi_step_matches_iterated_oracle(self, rng):
        img = rng.normal(50, 20, size=(6, 7))
        cfg = DiffusionConfig(iterations=3, kappa=10.0, lam=0.2,
                              conductance="exponential")
        out = perona_malik(img, cfg)
        expected = img.copy()
        for _ in range(3):
            expected = pm_single_step_oracle(expected, 10.0, 0.2, "exponential")
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_max_principle_random_images(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            img = rng.uniform(-40, 260, size=rng.integers(4, 12, size=2))
            cfg = DiffusionConfig(
                iterations=int(rng.integers(1, 6)),
                kappa=float(rng.uniform(1, 80)),
                lam=float(rng.uniform(0.01, 0.25)),
                conductance=("exponential", "rational")[int(rng.integers(2))])
            out = perona_malik(img, cfg)
            assert out.min() >= img.min() - 1e-10
            assert out.max() <= img.max() + 1e-10

    def test_brightness_conserved_per_iteration(self, rng):
        img = rng.uniform(0, 255, size=(16, 16))
        total = img.sum()
        out = img
        for _ in range(10):
            out = perona_malik(out, DiffusionConfig(iterations=1, kappa=20.0))
            assert abs(out.sum() - total) < 1e-8
            total = out.sum()

    def test_edge_preserved_versus_linear_baseline(self):
        # two-level step; kappa far below the 100-unit step height
        img = np.zeros((12, 24))
        img[:, 12:] = 100.0
        cfg = DiffusionConfig(iterations=20, kappa=5.0, lam=0.25,
                              conductance="exponential")
        pm = perona_malik(img, cfg)
        lin = linear_diffusion(img, iterations=20, lam=0.25)
        pm_contrast = pm[6, 12] - pm[6, 11]
        lin_contrast = lin[6, 12] - lin[6, 11]
        assert pm_contrast > lin_contrast

    def test_total_variation_never_increases(self, rng):
        img = rng.uniform(0, 255, size=(10, 10))
        def tv(a):
            return np.abs(np.diff(a, axis=0)).sum() + np.abs(np.diff(a, axis=1)).sum()
        prev = tv(img)
        out = img
        for _ in range(8):
            out = perona_malik(out, DiffusionConfig(iterations=1, kappa=25.0))
            cur = tv(out)
            assert cur <= prev + 1e-9
            prev = cur

    def test_non_finite_rejected(self):
        img = np.zeros((4, 4))
        img[1, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            perona_malik(img, DiffusionConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError, match="lambda"):
            DiffusionConfig(lam=0.3)
        with pytest.raises(ValueError, match="kappa"):
            DiffusionConfig(kappa=0.0)
        with pytest.raises(ValueError, match="conductance"):
            DiffusionConfig(conductance="quadratic")


class TestIntensityMapping:
    def test_endpoints(self):
        assert normalize_to_model_range(np.array([0]))[0] == -1.0
        assert normalize_to_model_range(np.array([255]))[0] == 1.0
        assert normalize_to_model_range(np.array([127.5]))[0] == 0.0

    def test_denormalize_endpoints(self):
        assert denormalize(np.array([-1.0]))[0] == 0
        assert denormalize(np.array([1.0]))[0] == 255

    def test_round_trip_all_256_levels(self):
        levels = np.arange(256, dtype=np.uint8)
        back = denormalize(normalize_to_model_range(levels))
        np.testing.assert_array_equal(back, levels)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            normalize_to_model_range(np.array([256.0]))

    def test_denormalize_clamps(self):
        out = denormalize(np.array([-1.5, 1.5]))
        np.testing.assert_array_equal(out, [0, 255])


def bilinear_oracle(img, target):
    """Direct half-pixel-center bilinear formula, one pixel at a time."""
    side = img.shape[0]
    scale = side / target
    out = np.zeros((target, target))
    for r in range(target):
        for c in range(target):
            sy = min(max((r + 0.5) * scale - 0.5, 0.0), side - 1.0)
            sx = min(max((c + 0.5) * scale - 0.5, 0.0), side - 1.0)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, side - 1), min(x0 + 1, side - 1)
            fy, fx = sy - y0, sx - x0
            out[r, c] = (img[y0, x0] * (1 - fy) * (1 - fx)
                         + img[y1, x0] * fy * (1 - fx)
                         + img[y0, x1] * (1 - fy) * fx
                         + img[y1, x1] * fy * fx)
    return out


class TestCenterCropResize:
    def test_target_sized_input_unchanged(self, rng):
        img = rng.uniform(0, 255, size=(56, 56))
        np.testing.assert_array_equal(center_crop_resize(img), img)

    def test_constant_downscale(self):
        img = np.full((112, 112), 37.0)
        out = center_crop_resize(img)
        assert out.shape == (56, 56)
        np.testing.assert_allclose(out, 37.0, atol=1e-12)

    def test_ramp_matches_bilinear_oracle(self):
        y, x = np.mgrid[0:64, 0:48]
        img = (2.0 * y + 3.0 * x).astype(float)
        out = center_crop_resize(img, target=56)
        # crop: 64x48 -> centered 48x48 square starting at row 8
        square = img[8:56, :]
        np.testing.assert_allclose(out, bilinear_oracle(square, 56), atol=1e-6)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            center_crop_resize(np.zeros((1, 5)))


class TestImageIO:
    @pytest.mark.parametrize("ext", ["png", "pgm"])
    def test_round_trip(self, tmp_path, rng, ext):
        img = rng.integers(0, 256, size=(24, 30), dtype=np.uint8)
        path = tmp_path / f"img.{ext}"
        write_grayscale(path, img)
        back = read_grayscale(path)
        np.testing.assert_array_equal(back, img)

    def test_pgm_is_binary_p5(self, tmp_path):
        path = tmp_path / "img.pgm"
        write_grayscale(path, np.zeros((4, 4), dtype=np.uint8))
        assert path.read_bytes().startswith(b"P5")

    def test_load_patch_pixels_small_source_rejected(self, tmp_path):
        path = tmp_path / "tiny.png"
        write_grayscale(path, np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError, match=">= 8x8"):
            imgproc.load_patch_pixels(path)
