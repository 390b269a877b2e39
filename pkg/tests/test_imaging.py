from pathlib import Path

import cv2
import numpy as np
import pytest
from pydantic import ValidationError

from app.core.collocation import build_site_sets, interpolate, linear_precision_coefficients
from app.core.errors import ImageFormatError, MaskError
from app.core.imaging import add_noise, make_mask, quantize, read_image, read_mask, render, snr, write_image, write_mask
from app.core.spline_basis import build_knot_grid
from app.models.config import MaskSpec, NoiseSpec
from app.models.pixel_grid import InpaintingMask, PixelGrid


class TestRender:
    pixels = PixelGrid((9, 7))

    @pytest.mark.parametrize("order", [2, 3, 4])
    def test_constant(self, order):
        grid = build_knot_grid(self.pixels, order)
        np.testing.assert_allclose(render(grid, np.full(grid.size, 17.0), self.pixels), 17.0, rtol=1e-13)

    @pytest.mark.parametrize("order", [2, 3, 5])
    def test_interpolant_reproduces_image(self, order):
        grid = build_knot_grid(self.pixels, order)
        sites = build_site_sets(grid, self.pixels, InpaintingMask.empty(self.pixels.shape))
        image = np.random.default_rng(order).uniform(0.0, 255.0, self.pixels.shape)
        f = interpolate(grid, sites, sites.pixel_values(image))
        np.testing.assert_allclose(render(grid, f, self.pixels), image, atol=1e-8)

    def test_ramp(self):
        grid = build_knot_grid(self.pixels, 3)
        image = render(grid, linear_precision_coefficients(grid, 0), self.pixels)
        rows = np.arange(9)[:, None] + 0.5
        np.testing.assert_allclose(image, np.broadcast_to(rows, (9, 7)), atol=1e-12)


class TestMasks:
    def test_random_mask_size(self):
        mask = make_mask(MaskSpec(kind="random", fraction=0.03, seed=1), (128, 128))
        assert mask.unknown_count == 491
        assert not mask.unknown[0].any() and not mask.unknown[:, -1].any()

    def test_deterministic_per_seed(self):
        spec = MaskSpec(kind="random", fraction=0.1, seed=7)
        np.testing.assert_array_equal(make_mask(spec, (32, 32)).unknown, make_mask(spec, (32, 32)).unknown)
        other = make_mask(spec.with_seed(8), (32, 32))
        assert not np.array_equal(make_mask(spec, (32, 32)).unknown, other.unknown)

    def test_explicit_scratches(self):
        spec = MaskSpec(
            kind="scratches",
            count=3,
            width=3,
            endpoints=[(10, 10, 10, 100), (40, 20, 60, 110), (100, 15, 115, 60)],
        )
        mask = make_mask(spec, (128, 128))
        labels, _ = cv2.connectedComponents(mask.unknown.astype(np.uint8))
        assert labels - 1 == 3, f"Expected 3 scratches, found {labels - 1}"

    @pytest.mark.parametrize("seed", range(5))
    def test_random_scratches(self, seed):
        mask = make_mask(MaskSpec(kind="scratches", count=3, width=4, seed=seed), (64, 64))
        labels, _ = cv2.connectedComponents(mask.unknown.astype(np.uint8))
        assert 1 <= labels - 1 <= 3

    def test_text_mask(self):
        mask = make_mask(MaskSpec(kind="text", text="TV", width=2), (64, 96))
        assert mask.unknown_count > 0
        assert mask.unknown_count < 0.5 * mask.unknown.size

    def test_bitmap_mask(self, tmp_path: Path):
        original = make_mask(MaskSpec(kind="random", fraction=0.05, seed=3), (20, 24))
        path = write_mask(tmp_path / "mask.png", original)
        loaded = make_mask(MaskSpec(kind="bitmap", bitmap=path), (20, 24))
        np.testing.assert_array_equal(loaded.unknown, original.unknown)

    def test_bitmap_size_mismatch(self, tmp_path: Path):
        path = write_mask(tmp_path / "mask.png", InpaintingMask.empty((20, 24)))
        with pytest.raises(MaskError):
            make_mask(MaskSpec(kind="bitmap", bitmap=path), (24, 20))

    def test_full_fraction_is_invalid(self):
        with pytest.raises(ValidationError):
            MaskSpec(kind="random", fraction=1.0)

    def test_mask_covering_the_interior(self):
        with pytest.raises(MaskError):
            make_mask(MaskSpec(kind="random", fraction=0.99), (8, 8))

    def test_border_touching_mask_is_rejected(self):
        unknown = np.zeros((8, 8), dtype=bool)
        unknown[0, 3] = True
        with pytest.raises(MaskError):
            InpaintingMask(unknown)


class TestNoise:
    def test_no_noise_is_identity(self):
        image = np.random.default_rng(0).uniform(1.0, 254.0, (16, 16))
        noisy, implied = add_noise(image, NoiseSpec())
        np.testing.assert_array_equal(noisy, image)
        assert not implied.any()

    def test_salt_and_pepper(self):
        image = np.full((128, 128), 100.0)
        noisy, implied = add_noise(image, NoiseSpec(salt_pepper=0.05, seed=2))
        changed = noisy != image
        assert 0.04 <= changed.mean() <= 0.06, f"Corrupted fraction {changed.mean():.4f}"
        assert np.all(implied[changed])
        assert set(np.unique(noisy[changed])) <= {0.0, 255.0}

    def test_gaussian_noise_is_clipped(self):
        image = np.full((64, 64), 250.0)
        noisy, _ = add_noise(image, NoiseSpec(gaussian_sigma=20.0, seed=3))
        assert noisy.max() <= 255.0 and noisy.min() >= 0.0
        assert abs(float(np.std(image - noisy))) > 5.0


class TestSNR:
    def test_equal_images(self):
        image = np.random.default_rng(0).uniform(size=(5, 5))
        assert snr(image, image) == float("inf")

    def test_twenty_decibels(self):
        reference = np.full((10, 10), 10.0)
        assert snr(reference, reference + 1.0) == pytest.approx(20.0)

    def test_inverted_image(self):
        reference = np.random.default_rng(1).uniform(1.0, 2.0, size=(6, 6))
        assert snr(reference, -reference) == pytest.approx(-6.0206, abs=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            snr(np.zeros((3, 3)), np.zeros((3, 4)))


class TestImageFiles:
    @pytest.mark.parametrize("suffix", [".png", ".pgm"])
    def test_round_trip(self, tmp_path: Path, suffix: str):
        image = np.random.default_rng(0).integers(0, 256, size=(13, 17)).astype(float)
        path = write_image(tmp_path / f"image{suffix}", image)
        np.testing.assert_array_equal(read_image(path), image)

    def test_pgm_is_binary(self, tmp_path: Path):
        path = write_image(tmp_path / "image.pgm", np.zeros((4, 5)))
        assert path.read_bytes().startswith(b"P5")

    def test_clamping_and_rounding(self):
        values = np.array([300.0, -4.0, 2.5, 1.49, 254.5, -0.5])
        np.testing.assert_array_equal(quantize(values), [255, 0, 3, 1, 255, 0])

    @pytest.mark.parametrize("name", ["image.jpg", "image.tiff"])
    def test_unsupported_format(self, tmp_path: Path, name: str):
        with pytest.raises(ImageFormatError):
            write_image(tmp_path / name, np.zeros((4, 4)))
        with pytest.raises(ImageFormatError):
            read_image(tmp_path / name)

    def test_unreadable_file(self, tmp_path: Path):
        path = tmp_path / "broken.png"
        path.write_bytes(b"not an image")
        with pytest.raises(ImageFormatError):
            read_image(path)

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(RuntimeError):
            read_image(tmp_path / "missing.png")

    def test_failures_are_logged_with_deferred_arguments(self, tmp_path: Path, caplog):
        path = tmp_path / "missing.png"
        with caplog.at_level("DEBUG", logger="spline_inpainting"), pytest.raises(RuntimeError):
            read_image(path)
        errors = [record for record in caplog.records if record.levelname == "ERROR"]
        assert errors, "Expected an error record"
        for record in errors:
            assert record.args, f"Message was formatted eagerly: {record.msg!r}"
            assert str(path) not in record.msg
            assert str(path) in record.getMessage()

    def test_size_mismatch(self, tmp_path: Path):
        path = write_image(tmp_path / "image.png", np.zeros((4, 4)))
        with pytest.raises(ImageFormatError):
            read_image(path, PixelGrid((5, 5)))


class TestMaskFiles:
    def test_run_length_round_trip(self, tmp_path: Path):
        mask = make_mask(MaskSpec(kind="random", fraction=0.1, seed=4), (9, 11))
        path = write_mask(tmp_path / "mask.txt", mask)
        assert path.read_text().splitlines()[0] == "9 11"
        np.testing.assert_array_equal(read_mask(path).unknown, mask.unknown)

    def test_run_length_format(self, tmp_path: Path):
        path = tmp_path / "mask.txt"
        path.write_text("# two runs\n4 5\n6 3\n12 1\n")
        expected = np.zeros(20, dtype=bool)
        expected[[6, 7, 8, 12]] = True
        np.testing.assert_array_equal(read_mask(path).unknown, expected.reshape(4, 5))

    def test_invalid_run(self, tmp_path: Path):
        path = tmp_path / "mask.txt"
        path.write_text("4 5\n18 5\n")
        with pytest.raises(MaskError):
            read_mask(path)

    def test_border_pixels_are_cleared_on_request(self, tmp_path: Path):
        unknown = np.zeros((8, 8))
        unknown[0, :] = 255.0
        unknown[3, 3] = 255.0
        path = write_image(tmp_path / "mask.png", unknown)
        with pytest.raises(MaskError):
            read_mask(path)
        cleared = read_mask(path, clear=True)
        assert cleared.unknown_count == 1 and cleared.unknown[3, 3]
