import colorsys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fuse2d.colorize import (
    FusedImage,
    custom_hsv,
    downsample_blocks,
    hsv_to_rgb,
    map_custom,
    map_grayscale,
    map_manual_rgb,
    read_png,
    render,
    upscale_nearest,
    write_png,
)
from fuse2d.fusion import FILL, SignalMatrix

BANDS = ("P",) * 10 + ("E",) * 5 + ("A",) * 5 + (FILL,) * 12


def matrix(cells, band_map=BANDS):
    return SignalMatrix(np.asarray(cells, dtype=float), band_map, "S1", 0, "PEA")


def full(v):
    return matrix(np.full((32, 32), v))


class TestGrayscale:
    @pytest.mark.parametrize("v,byte", [(0.0, 0), (1.0, 255), (0.5, 128)])
    def test_values(self, v, byte):
        assert tuple(map_grayscale(full(v))[0, 0]) == (byte,) * 3

    @given(arrays(np.float64, (32, 32), elements=st.floats(0, 1)))
    def test_channels_equal(self, cells):
        img = map_grayscale(matrix(cells))
        assert np.array_equal(img[..., 0], img[..., 1]) and np.array_equal(img[..., 1], img[..., 2])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            map_grayscale(full(1.5))


class TestManual:
    def test_channel_assignment(self):
        cells = np.zeros((32, 32))
        cells[0] = 1.0
        cells[10] = 0.0
        cells[15] = 0.5
        img = map_manual_rgb(matrix(cells))
        assert tuple(img[0, 0]) == (0, 255, 0)
        assert tuple(img[10, 0]) == (0, 0, 0)
        assert tuple(img[15, 0]) == (0, 0, 128)

    def test_fill_rows_black(self):
        img = map_manual_rgb(full(0.7))
        assert not img[20:].any()

    def test_eda_is_red(self):
        img = map_manual_rgb(full(0.7))
        assert tuple(img[12, 3]) == (179, 0, 0)

    @given(arrays(np.float64, (32, 32), elements=st.floats(0.01, 1)))
    def test_one_nonzero_channel(self, cells):
        img = map_manual_rgb(matrix(cells))
        assert np.all((img[:20] > 0).sum(axis=-1) == 1)

    def test_needs_band_map(self):
        with pytest.raises(ValueError):
            map_manual_rgb(matrix(np.zeros((32, 32)), band_map=()))


class TestCustom:
    def test_low_endpoint(self):
        assert tuple(map_custom(full(0.0))[0, 0]) == (0, 0, 38)

    @pytest.mark.parametrize("v", [0.95, 0.97, 1.0])
    def test_clamp(self, v):
        assert tuple(map_custom(full(v))[0, 0]) == (255, 0, 0)

    def test_matches_colorsys(self):
        vals = np.linspace(0, 1, 1001)
        hue, sat, val = custom_hsv(vals)
        ours = hsv_to_rgb(hue, sat, val)
        ref = np.array([colorsys.hsv_to_rgb(h / 360.0, s, v) for h, s, v in zip(hue, sat, val)])
        np.testing.assert_allclose(ours, ref, atol=1e-12)

    def test_value_component_monotone(self):
        u = np.round(np.arange(0, 96) * 0.01, 2)
        _, _, val = custom_hsv(u)
        assert np.all(np.diff(val) > 0)


class TestUpscale:
    def test_single_pixel(self):
        img = np.zeros((32, 32, 3), np.uint8)
        img[0, 0] = (255, 0, 0)
        big = upscale_nearest(img)
        assert big.shape == (128, 128, 3)
        assert np.all(big[:4, :4] == (255, 0, 0))
        assert not big[4:, :].any() and not big[:, 4:].any()

    def test_constant(self):
        img = np.full((32, 32, 3), 77, np.uint8)
        assert np.all(upscale_nearest(img) == 77)

    def test_inverse_sampling(self, rng):
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        np.testing.assert_array_equal(downsample_blocks(upscale_nearest(img), 4), img)

    def test_wrong_size(self):
        with pytest.raises(ValueError):
            upscale_nearest(np.zeros((16, 16, 3), np.uint8))


class TestPng:
    def test_roundtrip_and_determinism(self, rng, tmp_path):
        img = render(matrix(rng.uniform(size=(32, 32))), "custom")
        assert img.filename() == "S1_0_PEA_custom.png"
        a = write_png(img, tmp_path / "a.png")
        b = write_png(img, tmp_path / "b.png")
        assert a.read_bytes() == b.read_bytes()
        back = read_png(a)
        assert back.dtype == np.uint8 and back.shape == (128, 128, 3)
        assert back.tobytes() == img.pixels.tobytes()

    def test_rgb_no_alpha(self, tmp_path):
        from PIL import Image

        write_png(FusedImage(np.zeros((128, 128, 3), np.uint8), "gray"), tmp_path / "x.png")
        with Image.open(tmp_path / "x.png") as im:
            assert im.mode == "RGB"

    def test_unwritable(self, tmp_path):
        path = tmp_path / "missing" / "x.png"
        with pytest.raises(OSError, match="missing"):
            write_png(FusedImage(np.zeros((4, 4, 3), np.uint8), "gray"), path)
