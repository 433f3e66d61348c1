"""Value-to-colour maps for signal matrices and PNG output."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .fusion import FILL, SignalMatrix

SCHEMES = ("gray", "rgb", "custom")
CUSTOM_CLAMP = 0.95
CUSTOM_MIN_VALUE = 0.15
UPSCALE = 4

# manual scheme: PPG green, EDA red, ACC blue
MANUAL_CHANNEL = {"P": 1, "E": 0, "A": 2}


@dataclass(frozen=True, eq=False)
class FusedImage:
    pixels: np.ndarray  # (H, W, 3) uint8
    scheme: str
    subject_id: str = ""
    start_s: int = 0
    arrangement: str = ""

    def filename(self) -> str:
        return f"{self.subject_id}_{self.start_s}_{self.arrangement}_{self.scheme}.png"


def to_byte(v) -> np.ndarray:
    """Round-half-up of ``255 * v`` to uint8."""
    return np.floor(255.0 * np.asarray(v, dtype=np.float64) + 0.5).astype(np.uint8)


def _cells(m) -> np.ndarray:
    cells = np.asarray(m.cells if isinstance(m, SignalMatrix) else m, dtype=np.float64)
    if not np.all(np.isfinite(cells)) or cells.min() < 0.0 or cells.max() > 1.0:
        raise ValueError("matrix cells must lie in [0, 1]")
    return cells


def map_grayscale(m: SignalMatrix) -> np.ndarray:
    g = to_byte(_cells(m))
    return np.stack([g, g, g], axis=-1)


def map_manual_rgb(m: SignalMatrix) -> np.ndarray:
    band_map = getattr(m, "band_map", None)
    if not band_map:
        raise ValueError("manual RGB colouring needs a band map")
    cells = _cells(m)
    out = np.zeros(cells.shape + (3,), dtype=np.uint8)
    for row, tag in enumerate(band_map):
        if tag == FILL:
            continue
        out[row, :, MANUAL_CHANNEL[tag]] = to_byte(cells[row])
    return out


def hsv_to_rgb(h, s, v):
    """Vectorized HSV -> RGB; ``h`` in degrees, ``s`` and ``v`` in [0, 1]."""
    h = np.asarray(h, dtype=np.float64) % 360.0
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), h.shape)
    v = np.broadcast_to(np.asarray(v, dtype=np.float64), h.shape)
    h6 = h / 60.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def custom_hsv(v):
    """HSV triple of the custom map: blue->red hue sweep, brighter with value."""
    u = np.minimum(np.asarray(v, dtype=np.float64), CUSTOM_CLAMP) / CUSTOM_CLAMP
    hue = 240.0 * (1.0 - u)
    val = CUSTOM_MIN_VALUE + (1.0 - CUSTOM_MIN_VALUE) * u
    return hue, np.ones_like(u), val


def map_custom(m: SignalMatrix) -> np.ndarray:
    return to_byte(hsv_to_rgb(*custom_hsv(_cells(m))))


_MAPS = {"gray": map_grayscale, "rgb": map_manual_rgb, "custom": map_custom}


def colorize(m: SignalMatrix, scheme: str) -> np.ndarray:
    try:
        return _MAPS[scheme](m)
    except KeyError:
        raise ValueError(f"unknown colour scheme {scheme!r}; expected one of {SCHEMES}") from None


def upscale_nearest(img: np.ndarray, factor: int = UPSCALE, side: int = 32) -> np.ndarray:
    img = np.asarray(img)
    if img.shape != (side, side, 3):
        raise ValueError(f"expected a {side}x{side}x3 image, got {img.shape}")
    return np.repeat(np.repeat(img, factor, axis=0), factor, axis=1)


def downsample_blocks(img: np.ndarray, factor: int) -> np.ndarray:
    """Keep the top-left pixel of each ``factor`` x ``factor`` block."""
    return np.asarray(img)[..., ::factor, ::factor, :]


def render(m: SignalMatrix, scheme: str = "custom", factor: int = UPSCALE) -> FusedImage:
    """Colourize and upscale one matrix."""
    pixels = upscale_nearest(colorize(m, scheme), factor, side=m.side)
    return FusedImage(pixels, scheme, m.subject_id, m.start_s, m.arrangement)


def write_png(img: FusedImage | np.ndarray, path: str | os.PathLike) -> Path:
    pixels = img.pixels if isinstance(img, FusedImage) else np.asarray(img)
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("PNG output expects an HxWx3 uint8 image")
    path = Path(path)
    try:
        Image.fromarray(np.ascontiguousarray(pixels)).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write PNG {path}: {exc}") from exc
    return path


def read_png(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
