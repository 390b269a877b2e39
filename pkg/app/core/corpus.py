from pathlib import Path
from typing import Callable

import cv2
import numpy as np

from app.core.imaging import read_image
from logs.logging_config import logger

BUILTIN_PREFIX = "builtin:"
CARTOON_IMAGES: tuple[str, ...] = ("cartoon", "blocks")
NATURAL_IMAGES: tuple[str, ...] = ("natural", "landscape")


def _cartoon(size: int, rng: np.random.Generator) -> np.ndarray:
    canvas = np.full((size, size), 40.0)
    s = size / 128.0
    cv2.rectangle(canvas, (int(14 * s), int(18 * s)), (int(62 * s), int(70 * s)), color=200.0, thickness=-1)
    cv2.circle(canvas, (int(86 * s), int(44 * s)), int(24 * s), color=120.0, thickness=-1)
    triangle = (np.array([[24, 112], [70, 78], [110, 116]]) * s).astype(np.int32)
    cv2.fillPoly(canvas, [triangle], color=230.0)
    cv2.ellipse(canvas, (int(92 * s), int(96 * s)), (int(20 * s), int(10 * s)), 30, 0, 360, color=90.0, thickness=-1)
    return canvas


def _blocks(size: int, rng: np.random.Generator) -> np.ndarray:
    row_edges = np.sort(rng.integers(size // 8, size - size // 8, size=4))
    col_edges = np.sort(rng.integers(size // 8, size - size // 8, size=4))
    levels = rng.choice(np.arange(30.0, 231.0, 25.0), size=(5, 5))
    rows = np.searchsorted(row_edges, np.arange(size), side="right")
    cols = np.searchsorted(col_edges, np.arange(size), side="right")
    return levels[rows[:, None], cols[None, :]]


def _smooth_texture(size: int, rng: np.random.Generator, scale: float, amplitude: float) -> np.ndarray:
    noise = rng.standard_normal((size, size))
    texture = cv2.GaussianBlur(noise, (0, 0), sigmaX=scale)
    return amplitude * texture / max(float(texture.std()), 1e-12)


def _natural(size: int, rng: np.random.Generator) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / float(size)
    shading = 128.0 + 55.0 * np.sin(2 * np.pi * (1.3 * x + 0.1)) * np.cos(2 * np.pi * 0.8 * y) + 35.0 * (x - y)
    blob = 60.0 / (1.0 + np.exp(-(0.28 - np.hypot(x - 0.62, y - 0.4)) * 40.0))
    image = shading - blob + _smooth_texture(size, rng, size / 40.0, 12.0) + _smooth_texture(size, rng, 1.2, 5.0)
    return np.clip(image, 0.0, 255.0)


def _landscape(size: int, rng: np.random.Generator) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / float(size)
    horizon = 0.45 + 0.08 * np.sin(2 * np.pi * (x * 1.5 + 0.2)) + 0.03 * np.sin(2 * np.pi * x * 5.0)
    sky = 210.0 - 70.0 * y
    ground = 90.0 + 40.0 * (y - horizon) + _smooth_texture(size, rng, size / 64.0, 18.0)
    ridge = 1.0 / (1.0 + np.exp(-(y - horizon) * size / 3.0))
    image = (1.0 - ridge) * sky + ridge * ground + _smooth_texture(size, rng, 1.0, 4.0)
    return np.clip(image, 0.0, 255.0)


BUILTIN_IMAGES: dict[str, Callable[[int, np.random.Generator], np.ndarray]] = {
    "cartoon": _cartoon,
    "blocks": _blocks,
    "natural": _natural,
    "landscape": _landscape,
}


def builtin_image(name: str, size: int = 128) -> np.ndarray:
    """
    Deterministic grayscale test image on [0, 255].

    ``cartoon`` and ``blocks`` are piecewise constant; ``natural`` and ``landscape`` combine
    smooth shading, soft edges and band-limited texture.

    Raises:
        KeyError: For an unknown name.
    """
    if name not in BUILTIN_IMAGES:
        raise KeyError(f"Unknown builtin image '{name}'; choose from {sorted(BUILTIN_IMAGES)}")
    seed = sum(ord(ch) for ch in name)
    image = BUILTIN_IMAGES[name](size, np.random.default_rng(seed))
    logger.debug("Generated builtin image %s at %dx%d", name, size, size)
    return np.asarray(image, dtype=float)


def is_builtin(source: str) -> bool:
    return source.startswith(BUILTIN_PREFIX)


def image_label(source: str) -> str:
    return source[len(BUILTIN_PREFIX) :] if is_builtin(source) else Path(source).stem


def load_image(source: str, size: int = 128) -> np.ndarray:
    """Loads ``builtin:<name>`` from the procedural corpus, anything else as an image file."""
    if is_builtin(source):
        return builtin_image(source[len(BUILTIN_PREFIX) :], size)
    return read_image(Path(source))
