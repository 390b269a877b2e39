from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError

from app.core.errors import ImageFormatError, MaskError
from app.core.spline_basis import axis_collocation_matrix
from app.models.config import MaskSpec, NoiseSpec
from app.models.knot_grid import TensorKnotGrid
from app.models.pixel_grid import InpaintingMask, PixelGrid, clear_border
from logs.logging_config import logger

IMAGE_FORMATS: dict[str, str] = {".pgm": "PPM", ".png": "PNG"}
MASK_TEXT_SUFFIX = ".txt"


def render(grid: TensorKnotGrid, f: np.ndarray, pixels: PixelGrid) -> np.ndarray:
    """
    Samples the spline with coefficients ``f`` at every pixel center.

    The tensor structure is applied axis by axis, so the full collocation matrix at the centers
    is never formed. Values are not clamped.
    """
    values = np.asarray(f, dtype=float).reshape(grid.shape)
    for j, axis in enumerate(grid.axes):
        centers_matrix = axis_collocation_matrix(axis, pixels.axis_centers(j)).toarray()
        values = np.moveaxis(np.tensordot(centers_matrix, values, axes=(1, j)), 0, j)
    return values


def quantize(image: np.ndarray) -> np.ndarray:
    """Clamps to [0, 255] and rounds half away from zero to 8-bit."""
    values = np.asarray(image, dtype=float)
    rounded = np.trunc(values + np.copysign(0.5, values))
    return np.clip(rounded, 0, 255).astype(np.uint8)


def _interior_flat_indices(dims: tuple[int, ...]) -> np.ndarray:
    interior = clear_border(np.ones(dims, dtype=bool))
    return np.flatnonzero(interior)


def _require_2d(kind: str, dims: tuple[int, ...]) -> None:
    if len(dims) != 2:
        raise MaskError(f"{kind} masks are only defined for 2D images, got dims {dims}")


def _random_mask(spec: MaskSpec, dims: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    assert spec.fraction is not None
    count = int(np.floor(spec.fraction * np.prod(dims)))
    interior = _interior_flat_indices(dims)
    if count >= interior.shape[0]:
        raise MaskError(
            f"Fraction {spec.fraction:g} asks for {count} unknown pixels but only {interior.shape[0]} "
            "interior pixels exist; the mask would cover the whole interior"
        )
    unknown = np.zeros(int(np.prod(dims)), dtype=bool)
    unknown[rng.choice(interior, size=count, replace=False)] = True
    return unknown.reshape(dims)


def _scratch_mask(spec: MaskSpec, dims: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    _require_2d("Scratch", dims)
    rows, cols = dims
    if spec.endpoints is not None:
        segments = [tuple(int(v) for v in segment) for segment in spec.endpoints]
    else:
        r = rng.integers(1, max(rows - 1, 2), size=(spec.count, 2))
        c = rng.integers(1, max(cols - 1, 2), size=(spec.count, 2))
        segments = [(int(r[k, 0]), int(c[k, 0]), int(r[k, 1]), int(c[k, 1])) for k in range(spec.count)]

    canvas = np.zeros(dims, dtype=np.uint8)
    for r0, c0, r1, c1 in segments:
        cv2.line(canvas, (c0, r0), (c1, r1), color=255, thickness=1)
    canvas = cv2.dilate(canvas, np.ones((spec.width, spec.width), dtype=np.uint8))
    return canvas > 0


def _text_mask(spec: MaskSpec, dims: tuple[int, ...]) -> np.ndarray:
    _require_2d("Text", dims)
    assert spec.text is not None
    rows, cols = dims
    font = cv2.FONT_HERSHEY_SIMPLEX
    (text_width, text_height), _ = cv2.getTextSize(spec.text, font, spec.font_scale, spec.width)
    origin = (max(1, (cols - text_width) // 2), min(rows - 2, (rows + text_height) // 2))
    canvas = np.zeros(dims, dtype=np.uint8)
    cv2.putText(canvas, spec.text, origin, font, spec.font_scale, color=255, thickness=spec.width)
    return canvas > 0


def make_mask(spec: MaskSpec, dims: Sequence[int]) -> InpaintingMask:
    """
    Generates the inpainting region described by ``spec``; a pure function of (spec, dims).

    Raises:
        MaskError: If the mask would cover every interior pixel, the kind needs a 2D image, or a
            bitmap does not match ``dims``.
    """
    shape = tuple(int(v) for v in dims)
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "random":
        unknown = _random_mask(spec, shape, rng)
    elif spec.kind == "scratches":
        unknown = _scratch_mask(spec, shape, rng)
    elif spec.kind == "text":
        unknown = _text_mask(spec, shape)
    else:
        assert spec.bitmap is not None
        unknown = read_mask(spec.bitmap, shape, clear=True).unknown

    unknown = clear_border(unknown)
    if unknown[tuple(slice(1, -1) for _ in shape)].all():
        raise MaskError(f"{spec.kind} mask covers every interior pixel of a {shape} image")
    if not unknown.any():
        logger.warning("Generated %s mask (%s) is empty", spec.kind, spec.parameter)

    mask = InpaintingMask(unknown)
    logger.debug(
        "Generated %s mask (%s, seed %d): %d unknown pixels", spec.kind, spec.parameter, spec.seed, mask.unknown_count
    )
    return mask


def add_noise(image: np.ndarray, spec: NoiseSpec) -> tuple[np.ndarray, np.ndarray]:
    """
    Corrupts an image with additive Gaussian noise (then clipped to [0, 255]) followed by
    salt-and-pepper noise.

    Returns:
        The noisy image and the implied inpainting mask: every pixel at 0 or 255. The implied mask
        may touch the border; callers clear it before building an ``InpaintingMask``.
    """
    rng = np.random.default_rng(spec.seed)
    noisy = np.asarray(image, dtype=float).copy()
    if spec.gaussian_sigma > 0:
        noisy = np.clip(noisy + rng.normal(0.0, spec.gaussian_sigma, size=noisy.shape), 0.0, 255.0)
    if spec.salt_pepper > 0:
        hit = rng.random(noisy.shape) < spec.salt_pepper
        salt = rng.random(noisy.shape) < 0.5
        noisy[hit & salt] = 255.0
        noisy[hit & ~salt] = 0.0
        logger.debug("Salt-and-pepper noise hit %d of %d pixels", int(hit.sum()), noisy.size)
    implied = (noisy == 0.0) | (noisy == 255.0)
    return noisy, implied


def snr(reference: np.ndarray, reconstruction: np.ndarray) -> float:
    """
    Signal-to-noise ratio in dB: 20 log10(||reference|| / ||reference - reconstruction||).

    Returns +inf when the two images are equal.
    """
    reference = np.asarray(reference, dtype=float)
    reconstruction = np.asarray(reconstruction, dtype=float)
    if reference.shape != reconstruction.shape:
        raise ValueError(f"SNR needs equal shapes, got {reference.shape} and {reconstruction.shape}")
    error = float(np.linalg.norm(reference - reconstruction))
    if error == 0.0:
        return float("inf")
    signal = float(np.linalg.norm(reference))
    if signal == 0.0:
        return float("-inf")
    return 20.0 * float(np.log10(signal / error))


def _image_format(path: Path) -> str:
    image_format = IMAGE_FORMATS.get(path.suffix.lower())
    if image_format is None:
        raise ImageFormatError(f"Unsupported image format '{path.suffix}' ({path}); use .pgm or .png")
    return image_format


def read_image(path: Path, pixels: PixelGrid | None = None) -> np.ndarray:
    """
    Reads an 8-bit grayscale PGM or PNG file as a float array on [0, 255].

    Raises:
        ImageFormatError: For other formats or when the size disagrees with ``pixels``.
        RuntimeError: If the file cannot be read.
    """
    _image_format(path)
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "1", "P", "I;16"):
                logger.warning("Converting %s image %s to grayscale", img.mode, path)
            image = np.asarray(img.convert("L"), dtype=float)
    except UnidentifiedImageError as e:
        logger.error("Not a readable image: %s", path)
        raise ImageFormatError(f"Not a readable image: {path}") from e
    except OSError as e:
        logger.error("Failed to read image %s: %s", path, e, exc_info=True)
        raise RuntimeError(f"Image read failed: {str(e)}") from e

    if pixels is not None and tuple(image.shape) != pixels.shape:
        raise ImageFormatError(f"Image {path} has size {image.shape}, expected {pixels.shape}")
    logger.debug("Read %s image from %s", image.shape, path)
    return image


def write_image(path: Path, image: np.ndarray) -> Path:
    """Writes ``image`` clamped and rounded half away from zero as 8-bit grayscale PGM (P5) or PNG."""
    image_format = _image_format(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(quantize(image)).save(path, format=image_format)
    except OSError as e:
        logger.error("Failed to write image %s: %s", path, e, exc_info=True)
        raise RuntimeError(f"Image write failed: {str(e)}") from e
    logger.debug("Wrote %s image to %s", np.shape(image), path)
    return path


def _parse_run_length(path: Path) -> np.ndarray:
    lines = [line.split("#", 1)[0].strip() for line in path.read_text(encoding="utf-8").splitlines()]
    lines = [line for line in lines if line]
    if not lines:
        raise MaskError(f"Run-length mask {path} is empty")
    try:
        dims = tuple(int(v) for v in lines[0].split())
        runs = [tuple(int(v) for v in line.split()) for line in lines[1:]]
    except ValueError as e:
        raise MaskError(f"Malformed run-length mask {path}: {str(e)}") from e

    unknown = np.zeros(int(np.prod(dims)), dtype=bool)
    for run in runs:
        if len(run) != 2 or run[0] < 0 or run[1] < 0 or run[0] + run[1] > unknown.size:
            raise MaskError(f"Invalid run {run} in {path} for a {dims} mask")
        unknown[run[0] : run[0] + run[1]] = True
    return unknown.reshape(dims)


def _format_run_length(unknown: np.ndarray) -> str:
    flat = np.concatenate(([False], unknown.ravel(), [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(flat))
    starts, stops = edges[0::2], edges[1::2]
    lines = [" ".join(str(v) for v in unknown.shape)]
    lines += [f"{start} {stop - start}" for start, stop in zip(starts, stops)]
    return "\n".join(lines) + "\n"


def read_mask(path: Path, shape: Sequence[int] | None = None, clear: bool = False) -> InpaintingMask:
    """
    Reads a mask image (nonzero = unknown) or a run-length text list (``.txt``: a header with the
    dimensions, then ``start length`` runs of C-ordered flat pixel indices).

    Args:
        path: Mask file.
        shape: Expected dimensions.
        clear: Drop flagged pixels on the outer ring instead of rejecting the mask.

    Raises:
        MaskError: On a size mismatch, a malformed text file or a border-touching mask.
        RuntimeError: If the file cannot be read.
    """
    try:
        if path.suffix.lower() == MASK_TEXT_SUFFIX:
            unknown = _parse_run_length(path)
        else:
            unknown = read_image(path) > 0
    except OSError as e:
        logger.error("Failed to read mask %s: %s", path, e, exc_info=True)
        raise RuntimeError(f"Mask read failed: {str(e)}") from e

    if shape is not None and tuple(unknown.shape) != tuple(shape):
        raise MaskError(f"Mask {path} has size {unknown.shape}, expected {tuple(shape)}")
    if clear:
        unknown = clear_border(unknown)
    return InpaintingMask(unknown)


def write_mask(path: Path, mask: InpaintingMask) -> Path:
    if path.suffix.lower() != MASK_TEXT_SUFFIX:
        return write_image(path, np.where(mask.unknown, 255.0, 0.0))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_format_run_length(mask.unknown), encoding="utf-8")
    except OSError as e:
        logger.error("Failed to write mask %s: %s", path, e, exc_info=True)
        raise RuntimeError(f"Mask write failed: {str(e)}") from e
    return path
