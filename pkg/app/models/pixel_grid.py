from dataclasses import dataclass
from functools import cached_property

import numpy as np

from app.core.errors import MaskError


@dataclass(frozen=True, eq=False)
class PixelGrid:
    """
    Discrete image model: the rectangle R split into mu_1 x ... x mu_d pixel rectangles.

    Pixel ``beta`` (0-based) covers ``[a_j + beta_j * p_j, a_j + (beta_j + 1) * p_j)`` in each
    axis and its value is the value at the pixel center. By default R = [0, mu_1] x ... so
    that every pixel has unit size.
    """

    counts: tuple[int, ...]
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    intensity_range: tuple[float, float] = (0.0, 255.0)

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        if any(c < 1 for c in counts):
            raise ValueError(f"Pixel counts must be positive, got {counts}")
        lower = tuple(float(v) for v in (self.lower or (0.0,) * len(counts)))
        upper = tuple(float(v) for v in (self.upper or counts))
        if len(lower) != len(counts) or len(upper) != len(counts):
            raise ValueError("Rectangle bounds must have one entry per axis")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValueError(f"Degenerate rectangle {lower} .. {upper}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def for_image(cls, image: np.ndarray) -> "PixelGrid":
        return cls(counts=tuple(image.shape))

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def pixel_sizes(self) -> tuple[float, ...]:
        return tuple((hi - lo) / mu for lo, hi, mu in zip(self.lower, self.upper, self.counts))

    def axis_centers(self, axis: int) -> np.ndarray:
        a, p = self.lower[axis], self.pixel_sizes[axis]
        return a + (np.arange(self.counts[axis]) + 0.5) * p

    def axis_pixel_index(self, axis: int, coordinates: np.ndarray) -> np.ndarray:
        """
        Index of the half-open pixel interval containing each coordinate.

        The right end b_j belongs to the last pixel so that every point of R has an owner.
        """
        a, p = self.lower[axis], self.pixel_sizes[axis]
        index = np.floor((np.asarray(coordinates, dtype=float) - a) / p).astype(int)
        return np.clip(index, 0, self.counts[axis] - 1)


@dataclass(frozen=True, eq=False)
class InpaintingMask:
    """
    Pixel-aligned inpainting region: ``unknown[beta]`` is True for pixels whose value is missing.

    The region must stay off the outer pixel ring (the boundary of the inpainting domain may
    not meet the boundary of R) and must leave at least one pixel known. An empty region is
    allowed here; operations that need unknown pixels check for it themselves.
    """

    unknown: np.ndarray

    def __post_init__(self) -> None:
        unknown = np.asarray(self.unknown, dtype=bool).copy()
        unknown.setflags(write=False)
        object.__setattr__(self, "unknown", unknown)

        if unknown.all():
            raise MaskError("Mask marks every pixel as unknown; nothing is left to interpolate")
        if touches_border(unknown):
            raise MaskError("Mask touches the image border; unknown pixels must keep off the outer pixel ring")

    @classmethod
    def empty(cls, shape: tuple[int, ...]) -> "InpaintingMask":
        return cls(np.zeros(shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.unknown.shape)

    @property
    def is_empty(self) -> bool:
        return not bool(self.unknown.any())

    @cached_property
    def unknown_count(self) -> int:
        return int(self.unknown.sum())

    @cached_property
    def known(self) -> np.ndarray:
        return ~self.unknown

    def check_matches(self, image: np.ndarray) -> None:
        if tuple(image.shape) != self.shape:
            raise MaskError(f"Mask shape {self.shape} does not match image shape {tuple(image.shape)}")


def touches_border(unknown: np.ndarray) -> bool:
    """Whether any flagged pixel lies on the outer pixel ring."""
    for axis in range(unknown.ndim):
        first = np.take(unknown, 0, axis=axis)
        last = np.take(unknown, unknown.shape[axis] - 1, axis=axis)
        if first.any() or last.any():
            return True
    return False


def clear_border(unknown: np.ndarray) -> np.ndarray:
    cleared = np.asarray(unknown, dtype=bool).copy()
    for axis in range(cleared.ndim):
        index: list[slice | int] = [slice(None)] * cleared.ndim
        index[axis] = 0
        cleared[tuple(index)] = False
        index[axis] = -1
        cleared[tuple(index)] = False
    return cleared
