from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True, eq=False)
class SiteSet:
    """
    Interpolation sites of a tensor product spline space over a pixel image.

    Tensor site ``gamma`` is ``(axis_sites[0][gamma_0], ..., axis_sites[d-1][gamma_{d-1}])`` and
    is owned by the basis function with the same multi-index, so sites and coefficients share
    the C-ordered layout. A site is constrained when the pixel containing it is known.

    Attributes:
        axis_sites: Snapped per-axis site coordinates, strictly increasing.
        axis_pixels: Per-axis index of the pixel interval containing each site coordinate.
        constrained: Boolean array of shape ``grid.shape``; True for sites in known pixels.
    """

    axis_sites: tuple[np.ndarray, ...]
    axis_pixels: tuple[np.ndarray, ...]
    constrained: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(sites.shape[0] for sites in self.axis_sites)

    @property
    def size(self) -> int:
        return int(self.constrained.size)

    @cached_property
    def constrained_flat(self) -> np.ndarray:
        """Flat (C-order) indices of the constrained sites, i.e. the rows of B_{Xi*}."""
        return np.flatnonzero(self.constrained.ravel())

    @cached_property
    def free_flat(self) -> np.ndarray:
        """Flat indices of the removed sites; by ownership also the free basis functions."""
        return np.flatnonzero(~self.constrained.ravel())

    @property
    def constrained_count(self) -> int:
        return int(self.constrained_flat.shape[0])

    @property
    def free_count(self) -> int:
        return int(self.free_flat.shape[0])

    def points(self, flat_indices: np.ndarray | None = None) -> np.ndarray:
        """Coordinates of the tensor sites with the given flat indices (all sites by default)."""
        if flat_indices is None:
            flat_indices = np.arange(self.size)
        multi = np.unravel_index(flat_indices, self.shape)
        return np.stack([sites[idx] for sites, idx in zip(self.axis_sites, multi)], axis=1)

    def pixel_values(self, image: np.ndarray) -> np.ndarray:
        """Image value of the pixel containing each tensor site, shape ``self.shape``."""
        return np.asarray(image, dtype=float)[np.ix_(*self.axis_pixels)]

    def constrained_values(self, image: np.ndarray) -> np.ndarray:
        """The right-hand side g_{Xi*}, ordered like the rows of B_{Xi*}."""
        return self.pixel_values(image).ravel()[self.constrained_flat]
