from dataclasses import dataclass
from functools import cached_property
from math import prod

import numpy as np

from app.core.errors import KnotGridSizingError


@dataclass(frozen=True, eq=False)
class AxisKnots:
    """
    Knot sequence of one coordinate direction of a tensor product spline space.

    The sequence has ``interior_count + 2 * order`` entries, the first and last ``order``
    of which coincide with the interval ends (full boundary multiplicity). Basis indices
    run from 0 to ``basis_count - 1``.

    Attributes:
        order: Spline order n (polynomial degree n - 1).
        interior_count: Number m of interior knots.
        knots: The full knot vector, nondecreasing.
        a: Left end of the interval.
        b: Right end of the interval.
    """

    order: int
    interior_count: int
    knots: np.ndarray
    a: float
    b: float

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=float)
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

        n, m = self.order, self.interior_count
        if n < 2:
            raise KnotGridSizingError(f"Spline order must be at least 2, got {n}")
        if m < 1:
            raise KnotGridSizingError(f"Interior knot count must be at least 1, got {m}")
        if knots.shape != (m + 2 * n,):
            raise KnotGridSizingError(f"Expected {m + 2 * n} knots for m={m}, n={n}, got {knots.shape[0]}")
        if np.any(np.diff(knots) < 0):
            raise KnotGridSizingError("Knot sequence must be nondecreasing")
        if not (np.all(knots[:n] == self.a) and np.all(knots[m + n :] == self.b)):
            raise KnotGridSizingError("Boundary knots must have full multiplicity at a and b")
        # supports of the basis functions must not collapse
        if np.any(knots[n - 1 : m + n] >= knots[2 * n - 1 : m + 2 * n]):
            raise KnotGridSizingError("Knot multiplicity exceeds the spline order in the interior")

    @property
    def basis_count(self) -> int:
        return self.interior_count + self.order

    @cached_property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot values; consecutive pairs bound the nondegenerate grid cells."""
        return np.unique(self.knots)

    @property
    def cell_count(self) -> int:
        return self.breakpoints.shape[0] - 1

    def support(self, index: int) -> tuple[float, float]:
        return float(self.knots[index]), float(self.knots[index + self.order])

    def support_cells(self, index: int) -> tuple[int, int]:
        """Half-open range of cell indices covered by the support of basis function ``index``."""
        lo, hi = self.support(index)
        return int(np.searchsorted(self.breakpoints, lo)), int(np.searchsorted(self.breakpoints, hi))


@dataclass(frozen=True, eq=False)
class TensorKnotGrid:
    """
    Tensor product knot grid T over the rectangle R = [a_1, b_1] x ... x [a_d, b_d].

    Coefficient vectors over this grid are ordered lexicographically in the multi-index
    with the last axis running fastest (``numpy.ravel_multi_index`` order).
    """

    axes: tuple[AxisKnots, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "axes", tuple(self.axes))
        if not self.axes:
            raise KnotGridSizingError("A knot grid needs at least one axis")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(axis.order for axis in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(axis.basis_count for axis in self.axes)

    @property
    def size(self) -> int:
        return prod(self.shape)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return tuple(axis.cell_count for axis in self.axes)

    @property
    def lower(self) -> np.ndarray:
        return np.array([axis.a for axis in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([axis.b for axis in self.axes])

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)
