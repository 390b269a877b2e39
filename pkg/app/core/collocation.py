from enum import Enum
from functools import reduce

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.lib.stride_tricks import sliding_window_view

from app.core.errors import DuplicateSiteError, FactorizationError, SchoenbergWhitneyError
from app.core.spline_basis import axis_collocation_matrix
from app.models.knot_grid import AxisKnots, TensorKnotGrid
from app.models.pixel_grid import InpaintingMask, PixelGrid
from app.models.site_set import SiteSet
from logs.logging_config import logger


class SiteRestriction(str, Enum):
    ALL = "all"
    CONSTRAINED = "constrained"


def greville_axis(axis: AxisKnots) -> np.ndarray:
    """
    Greville abscissae of one axis: the mean of the n-1 knots following each basis index.

    Returns:
        Array of length m + n, starting at a and ending at b.
    """
    windows = sliding_window_view(axis.knots[1:], axis.order - 1)
    return windows.mean(axis=1)[: axis.basis_count]


def snap_axis_sites(greville: np.ndarray, centers: np.ndarray, axis: AxisKnots | None = None) -> np.ndarray:
    """
    Moves Greville abscissae onto pixel centers so that every center becomes a site.

    Interior abscissae already sit on centers. Each center not yet present takes the nearest
    abscissa that is not already on a center (smaller index on ties); the two end sites are
    never moved. A snap that would leave the sites non-strictly increasing falls through to the
    next candidate.

    Args:
        greville: Greville abscissae from ``greville_axis``.
        centers: Pixel center coordinates of the same axis.
        axis: When given, the Schoenberg-Whitney condition is verified on the result.

    Returns:
        Strictly increasing site coordinates, one per basis function.

    Raises:
        DuplicateSiteError: If some center cannot be placed without breaking monotonicity.
        SchoenbergWhitneyError: If a site left the support of its B-spline.
    """
    greville = np.asarray(greville, dtype=float)
    centers = np.asarray(centers, dtype=float)
    tol: float = 1e-9 * max(1.0, float(np.ptp(greville)))
    sites: np.ndarray = greville.copy()
    on_center = np.isclose(sites[:, None], centers[None, :], rtol=0.0, atol=tol).any(axis=1)
    last: int = sites.shape[0] - 1

    for c in centers:
        if np.any(np.abs(sites - c) <= tol):
            continue
        candidates = [g for g in range(1, last) if not on_center[g]]
        candidates.sort(key=lambda g: (abs(greville[g] - c), g))
        for g in candidates:
            if sites[g - 1] < c < sites[g + 1]:
                logger.debug("Snapping site %d from %.6g to center %.6g", g, sites[g], c)
                sites[g] = c
                on_center[g] = True
                break
        else:
            raise DuplicateSiteError(f"Center {c} cannot be placed without duplicating a site")

    if axis is not None:
        diagonal = axis_collocation_matrix(axis, sites).diagonal()
        if np.any(diagonal <= 0):
            bad = np.flatnonzero(diagonal <= 0).tolist()
            raise SchoenbergWhitneyError(f"Sites {bad} lie outside the support of their B-spline")
    return sites


def build_site_sets(grid: TensorKnotGrid, pixels: PixelGrid, mask: InpaintingMask) -> SiteSet:
    """
    Builds the candidate sites Xi (tensor product of snapped per-axis sites) and marks Xi*.

    A tensor site is constrained when the pixel rectangle containing it is known. With the
    knot grid from ``build_knot_grid`` every known pixel center is a constrained site.
    """
    if mask.shape != pixels.shape:
        raise ValueError(f"Mask shape {mask.shape} does not match pixel grid {pixels.shape}")

    axis_sites: list[np.ndarray] = []
    axis_pixels: list[np.ndarray] = []
    for j, axis in enumerate(grid.axes):
        sites = snap_axis_sites(greville_axis(axis), pixels.axis_centers(j), axis)
        axis_sites.append(sites)
        axis_pixels.append(pixels.axis_pixel_index(j, sites))

    constrained: np.ndarray = mask.known[np.ix_(*axis_pixels)]
    site_set = SiteSet(
        axis_sites=tuple(axis_sites),
        axis_pixels=tuple(axis_pixels),
        constrained=constrained,
    )
    logger.debug(
        "Built site sets: %d sites, %d constrained, %d removed",
        site_set.size,
        site_set.constrained_count,
        site_set.free_count,
    )
    return site_set


def assemble_collocation(
    grid: TensorKnotGrid,
    sites: SiteSet,
    restrict: SiteRestriction | str = SiteRestriction.CONSTRAINED,
) -> sp.csr_matrix:
    """
    Collocation matrix [B_alpha(xi)] with one row per site and one column per basis function.

    The full matrix is the Kronecker product of the per-axis collocation matrices, which keeps
    rows and columns in the shared C order. ``restrict="constrained"`` keeps the rows of Xi*.
    """
    factors = [axis_collocation_matrix(axis, axis_sites) for axis, axis_sites in zip(grid.axes, sites.axis_sites)]
    full: sp.csr_matrix = reduce(lambda left, right: sp.kron(left, right, format="csr"), factors)
    if SiteRestriction(restrict) is SiteRestriction.ALL:
        return full
    return full[sites.constrained_flat]


def interpolate(grid: TensorKnotGrid, sites: SiteSet, site_values: np.ndarray) -> np.ndarray:
    """
    Solves the square system B_Xi f = values for the coefficients of the interpolant.

    Args:
        grid: The spline space.
        sites: Site sets built for ``grid``.
        site_values: One value per tensor site (any shape with ``sites.size`` entries).

    Raises:
        FactorizationError: If the collocation matrix is singular.
    """
    matrix = assemble_collocation(grid, sites, SiteRestriction.ALL).tocsc()
    try:
        solver = spla.splu(matrix)
    except RuntimeError as e:
        logger.error("Collocation matrix factorization failed: %s", e, exc_info=True)
        raise FactorizationError(f"Square collocation matrix is singular: {e}") from e
    return solver.solve(np.asarray(site_values, dtype=float).ravel())


def linear_precision_coefficients(grid: TensorKnotGrid, axis: int) -> np.ndarray:
    """Coefficients f_gamma = xi_{gamma, axis}, for which the spline reproduces x_axis exactly."""
    abscissae = greville_axis(grid.axes[axis])
    shape = [1] * grid.dim
    shape[axis] = grid.shape[axis]
    return np.broadcast_to(abscissae.reshape(shape), grid.shape).ravel().copy()
