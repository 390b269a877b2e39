from typing import Sequence

import numpy as np
from scipy import special

from app.core.errors import QuadratureOrderError
from app.core.spline_basis import gradient_rows
from app.models.knot_grid import TensorKnotGrid
from app.models.quadrature import ActiveRegion, GradientOperator, QuadratureRule
from app.models.site_set import SiteSet
from logs.logging_config import logger

MAX_GAUSS_POINTS = 16


def active_region(grid: TensorKnotGrid, sites: SiteSet) -> ActiveRegion:
    """
    Determines U, the union of the supports of all basis functions that own a removed site.

    Supports are unions of grid cells, so U is recorded as a boolean cell array. An empty mask
    yields an empty region.
    """
    free: np.ndarray = sites.free_flat
    active = np.zeros(grid.cell_shape, dtype=bool)
    boxes: list[tuple[np.ndarray, np.ndarray]] = []

    for alpha in zip(*np.unravel_index(free, grid.shape)):
        cell_slices: list[slice] = []
        lower, upper = [], []
        for axis, index in zip(grid.axes, alpha):
            first, stop = axis.support_cells(int(index))
            cell_slices.append(slice(first, stop))
            lo, hi = axis.support(int(index))
            lower.append(lo)
            upper.append(hi)
        active[tuple(cell_slices)] = True
        boxes.append((np.array(lower), np.array(upper)))

    region = ActiveRegion(free_indices=free, active=active, boxes=tuple(boxes))
    logger.debug("Active region: %d free basis functions, %d cells", free.shape[0], region.cell_count)
    return region


def gauss_legendre_nodes(q: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights of the q-point Gauss-Legendre rule on [-1, 1].

    Raises:
        QuadratureOrderError: If q is outside 1..16.
    """
    if not 1 <= q <= MAX_GAUSS_POINTS:
        raise QuadratureOrderError(f"Gauss-Legendre point count must be in 1..{MAX_GAUSS_POINTS}, got {q}")
    nodes, weights = special.roots_legendre(q)
    return np.asarray(nodes, dtype=float), np.asarray(weights, dtype=float)


def build_rule(
    grid: TensorKnotGrid,
    region: ActiveRegion,
    points_per_axis: int | Sequence[int] | None = None,
) -> QuadratureRule:
    """
    Tensor product Gauss-Legendre rule on every active cell.

    Args:
        grid: The spline space; supplies the cell geometry.
        region: Active region from ``active_region``.
        points_per_axis: Gauss points per axis and cell. Defaults to the spline order per axis.

    Returns:
        A rule with ``#cells * prod(q_j)`` nodes.
    """
    if points_per_axis is None:
        points_per_axis = grid.orders
    elif isinstance(points_per_axis, int):
        points_per_axis = (points_per_axis,) * grid.dim
    q = tuple(int(v) for v in points_per_axis)

    cells: np.ndarray = region.cells
    local = np.indices(q).reshape(grid.dim, -1).T
    coords, weights = [], np.ones((cells.shape[0], local.shape[0]))
    for j, axis in enumerate(grid.axes):
        ref_nodes, ref_weights = gauss_legendre_nodes(q[j])
        lo = axis.breakpoints[cells[:, j]]
        hi = axis.breakpoints[cells[:, j] + 1]
        half = 0.5 * (hi - lo)
        axis_nodes = (0.5 * (lo + hi))[:, None] + half[:, None] * ref_nodes[None, :]
        axis_weights = half[:, None] * ref_weights[None, :]
        coords.append(axis_nodes[:, local[:, j]])
        weights = weights * axis_weights[:, local[:, j]]

    rule = QuadratureRule(
        nodes=np.stack(coords, axis=-1).reshape(-1, grid.dim),
        weights=weights.ravel(),
        cell_of_node=np.repeat(np.arange(cells.shape[0]), local.shape[0]),
        points_per_axis=q,
    )
    logger.debug("Quadrature rule: %d cells x %s points = %d nodes", cells.shape[0], q, rule.node_count)
    return rule


def assemble_gradient_operator(grid: TensorKnotGrid, rule: QuadratureRule) -> GradientOperator:
    """The weighted gradient collocation operator K with one block of d rows per node."""
    matrix = gradient_rows(grid, rule.nodes, rule.weights)
    logger.debug("Gradient operator: %s, %d nonzeros", matrix.shape, matrix.nnz)
    return GradientOperator(matrix=matrix, dim=grid.dim)


def cell_objectives(operator: GradientOperator, rule: QuadratureRule, f: np.ndarray) -> np.ndarray:
    """Per-cell contributions to the discretized total variation."""
    norms = np.linalg.norm(operator.apply(f), axis=1)
    return np.bincount(rule.cell_of_node, weights=norms, minlength=int(rule.cell_of_node.max(initial=-1)) + 1)
