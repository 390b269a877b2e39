from itertools import product
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from app.core.errors import BasisIndexError, DomainError, KnotGridSizingError
from app.models.knot_grid import AxisKnots, TensorKnotGrid
from app.models.pixel_grid import PixelGrid
from logs.logging_config import logger

MultiIndex = tuple[int, ...]
Box = tuple[Sequence[float], Sequence[float]]


def build_knot_grid(pixel_grid: PixelGrid, orders: int | Sequence[int]) -> TensorKnotGrid:
    """
    Builds the knot grid whose (snapped) Greville abscissae contain every pixel center.

    Per axis, with mu pixels of size p on [a, b]:
    - odd order n: m = mu - 1 interior knots at a + k * p, k = 1..m (knots on pixel edges)
    - even order n: m = mu interior knots at a + (k - 1/2) * p, k = 1..m (knots on pixel centers)
    The ends carry n-fold knots.

    Args:
        pixel_grid: The image model the spline space is built for.
        orders: Spline order per axis, or a single order used for all axes.

    Returns:
        The tensor product knot grid.

    Raises:
        KnotGridSizingError: If an order is below 2 or an axis has fewer pixels than its order.
    """
    if isinstance(orders, int):
        orders = (orders,) * pixel_grid.dim
    if len(orders) != pixel_grid.dim:
        raise KnotGridSizingError(f"Need {pixel_grid.dim} orders, got {len(orders)}")

    axes: list[AxisKnots] = []
    for j, n in enumerate(orders):
        mu: int = pixel_grid.counts[j]
        a, b, p = pixel_grid.lower[j], pixel_grid.upper[j], pixel_grid.pixel_sizes[j]
        if n < 2:
            raise KnotGridSizingError(f"Spline order must be at least 2, got {n} on axis {j}")
        if mu < n:
            raise KnotGridSizingError(f"Axis {j} has {mu} pixels, fewer than the spline order {n}")

        k = np.arange(1, mu + (0 if n % 2 else 1))
        interior: np.ndarray = a + k * p if n % 2 else a + (k - 0.5) * p
        knots = np.concatenate([np.full(n, a), interior, np.full(n, b)])
        axes.append(AxisKnots(order=n, interior_count=interior.shape[0], knots=knots, a=a, b=b))

    grid = TensorKnotGrid(tuple(axes))
    logger.debug("Built knot grid: orders=%s, basis shape=%s, cells=%s", grid.orders, grid.shape, grid.cell_shape)
    return grid


def axis_span(axis: AxisKnots, x: np.ndarray) -> np.ndarray:
    """
    Index i of the knot interval [t_i, t_{i+1}) containing each x, restricted to n-1..m+n-1.

    Interior knots are assigned to the interval on their right; the right end b is assigned to
    the last nondegenerate interval, so values at b are left limits.
    """
    x = np.asarray(x, dtype=float)
    if np.any((x < axis.a) | (x > axis.b)):
        raise DomainError(f"Points outside [{axis.a}, {axis.b}]")
    span = np.searchsorted(axis.knots, x, side="right") - 1
    return np.clip(span, axis.order - 1, axis.basis_count - 1)


def _local_basis(knots: np.ndarray, order: int, x: np.ndarray, span: np.ndarray) -> np.ndarray:
    """Cox-de Boor triangle: values of the ``order`` B-splines span-order+1..span at each x."""
    points: int = x.shape[0]
    values = np.zeros((points, order))
    values[:, 0] = 1.0
    left = np.zeros((points, order))
    right = np.zeros((points, order))
    for degree in range(1, order):
        left[:, degree] = x - knots[span + 1 - degree]
        right[:, degree] = knots[span + degree] - x
        saved = np.zeros(points)
        for r in range(degree):
            temp = values[:, r] / (right[:, r + 1] + left[:, degree - r])
            values[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, degree - r] * temp
        values[:, degree] = saved
    return values


def axis_local_values(axis: AxisKnots, x: np.ndarray, derivative: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """
    Nonzero B-splines (or their first derivatives) of one axis at many points.

    Returns:
        ``(start, values)`` where ``values[p, r]`` belongs to basis index ``start[p] + r``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n: int = axis.order
    span = axis_span(axis, x)
    start = span - (n - 1)
    if not derivative:
        return start, _local_basis(axis.knots, n, x, span)

    lower = _local_basis(axis.knots, n - 1, x, span)
    padded = np.zeros((x.shape[0], n + 1))
    padded[:, 1:n] = lower

    t = axis.knots
    alpha = start[:, None] + np.arange(n)[None, :]
    left_width = t[alpha + n - 1] - t[alpha]
    right_width = t[alpha + n] - t[alpha + 1]
    left_term = np.divide(padded[:, :n], left_width, out=np.zeros_like(left_width), where=left_width > 0)
    right_term = np.divide(padded[:, 1:], right_width, out=np.zeros_like(right_width), where=right_width > 0)
    return start, (n - 1) * (left_term - right_term)


def eval_axis_bspline(axis: AxisKnots, index: int, x: float) -> float:
    """Value of the single univariate B-spline ``index`` of ``axis`` at ``x``."""
    if not 0 <= index < axis.basis_count:
        raise BasisIndexError(f"Basis index {index} outside 0..{axis.basis_count - 1}")
    start, values = axis_local_values(axis, np.array([x]))
    offset = index - int(start[0])
    if 0 <= offset < axis.order:
        return float(values[0, offset])
    return 0.0


def axis_collocation_matrix(axis: AxisKnots, x: np.ndarray, derivative: bool = False) -> sp.csr_matrix:
    """Sparse matrix of all B-splines (or derivatives) of one axis evaluated at the points ``x``."""
    start, values = axis_local_values(axis, x, derivative)
    rows = np.repeat(np.arange(values.shape[0]), axis.order)
    cols = (start[:, None] + np.arange(axis.order)[None, :]).ravel()
    return sp.csr_matrix((values.ravel(), (rows, cols)), shape=(values.shape[0], axis.basis_count))


def _check_points(grid: TensorKnotGrid, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.dim:
        raise DomainError(f"Expected {grid.dim}-dimensional points, got shape {points.shape}")
    if not np.all(grid.contains(points)):
        raise DomainError("Evaluation points outside the rectangle R")
    return points


def _tensor_entries(
    grid: TensorKnotGrid, points: np.ndarray, derivative_axis: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Column indices and values of the tensor product rows at the points, shape (P, prod n_j)."""
    cols: np.ndarray | None = None
    vals: np.ndarray | None = None
    for j, axis in enumerate(grid.axes):
        start, local = axis_local_values(axis, points[:, j], derivative=(j == derivative_axis))
        local_cols = start[:, None] + np.arange(axis.order)[None, :]
        if cols is None or vals is None:
            cols, vals = local_cols, local
            continue
        count, width = cols.shape[0], cols.shape[1] * axis.order
        cols = (cols[:, :, None] * axis.basis_count + local_cols[:, None, :]).reshape(count, width)
        vals = (vals[:, :, None] * local[:, None, :]).reshape(count, width)
    assert cols is not None and vals is not None
    return cols, vals


def tensor_rows(grid: TensorKnotGrid, points: np.ndarray) -> sp.csr_matrix:
    """Rows (B_alpha(x))_alpha for each point x, as a (P, #I_R) sparse matrix."""
    points = _check_points(grid, points)
    cols, vals = _tensor_entries(grid, points)
    rows = np.repeat(np.arange(points.shape[0]), cols.shape[1])
    return sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(points.shape[0], grid.size))


def gradient_rows(grid: TensorKnotGrid, points: np.ndarray, weights: np.ndarray | None = None) -> sp.csr_matrix:
    """
    Stacked gradient rows: row ``p * d + j`` holds (w_p * d/dx_j B_alpha(x_p))_alpha.

    Args:
        grid: The spline space.
        points: Evaluation points, shape (P, d).
        weights: Optional per-point factors folded into the rows.
    """
    points = _check_points(grid, points)
    count, d = points.shape
    scale = np.ones(count) if weights is None else np.asarray(weights, dtype=float)

    all_rows, all_cols, all_vals = [], [], []
    for j in range(d):
        cols, vals = _tensor_entries(grid, points, derivative_axis=j)
        all_rows.append(np.repeat(np.arange(count) * d + j, cols.shape[1]))
        all_cols.append(cols.ravel())
        all_vals.append((vals * scale[:, None]).ravel())
    return sp.csr_matrix(
        (np.concatenate(all_vals), (np.concatenate(all_rows), np.concatenate(all_cols))),
        shape=(count * d, grid.size),
    )


def eval_tensor_row(grid: TensorKnotGrid, x: Sequence[float]) -> sp.csr_matrix:
    return tensor_rows(grid, np.asarray(x, dtype=float)[None, :])


def eval_gradient_rows(grid: TensorKnotGrid, x: Sequence[float]) -> sp.csr_matrix:
    """The d rows (d/dx_j B_alpha(x))_alpha at one point, as a (d, #I_R) sparse matrix."""
    return gradient_rows(grid, np.asarray(x, dtype=float)[None, :])


def index_set_for_domain(
    grid: TensorKnotGrid,
    cells: Iterable[MultiIndex] = (),
    boxes: Iterable[Box] = (),
) -> set[MultiIndex]:
    """
    Multi-indices of all B-splines whose support meets the domain.

    The domain is a union of grid cells and axis-aligned boxes. Cells count by their open
    interior (a support must overlap the cell), boxes are closed (a support touching the box
    counts).

    Args:
        grid: The spline space.
        cells: Cell multi-indices into the breakpoint grid, see ``TensorKnotGrid.cell_shape``.
        boxes: ``(lower, upper)`` corner pairs in image coordinates.

    Returns:
        The set of 0-based basis multi-indices.
    """
    indices: set[MultiIndex] = set()
    for cell in cells:
        per_axis = []
        for axis, k in zip(grid.axes, cell):
            lo, hi = axis.breakpoints[k], axis.breakpoints[k + 1]
            t, n = axis.knots, axis.order
            alpha = np.arange(axis.basis_count)
            per_axis.append(alpha[(t[alpha] < hi) & (t[alpha + n] > lo)].tolist())
        indices.update(product(*per_axis))

    for box_lower, box_upper in boxes:
        per_axis = []
        for axis, lo, hi in zip(grid.axes, box_lower, box_upper):
            t, n = axis.knots, axis.order
            alpha = np.arange(axis.basis_count)
            per_axis.append(alpha[(t[alpha] <= hi) & (t[alpha + n] >= lo)].tolist())
        indices.update(product(*per_axis))
    return indices
