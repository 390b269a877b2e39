import numpy as np
import pytest

from app.core.collocation import linear_precision_coefficients
from app.core.errors import BasisIndexError, DomainError, KnotGridSizingError
from app.core.spline_basis import (
    axis_collocation_matrix,
    build_knot_grid,
    eval_axis_bspline,
    eval_gradient_rows,
    eval_tensor_row,
    gradient_rows,
    index_set_for_domain,
    tensor_rows,
)
from app.models.knot_grid import AxisKnots
from app.models.pixel_grid import PixelGrid

ORDERS = [2, 3, 4, 5]


def random_points(grid, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(grid.lower, grid.upper, size=(count, grid.dim))


class TestBuildKnotGrid:
    def test_odd_order_puts_knots_on_pixel_edges(self):
        grid = build_knot_grid(PixelGrid((5,)), 3)
        axis = grid.axes[0]
        assert axis.interior_count == 4
        np.testing.assert_array_equal(axis.knots, [0, 0, 0, 1, 2, 3, 4, 5, 5, 5])

    def test_even_order_puts_knots_on_pixel_centers(self):
        grid = build_knot_grid(PixelGrid((4,)), 2)
        axis = grid.axes[0]
        assert axis.interior_count == 4
        np.testing.assert_array_equal(axis.knots, [0, 0, 0.5, 1.5, 2.5, 3.5, 4, 4])

    def test_per_axis_orders(self):
        grid = build_knot_grid(PixelGrid((6, 9)), (2, 3))
        assert grid.orders == (2, 3)
        assert grid.shape == (8, 11), f"Basis shape {grid.shape}"
        assert grid.size == 88

    @pytest.mark.parametrize("counts, order", [((1,), 3), ((2, 8), 3), ((8,), 1)])
    def test_rejects_undersized_axes(self, counts, order):
        with pytest.raises(KnotGridSizingError):
            build_knot_grid(PixelGrid(counts), order)

    def test_knot_invariants_are_checked(self):
        with pytest.raises(KnotGridSizingError):
            AxisKnots(order=2, interior_count=2, knots=np.array([0, 0, 2, 1, 3, 3]), a=0, b=3)
        with pytest.raises(KnotGridSizingError):
            AxisKnots(order=2, interior_count=1, knots=np.array([0, 0.5, 1, 2, 2]), a=0, b=2)


class TestUnivariate:
    hat = AxisKnots(order=2, interior_count=1, knots=np.array([0.0, 0.0, 1.0, 2.0, 2.0]), a=0.0, b=2.0)

    @pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, 0.5), (1.5, 0.5), (0.0, 0.0), (2.0, 0.0)])
    def test_hat_function(self, x, expected):
        assert eval_axis_bspline(self.hat, 1, x) == pytest.approx(expected, abs=1e-15)

    def test_zero_outside_support(self):
        axis = build_knot_grid(PixelGrid((8,)), 3).axes[0]
        for x in np.linspace(4.0, 8.0, 17):
            assert eval_axis_bspline(axis, 0, x) == 0.0, f"B_0 nonzero at {x}"

    def test_index_out_of_range(self):
        with pytest.raises(BasisIndexError):
            eval_axis_bspline(self.hat, 3, 0.5)

    def test_right_end_is_left_limit(self):
        for n in ORDERS:
            axis = build_knot_grid(PixelGrid((8,)), n).axes[0]
            row = axis_collocation_matrix(axis, np.array([8.0])).toarray()[0]
            assert row[-1] == pytest.approx(1.0, abs=1e-14), f"n={n}: last B-spline at b is {row[-1]}"
            assert row.sum() == pytest.approx(1.0, abs=1e-14)

    def test_point_outside_interval(self):
        with pytest.raises(DomainError):
            axis_collocation_matrix(self.hat, np.array([2.5]))


@pytest.mark.parametrize("order", ORDERS)
class TestTensorBasis:
    def test_partition_of_unity_and_nonnegativity(self, order):
        grid = build_knot_grid(PixelGrid((9, 12)), order)
        values = tensor_rows(grid, random_points(grid, 10_000, seed=order)).toarray()
        assert np.max(np.abs(values.sum(axis=1) - 1.0)) <= 1e-12
        assert values.min() >= 0.0
        assert np.count_nonzero(values, axis=1).max() <= order**2

    def test_corners_interpolate(self, order):
        grid = build_knot_grid(PixelGrid((8, 8)), order)
        first = eval_tensor_row(grid, [0.0, 0.0]).toarray()[0]
        last = eval_tensor_row(grid, [8.0, 8.0]).toarray()[0]
        assert np.count_nonzero(first) == 1 and first[0] == pytest.approx(1.0, abs=1e-14)
        assert np.count_nonzero(last) == 1 and last[-1] == pytest.approx(1.0, abs=1e-14)

    def test_locality(self, order):
        grid = build_knot_grid(PixelGrid((8, 8)), order)
        points = random_points(grid, 200, seed=3)
        values = tensor_rows(grid, points).toarray()
        for alpha in [(0, 0), (3, 4), (grid.shape[0] - 1, 2)]:
            column = values[:, np.ravel_multi_index(alpha, grid.shape)]
            inside = np.ones(points.shape[0], dtype=bool)
            for j, axis in enumerate(grid.axes):
                lo, hi = axis.support(alpha[j])
                inside &= (points[:, j] >= lo) & (points[:, j] <= hi)
            assert np.all(column[~inside] == 0.0), f"B_{alpha} nonzero outside its support"

    def test_gradient_of_constant_vanishes(self, order):
        grid = build_knot_grid(PixelGrid((7, 8)), order)
        rows = gradient_rows(grid, random_points(grid, 500, seed=1))
        np.testing.assert_allclose(rows @ np.full(grid.size, 42.0), 0.0, atol=1e-10)

    def test_linear_precision(self, order):
        grid = build_knot_grid(PixelGrid((8, 6)), order)
        points = random_points(grid, 1000, seed=2)
        values = tensor_rows(grid, points)
        derivatives = gradient_rows(grid, points)
        for axis in range(grid.dim):
            f = linear_precision_coefficients(grid, axis)
            assert np.max(np.abs(values @ f - points[:, axis])) <= 1e-12
            blocks = (derivatives @ f).reshape(-1, grid.dim)
            expected = np.zeros_like(blocks)
            expected[:, axis] = 1.0
            np.testing.assert_allclose(blocks, expected, atol=1e-11)

    def test_derivative_matches_central_differences(self, order):
        grid = build_knot_grid(PixelGrid((8, 8)), order)
        rng = np.random.default_rng(order)
        f = rng.uniform(0.0, 1.0, grid.size)
        points = rng.uniform(0.05, 7.95, size=(400, 2))
        breakpoints = [axis.breakpoints for axis in grid.axes]
        far = np.ones(points.shape[0], dtype=bool)
        for j in range(2):
            far &= np.min(np.abs(points[:, j, None] - breakpoints[j][None, :]), axis=1) >= 1e-3
        points = points[far]

        h = 1e-5
        for x in points:
            gradient = eval_gradient_rows(grid, x) @ f
            for j in range(2):
                step = np.zeros(2)
                step[j] = h
                forward = (eval_tensor_row(grid, x + step) @ f)[0]
                backward = (eval_tensor_row(grid, x - step) @ f)[0]
                estimate = (forward - backward) / (2 * h)
                assert abs(gradient[j] - estimate) <= 1e-6 * max(1.0, abs(estimate)), f"x={x}, axis {j}"

    def test_sup_norm_stability(self, order):
        grid = build_knot_grid(PixelGrid((8, 8)), order)
        rng = np.random.default_rng(10 + order)
        points = np.vstack([random_points(grid, 4000, seed=order), [[0, 0], [0, 8], [8, 0], [8, 8]]])
        values = tensor_rows(grid, points)
        for _ in range(100):
            f = rng.uniform(-1.0, 1.0, grid.size)
            f /= np.max(np.abs(f))
            ratio = np.max(np.abs(values @ f))
            assert 1e-3 <= ratio <= 1.0 + 1e-12, f"Stability ratio {ratio}"


def test_points_outside_rectangle():
    grid = build_knot_grid(PixelGrid((4, 4)), 2)
    with pytest.raises(DomainError):
        eval_tensor_row(grid, [4.5, 1.0])
    with pytest.raises(DomainError):
        tensor_rows(grid, np.zeros((3, 3)))


class TestIndexSetForDomain:
    grid = build_knot_grid(PixelGrid((6, 7)), (3, 4))

    def test_whole_rectangle(self):
        indices = index_set_for_domain(self.grid, boxes=[(self.grid.lower, self.grid.upper)])
        assert len(indices) == self.grid.size

    def test_corner_cell(self):
        assert len(index_set_for_domain(self.grid, cells=[(0, 0)])) == 3 * 4
        last = tuple(c - 1 for c in self.grid.cell_shape)
        assert len(index_set_for_domain(self.grid, cells=[last])) == 3 * 4

    def test_empty_domain(self):
        assert index_set_for_domain(self.grid) == set()

    def test_touching_boxes_count(self):
        # the box [0, 1] x [0, 0.5] touches the support [1, 4] of the axis-0 basis function 3
        indices = index_set_for_domain(self.grid, boxes=[((0.0, 0.0), (1.0, 0.5))])
        assert (3, 0) in indices
        assert (4, 0) not in indices
