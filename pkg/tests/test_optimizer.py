import logging

import numpy as np
import pytest
from scipy.linalg import null_space

from app.core.imaging import render
from app.core.optimizer import (
    estimate_operator_norm,
    full_objective,
    objective,
    prox_f_star,
    prox_g_exact,
    prox_g_relaxed,
    solve,
    solve_subgradient,
    starting_guess_mean,
    starting_guess_random,
)
from app.core.processing import build_problem
from app.models.config import SolverConfig
from app.models.pixel_grid import InpaintingMask
from app.models.problem import ProblemData


def make_mask(shape, pixels) -> InpaintingMask:
    unknown = np.zeros(shape, dtype=bool)
    for pixel in pixels:
        unknown[pixel] = True
    return InpaintingMask(unknown)


def random_instance(shape=(8, 8), order=2, pixels=((3, 3), (4, 5)), epsilon=None, seed=0):
    image = np.random.default_rng(seed).uniform(0.0, 255.0, shape)
    mask = make_mask(shape, pixels)
    return image, mask, build_problem(image, mask, order, epsilon)


class TestProxFStar:
    def test_examples(self):
        y = np.array([[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]])
        np.testing.assert_allclose(prox_f_star(y), [[0.6, 0.8], [0.3, 0.4], [0.0, 0.0]])

    def test_unit_ball_and_idempotence(self):
        y = np.random.default_rng(0).normal(0.0, 3.0, size=(500, 2))
        projected = prox_f_star(y)
        assert np.all(np.linalg.norm(projected, axis=1) <= 1.0 + 1e-15)
        np.testing.assert_array_equal(prox_f_star(projected), projected)

    def test_blocks_on_the_sphere_are_fixed(self):
        y = np.random.default_rng(2).normal(size=(2000, 3))
        y /= np.linalg.norm(y, axis=1, keepdims=True)
        np.testing.assert_array_equal(prox_f_star(y), y)
        np.testing.assert_array_equal(prox_f_star(1.5 * y), prox_f_star(prox_f_star(1.5 * y)))

    def test_step_independence(self):
        y = np.random.default_rng(1).normal(0.0, 3.0, size=(50, 3))
        reference = prox_f_star(y, 1.0)
        for step in (0.1, 10.0):
            assert np.array_equal(prox_f_star(y, step), reference), f"prox differs for step {step}"


class TestProxGExact:
    @pytest.fixture
    def instance(self):
        _, _, setup = random_instance(order=3, pixels=((2, 2), (3, 5), (5, 4)), seed=2)
        f = np.random.default_rng(3).uniform(0.0, 255.0, setup.data.coefficient_count)
        return setup.data, f

    def test_feasibility(self, instance):
        data, f = instance
        p = prox_g_exact(data, f)
        misfit = np.linalg.norm(data.collocation @ p - data.rhs)
        assert misfit <= 1e-10 * np.linalg.norm(data.rhs), f"Constraint misfit {misfit}"

    def test_minimum_norm_correction(self, instance):
        data, f = instance
        B = data.collocation.toarray()
        correction = np.linalg.lstsq(B, data.rhs - B @ f, rcond=None)[0]
        np.testing.assert_allclose(prox_g_exact(data, f), f + correction, rtol=1e-9, atol=1e-8)

    def test_projection_optimality(self, instance):
        data, f = instance
        p = prox_g_exact(data, f)
        basis = null_space(data.collocation.toarray())
        assert basis.shape[1] > 0
        distance = np.linalg.norm(p - f)
        rng = np.random.default_rng(4)
        for _ in range(100):
            z = p + basis @ rng.normal(0.0, 10.0, basis.shape[1])
            assert np.linalg.norm(z - f) >= distance - 1e-9

    def test_step_independence(self, instance):
        data, f = instance
        reference = prox_g_exact(data, f, 1.0)
        for step in (0.1, 10.0):
            assert np.array_equal(prox_g_exact(data, f, step), reference)


class TestProxGRelaxed:
    @pytest.fixture
    def instance(self):
        _, _, setup = random_instance(order=2, epsilon=5.0, seed=5)
        f = np.random.default_rng(6).uniform(0.0, 255.0, setup.data.coefficient_count)
        return setup.data, f

    @pytest.mark.parametrize("step", [0.01, 0.3, 2.0])
    def test_matches_dense_solve(self, instance, step):
        data, f = instance
        assert data.coefficient_count <= 200
        B = data.collocation.toarray()
        weight = step * data.epsilon / 255.0
        dense = np.linalg.solve(np.eye(B.shape[1]) + weight * B.T @ B, f + weight * B.T @ data.rhs)
        result = prox_g_relaxed(data, f, step)
        assert np.linalg.norm(result - dense) <= 1e-10 * np.linalg.norm(dense)

    def test_vanishing_weight_keeps_f(self, instance):
        data, f = instance
        np.testing.assert_allclose(prox_g_relaxed(data, f, 1.0, epsilon=1e-12), f, rtol=1e-8)

    def test_feasible_point_is_fixed(self, instance):
        data, f = instance
        feasible = prox_g_exact(data, f)
        for step in (0.1, 1.0, 10.0):
            np.testing.assert_allclose(prox_g_relaxed(data, feasible, step), feasible, rtol=1e-9, atol=1e-7)

    def test_misfit_shrinks_with_weight(self, instance):
        data, f = instance
        steps = (0.01, 0.1, 1.0, 10.0, 100.0)
        misfits = [np.linalg.norm(data.collocation @ prox_g_relaxed(data, f, step) - data.rhs) for step in steps]
        assert all(a > b for a, b in zip(misfits, misfits[1:])), f"Misfits not decreasing: {misfits}"

    @pytest.mark.parametrize("step, epsilon", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_rejects_nonpositive_parameters(self, instance, step, epsilon):
        data, f = instance
        with pytest.raises(ValueError):
            prox_g_relaxed(data, f, step, epsilon)


class TestObjective:
    def test_properties(self):
        _, _, setup = random_instance(order=3, seed=7)
        operator = setup.data.operator
        rng = np.random.default_rng(8)
        f, h = rng.uniform(0.0, 255.0, (2, setup.data.coefficient_count))
        assert objective(operator, f) >= 0.0
        assert objective(operator, np.full_like(f, 9.0)) == pytest.approx(0.0, abs=1e-9)
        assert objective(operator, 2.0 * f) == pytest.approx(2.0 * objective(operator, f), rel=1e-12)
        assert objective(operator, f + h) <= objective(operator, f) + objective(operator, h) + 1e-9

    def test_relaxed_objective_adds_data_term(self):
        _, _, setup = random_instance(order=2, epsilon=3.0, seed=9)
        data = setup.data
        f = np.random.default_rng(10).uniform(0.0, 255.0, data.coefficient_count)
        misfit = data.collocation @ f - data.rhs
        expected = objective(data.operator, f) + 0.5 * (3.0 / 255.0) * float(misfit @ misfit)
        assert full_objective(data, f) == pytest.approx(expected, rel=1e-12)

    def test_relaxed_objective_on_normalized_intensities(self):
        _, _, setup = random_instance(order=2, epsilon=40.0, seed=19)
        data = setup.data
        unit = ProblemData(
            operator=data.operator,
            collocation=data.collocation,
            rhs=data.rhs / 255.0,
            epsilon=data.epsilon,
            intensity_scale=1.0,
        )
        f = np.random.default_rng(20).uniform(0.0, 255.0, data.coefficient_count)
        assert data.data_weight == pytest.approx(40.0 / 255.0)
        assert full_objective(data, f) == pytest.approx(255.0 * full_objective(unit, f / 255.0), rel=1e-12)


class TestOperatorNorm:
    def test_zero_operator(self):
        assert estimate_operator_norm(np.zeros((5, 4))) == 0.0

    def test_diagonal(self):
        assert estimate_operator_norm(np.diag([1.0, 2.0, 3.0])) == pytest.approx(3.0, rel=1e-4)

    def test_random_matrix(self):
        matrix = np.random.default_rng(11).normal(size=(30, 20))
        exact = np.linalg.norm(matrix, 2)
        estimate = estimate_operator_norm(matrix, iterations=500)
        assert estimate <= exact * (1 + 1e-12)
        assert estimate >= 0.99 * exact, f"Estimate {estimate} vs {exact}"

    def test_gradient_operator(self):
        _, _, setup = random_instance(shape=(12, 12), order=3, pixels=((3, 3), (6, 7), (9, 4)), seed=12)
        operator = setup.data.operator
        exact = np.linalg.norm(operator.matrix.toarray(), 2)
        assert estimate_operator_norm(operator) == pytest.approx(exact, rel=1e-2)


class TestStartingGuesses:
    def test_random_start(self):
        first = starting_guess_random(100, seed=3)
        np.testing.assert_array_equal(first, starting_guess_random(100, seed=3))
        assert not np.array_equal(first, starting_guess_random(100, seed=4))
        draws = starting_guess_random(100_000, seed=0)
        assert draws.min() >= 0.0 and draws.max() <= 255.0
        assert abs(draws.mean() - 127.5) <= 1.0

    def test_mean_start_on_constant_image(self):
        image = np.full((8, 8), 61.0)
        mask = make_mask(image.shape, [(3, 3), (4, 4)])
        data = build_problem(image, mask, 3).data
        np.testing.assert_allclose(starting_guess_mean(data, image, mask), 61.0, rtol=1e-10)

    def test_mean_start_is_feasible(self):
        image, mask, setup = random_instance(order=3, seed=13)
        f0 = starting_guess_mean(setup.data, image, mask)
        misfit = np.linalg.norm(setup.data.collocation @ f0 - setup.data.rhs)
        assert misfit <= 1e-10 * np.linalg.norm(setup.data.rhs)

    def test_relaxed_mean_start_with_tiny_epsilon(self):
        image, mask, setup = random_instance(order=2, epsilon=1e-12, seed=14)
        f0 = starting_guess_mean(setup.data, image, mask)
        np.testing.assert_allclose(f0, image[mask.known].mean(), rtol=1e-8)


class TestSolve:
    def test_constant_image(self):
        image = np.full((10, 10), 150.0)
        mask = make_mask(image.shape, [(4, 4), (4, 5), (5, 5)])
        data = build_problem(image, mask, 2).data
        f, diagnostics = solve(data, SolverConfig(max_iterations=50), starting_guess_mean(data, image, mask))
        assert diagnostics.converged
        np.testing.assert_allclose(f, 150.0, rtol=1e-10)
        assert diagnostics.objective == pytest.approx(0.0, abs=1e-8)

    def test_dual_iterates_stay_in_unit_balls(self):
        image, mask, setup = random_instance(order=3, seed=15)
        largest: list[float] = []
        solve(
            setup.data,
            SolverConfig(max_iterations=60),
            starting_guess_random(setup.data.coefficient_count, 1),
            callback=lambda state: largest.append(float(np.linalg.norm(state.y, axis=1).max())),
        )
        assert len(largest) == 60
        assert max(largest) <= 1.0 + 1e-12

    def test_exact_solution_interpolates_known_pixels(self):
        image, mask, setup = random_instance(shape=(12, 12), order=3, pixels=((5, 5), (5, 6), (6, 6)), seed=16)
        data = setup.data
        f, _ = solve(data, SolverConfig(max_iterations=200), starting_guess_mean(data, image, mask))
        assert np.linalg.norm(data.collocation @ f - data.rhs) <= 1e-8 * np.linalg.norm(data.rhs)
        rendered = render(setup.grid, f, setup.pixels)
        np.testing.assert_allclose(rendered[mask.known], image[mask.known], atol=1e-6)

    def test_not_converged_warns_and_returns_best(self, caplog):
        image, mask, setup = random_instance(order=2, seed=17)
        data = setup.data
        start = starting_guess_random(data.coefficient_count, 2)
        with caplog.at_level(logging.WARNING, logger="spline_inpainting"):
            _, diagnostics = solve(data, SolverConfig(max_iterations=2), start)
        assert not diagnostics.converged
        assert diagnostics.iterations == 2
        assert any("without reaching" in record.getMessage() for record in caplog.records)

    def test_best_iterate_is_returned(self):
        image, mask, setup = random_instance(order=3, seed=18)
        data = setup.data
        config = SolverConfig(max_iterations=30, tolerance=1e-15)
        _, diagnostics = solve(data, config, starting_guess_random(data.coefficient_count, 3))
        assert not diagnostics.converged
        assert diagnostics.objective == pytest.approx(min(diagnostics.objective_history), rel=1e-9)
        best = diagnostics.best_objective_history
        assert np.all(np.diff(best) <= 0)

    def test_objective_decreases_over_the_run(self):
        image, mask, setup = random_instance(shape=(12, 12), order=2, pixels=((4, 4), (4, 5), (7, 7)), seed=19)
        data = setup.data
        _, diagnostics = solve(data, SolverConfig(max_iterations=400), starting_guess_random(data.coefficient_count, 4))
        history = diagnostics.objective_history
        assert min(history[-20:]) < history[0], "No progress over the run"

    def test_empty_region_is_solved_directly(self):
        image = np.random.default_rng(20).uniform(0.0, 255.0, (8, 8))
        mask = InpaintingMask.empty(image.shape)
        data = build_problem(image, mask, 2).data
        f, diagnostics = solve(data, SolverConfig(), np.zeros(data.coefficient_count))
        assert diagnostics.converged and diagnostics.iterations == 0
        assert np.linalg.norm(data.collocation @ f - data.rhs) <= 1e-9 * np.linalg.norm(data.rhs)


ORACLE_CASES = [
    ((8, 8), 2, ((1, 1), (4, 4))),
    ((8, 8), 3, ((3, 3), (3, 4), (6, 2))),
    ((12, 12), 2, ((1, 5), (5, 5), (5, 6), (10, 10))),
    ((12, 12), 3, ((2, 9), (6, 6), (7, 6), (7, 7), (10, 1))),
    ((8, 8), 2, ((6, 6),)),
]


@pytest.mark.parametrize("shape, order, pixels", ORACLE_CASES)
def test_matches_subgradient_reference(shape, order, pixels):
    image, mask, setup = random_instance(shape=shape, order=order, pixels=pixels, seed=sum(shape) + order)
    data = setup.data
    assert data.coefficient_count <= 200

    start = starting_guess_mean(data, image, mask)
    f, diagnostics = solve(data, SolverConfig(max_iterations=20_000, tolerance=1e-12), start)
    _, reference = solve_subgradient(data, start, iterations=100_000)

    value = full_objective(data, f)
    assert abs(value - reference) <= 1e-3 * max(reference, 1.0), (
        f"Primal-dual objective {value:.6f} vs subgradient reference {reference:.6f}"
    )
