from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from app.models.config import SolverConfig
from app.models.pixel_grid import InpaintingMask
from app.models.problem import InterpolationMode, ProblemData, SolverDiagnostics, SolverState
from app.models.quadrature import GradientOperator
from logs.logging_config import logger

BALL_TOLERANCE = 1e-15


def prox_f_star(y: np.ndarray, step: float = 1.0) -> np.ndarray:
    """
    Proximity operator of the conjugate of F = sum of Euclidean norms.

    F* is the indicator of a product of unit balls, so the prox projects every block (row of
    ``y``) onto the unit ball, whatever the step. Blocks already inside the ball are returned
    unchanged, so the operator is idempotent bit for bit.
    """
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    # a projected block can land a few ulps outside the ball
    outside = norms > 1.0 + BALL_TOLERANCE
    return np.where(outside, y / np.maximum(norms, 1.0), y)


def prox_g_exact(data: ProblemData, f: np.ndarray, step: float = 1.0) -> np.ndarray:
    """Projection onto the interpolation constraint B f = g; independent of the step."""
    return data.projection.project(f, data.rhs)


def prox_g_relaxed(data: ProblemData, f: np.ndarray, step: float, epsilon: float | None = None) -> np.ndarray:
    """
    Proximity operator of the relaxed data term with parameter ``step``.

    The relaxed model is posed on intensities normalized by ``data.intensity_scale`` (s), which in raw
    intensities gives the weight w = eps / s on (1/2) ||B f - g||^2.

    Returns:
        (I + step * w * B^T B)^{-1} (f + step * w * B^T g)
    """
    eps = data.epsilon if epsilon is None else epsilon
    if eps is None or eps <= 0 or step <= 0:
        raise ValueError(f"Relaxed prox needs positive step and epsilon, got step={step}, epsilon={eps}")
    return data.projection.relaxed(f, data.rhs, step * eps / data.intensity_scale)


def prox_g(data: ProblemData, f: np.ndarray, step: float) -> np.ndarray:
    if data.mode is InterpolationMode.EXACT:
        return prox_g_exact(data, f, step)
    return prox_g_relaxed(data, f, step)


def objective(operator: GradientOperator, f: np.ndarray) -> float:
    """Discretized total variation sum_theta w_theta ||grad s(theta)||_2 over the active region."""
    return operator.objective(f)


def full_objective(data: ProblemData, f: np.ndarray) -> float:
    """F(K f) plus, in relaxed mode, the data term (eps / 2s) ||B f - g||^2 with s the intensity scale."""
    value = objective(data.operator, f)
    if data.mode is InterpolationMode.RELAXED:
        value += 0.5 * data.data_weight * float(np.sum((data.collocation @ f - data.rhs) ** 2))
    return value


def estimate_operator_norm(
    operator: GradientOperator | spla.LinearOperator | np.ndarray,
    iterations: int = 200,
    tolerance: float = 1e-6,
    seed: int = 0,
) -> float:
    """
    Largest singular value of K by power iteration on K^T K.

    Stops after ``iterations`` steps or when the estimate changes by less than ``tolerance``
    relative to itself. Returns 0 for the zero operator.
    """
    matrix = operator.matrix if isinstance(operator, GradientOperator) else operator
    linear = spla.aslinearoperator(matrix)
    columns: int = linear.shape[1]
    if columns == 0 or linear.shape[0] == 0:
        return 0.0

    v = np.random.default_rng(seed).standard_normal(columns)
    v /= np.linalg.norm(v)
    estimate: float = 0.0
    for k in range(iterations):
        w = linear.rmatvec(linear.matvec(v))
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        previous, estimate = estimate, float(np.linalg.norm(linear.matvec(v)))
        if k > 0 and abs(estimate - previous) <= tolerance * estimate:
            break
    logger.debug("Operator norm estimate %.6g after %d power iterations", estimate, k + 1)
    return estimate


def starting_guess_random(
    size: int, seed: int, intensity_range: tuple[float, float] = (0.0, 255.0)
) -> np.ndarray:
    """Coefficients drawn i.i.d. uniformly from the intensity range, reproducible by seed."""
    low, high = intensity_range
    return np.random.default_rng(seed).uniform(low, high, size=size)


def starting_guess_mean(data: ProblemData, image: np.ndarray, mask: InpaintingMask, step: float = 1.0) -> np.ndarray:
    """
    prox_G applied to the constant coefficient vector of the mean known intensity.

    By partition of unity the constant vector renders a constant image; the prox moves it onto
    the interpolation constraint (exact mode) or toward the data (relaxed mode, parameter
    ``step``).
    """
    mask.check_matches(image)
    omega_mean = float(np.asarray(image, dtype=float)[mask.known].mean())
    logger.debug("Mean starting guess: omega_mean = %.4f", omega_mean)
    return prox_g(data, np.full(data.coefficient_count, omega_mean), step)


def _fit_without_region(data: ProblemData, start: np.ndarray) -> np.ndarray:
    if data.mode is InterpolationMode.EXACT:
        return prox_g_exact(data, start)
    # no TV term left: the minimizer is any least-squares solution of B f = g
    return spla.lsqr(data.collocation, data.rhs, atol=1e-14, btol=1e-14, x0=start)[0]


def solve(
    data: ProblemData,
    config: SolverConfig,
    start: np.ndarray,
    callback: Callable[[SolverState], None] | None = None,
) -> tuple[np.ndarray, SolverDiagnostics]:
    """
    Minimizes F(K f) + G(f) with the first-order primal-dual scheme

        y     <- prox_{sigma F*}(y + sigma K f_bar)
        f_new <- prox_{tau G}(f - tau K^T y)
        f_bar <- f_new + theta (f_new - f)

    Args:
        data: Operators and right-hand side.
        config: Iteration limits and step parameters.
        start: Initial coefficient vector.
        callback: Called with the state after every iteration.

    Returns:
        The coefficients and the iteration diagnostics. When the fixed-point residual does not
        drop below the tolerance, the best iterate by objective is returned and
        ``diagnostics.converged`` is False. In exact mode the result is projected onto the
        interpolation constraint.
    """
    operator = data.operator
    operator_norm = (
        config.operator_norm
        if config.operator_norm is not None
        else estimate_operator_norm(operator, config.norm_iterations, config.norm_tolerance, config.seed)
    )
    if operator_norm == 0.0 or operator.node_count == 0:
        logger.info("Active region is empty; fitting the data directly")
        f = _fit_without_region(data, np.asarray(start, dtype=float))
        value = full_objective(data, f)
        return f, SolverDiagnostics(0, True, value, 0.0, operator_norm, 0.0, 0.0, [value], [0.0])

    tau, sigma = config.steps(operator_norm)
    f0 = np.asarray(start, dtype=float).copy()
    state = SolverState(f=f0, y=np.zeros((operator.node_count, operator.dim)), f_bar=f0.copy())
    best_f: np.ndarray = state.f
    best_value: float = np.inf
    converged = False

    logger.debug(
        "Primal-dual solve: %d coefficients, %d nodes, mode=%s, L=%.4g, tau=%.4g, sigma=%.4g",
        data.coefficient_count,
        operator.node_count,
        data.mode.value,
        operator_norm,
        tau,
        sigma,
    )
    for k in range(config.max_iterations):
        state.y = prox_f_star(state.y + sigma * operator.apply(state.f_bar), sigma)
        f_new = prox_g(data, state.f - tau * operator.adjoint(state.y), tau)
        state.f_bar = f_new + config.theta * (f_new - state.f)

        residual = float(np.linalg.norm(f_new - state.f) / max(float(np.linalg.norm(state.f)), 1e-300))
        state.f = f_new
        state.iteration = k + 1
        value = full_objective(data, f_new)
        state.objective_history.append(value)
        state.residual_history.append(residual)
        if value < best_value:
            best_value, best_f = value, f_new.copy()
        if callback is not None:
            callback(state)
        if k % config.log_every == 0:
            logger.debug("Iteration %d: objective %.6g, residual %.3e", k, value, residual)
        if residual < config.tolerance:
            converged = True
            break

    result = state.f if converged else best_f
    if not converged:
        logger.warning(
            "Primal-dual solver stopped after %d iterations without reaching residual %.1e (last %.3e)",
            state.iteration,
            config.tolerance,
            state.residual_history[-1],
        )
    if data.mode is InterpolationMode.EXACT:
        result = prox_g_exact(data, result)

    diagnostics = SolverDiagnostics(
        iterations=state.iteration,
        converged=converged,
        objective=full_objective(data, result),
        residual=state.residual_history[-1],
        operator_norm=operator_norm,
        tau=tau,
        sigma=sigma,
        objective_history=state.objective_history,
        residual_history=state.residual_history,
    )
    logger.info(
        "Solver finished: %d iterations, converged=%s, objective %.6g",
        diagnostics.iterations,
        converged,
        diagnostics.objective,
    )
    return result, diagnostics


def solve_subgradient(
    data: ProblemData,
    start: np.ndarray,
    iterations: int = 100_000,
    initial_step: float | None = None,
    stages: int = 5,
) -> tuple[np.ndarray, float]:
    """
    Reference solver: projected subgradient descent with normalized steps ``t / sqrt(k + 1)``.

    The iteration budget is split into ``stages``; every stage restarts from the best iterate so
    far with a quarter of the previous initial step. Works on dense copies and projects with
    the dense pseudoinverse, so it shares no linear algebra with ``solve``. Meant for small
    instances.

    Returns:
        The best iterate and its objective.
    """
    K = data.operator.matrix.toarray()
    B = data.collocation.toarray()
    g = data.rhs
    dim = data.operator.dim
    exact = data.mode is InterpolationMode.EXACT
    pseudo_inverse = np.linalg.pinv(B) if exact else None

    def project(v: np.ndarray) -> np.ndarray:
        return v - pseudo_inverse @ (B @ v - g) if pseudo_inverse is not None else v

    def value_and_subgradient(v: np.ndarray) -> tuple[float, np.ndarray]:
        blocks = (K @ v).reshape(-1, dim)
        norms = np.linalg.norm(blocks, axis=1)
        directions = np.divide(blocks, norms[:, None], out=np.zeros_like(blocks), where=norms[:, None] > 0)
        value, gradient = float(norms.sum()), K.T @ directions.ravel()
        if not exact:
            misfit = B @ v - g
            value += 0.5 * data.data_weight * float(misfit @ misfit)
            gradient = gradient + data.data_weight * (B.T @ misfit)
        return value, gradient

    step = initial_step if initial_step is not None else max(1.0, 0.1 * float(np.ptp(g)) if g.size else 1.0)
    best_f = project(np.asarray(start, dtype=float).copy())
    best_value = np.inf
    per_stage = max(1, iterations // stages)
    for stage in range(stages):
        f = best_f.copy()
        for k in range(per_stage):
            value, gradient = value_and_subgradient(f)
            if value < best_value:
                best_value, best_f = value, f.copy()
            norm = float(np.linalg.norm(gradient))
            if norm == 0.0:
                break
            f = project(f - (step / np.sqrt(k + 1.0)) * gradient / norm)
        logger.debug("Subgradient stage %d: best objective %.8g", stage, best_value)
        step *= 0.25
    return best_f, best_value
