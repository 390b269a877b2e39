import numpy as np

from app.core.errors import MaskError
from app.core.optimizer import prox_f_star
from app.models.config import SolverConfig, StartStrategy
from app.models.pixel_grid import InpaintingMask
from app.models.problem import SolverDiagnostics
from logs.logging_config import logger


def pixel_gradient(image: np.ndarray) -> np.ndarray:
    """
    Forward differences along every axis with replicate boundary.

    Returns:
        Array of shape ``image.shape + (image.ndim,)``; the component along axis j is 0 in the
        last slice of that axis.
    """
    u = np.asarray(image, dtype=float)
    return np.stack([np.diff(u, axis=j, append=np.take(u, [-1], axis=j)) for j in range(u.ndim)], axis=-1)


def pixel_divergence(field: np.ndarray) -> np.ndarray:
    """Discrete divergence, the negative adjoint of ``pixel_gradient``."""
    dim = field.ndim - 1
    divergence = np.zeros(field.shape[:-1])
    for j in range(dim):
        component = np.array(field[..., j], dtype=float)
        last = [slice(None)] * dim
        last[j] = slice(-1, None)
        component[tuple(last)] = 0.0
        divergence += np.diff(component, axis=j, prepend=0.0)
    return divergence


def tv_objective(image: np.ndarray) -> float:
    """Isotropic total variation: sum over pixels of the Euclidean norm of the forward gradient."""
    return float(np.linalg.norm(pixel_gradient(image), axis=-1).sum())


def starting_image(
    image: np.ndarray,
    mask: InpaintingMask,
    start: StartStrategy,
    seed: int = 0,
    intensity_range: tuple[float, float] = (0.0, 255.0),
) -> np.ndarray:
    """Known pixels from ``image``; unknown pixels set to the mean known value or drawn uniformly."""
    u = np.array(image, dtype=float)
    if start is StartStrategy.MEAN:
        u[mask.unknown] = u[mask.known].mean()
    else:
        u[mask.unknown] = np.random.default_rng(seed).uniform(*intensity_range, size=mask.unknown_count)
    return u


def solve_pixel_tv(
    image: np.ndarray,
    mask: InpaintingMask,
    config: SolverConfig,
    start: StartStrategy = StartStrategy.MEAN,
    seed: int = 0,
) -> tuple[np.ndarray, SolverDiagnostics]:
    """
    Standard TV inpainting on the pixel values.

    Minimizes the isotropic TV subject to u = image on the known pixels with the same primal-dual
    iteration as the spline solver. K is the forward-difference gradient with ||K||^2 <= 4d; the
    G-prox overwrites the known pixels.

    Returns:
        The best iterate by objective (the start included) and diagnostics. Known pixels are
        copied from the input.

    Raises:
        MaskError: For an empty mask or a mask of the wrong shape.
    """
    mask.check_matches(image)
    if mask.is_empty:
        raise MaskError("Pixel TV inpainting needs at least one unknown pixel")

    data = np.asarray(image, dtype=float)
    known = mask.known
    operator_norm = config.operator_norm if config.operator_norm is not None else float(np.sqrt(4.0 * data.ndim))
    tau, sigma = config.steps(operator_norm)

    u = starting_image(data, mask, start, seed)
    u_bar = u.copy()
    p = np.zeros(data.shape + (data.ndim,))
    best_u, best_value = u.copy(), tv_objective(u)
    objective_history: list[float] = []
    residual_history: list[float] = []
    converged = False
    iteration = 0

    logger.debug(
        "Pixel TV solve: %s image, %d unknown pixels, start=%s, tau=%.4g, sigma=%.4g",
        data.shape,
        mask.unknown_count,
        start.value,
        tau,
        sigma,
    )
    for k in range(config.max_iterations):
        p = prox_f_star(p + sigma * pixel_gradient(u_bar), sigma)
        u_new = u + tau * pixel_divergence(p)
        u_new[known] = data[known]
        u_bar = u_new + config.theta * (u_new - u)

        residual = float(np.linalg.norm(u_new - u) / max(float(np.linalg.norm(u)), 1e-300))
        u = u_new
        iteration = k + 1
        value = tv_objective(u)
        objective_history.append(value)
        residual_history.append(residual)
        if value < best_value:
            best_value, best_u = value, u.copy()
        if k % config.log_every == 0:
            logger.debug("Pixel TV iteration %d: objective %.6g, residual %.3e", k, value, residual)
        if residual < config.tolerance:
            converged = True
            break

    if not converged:
        logger.warning(
            "Pixel TV solver stopped after %d iterations without reaching residual %.1e (last %.3e)",
            iteration,
            config.tolerance,
            residual_history[-1],
        )
    best_u[known] = data[known]

    diagnostics = SolverDiagnostics(
        iterations=iteration,
        converged=converged,
        objective=tv_objective(best_u),
        residual=residual_history[-1],
        operator_norm=operator_norm,
        tau=tau,
        sigma=sigma,
        objective_history=objective_history,
        residual_history=residual_history,
    )
    logger.info("Pixel TV finished: %d iterations, converged=%s, objective %.6g", iteration, converged, best_value)
    return best_u, diagnostics


def solve_pixel_tv_subgradient(
    image: np.ndarray,
    mask: InpaintingMask,
    iterations: int = 100_000,
    initial_step: float | None = None,
    stages: int = 5,
) -> tuple[np.ndarray, float]:
    """Reference solver for small images: staged projected subgradient descent from the mean start."""
    data = np.asarray(image, dtype=float)
    known = mask.known
    step = initial_step if initial_step is not None else max(1.0, 0.1 * float(np.ptp(data[known])))
    best_u = starting_image(data, mask, StartStrategy.MEAN)
    best_value = np.inf
    per_stage = max(1, iterations // stages)

    for stage in range(stages):
        u = best_u.copy()
        for k in range(per_stage):
            gradient = pixel_gradient(u)
            norms = np.linalg.norm(gradient, axis=-1, keepdims=True)
            value = float(norms.sum())
            if value < best_value:
                best_value, best_u = value, u.copy()
            directions = np.divide(gradient, norms, out=np.zeros_like(gradient), where=norms > 0)
            subgradient = -pixel_divergence(directions)
            subgradient[known] = 0.0
            size = float(np.linalg.norm(subgradient))
            if size == 0.0:
                break
            u = u - (step / np.sqrt(k + 1.0)) * subgradient / size
        step *= 0.25

    logger.debug("Pixel TV subgradient reference: best objective %.8g", best_value)
    return best_u, best_value
