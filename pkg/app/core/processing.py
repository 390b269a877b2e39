import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.core.baseline_tv import solve_pixel_tv
from app.core.collocation import assemble_collocation, build_site_sets
from app.core.errors import MaskError
from app.core.imaging import render
from app.core.optimizer import estimate_operator_norm, solve, starting_guess_mean, starting_guess_random
from app.core.quadrature import active_region, assemble_gradient_operator, build_rule
from app.core.spline_basis import build_knot_grid
from app.models.config import SolverConfig, StartStrategy
from app.models.knot_grid import TensorKnotGrid
from app.models.pixel_grid import InpaintingMask, PixelGrid, clear_border
from app.models.problem import ProblemData
from app.models.result import InpaintingResult
from app.models.site_set import SiteSet
from logs.logging_config import logger

BASELINE_METHOD = "baseline-tv"


def spline_method(orders: int | Sequence[int]) -> str:
    if isinstance(orders, int):
        return f"spline-order-{orders}"
    distinct = sorted(set(orders))
    return f"spline-order-{distinct[0]}" if len(distinct) == 1 else "spline-order-" + "x".join(map(str, orders))


@dataclass(eq=False)
class SplineSetup:
    pixels: PixelGrid
    grid: TensorKnotGrid
    sites: SiteSet
    data: ProblemData


def build_problem(
    image: np.ndarray,
    mask: InpaintingMask,
    orders: int | Sequence[int],
    epsilon: float | None = None,
    quadrature_points: int | Sequence[int] | None = None,
) -> SplineSetup:
    """Knot grid, sites, active region, quadrature and operators for one image and mask."""
    mask.check_matches(image)
    pixels = PixelGrid.for_image(image)
    grid = build_knot_grid(pixels, orders)
    sites = build_site_sets(grid, pixels, mask)
    region = active_region(grid, sites)
    rule = build_rule(grid, region, quadrature_points)
    data = ProblemData(
        operator=assemble_gradient_operator(grid, rule),
        collocation=assemble_collocation(grid, sites),
        rhs=sites.constrained_values(image),
        epsilon=epsilon,
        intensity_scale=pixels.intensity_range[1] - pixels.intensity_range[0],
    )
    return SplineSetup(pixels=pixels, grid=grid, sites=sites, data=data)


def inpaint_image(
    image: np.ndarray,
    mask: InpaintingMask,
    orders: int | Sequence[int],
    config: SolverConfig,
    start: StartStrategy = StartStrategy.MEAN,
    seed: int = 0,
    epsilon: float | None = None,
    quadrature_points: int | Sequence[int] | None = None,
) -> InpaintingResult:
    """
    TV spline inpainting of ``image`` on the unknown pixels of ``mask``.

    Args:
        image: Pixel values, real-valued on [0, 255].
        mask: Inpainting region; must match the image shape.
        orders: Spline order per axis or one order for all axes.
        config: Solver parameters.
        start: Starting strategy for the coefficients.
        seed: Seed of the random starting guess.
        epsilon: Relaxation parameter; None solves the exact interpolation model.
        quadrature_points: Gauss points per axis and cell; defaults to the orders.

    Returns:
        The rendered reconstruction with coefficients and diagnostics.
    """
    started = time.perf_counter()
    setup = build_problem(image, mask, orders, epsilon, quadrature_points)
    data = setup.data

    operator_norm = (
        config.operator_norm
        if config.operator_norm is not None
        else estimate_operator_norm(data.operator, config.norm_iterations, config.norm_tolerance, config.seed)
    )
    config = config.model_copy(update={"operator_norm": operator_norm})
    tau, _ = config.steps(operator_norm)

    if start is StartStrategy.MEAN:
        f0 = starting_guess_mean(data, image, mask, tau)
    else:
        f0 = starting_guess_random(data.coefficient_count, seed, setup.pixels.intensity_range)

    coefficients, diagnostics = solve(data, config, f0)
    reconstruction = render(setup.grid, coefficients, setup.pixels)
    wall_ms = (time.perf_counter() - started) * 1000.0
    logger.info(
        "Spline inpainting (orders %s, %s start, epsilon=%s) finished in %.1f ms",
        setup.grid.orders,
        start.value,
        epsilon,
        wall_ms,
    )
    return InpaintingResult(
        image=reconstruction,
        coefficients=coefficients,
        diagnostics=diagnostics,
        method=spline_method(setup.grid.orders),
        start=start,
        epsilon=epsilon,
        orders=setup.grid.orders,
        unknown_pixels=mask.unknown_count,
        wall_ms=wall_ms,
    )


def inpaint_baseline(
    image: np.ndarray,
    mask: InpaintingMask,
    config: SolverConfig,
    start: StartStrategy = StartStrategy.MEAN,
    seed: int = 0,
) -> InpaintingResult:
    started = time.perf_counter()
    reconstruction, diagnostics = solve_pixel_tv(image, mask, config, start, seed)
    return InpaintingResult(
        image=reconstruction,
        coefficients=None,
        diagnostics=diagnostics,
        method=BASELINE_METHOD,
        start=start,
        unknown_pixels=mask.unknown_count,
        wall_ms=(time.perf_counter() - started) * 1000.0,
    )


def salt_pepper_mask(noisy: np.ndarray, implied: np.ndarray | None = None) -> InpaintingMask:
    """
    Inpainting region of a salt-and-pepper corrupted image: every pixel at 0 or 255.

    Such pixels on the outer ring stay known, since the region may not touch the border.
    """
    noisy = np.asarray(noisy, dtype=float)
    if implied is None:
        implied = (noisy == 0.0) | (noisy == 255.0)
    cleared = clear_border(implied)
    kept = int(implied.sum() - cleared.sum())
    if kept:
        logger.info("%d salt-and-pepper pixels on the image border are kept as known data", kept)
    if cleared[tuple(slice(1, -1) for _ in noisy.shape)].all():
        raise MaskError("Every interior pixel is at the minimal or maximal value; nothing is left to denoise with")
    return InpaintingMask(cleared)


def denoise_image(
    noisy: np.ndarray,
    orders: int | Sequence[int],
    epsilon: float,
    config: SolverConfig,
    start: StartStrategy = StartStrategy.MEAN,
    seed: int = 0,
    quadrature_points: int | Sequence[int] | None = None,
) -> InpaintingResult:
    """
    Reconstruction of a noisy image with the relaxed model: pixels at the extreme values are
    treated as unknown, all others enter through the quadratic data term, weighted by ``epsilon``
    on intensities normalized to [0, 1].
    """
    mask = salt_pepper_mask(noisy)
    logger.debug("Denoising with epsilon=%g: %d pixels treated as unknown", epsilon, mask.unknown_count)
    return inpaint_image(noisy, mask, orders, config, start, seed, epsilon, quadrature_points)
