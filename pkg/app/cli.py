import argparse
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import ValidationError

from app.core.benchmark import run_benchmark
from app.core.corpus import BUILTIN_PREFIX, CARTOON_IMAGES, NATURAL_IMAGES, image_label, load_image
from app.core.errors import InpaintingError, MaskError
from app.core.file_utils import append_csv_rows, read_key_value_file, save_json
from app.core.imaging import add_noise, make_mask, read_mask, snr, write_image, write_mask
from app.core.processing import denoise_image, inpaint_image
from app.models.config import ExperimentConfig, MaskSpec, NoiseSpec, SolverConfig, StartStrategy
from app.models.pixel_grid import InpaintingMask
from app.models.result import InpaintingResult
from logs.logging_config import configure_loggers, logger

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NOT_CONVERGED = 4

OUTPUT_ENV = "SPLINE_INPAINT_OUT"
PROFILE_ORDERS: dict[str, int] = {"cartoon": 2, "natural": 3}
DEFAULT_ORDER = 2
SWEEP_HEADER: tuple[str, ...] = ("epsilon", "snr_db", "iters", "objective", "residual", "converged")


def _default_out() -> Path:
    return Path(os.getenv(OUTPUT_ENV, "results"))


def _add_common(parser: argparse.ArgumentParser, multiple: bool = False) -> None:
    many = {"nargs": "+"} if multiple else {}
    parser.add_argument("--config", type=Path, help="key = value file with defaults for any flag")
    parser.add_argument("--order", type=int, help="spline order per axis (overrides --profile)", **many)
    parser.add_argument("--profile", choices=sorted(PROFILE_ORDERS), help="cartoon: order 2, natural: order 3")
    parser.add_argument("--iters", type=int, default=100, help="maximum primal-dual iterations")
    parser.add_argument("--tol", type=float, default=1e-6, help="fixed-point residual tolerance")
    parser.add_argument(
        "--start", type=StartStrategy, choices=list(StartStrategy), default=StartStrategy.MEAN, **many
    )
    parser.add_argument("--quad-points", type=int, help="Gauss points per axis and cell (default: the order)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--size", type=int, default=128, help="side length of builtin images")
    parser.add_argument("--out", type=Path, default=_default_out(), help=f"output directory (env {OUTPUT_ENV})")
    parser.add_argument("--verbose", action="store_true", help="DEBUG output on stdout")


def _add_mask_flags(parser: argparse.ArgumentParser, multiple: bool = False) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--random", type=float, nargs="+" if multiple else None, help="fraction of unknown pixels")
    group.add_argument("--scratches", type=int, help="number of scratches")
    group.add_argument("--text", help="text to rasterize as the mask")
    group.add_argument("--bitmap", type=Path, help="mask image to load")
    parser.add_argument("--width", type=int, default=4, help="scratch width / text stroke in pixels")
    parser.add_argument("--font-scale", type=float, default=1.0)


def _add_noise_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gaussian", type=float, default=0.0, help="Gaussian noise sigma in intensity units")
    parser.add_argument("--salt-pepper", type=float, default=0.0, help="fraction of salt-and-pepper pixels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spline-inpaint", description="Total variation inpainting in tensor product B-spline spaces"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    inpaint = commands.add_parser("inpaint", help="reconstruct the unknown pixels of an image")
    inpaint.add_argument("image", help=f"image file (.pgm/.png) or {BUILTIN_PREFIX}<name>")
    inpaint.add_argument("--mask", type=Path, help="mask file (.pgm/.png, nonzero = unknown, or run-length .txt)")
    inpaint.add_argument("--reference", help="ground truth for the SNR (defaults to the image for generated masks)")
    inpaint.add_argument("--epsilon", type=float, help="solve the relaxed model with this data weight")
    inpaint.add_argument("--format", choices=("png", "pgm"), default="png")
    _add_common(inpaint)
    _add_mask_flags(inpaint)

    denoise = commands.add_parser("denoise", help="relaxed reconstruction of a salt-and-pepper corrupted image")
    denoise.add_argument("image", help=f"image file or {BUILTIN_PREFIX}<name>")
    denoise.add_argument("--epsilon", type=float, nargs="+", default=[50.0], help="one value, or several to sweep")
    denoise.add_argument("--reference", help="ground truth for the SNR")
    denoise.add_argument("--format", choices=("png", "pgm"), default="png")
    _add_common(denoise)
    _add_noise_flags(denoise)

    benchmark = commands.add_parser("benchmark", help="sweep methods over images, masks and trials")
    benchmark.add_argument(
        "--images",
        nargs="+",
        default=[BUILTIN_PREFIX + name for name in CARTOON_IMAGES + NATURAL_IMAGES],
        help="image files or builtin names",
    )
    benchmark.add_argument("--trials", type=int, default=1)
    benchmark.add_argument("--jobs", type=int, default=1)
    benchmark.add_argument("--epsilon", type=float, nargs="+", default=[])
    benchmark.add_argument("--no-baseline", action="store_true", help="skip the pixel TV baseline")
    benchmark.add_argument("--csv", default="benchmark.csv", help="CSV file name inside --out")
    _add_common(benchmark, multiple=True)
    _add_mask_flags(benchmark, multiple=True)
    _add_noise_flags(benchmark)

    mask = commands.add_parser("mask", help="write a synthetic mask")
    mask.add_argument("--shape", type=int, nargs=2, metavar=("ROWS", "COLS"), default=(128, 128))
    mask.add_argument("--like", help="take the shape from this image")
    mask.add_argument("--output", type=Path, help="mask file (default: <out>/mask_<kind>_<seed>.png)")
    mask.add_argument("--seed", type=int, default=0)
    mask.add_argument("--size", type=int, default=128, help="side length of builtin images")
    mask.add_argument("--out", type=Path, default=_default_out())
    mask.add_argument("--config", type=Path)
    mask.add_argument("--verbose", action="store_true")
    _add_mask_flags(mask)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.ArgumentParser:
    """Turns the settings of ``--config FILE`` into defaults of the chosen subcommand."""
    pre_parser = argparse.ArgumentParser(add_help=False)
    pre_parser.add_argument("command", nargs="?")
    pre_parser.add_argument("--config", type=Path)
    known, _ = pre_parser.parse_known_args(argv)
    if known.config is None or known.command is None:
        return parser

    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command_parser: argparse.ArgumentParser | None = subparsers.choices.get(known.command)
    if command_parser is None:
        return parser

    actions = {action.dest: action for action in command_parser._actions}
    defaults: dict = {}
    for key, value in read_key_value_file(known.config).items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            command_parser.error(f"unknown setting '{key}' in {known.config}")
        convert = action.type or (lambda v: v)
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*") or (isinstance(action.nargs, int) and action.nargs > 1):
            defaults[key] = [convert(v) for v in value.replace(",", " ").split()]
        else:
            defaults[key] = convert(value)
    command_parser.set_defaults(**defaults)
    logger.debug("Applied %d defaults from %s", len(defaults), known.config)
    return parser


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(max_iterations=args.iters, tolerance=args.tol, seed=args.seed)


def _order(args: argparse.Namespace) -> int:
    if args.order is not None:
        return args.order
    return PROFILE_ORDERS.get(args.profile, DEFAULT_ORDER)


def _mask_specs(args: argparse.Namespace, seed: int) -> list[MaskSpec]:
    if args.random is not None:
        fractions = args.random if isinstance(args.random, list) else [args.random]
        return [MaskSpec(kind="random", fraction=fraction, seed=seed) for fraction in fractions]
    if args.scratches is not None:
        return [MaskSpec(kind="scratches", count=args.scratches, width=args.width, seed=seed)]
    if args.text is not None:
        return [MaskSpec(kind="text", text=args.text, width=args.width, font_scale=args.font_scale, seed=seed)]
    if args.bitmap is not None:
        return [MaskSpec(kind="bitmap", bitmap=args.bitmap, seed=seed)]
    return []


def _write_result(
    result: InpaintingResult, out_dir: Path, stem: str, image_format: str, extra: dict, snr_db: float | None
) -> Path:
    image_path = write_image(out_dir / f"{stem}.{image_format}", result.image)
    save_json({**extra, **result.metadata(snr_db), "output": str(image_path)}, out_dir / f"{stem}.json")
    logger.info("Wrote %s", image_path)
    return image_path


def cmd_inpaint(args: argparse.Namespace) -> int:
    image = load_image(args.image, args.size)
    reference: np.ndarray | None = load_image(args.reference, args.size) if args.reference else None

    specs = _mask_specs(args, args.seed)
    if args.mask is not None:
        mask = read_mask(args.mask)
    elif specs:
        mask = make_mask(specs[0], image.shape)
        if reference is None:
            reference = image
    else:
        raise MaskError("Give --mask FILE or one of --random, --scratches, --text, --bitmap")
    mask.check_matches(image)
    if reference is not None and reference.shape != image.shape:
        raise MaskError(f"Reference shape {reference.shape} does not match image shape {image.shape}")
    if mask.is_empty:
        raise MaskError("The mask has no unknown pixels")

    result = inpaint_image(
        image, mask, _order(args), _solver_config(args), args.start, args.seed, args.epsilon, args.quad_points
    )
    snr_db = snr(reference, result.image) if reference is not None else None
    stem = f"{image_label(args.image)}_inpainted"
    _write_result(result, args.out, stem, args.format, {"image": args.image}, snr_db)
    if snr_db is not None:
        print(f"SNR {snr_db:.3f} dB after {result.diagnostics.iterations} iterations")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_denoise(args: argparse.Namespace) -> int:
    image = load_image(args.image, args.size)
    reference: np.ndarray | None = load_image(args.reference, args.size) if args.reference else None
    noise = NoiseSpec(gaussian_sigma=args.gaussian, salt_pepper=args.salt_pepper, seed=args.seed)
    if noise.gaussian_sigma > 0 or noise.salt_pepper > 0:
        if reference is None:
            reference = image
        image, _ = add_noise(image, noise)
        write_image(args.out / f"{image_label(args.image)}_noisy.{args.format}", image)
        logger.info("Corrupted input SNR %.3f dB", snr(reference, image))

    label = image_label(args.image)
    sweep_rows: list[list[str]] = []
    all_converged = True
    for epsilon in args.epsilon:
        result = denoise_image(
            image, _order(args), epsilon, _solver_config(args), args.start, args.seed, args.quad_points
        )
        snr_db = snr(reference, result.image) if reference is not None else None
        _write_result(result, args.out, f"{label}_denoised_eps{epsilon:g}", args.format, {"image": args.image}, snr_db)
        all_converged = all_converged and result.converged
        sweep_rows.append(
            [
                f"{epsilon:g}",
                "" if snr_db is None else f"{snr_db:.4f}",
                str(result.diagnostics.iterations),
                f"{result.diagnostics.objective:.6g}",
                f"{result.diagnostics.residual:.3e}",
                str(result.converged),
            ]
        )
        print(f"epsilon {epsilon:g}: SNR {'n/a' if snr_db is None else f'{snr_db:.3f} dB'}")

    if len(args.epsilon) > 1:
        append_csv_rows(args.out / f"{label}_epsilon_sweep.csv", SWEEP_HEADER, sweep_rows)
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


def cmd_benchmark(args: argparse.Namespace) -> int:
    masks = _mask_specs(args, 0) or [MaskSpec(kind="random", fraction=0.03)]
    noise = None
    if args.gaussian > 0 or args.salt_pepper > 0:
        noise = NoiseSpec(gaussian_sigma=args.gaussian, salt_pepper=args.salt_pepper)
    orders = args.order if args.order is not None else [_order(args)]
    config = ExperimentConfig(
        images=args.images,
        masks=masks,
        orders=orders,
        starts=args.start if isinstance(args.start, list) else [args.start],
        baseline=not args.no_baseline,
        solver=_solver_config(args),
        epsilons=args.epsilon,
        noise=noise,
        trials=args.trials,
        seed_base=args.seed,
        image_size=args.size,
        output_dir=args.out,
        jobs=args.jobs,
    )
    summary = run_benchmark(config, config.output_dir / args.csv)
    for line in summary.lines():
        print(line)
    if summary.failures:
        print(f"{summary.failures} of {len(summary.rows)} rows failed")
    return EXIT_OK


def cmd_mask(args: argparse.Namespace) -> int:
    specs = _mask_specs(args, args.seed)
    if not specs:
        raise MaskError("Give one of --random, --scratches, --text, --bitmap")
    shape = load_image(args.like, args.size).shape if args.like else tuple(args.shape)
    mask: InpaintingMask = make_mask(specs[0], shape)
    output = args.output or args.out / f"mask_{specs[0].kind}_{args.seed}.png"
    write_mask(output, mask)
    print(f"Wrote {output} with {mask.unknown_count} unknown pixels")
    return EXIT_OK


COMMANDS = {"inpaint": cmd_inpaint, "denoise": cmd_denoise, "benchmark": cmd_benchmark, "mask": cmd_mask}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    args = parser.parse_args(argv)
    configure_loggers(verbose=args.verbose)

    try:
        return COMMANDS[args.command](args)
    except (InpaintingError, ValidationError, ValueError, KeyError) as e:
        logger.error("Invalid input: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, OSError) as e:
        logger.error("I/O failure: %s", e, exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
