from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.core.corpus import image_label, load_image
from app.core.errors import InpaintingError
from app.core.file_utils import append_csv_rows
from app.core.imaging import add_noise, make_mask, snr
from app.core.processing import BASELINE_METHOD, inpaint_baseline, inpaint_image, spline_method
from app.models.config import CSV_HEADER, ExperimentConfig, MaskSpec, NoiseSpec, ResultRow, StartStrategy
from app.models.pixel_grid import InpaintingMask, clear_border
from logs.logging_config import logger


@dataclass(frozen=True)
class TrialTask:
    """One image x mask x trial cell of a sweep; ``seed`` drives mask, noise and random starts."""

    source: str
    mask: MaskSpec
    noise: NoiseSpec | None
    trial: int
    seed: int
    config: ExperimentConfig


@dataclass
class BenchmarkSummary:
    rows: list[ResultRow]
    mean_snr: dict[str, float]
    failures: int

    def lines(self) -> list[str]:
        width = max((len(key) for key in self.mean_snr), default=0)
        return [f"{key:{width}s}  mean SNR {value:8.3f} dB" for key, value in self.mean_snr.items()]


def plan_trials(config: ExperimentConfig) -> list[TrialTask]:
    """Trials in deterministic order: image, then mask, then trial index."""
    return [
        TrialTask(
            source=source,
            mask=mask,
            noise=config.noise,
            trial=trial,
            seed=config.seed_base + trial,
            config=config,
        )
        for source in config.images
        for mask in config.masks
        for trial in range(config.trials)
    ]


def _methods(config: ExperimentConfig) -> list[tuple[str, int | None, StartStrategy, float | None]]:
    methods: list[tuple[str, int | None, StartStrategy, float | None]] = []
    for order in config.orders:
        for start in config.starts:
            for epsilon in config.epsilons or [None]:
                methods.append((spline_method(order), order, start, epsilon))
    if config.baseline:
        for start in [config.baseline_start] if config.baseline_start else config.starts:
            methods.append((BASELINE_METHOD, None, start, None))
    return methods


def _failed_rows(task: TrialTask, label: str, reason: Exception) -> list[ResultRow]:
    logger.error("Trial %d on %s (%s mask) failed: %s", task.trial, label, task.mask.kind, reason)
    return [
        ResultRow(
            image=label,
            method=method,
            mask_kind=task.mask.kind,
            mask_param=task.mask.parameter,
            start=start.value,
            epsilon=epsilon,
        )
        for method, _, start, epsilon in _methods(task.config)
    ]


def run_trial(task: TrialTask) -> list[ResultRow]:
    """
    Solves one trial with every configured method.

    A failure to build the trial (image or mask) yields one NaN row per method; a failing method
    yields a NaN row for that method only.
    """
    config = task.config
    label = image_label(task.source)
    try:
        reference = load_image(task.source, config.image_size)
        mask = make_mask(task.mask.with_seed(task.seed), reference.shape)
        observed = reference
        if task.noise is not None:
            observed, implied = add_noise(reference, task.noise.with_seed(task.seed))
            if task.noise.salt_pepper > 0:
                mask = InpaintingMask(mask.unknown | clear_border(implied))
    except (InpaintingError, RuntimeError, KeyError) as e:
        return _failed_rows(task, label, e)

    rows: list[ResultRow] = []
    for method, order, start, epsilon in _methods(config):
        row = ResultRow(
            image=label,
            method=method,
            mask_kind=task.mask.kind,
            mask_param=task.mask.parameter,
            start=start.value,
            epsilon=epsilon,
        )
        try:
            if order is None:
                result = inpaint_baseline(observed, mask, config.solver, start, task.seed)
            else:
                result = inpaint_image(observed, mask, order, config.solver, start, task.seed, epsilon)
        except (InpaintingError, RuntimeError) as e:
            logger.error("Trial %d, %s on %s failed: %s", task.trial, method, label, e)
            rows.append(row)
            continue
        rows.append(
            row.model_copy(
                update={
                    "iters": result.diagnostics.iterations,
                    "snr_db": snr(reference, result.image),
                    "wall_ms": result.wall_ms,
                }
            )
        )
    logger.debug("Trial %d on %s finished with %d rows", task.trial, label, len(rows))
    return rows


def summarize(rows: list[ResultRow]) -> dict[str, float]:
    """Mean SNR per method, start strategy and relaxation parameter; failed rows are skipped."""
    groups: dict[str, list[float]] = defaultdict(list)
    for row in rows:
        key = f"{row.method} start={row.start}" + ("" if row.epsilon is None else f" eps={row.epsilon:g}")
        if not np.isnan(row.snr_db):
            groups[key].append(row.snr_db)
        else:
            groups.setdefault(key, [])
    return {key: float(np.mean(values)) if values else float("nan") for key, values in groups.items()}


def run_benchmark(config: ExperimentConfig, csv_path: Path | None = None) -> BenchmarkSummary:
    """
    Runs every trial of ``config``, up to ``config.jobs`` at a time, and appends the rows to
    ``csv_path`` in trial order.
    """
    tasks = plan_trials(config)
    logger.info("Benchmark: %d trials on %d worker(s)", len(tasks), config.jobs)
    if config.jobs == 1:
        per_trial = [run_trial(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            per_trial = list(pool.map(run_trial, tasks))

    rows = [row for trial_rows in per_trial for row in trial_rows]
    failures = sum(1 for row in rows if np.isnan(row.snr_db))
    if csv_path is not None:
        append_csv_rows(csv_path, CSV_HEADER, (row.csv_values() for row in rows))
    summary = BenchmarkSummary(rows=rows, mean_snr=summarize(rows), failures=failures)
    for line in summary.lines():
        logger.info(line)
    if failures:
        logger.warning("%d of %d benchmark rows failed", failures, len(rows))
    return summary
