from dataclasses import dataclass
from math import isfinite

import numpy as np

from app.models.config import StartStrategy
from app.models.problem import SolverDiagnostics


@dataclass
class InpaintingResult:
    """
    Output of one reconstruction.

    Attributes:
        image: The reconstruction sampled at the pixel centers (unclamped).
        coefficients: Spline coefficients in C order; None for the pixel baseline.
        diagnostics: Iteration diagnostics of the solver.
        method: ``spline-order-<n>`` or ``baseline-tv``.
        start: Starting strategy used.
        epsilon: Relaxation parameter, None for exact interpolation.
        wall_ms: Wall time of the whole pipeline in milliseconds.
    """

    image: np.ndarray
    coefficients: np.ndarray | None
    diagnostics: SolverDiagnostics
    method: str
    start: StartStrategy
    epsilon: float | None = None
    orders: tuple[int, ...] | None = None
    unknown_pixels: int = 0
    wall_ms: float = 0.0

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged

    def metadata(self, snr_db: float | None = None) -> dict:
        """Sidecar record: order, iterations, residual, objective and, with ground truth, SNR."""
        record: dict = {
            "method": self.method,
            "order": list(self.orders) if self.orders else None,
            "start": self.start.value,
            "epsilon": self.epsilon,
            "unknown_pixels": self.unknown_pixels,
            "wall_ms": round(self.wall_ms, 3),
            **self.diagnostics.summary(),
        }
        if snr_db is not None:
            # JSON has no infinity
            record["snr_db"] = snr_db if isfinite(snr_db) else str(snr_db)
        return record
