from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

CSV_HEADER: tuple[str, ...] = (
    "image",
    "method",
    "mask_kind",
    "mask_param",
    "start",
    "epsilon",
    "iters",
    "snr_db",
    "wall_ms",
)


class StartStrategy(str, Enum):
    RANDOM = "random"
    MEAN = "mean"


class SolverConfig(BaseModel):
    """
    Parameters of the primal-dual iteration.

    ``tau`` and ``sigma`` default to ``step_safety / L`` once the operator norm L is known.
    """

    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(100, ge=1)
    tolerance: float = Field(1e-6, gt=0)
    theta: float = Field(1.0, ge=0, le=1)
    tau: float | None = Field(None, gt=0)
    sigma: float | None = Field(None, gt=0)
    step_safety: float = Field(0.95, gt=0, lt=1)
    operator_norm: float | None = Field(None, ge=0)
    norm_iterations: int = Field(200, ge=1)
    norm_tolerance: float = Field(1e-6, gt=0)
    log_every: int = Field(10, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_step_condition(self) -> "SolverConfig":
        if self.tau is not None and self.sigma is not None and self.operator_norm:
            product = self.sigma * self.tau * self.operator_norm**2
            if product >= 1:
                raise ValueError(f"Step sizes violate sigma * tau * L^2 < 1 (got {product:.4g})")
        return self

    def steps(self, operator_norm: float) -> tuple[float, float]:
        """Primal and dual step sizes (tau, sigma) for an operator of norm ``operator_norm``."""
        if operator_norm <= 0:
            return self.tau or 1.0, self.sigma or 1.0
        default = self.step_safety / operator_norm
        tau = self.tau if self.tau is not None else default
        sigma = self.sigma if self.sigma is not None else default
        if sigma * tau * operator_norm**2 >= 1:
            raise ValueError(f"Step sizes violate sigma * tau * L^2 < 1 for L={operator_norm:.4g}")
        return tau, sigma


class MaskSpec(BaseModel):
    """
    Description of a synthetic inpainting region.

    ``random`` flags floor(fraction * #pixels) distinct interior pixels, ``scratches`` draws
    ``count`` straight segments dilated to ``width`` pixels, ``text`` rasterizes a string and
    ``bitmap`` loads a mask image. All kinds keep the outer pixel ring known.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["random", "scratches", "text", "bitmap"] = "random"
    fraction: float | None = Field(None, gt=0, lt=1)
    count: int = Field(3, ge=1)
    width: int = Field(4, ge=1)
    endpoints: list[tuple[int, int, int, int]] | None = None
    text: str | None = None
    font_scale: float = Field(1.0, gt=0)
    bitmap: Path | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _check_kind_parameters(self) -> "MaskSpec":
        if self.kind == "random" and self.fraction is None:
            raise ValueError("Random masks need a fraction in (0, 1)")
        if self.kind == "text" and not self.text:
            raise ValueError("Text masks need a non-empty text")
        if self.kind == "bitmap" and self.bitmap is None:
            raise ValueError("Bitmap masks need a bitmap path")
        if self.endpoints is not None and len(self.endpoints) != self.count:
            raise ValueError(f"Expected {self.count} scratch endpoint tuples, got {len(self.endpoints)}")
        return self

    @property
    def parameter(self) -> str:
        """Short label of the defining parameter, used in result tables."""
        if self.kind == "random":
            return f"{self.fraction:g}"
        if self.kind == "scratches":
            return f"{self.count}x{self.width}"
        if self.kind == "text":
            return self.text or ""
        return str(self.bitmap)

    def with_seed(self, seed: int) -> "MaskSpec":
        return self.model_copy(update={"seed": seed})


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    gaussian_sigma: float = Field(0.0, ge=0)
    salt_pepper: float = Field(0.0, ge=0, lt=1)
    seed: int = 0

    def with_seed(self, seed: int) -> "NoiseSpec":
        return self.model_copy(update={"seed": seed})


class ExperimentConfig(BaseModel):
    """
    A benchmark sweep: every image x mask x trial is solved by each spline order (for each start
    strategy and, when ``epsilons`` is set, each relaxation parameter) and by the pixel TV baseline.
    Trial i uses seed ``seed_base + i`` for its mask, noise and random starts.
    """

    images: list[str] = Field(min_length=1)
    masks: list[MaskSpec] = Field(min_length=1)
    orders: list[int] = Field(default_factory=lambda: [2, 3], min_length=1)
    starts: list[StartStrategy] = Field(default_factory=lambda: [StartStrategy.MEAN], min_length=1)
    baseline: bool = True
    baseline_start: StartStrategy | None = None
    solver: SolverConfig = SolverConfig()
    epsilons: list[float] = Field(default_factory=list)
    noise: NoiseSpec | None = None
    trials: int = Field(1, ge=1)
    seed_base: int = 0
    image_size: int = Field(128, ge=4)
    output_dir: Path = Path("results")
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_values(self) -> "ExperimentConfig":
        if any(order < 2 for order in self.orders):
            raise ValueError(f"Spline orders must be at least 2, got {self.orders}")
        if any(eps <= 0 for eps in self.epsilons):
            raise ValueError(f"Relaxation parameters must be positive, got {self.epsilons}")
        return self


class ResultRow(BaseModel):
    image: str
    method: str
    mask_kind: str
    mask_param: str
    start: str
    epsilon: float | None = None
    iters: int = 0
    snr_db: float = float("nan")
    wall_ms: float = 0.0

    def csv_values(self) -> list[str]:
        return [
            self.image,
            self.method,
            self.mask_kind,
            self.mask_param,
            self.start,
            "" if self.epsilon is None else f"{self.epsilon:g}",
            str(self.iters),
            f"{self.snr_db:.4f}",
            f"{self.wall_ms:.1f}",
        ]
