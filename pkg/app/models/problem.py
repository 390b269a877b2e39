from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.core.errors import FactorizationError
from app.models.quadrature import GradientOperator
from logs.logging_config import logger


class InterpolationMode(str, Enum):
    EXACT = "exact"
    RELAXED = "relaxed"


@dataclass(eq=False)
class ProjectionSolver:
    """
    Cached factorizations behind the proximity operators of G.

    Exact mode factors B B^T once; relaxed mode factors I + w B^T B once per weight w, which is
    lambda * eps / s for step lambda and intensity scale s.
    """

    collocation: sp.csr_matrix
    _relaxed: dict[float, spla.SuperLU] = field(default_factory=dict, init=False, repr=False)

    @cached_property
    def _gram(self) -> spla.SuperLU:
        gram = (self.collocation @ self.collocation.T).tocsc()
        return _factorize(gram, "B B^T")

    def project(self, f: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Euclidean projection of f onto {f : B f = rhs}: f - B^+ (B f - rhs)."""
        residual = self.collocation @ f - rhs
        return f - self.collocation.T @ self._gram.solve(residual)

    def relaxed(self, f: np.ndarray, rhs: np.ndarray, weight: float) -> np.ndarray:
        """Solves (I + weight B^T B) f' = f + weight B^T rhs."""
        factor = self._relaxed.get(weight)
        if factor is None:
            size = self.collocation.shape[1]
            system = sp.identity(size, format="csc") + weight * (self.collocation.T @ self.collocation).tocsc()
            factor = _factorize(system.tocsc(), f"I + {weight:g} B^T B")
            self._relaxed[weight] = factor
        return factor.solve(f + weight * (self.collocation.T @ rhs))


def _factorize(matrix: sp.csc_matrix, label: str) -> spla.SuperLU:
    logger.debug("Factorizing %s: %s, %d nonzeros", label, matrix.shape, matrix.nnz)
    try:
        return spla.splu(matrix, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as e:
        logger.error("Factorization of %s failed: %s", label, e, exc_info=True)
        raise FactorizationError(f"Factorization of {label} failed: {e}") from e


@dataclass(eq=False)
class ProblemData:
    """
    The splitting formulation min F(K f) + G(f).

    F sums Euclidean norms of the node blocks of K f. G is the indicator of B f = g in exact mode
    (``epsilon is None``). In relaxed mode the model is posed on
    intensities normalized to [0, 1], F(K f / s) + (eps / 2) ||(B f - g) / s||^2 with
    s = ``intensity_scale``. Since F is 1-homogeneous, this is s^-1 (F(K f) + (eps / 2s) ||B f - g||^2)
    in raw intensities, so the solvers work in raw units with the data weight eps / s.
    """

    operator: GradientOperator
    collocation: sp.csr_matrix
    rhs: np.ndarray
    epsilon: float | None = None
    intensity_scale: float = 255.0

    def __post_init__(self) -> None:
        if self.operator.shape[1] != self.collocation.shape[1]:
            raise ValueError(
                f"Column mismatch: K has {self.operator.shape[1]}, B has {self.collocation.shape[1]} columns"
            )
        if self.rhs.shape != (self.collocation.shape[0],):
            raise ValueError(f"Right-hand side has shape {self.rhs.shape}, expected ({self.collocation.shape[0]},)")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError(f"Relaxation parameter must be positive, got {self.epsilon}")
        if self.intensity_scale <= 0:
            raise ValueError(f"Intensity scale must be positive, got {self.intensity_scale}")

    @property
    def mode(self) -> InterpolationMode:
        return InterpolationMode.EXACT if self.epsilon is None else InterpolationMode.RELAXED

    @property
    def data_weight(self) -> float:
        """Weight of (1/2) ||B f - g||^2 in raw intensities; 0 in exact mode."""
        return 0.0 if self.epsilon is None else self.epsilon / self.intensity_scale

    @property
    def coefficient_count(self) -> int:
        return int(self.collocation.shape[1])

    @cached_property
    def projection(self) -> ProjectionSolver:
        return ProjectionSolver(self.collocation)


@dataclass(eq=False)
class SolverState:
    """Iterates of the primal-dual scheme; ``y`` holds one d-vector per quadrature node."""

    f: np.ndarray
    y: np.ndarray
    f_bar: np.ndarray
    iteration: int = 0
    objective_history: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)


@dataclass
class SolverDiagnostics:
    iterations: int
    converged: bool
    objective: float
    residual: float
    operator_norm: float
    tau: float
    sigma: float
    objective_history: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)

    @property
    def best_objective_history(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.objective_history, dtype=float))

    def summary(self) -> dict[str, float | int | bool]:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "objective": self.objective,
            "residual": self.residual,
            "operator_norm": self.operator_norm,
            "tau": self.tau,
            "sigma": self.sigma,
        }
