from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class ActiveRegion:
    """
    The union U of the supports of all free B-splines and the grid cells it consists of.

    Attributes:
        free_indices: Flat indices of the free basis functions (those owning a removed site).
        active: Boolean array of shape ``grid.cell_shape``; True for cells inside U.
        boxes: Support box ``(lower, upper)`` of every free basis function.
    """

    free_indices: np.ndarray
    active: np.ndarray
    boxes: tuple[tuple[np.ndarray, np.ndarray], ...]

    @property
    def is_empty(self) -> bool:
        return not bool(self.active.any())

    @cached_property
    def cells(self) -> np.ndarray:
        """Multi-indices of the active cells, shape (C, d), in C order."""
        return np.argwhere(self.active)

    @property
    def cell_count(self) -> int:
        return int(self.cells.shape[0])


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Tensor Gauss-Legendre nodes on the active cells.

    ``cell_of_node[i]`` is the row of ``ActiveRegion.cells`` the node lies in; weights carry
    the cell volume.
    """

    nodes: np.ndarray
    weights: np.ndarray
    cell_of_node: np.ndarray
    points_per_axis: tuple[int, ...]

    @property
    def node_count(self) -> int:
        return int(self.weights.shape[0])

    def cell_sums(self, values: np.ndarray) -> np.ndarray:
        """Weighted sums of per-node values grouped by cell."""
        return np.bincount(self.cell_of_node, weights=self.weights * values)


@dataclass(frozen=True, eq=False)
class GradientOperator:
    """
    The operator K: f -> (w_theta * grad s(theta))_theta with rows grouped in blocks of d.

    Row ``i * dim + j`` belongs to node i and coordinate direction j.
    """

    matrix: sp.csr_matrix
    dim: int

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0] // self.dim

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def apply(self, f: np.ndarray) -> np.ndarray:
        """K f reshaped to one d-vector per node, shape (#nodes, d)."""
        return (self.matrix @ f).reshape(-1, self.dim)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return self.matrix.T @ np.asarray(y).ravel()

    def objective(self, f: np.ndarray) -> float:
        """sum_theta ||w_theta grad s(theta)||_2, the discretized total variation over U."""
        return float(np.linalg.norm(self.apply(f), axis=1).sum())
