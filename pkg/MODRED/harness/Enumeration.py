"""
Exact shortest-vector oracle for small real lattices (Fincke-Pohst enumeration).
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from MODRED.base.ModuleGS import ModuleVector, embedding_matrix
from MODRED.base.utils import BudgetExceededException, RankDeficiencyException

logger = logging.getLogger(__name__)


@dataclass
class SVPResult:
    """
    Attributes:
        length (float): lambda_1 of the lattice.
        coefficients (np.ndarray): Integer coordinates of the witness in the input basis.
        vector (np.ndarray): The witness x B.
        nodes (int): Enumeration nodes visited.
    """
    length: float
    coefficients: np.ndarray
    vector: np.ndarray
    nodes: int


class FinckePohst:
    """
    Depth-first enumeration over the Cholesky factor of the Gram matrix, shrinking the radius
    each time a shorter non-zero vector is found.
    """

    def __init__(self, basis: np.ndarray):
        self.basis = np.asarray(basis, dtype=float)
        gram = self.basis @ self.basis.T
        try:
            R = np.linalg.cholesky(gram).T
        except np.linalg.LinAlgError as e:
            logger.error(f"Lattice basis is not full rank: {e}")
            raise RankDeficiencyException("Lattice basis rows are linearly dependent") from e
        self.m = R.shape[0]
        self.q = np.diag(R) ** 2
        self.mu = R / np.diag(R)[:, None]
        self.x = np.zeros(self.m, dtype=np.int64)
        self.best = None
        self.best_value = math.inf
        self.radius2 = math.inf
        self.nodes = 0

    def _center(self, i: int) -> float:
        return -float(self.mu[i, i + 1:] @ self.x[i + 1:])

    def _search(self, i: int, partial: float) -> None:
        center = self._center(i)
        remaining = self.radius2 - partial
        if remaining < 0:
            return
        r = math.sqrt(remaining / self.q[i])
        for xi in range(math.ceil(center - r), math.floor(center + r) + 1):
            self.nodes += 1
            value = partial + self.q[i] * (xi - center) ** 2
            if value > self.radius2:
                continue
            self.x[i] = xi
            if i > 0:
                self._search(i - 1, value)
            elif value > 1e-12 and np.any(self.x):
                if value < self.best_value:
                    self.best_value = value
                    self.best = self.x.copy()
                    self.radius2 = value
        self.x[i] = 0

    def run(self, bound: float | None = None) -> SVPResult:
        initial = float(np.min(np.diag(self.basis @ self.basis.T)))
        self.radius2 = (bound ** 2 if bound is not None else initial) * (1 + 1e-9)
        self._search(self.m - 1, 0.0)
        if self.best is None:
            raise ValueError(f"No non-zero lattice vector within radius {math.sqrt(self.radius2):.6g}")
        vector = self.best @ self.basis
        return SVPResult(float(np.linalg.norm(vector)), self.best, vector, self.nodes)


def svp_enum(basis: np.ndarray, bound: float | None = None, max_dim: int = 20) -> SVPResult:
    """
    Shortest non-zero vector of the lattice spanned by the rows of ``basis``.

    Args:
        basis (np.ndarray): Shape (m, N) real basis, m <= N.
        bound (float, optional): Initial search radius; defaults to the shortest basis row.
        max_dim (int): Largest lattice dimension accepted.

    Returns:
        SVPResult: lambda_1 and a witness.

    Raises:
        BudgetExceededException: If m exceeds max_dim.
    """
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    if basis.shape[0] > max_dim:
        raise BudgetExceededException(f"Lattice dimension {basis.shape[0]} exceeds the enumeration limit {max_dim}")
    result = FinckePohst(basis).run(bound)
    logger.info(f"Enumeration: lambda_1={result.length:.6g} after {result.nodes} nodes")
    return result


def module_lambda1(basis: Sequence[ModuleVector], max_dim: int = 20) -> SVPResult:
    """lambda_1(sigma(M)) for a module basis, through its dn x 2dn real embedding."""
    return svp_enum(embedding_matrix(basis), max_dim=max_dim)
