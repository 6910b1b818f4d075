"""Discrete-adjoint building blocks.

The reduced gradient of a cost J(y(u), u) is  dJ/du + (dR/du)^T p  with the
adjoint p solving  J_y^T p = -dJ/dy  on the assembled Jacobian.  For
distributed controls the raw nodal derivative is mapped to its L2 Riesz
representative with the P1 mass matrix.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu


def solve_adjoint(jacobian, cost_state_gradient: np.ndarray) -> np.ndarray:
    """Solve J^T p = -dJ/dy by direct factorization of the (sparse) Jacobian.

    Dirichlet rows of the Jacobian are unit rows; the transposed solve then
    produces the boundary multipliers in the corresponding adjoint entries.
    """
    try:
        lu = splu(csr_matrix(jacobian).tocsc())
    except RuntimeError as exc:
        raise RuntimeError(f"adjoint solve failed, singular Jacobian: {exc}") from exc
    return lu.solve(-np.asarray(cost_state_gradient), trans="T")


def mass_matrix(nodes: np.ndarray) -> csr_matrix:
    """Consistent P1 mass matrix on a (possibly non-uniform) 1D mesh."""
    n = len(nodes)
    h = np.diff(nodes)
    main = np.zeros(n)
    main[:-1] += h / 3.0
    main[1:] += h / 3.0
    off = h / 6.0
    rows = np.concatenate([np.arange(n), np.arange(n - 1), np.arange(1, n)])
    cols = np.concatenate([np.arange(n), np.arange(1, n), np.arange(n - 1)])
    data = np.concatenate([main, off, off])
    return csr_matrix((data, (rows, cols)), shape=(n, n))


class RieszMap:
    """L2 Riesz identification on the P1 space of a mesh."""

    def __init__(self, nodes: np.ndarray):
        self.matrix = mass_matrix(nodes)
        self._lu = splu(self.matrix.tocsc())

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Gradient representative g with M g = raw."""
        return self._lu.solve(np.asarray(raw))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """The discrete L2 scalar product a^T M b."""
        return float(a @ (self.matrix @ b))
