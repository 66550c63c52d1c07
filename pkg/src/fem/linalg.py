"""
Rank-revealing helpers shared by the element constructions and the certification engine.
"""
import numpy as np
from scipy import linalg

from src.conf.config import settings


def numerical_rank(matrix: np.ndarray, tol: float | None = None) -> int:
    """
    Rank from singular values above tol * largest singular value.

    :param matrix: Any 2d array.
    :type matrix: np.ndarray
    :param tol: Relative threshold, settings.rank_tol by default.
    :type tol: float
    :return: The numerical rank.
    :rtype: int
    """
    matrix = np.atleast_2d(matrix)
    if matrix.size == 0:
        return 0
    values = linalg.svdvals(matrix)
    if values[0] == 0.0:
        return 0
    tol = settings.rank_tol if tol is None else tol
    return int(np.sum(values > tol * values[0]))


def column_basis(matrix: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column space."""
    matrix = np.atleast_2d(matrix)
    if matrix.size == 0 or matrix.shape[1] == 0:
        return np.zeros((matrix.shape[0], 0))
    u, values, _ = linalg.svd(matrix, full_matrices=False)
    if values[0] == 0.0:
        return np.zeros((matrix.shape[0], 0))
    tol = settings.rank_tol if tol is None else tol
    return u[:, values > tol * values[0]]


def null_space(matrix: np.ndarray, tol: float | None = None, ncols: int | None = None) -> np.ndarray:
    """
    Orthonormal basis of the kernel, with a relative threshold.

    :param matrix: Constraint matrix of shape (m, n); m may be 0.
    :type matrix: np.ndarray
    :param tol: Relative threshold, settings.rank_tol by default.
    :type tol: float
    :param ncols: Number of unknowns when the matrix has no rows.
    :type ncols: int
    :return: Array of shape (n, n - rank).
    :rtype: np.ndarray
    """
    matrix = np.atleast_2d(matrix)
    n = matrix.shape[1] if ncols is None else ncols
    if matrix.size == 0 or not np.any(matrix):
        return np.eye(n)
    tol = settings.rank_tol if tol is None else tol
    return linalg.null_space(matrix, rcond=tol)


def solve_least_squares(matrix: np.ndarray, rhs: np.ndarray, tol: float | None = None):
    """
    Minimum-norm least-squares solution and its relative residual.

    :return: (solution, residual) with residual = |A x - b| / max(|b|, 1e-300).
    :rtype: tuple
    """
    tol = settings.rank_tol if tol is None else tol
    solution, *_ = linalg.lstsq(matrix, rhs, cond=tol)
    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    residual = float(np.linalg.norm(matrix @ solution - rhs)) / scale
    return solution, residual


def condition_number(matrix: np.ndarray) -> tuple[float, float]:
    """(condition number, smallest singular value) of a square matrix."""
    values = linalg.svdvals(matrix)
    if values.size == 0:
        return 1.0, np.inf
    smallest = float(values[-1])
    return (float(values[0] / smallest) if smallest > 0 else np.inf), smallest


def same_span(a: np.ndarray, b: np.ndarray, tol: float | None = None) -> bool:
    """Whether two column sets span the same space."""
    ra, rb = numerical_rank(a, tol), numerical_rank(b, tol)
    return ra == rb == numerical_rank(np.hstack([a, b]), tol)
