"""
Grundmann-Moeller quadrature on simplices in barycentric coordinates.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import ceil, factorial

import numpy as np

from src.exceptions import DomainError

MAX_DIM = 4


@dataclass(frozen=True, eq=False)
class QuadRule:
    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    def scaled_weights(self, volume: float) -> np.ndarray:
        """Weights for a simplex of the given volume (measure for dim < d)."""
        return self.weights * (volume * factorial(self.dim))

    def integrate(self, values: np.ndarray, volume: float) -> np.ndarray:
        """
        Sums values at the rule points against the scaled weights.

        :param values: Array whose first axis runs over the rule points.
        :type values: np.ndarray
        :param volume: Measure of the simplex.
        :type volume: float
        :return: The integral, with the remaining axes of values.
        :rtype: np.ndarray
        """
        return np.tensordot(self.scaled_weights(volume), values, axes=(0, 0))


@lru_cache(maxsize=None)
def quad_rule(d: int, degree: int) -> QuadRule:
    """
    Grundmann-Moeller rule exact for polynomials of total degree `degree` on a d-simplex.

    The rule is stored on barycentric points with weights summing to 1/d!, the
    volume of the reference simplex. Duplicate nodes are merged through exact
    rational keys.

    :param d: Simplex dimension, 0 <= d <= 4.
    :type d: int
    :param degree: Exactness degree, >= 0.
    :type degree: int
    :return: The quadrature rule.
    :rtype: QuadRule
    """
    if not 0 <= d <= MAX_DIM:
        raise DomainError(f"quadrature is available for 0 <= d <= {MAX_DIM}, got {d}")
    if degree < 0:
        raise DomainError(f"quadrature degree must be >= 0, got {degree}")
    if d == 0:
        return _frozen(QuadRule(0, degree, np.ones((1, 1)), np.ones(1)))

    s = max(0, ceil((degree - 1) / 2))
    dd = 2 * s + 1
    table = {}
    for i in range(s + 1):
        weight = (-1) ** i * 2.0 ** (-2 * s) * (dd + d - 2 * i) ** dd / factorial(i) / factorial(dd + d - i)
        denominator = dd + d - 2 * i
        for beta in _compositions(s - i, d + 1):
            key = tuple(Fraction(2 * b + 1, denominator) for b in beta)
            table[key] = table.get(key, 0.0) + weight

    points = np.array([[float(x) for x in key] for key in table])
    weights = np.array(list(table.values()))
    weights *= (1.0 / factorial(d)) / weights.sum()
    return _frozen(QuadRule(d, 2 * s + 1, points, weights))


def _frozen(rule: QuadRule) -> QuadRule:
    rule.points.flags.writeable = False
    rule.weights.flags.writeable = False
    return rule


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def simplex_measure(points: np.ndarray) -> float:
    """
    The ell-dimensional measure of a simplex with ell+1 vertices embedded in R^d.

    :param points: Vertex coordinates of shape (ell+1, d).
    :type points: np.ndarray
    :return: Length, area or volume; 1 for a single point.
    :rtype: float
    """
    points = np.atleast_2d(points)
    ell = points.shape[0] - 1
    if ell == 0:
        return 1.0
    edges = points[1:] - points[0]
    gram = edges @ edges.T
    return float(np.sqrt(max(np.linalg.det(gram), 0.0)) / factorial(ell))
