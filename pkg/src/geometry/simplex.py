"""
Abstract simplicial combinatorics of a d-simplex and its barycentric split.

Vertex labels are the integers 0..d; the barycenter label c is stored as d+1
so that every index set sorts with c last.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb

from src.exceptions import DomainError


def barycenter_label(d: int) -> int:
    """
    Returns the internal integer used for the barycenter label c.

    :param d: The ambient dimension.
    :type d: int
    :return: d + 1.
    :rtype: int
    """
    return d + 1


@dataclass(frozen=True, order=True)
class IndexSet:
    """
    A (sub)simplex of the abstract simplex {0,...,d} or of its split {0,...,d,c}.
    """
    labels: tuple[int, ...]
    dim: int = field(compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"ambient dimension must be >= 1, got {self.dim}")
        labels = tuple(self.labels)
        if not labels:
            raise DomainError("an index set needs at least one label")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise DomainError(f"labels must be strictly increasing: {labels}")
        if labels[0] < 0 or labels[-1] > self.dim + 1:
            raise DomainError(f"labels out of range for d={self.dim}: {labels}")
        object.__setattr__(self, 'labels', labels)

    @classmethod
    def of(cls, labels, d: int) -> 'IndexSet':
        return cls(tuple(sorted(set(int(label) for label in labels))), d)

    @property
    def c(self) -> int:
        return self.dim + 1

    @property
    def has_c(self) -> bool:
        return self.labels[-1] == self.c

    @property
    def ell(self) -> int:
        """Geometric dimension of the subsimplex."""
        return len(self.labels) - 1

    @property
    def anchor(self) -> int:
        """The vertex f(0): the smallest label."""
        return self.labels[0]

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label) -> bool:
        return label in self.labels

    def issubset(self, other: 'IndexSet') -> bool:
        return set(self.labels) <= set(other.labels)

    def without(self, *labels: int) -> 'IndexSet':
        return IndexSet.of([v for v in self.labels if v not in labels], self.dim)

    def star(self) -> 'IndexSet':
        return complement_star(self)

    def c_complement(self) -> 'IndexSet':
        return complement_c(self)

    def __str__(self):
        return '{' + ','.join('c' if v == self.c else str(v) for v in self.labels) + '}'


@dataclass(frozen=True)
class SubsimplexTable:
    dim: int
    levels: tuple[tuple[IndexSet, ...], ...]
    split_cells: tuple[IndexSet, ...]


def subsimplices(d: int, ell: int) -> list[IndexSet]:
    """
    Enumerates all ell-dimensional subsimplices of the d-simplex {0,...,d}.

    :param d: The ambient dimension.
    :type d: int
    :param ell: Dimension of the subsimplices.
    :type ell: int
    :return: The C(d+1, ell+1) subsets of cardinality ell+1 in lexicographic order.
    :rtype: list[IndexSet]
    """
    if d < 1 or not 0 <= ell <= d:
        raise DomainError(f"need 0 <= ell <= d, got d={d}, ell={ell}")
    return [IndexSet(labels, d) for labels in _combinations(d + 1, ell + 1)]


def split_subsimplices(d: int, ell: int) -> list[IndexSet]:
    """
    Enumerates all ell-dimensional subsimplices of the split T^R, barycenter included.

    :param d: The ambient dimension.
    :type d: int
    :param ell: Dimension of the subsimplices.
    :type ell: int
    :return: Subsets of {0,...,d,c} of cardinality ell+1 that are simplices of T^R.
    :rtype: list[IndexSet]
    """
    if d < 1 or not 0 <= ell <= d:
        raise DomainError(f"need 0 <= ell <= d, got d={d}, ell={ell}")
    # {0,...,d} itself is the only (d+1)-set that is not a simplex of T^R
    return [IndexSet(labels, d) for labels in _combinations(d + 2, ell + 1)
            if len(labels) <= d or d + 1 in labels]


def interior_subsimplices(d: int, ell: int) -> list[IndexSet]:
    """
    The interior subsimplices of T^R of dimension ell: exactly those containing c.

    :param d: The ambient dimension.
    :type d: int
    :param ell: Dimension of the subsimplices, 0 <= ell <= d-1.
    :type ell: int
    :return: Index sets containing the barycenter label.
    :rtype: list[IndexSet]
    """
    if d < 1 or not 0 <= ell <= d:
        raise DomainError(f"need 0 <= ell <= d, got d={d}, ell={ell}")
    return [IndexSet(tuple(labels) + (d + 1,), d) for labels in _combinations(d + 1, ell)]


def complement_star(f: IndexSet) -> IndexSet:
    """
    Returns f* with f and f* a disjoint union of {0,...,d}.

    :param f: A subsimplex of {0,...,d} of dimension at most d-1.
    :type f: IndexSet
    :return: The complement of f in {0,...,d}.
    :rtype: IndexSet
    """
    if f.has_c:
        raise DomainError(f"{f} contains the barycenter; f* is defined on {{0,...,d}} only")
    if f.ell > f.dim - 1:
        raise DomainError(f"{f} has no complement in {{0,...,{f.dim}}}")
    return IndexSet(tuple(v for v in range(f.dim + 1) if v not in f), f.dim)


def complement_c(f: IndexSet) -> IndexSet:
    """
    Returns f^c with f and f^c a disjoint union of {0,...,d,c}.

    :param f: A subset of {0,...,d,c}.
    :type f: IndexSet
    :return: The complement of f in {0,...,d,c}.
    :rtype: IndexSet
    """
    rest = tuple(v for v in range(f.dim + 2) if v not in f)
    if not rest:
        raise DomainError(f"{f} is the whole split vertex set")
    return IndexSet(rest, f.dim)


def split_cell(d: int, i: int) -> IndexSet:
    """T_i = {i}^c."""
    if not 0 <= i <= d:
        raise DomainError(f"subcell index {i} out of range for d={d}")
    return complement_c(IndexSet((i,), d))


def split_cells(d: int) -> list[IndexSet]:
    return [split_cell(d, i) for i in range(d + 1)]


def interior_face(d: int, i: int, j: int) -> IndexSet:
    """F_ij = {i,j}^c = T_i ∩ T_j."""
    if i == j:
        raise DomainError("an interior face needs two distinct subcells")
    return complement_c(IndexSet.of((i, j), d))


def interior_faces(d: int) -> dict[tuple[int, int], IndexSet]:
    """
    Interior faces of T^R keyed by the subcell pair (i, j), i < j.

    :param d: The ambient dimension.
    :type d: int
    :return: The d(d+1)/2 faces F_ij.
    :rtype: dict
    """
    return {(i, j): interior_face(d, i, j) for i, j in combinations(range(d + 1), 2)}


@dataclass(frozen=True)
class SplitIncidence:
    dim: int
    membership: dict
    interior_faces: dict


def split_incidence(d: int) -> SplitIncidence:
    """
    Tabulates which subcells T_i and coarse faces F_i contain each subsimplex f.

    :param d: The ambient dimension.
    :type d: int
    :return: membership[(f, i)] = (f ⊆ T_i, f ⊆ F_i) for i in f*, plus the faces F_ij.
    :rtype: SplitIncidence
    """
    if d < 1:
        raise DomainError(f"d must be >= 1, got {d}")
    membership = {}
    for ell in range(d):
        for f in subsimplices(d, ell):
            for i in complement_star(f):
                in_cell = f.issubset(split_cell(d, i))
                in_face = f.issubset(IndexSet(tuple(v for v in range(d + 1) if v != i), d))
                membership[(f, i)] = (in_cell, in_face)
    return SplitIncidence(d, membership, interior_faces(d))


def subsimplex_table(d: int) -> SubsimplexTable:
    levels = tuple(tuple(subsimplices(d, ell)) for ell in range(d + 1))
    return SubsimplexTable(d, levels, tuple(split_cells(d)))


def count_subsimplices(d: int, ell: int) -> int:
    return comb(d + 1, ell + 1)


@lru_cache(maxsize=None)
def _combinations(n: int, r: int) -> tuple[tuple[int, ...], ...]:
    return tuple(combinations(range(n), r))
