"""
Tangential-normal frames of subsimplices and the t-n splitting of symmetric tensors.
"""
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from src.exceptions import DomainError
from src.fem.poly import PiecewisePoly, num_sym, sym_contract, sym_outer
from src.geometry.mesh import GeometryPack, SplitCell
from src.geometry.simplex import IndexSet, complement_star

__all__ = ['TNFrame', 'SymSplit', 'build_frame', 'sym_decompose', 'phi_field', 'phi_space',
           'global_normal_frame', 'qnf_trace_matrix', 'sym_contract']


@dataclass(frozen=True, eq=False)
class TNFrame:
    f: IndexSet
    tangents: np.ndarray
    face_normals: np.ndarray
    tn_normals: np.ndarray
    scaled_dual: np.ndarray

    @property
    def star(self) -> tuple[int, ...]:
        return tuple(v for v in range(self.f.dim + 1) if v not in self.f)

    def pairing(self) -> np.ndarray:
        """Gram matrix between the scaled tangential-normal basis and the face normals."""
        return self.scaled_dual @ self.face_normals.T


@dataclass(frozen=True, eq=False)
class SymSplit:
    f: IndexSet
    tangential: np.ndarray
    normal_normal: np.ndarray
    tangential_normal: np.ndarray

    @property
    def normal(self) -> np.ndarray:
        """N^f(S) = S(N^f) ⊕ sym(T^f ⊗ N^f), columns in symmetric storage."""
        return np.hstack([self.normal_normal, self.tangential_normal])

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.tangential.shape[1], self.normal_normal.shape[1], self.tangential_normal.shape[1]

    def stacked(self) -> np.ndarray:
        return np.hstack([self.tangential, self.normal_normal, self.tangential_normal])


def _tangents(points: np.ndarray, labels) -> np.ndarray:
    labels = tuple(labels)
    d = points.shape[1]
    if len(labels) == 1:
        return np.zeros((0, d))
    return np.array([points[m] - points[labels[0]] for m in labels[1:]])


def _unit(vectors: np.ndarray) -> np.ndarray:
    if len(vectors) == 0:
        return vectors
    return vectors / np.linalg.norm(vectors, axis=1, keepdims=True)


def build_frame(f: IndexSet, geometry: GeometryPack) -> TNFrame:
    """
    t-n frame of a subsimplex f of T.

    Tangents are t_{f(0), f(m)}; the face normal basis is {n_{F_i}: i ∈ f*}; the
    tangential-normal vector n^f_{f∪{i}} is the normalized surface gradient of λ_i
    on f ∪ {i}.

    :param f: Subsimplex of {0,...,d} with dim f <= d-1.
    :type f: IndexSet
    :param geometry: The cell T.
    :type geometry: GeometryPack
    :return: The frame.
    :rtype: TNFrame
    """
    star = complement_star(f)
    points = geometry.vertices
    tangents = _tangents(points, f)
    face_normals = geometry.normals[list(star)]
    tn = []
    for i in star:
        span = _tangents(points, tuple(sorted(set(f) | {i}))).T
        q, _ = np.linalg.qr(span)
        vector = q @ (q.T @ geometry.grad_lambda[i])
        tn.append(vector / np.linalg.norm(vector))
    tn_normals = np.array(tn)
    scale = np.einsum('ix,ix->i', tn_normals, face_normals)
    return TNFrame(f=f, tangents=tangents, face_normals=face_normals, tn_normals=tn_normals,
                   scaled_dual=tn_normals / scale[:, None])


def sym_decompose(f: IndexSet, geometry: GeometryPack) -> SymSplit:
    """
    Bases of S = T^f(S) ⊕ S(N^f) ⊕ sym(T^f ⊗ N^f) in symmetric storage.

    :param f: Subsimplex of {0,...,d}, 0 <= dim f <= d.
    :type f: IndexSet
    :param geometry: The cell T.
    :type geometry: GeometryPack
    :return: Three column bases of dimensions ℓ(ℓ+1)/2, (d-ℓ)(d-ℓ+1)/2 and ℓ(d-ℓ).
    :rtype: SymSplit
    """
    if f.has_c:
        raise DomainError(f"{f} is not a subsimplex of T")
    d = geometry.dim
    tangents = _unit(_tangents(geometry.vertices, f))
    normals = geometry.normals[[v for v in range(d + 1) if v not in f]] if f.ell < d else np.zeros((0, d))
    nsym = num_sym(d)

    def columns(vectors):
        return np.array(vectors).T if vectors else np.zeros((nsym, 0))

    tangential = columns([sym_outer(tangents[a], tangents[b])
                          for a in range(len(tangents)) for b in range(a, len(tangents))])
    normal_normal = columns([sym_outer(normals[a], normals[b])
                             for a in range(len(normals)) for b in range(a, len(normals))])
    tangential_normal = columns([sym_outer(t, n) for t in tangents for n in normals])
    return SymSplit(f, tangential, normal_normal, tangential_normal)


def phi_field(f: IndexSet, i: int, j: int, cell: SplitCell) -> PiecewisePoly:
    """
    φ_ij^f = χ_{T_i} sym(t_{f(0),c} ⊗ t_{f(0),j}) - χ_{T_j} sym(t_{f(0),c} ⊗ t_{f(0),i}).

    :param f: Subsimplex of {0,...,d}.
    :type f: IndexSet
    :param i: A label of f*.
    :type i: int
    :param j: A label of f*.
    :type j: int
    :param cell: Split cell.
    :type cell: SplitCell
    :return: Piecewise-constant symmetric tensor field supported on T_i ∪ T_j.
    :rtype: PiecewisePoly
    """
    if f.has_c:
        raise DomainError(f"{f} must not contain the barycenter")
    if i in f or j in f:
        raise DomainError(f"labels {i}, {j} must lie in the complement of {f}")
    d, c = cell.d, cell.c
    values = np.zeros((d + 1, 1, num_sym(d)))
    if i != j:
        pts = cell.vertices
        anchor = f.anchor
        t_c = pts[c] - pts[anchor]
        values[i, 0] = sym_outer(t_c, pts[j] - pts[anchor])
        values[j, 0] = -sym_outer(t_c, pts[i] - pts[anchor])
    return PiecewisePoly(cell, 0, values)


def phi_space(f: IndexSet, cell: SplitCell) -> list[PiecewisePoly]:
    """Φ^f(S) = span{φ_ij^f: i < j ∈ f*}."""
    star = complement_star(f)
    return [phi_field(f, i, j, cell) for i, j in combinations(star, 2)]


def global_normal_frame(f: IndexSet, cell: SplitCell) -> np.ndarray:
    """
    Orthonormal basis of the normal space of an interior subsimplex of T^R.

    The normal space is the orthogonal complement of the tangents
    t_{f(0), f(m)}, computed by a complete QR factorization; each vector is
    signed so that its first nonzero component is positive.

    :param f: Subsimplex of T^R with dim f <= d-1.
    :type f: IndexSet
    :param cell: Split cell.
    :type cell: SplitCell
    :return: Rows n_1^f, ..., n_{d-ℓ}^f.
    :rtype: np.ndarray
    """
    d = cell.d
    if f.ell > d - 1:
        raise DomainError(f"{f} has no normal space")
    if f.ell == 0:
        return np.eye(d)
    q, _ = np.linalg.qr(_tangents(cell.vertices, f).T, mode='complete')
    normals = q[:, f.ell:].T.copy()
    for row in normals:
        lead = row[np.flatnonzero(np.abs(row) > 1e-12)[0]]
        if lead < 0:
            row *= -1.0
    return normals


def qnf_trace_matrix(f: IndexSet, cell: SplitCell) -> np.ndarray:
    """
    Matrix of τ ↦ (τ|_{T_i} n_{F_i})_{i∈f*} on P_0(T; N^f(S)) ⊕ Φ^f(S).

    The map is injective, so the square matrix has full rank d(d-ℓ).

    :param f: Subsimplex of {0,...,d} with dim f <= d-1.
    :type f: IndexSet
    :param cell: Split cell.
    :type cell: SplitCell
    :return: Matrix of shape (d(d-ℓ), d(d-ℓ)).
    :rtype: np.ndarray
    """
    d = cell.d
    star = complement_star(f)
    split = sym_decompose(f, cell.geometry)
    fields = [np.broadcast_to(split.normal[:, m], (d + 1, num_sym(d))) for m in range(split.normal.shape[1])]
    scale = cell.geometry.diameter ** 2
    fields += [phi.coeffs[:, 0, :] / scale for phi in phi_space(f, cell)] if f.ell <= d - 2 else []
    rows = []
    for i in star:
        normal = cell.geometry.normals[i]
        for p in range(d):
            e = np.zeros(d)
            e[p] = 1.0
            weights = sym_contract(e, normal)
            rows.append([field[i] @ weights for field in fields])
    return np.array(rows)
