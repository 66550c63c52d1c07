"""
Generators of the local stress spaces on a split cell.

Every generator set is a piecewise coefficient array of shape
(d+1, nα, nsym, ncol): subcell, Bernstein index, symmetric component and
generator. Scalars are built as exact Bernstein monomials, tensors as
constants (per subcell where needed), and the two are combined by an outer
product.
"""
from dataclasses import dataclass
from itertools import combinations
from math import factorial, prod

import numpy as np
from scipy.linalg import block_diag

from src.exceptions import CertificationError, DomainError
from src.fem import linalg
from src.fem.poly import (coarse_to_pieces, elevate, index_of, mass_matrix, mixed_mass, multi_indices, multinomial,
                          multiply, normal_map, num_bernstein, num_sym, rm_basis, rm_pieces, sym_div,
                          sym_outer, sym_weights, trace_indices)
from src.geometry.frames import global_normal_frame, phi_space, sym_decompose
from src.geometry.mesh import GeometryPack, SplitCell
from src.geometry.simplex import IndexSet, interior_subsimplices, subsimplices


# ---------------------------------------------------------------- scalar factors

def face_bubble_monomials(n: int, positions, m: int) -> np.ndarray:
    """
    Bernstein coefficients of b_f B^m_γ(λ_f) for every γ on an n-simplex.

    :param n: Simplex dimension.
    :type n: int
    :param positions: Vertex positions of the subsimplex f.
    :type positions: Iterable[int]
    :param m: Degree of the factor from P_m(f).
    :type m: int
    :return: Array of shape (C(|f|+m+n, n), C(m+ℓ, ℓ)).
    :rtype: np.ndarray
    """
    positions = list(positions)
    gammas = multi_indices(len(positions) - 1, m)
    k = len(positions) + m
    out = np.zeros((num_bernstein(n, k), len(gammas)))
    for g, gamma in enumerate(gammas):
        exponents = gamma + 1
        alpha = np.zeros(n + 1, dtype=np.int64)
        alpha[positions] = exponents
        out[index_of(alpha, k), g] = multinomial(gamma) * prod(factorial(int(e)) for e in exponents) / factorial(k)
    return out


def split_bubble_monomials(cell: SplitCell, labels, m: int) -> np.ndarray:
    """
    b_f^R B^m_γ(λ^R_f) on every subcell; zero on the subcells missing a vertex of f.

    :return: Array of shape (d+1, nα, C(m+ℓ, ℓ)) at degree |f| + m.
    :rtype: np.ndarray
    """
    labels = tuple(labels)
    d = cell.d
    k = len(labels) + m
    out = np.zeros((d + 1, num_bernstein(d, k), num_bernstein(len(labels) - 1, m)))
    for i in cell.pieces_containing(labels):
        out[i] = face_bubble_monomials(d, [cell.position(i, v) for v in labels], m)
    return out


def combine(scalars: np.ndarray, tensors: np.ndarray) -> np.ndarray:
    """
    Outer product of scalar generators with constant tensors.

    :param scalars: Piecewise scalars of shape (d+1, nα, ng).
    :type scalars: np.ndarray
    :param tensors: Tensors of shape (nsym, nt), or (d+1, nsym, nt) when they differ per subcell.
    :type tensors: np.ndarray
    :return: Generators of shape (d+1, nα, nsym, ng*nt).
    :rtype: np.ndarray
    """
    if tensors.ndim == 2:
        tensors = np.broadcast_to(tensors, (scalars.shape[0],) + tensors.shape)
    out = np.einsum('iag,ist->iasgt', scalars, tensors)
    return out.reshape(out.shape[:3] + (-1,))


def elevate_pieces(gens: np.ndarray, d: int, k: int, p: int) -> np.ndarray:
    if k == p:
        return gens
    return np.stack([elevate(piece, d, k, p) for piece in gens])


def embed_piece(cell: SplitCell, i: int, coeffs: np.ndarray) -> np.ndarray:
    """Places coefficients (nα, nsym, n) of subcell i into a piecewise array."""
    out = np.zeros((cell.d + 1,) + coeffs.shape)
    out[i] = coeffs
    return out


def flat(gens: np.ndarray) -> np.ndarray:
    """(d+1, nα, nsym, n) -> (nflat, n) in the layout of PiecewisePoly.flat."""
    return gens.reshape(int(np.prod(gens.shape[:-1])), gens.shape[-1])


def unflat(matrix: np.ndarray, cell: SplitCell, degree: int, ncomp: int | None = None) -> np.ndarray:
    ncomp = num_sym(cell.d) if ncomp is None else ncomp
    return matrix.reshape(cell.d + 1, num_bernstein(cell.d, degree), ncomp, -1)


def _unit(vector: np.ndarray) -> np.ndarray:
    return vector / np.linalg.norm(vector)


# ---------------------------------------------------------------- polynomial spaces

def coarse_poly_space(cell: SplitCell, k: int) -> np.ndarray:
    """P_k(T;S) as coarse Bernstein functions times the unit symmetric tensors."""
    d, nsym = cell.d, num_sym(cell.d)
    nalpha = num_bernstein(d, k)
    coarse = np.einsum('ab,st->asbt', np.eye(nalpha), np.eye(nsym)).reshape(nalpha, nsym, -1)
    return coarse_to_pieces(coarse, d, k)


def coarse_vector_space(cell: SplitCell, k: int) -> np.ndarray:
    """P_k(T;R^d) on the subcells: (d+1, nα, d, nα*d)."""
    d = cell.d
    nalpha = num_bernstein(d, k)
    coarse = np.einsum('ab,st->asbt', np.eye(nalpha), np.eye(d)).reshape(nalpha, d, -1)
    return coarse_to_pieces(coarse, d, k)


def boundary_trace_matrix(geometry: GeometryPack, k: int) -> np.ndarray:
    """
    Matrix of τ ↦ (τ n) restricted to every face of a simplex, on Bernstein coefficients.

    :param geometry: The simplex.
    :type geometry: GeometryPack
    :param k: Degree.
    :type k: int
    :return: Matrix with nα*nsym columns; its kernel is H_0(div) ∩ P_k(T;S).
    :rtype: np.ndarray
    """
    d = geometry.dim
    nalpha = num_bernstein(d, k)
    blocks = []
    for m in range(d + 1):
        idx = trace_indices(d, k, tuple(v for v in range(d + 1) if v != m))
        select = np.zeros((len(idx), nalpha))
        select[np.arange(len(idx)), idx] = 1.0
        blocks.append(np.kron(select, normal_map(geometry.normals[m]).T))
    return np.vstack(blocks)


def coarse_boundary_trace_matrix(cell: SplitCell, p: int) -> np.ndarray:
    """τ ↦ τ n on the coarse faces ∂T for piecewise coefficients at degree p."""
    d, nsym = cell.d, num_sym(cell.d)
    nalpha = num_bernstein(d, p)
    blocks = []
    for m in range(d + 1):
        idx = trace_indices(d, p, tuple(range(d)))
        select = np.zeros((len(idx), nalpha))
        select[np.arange(len(idx)), idx] = 1.0
        block = np.zeros((len(idx) * d, (d + 1) * nalpha * nsym))
        block[:, m * nalpha * nsym:(m + 1) * nalpha * nsym] = np.kron(select, normal_map(cell.geometry.normals[m]).T)
        blocks.append(block)
    return np.vstack(blocks)


def div_bubble_space(geometry: GeometryPack, k: int, certify: bool = True) -> np.ndarray:
    """
    The div bubbles B_k(div,T;S) = span{λ_iλ_j p sym(t_ij ⊗ t_ij): i < j, p ∈ P_{k-2}(T)}.

    :param geometry: The simplex T.
    :type geometry: GeometryPack
    :param k: Degree.
    :type k: int
    :param certify: Compare with the kernel of the boundary trace map on P_k(T;S).
    :type certify: bool
    :return: Bernstein coefficients of shape (nα, nsym, ½d(d+1)C(k-2+d, d)); empty for k < 2.
    :rtype: np.ndarray
    """
    d, nsym = geometry.dim, num_sym(geometry.dim)
    if k < 2:
        return np.zeros((num_bernstein(d, max(k, 0)), nsym, 0))
    lower = np.eye(num_bernstein(d, k - 2))
    columns = []
    for i, j in combinations(range(d + 1), 2):
        scalar = multiply(d, face_bubble_monomials(d, (i, j), 0)[:, 0], 2, lower, k - 2)
        t = _unit(geometry.vertices[j] - geometry.vertices[i])
        columns.append(np.einsum('ag,s->asg', scalar, sym_outer(t, t)))
    basis = np.concatenate(columns, axis=2)
    if certify:
        flat_basis = basis.reshape(-1, basis.shape[2])
        kernel = linalg.null_space(boundary_trace_matrix(geometry, k))
        rank = linalg.numerical_rank(flat_basis)
        if not rank == kernel.shape[1] == basis.shape[2] or not linalg.same_span(flat_basis, kernel):
            raise CertificationError(f"div bubbles of degree {k}: rank {rank}, {basis.shape[2]} generators, "
                                     f"trace kernel of dimension {kernel.shape[1]}")
    return basis


# ---------------------------------------------------------------- summands of the split spaces

def normal_summand(cell: SplitCell, k: int, max_ell: int | None = None) -> np.ndarray:
    """⊕_f b_f P_{k-ℓ-1}(f) N^f(S) over coarse subsimplices f of T, with coarse bubbles b_f."""
    d = cell.d
    max_ell = d - 1 if max_ell is None else max_ell
    parts = []
    for ell in range(min(max_ell, k - 1) + 1):
        for f in subsimplices(d, ell):
            coarse = face_bubble_monomials(d, tuple(f), k - ell - 1)
            scalars = coarse_to_pieces(coarse, d, k)
            parts.append(combine(scalars, sym_decompose(f, cell.geometry).normal))
    return _concat(parts, cell, k)


def phi_summand(cell: SplitCell, k: int) -> np.ndarray:
    """⊕_f B_kΦ^f(S) = b_f^R P_{k-ℓ-1}(f) ⊗ Φ^f(S) for ℓ <= d-2, φ scaled by 1/diameter²."""
    d = cell.d
    scale = cell.geometry.diameter ** 2
    parts = []
    for ell in range(min(d - 2, k - 1) + 1):
        for f in subsimplices(d, ell):
            phis = phi_space(f, cell)
            tensors = np.stack([phi.coeffs[:, 0, :] / scale for phi in phis], axis=-1)
            parts.append(combine(split_bubble_monomials(cell, tuple(f), k - ell - 1), tensors))
    return _concat(parts, cell, k)


def interior_nn_summand(cell: SplitCell, k: int) -> np.ndarray:
    """⊕_{f ∋ c} b_f^R P_{k-ℓ-1}(f) S(N^f) with the global normal frame of f."""
    d = cell.d
    parts = []
    for ell in range(min(d - 1, k - 1) + 1):
        for f in interior_subsimplices(d, ell):
            normals = global_normal_frame(f, cell)
            tensors = np.array([sym_outer(normals[a], normals[b])
                                for a in range(len(normals)) for b in range(a, len(normals))]).T
            parts.append(combine(split_bubble_monomials(cell, tuple(f), k - ell - 1), tensors))
    return _concat(parts, cell, k)


def interior_tn_summand(cell: SplitCell, k: int) -> np.ndarray:
    """⊕_{F_ij} ⊕_{f ⊆ F_ij, ℓ >= 1} b_f^R P_{k-ℓ-1}(f) sym(T^f ⊗ n_F)."""
    d = cell.d
    parts = []
    for i, j, face, normal in cell.interior_faces:
        labels = tuple(face)
        for ell in range(1, min(d - 1, k - 1) + 1):
            for sub in combinations(labels, ell + 1):
                tangents = [_unit(cell.vertices[v] - cell.vertices[sub[0]]) for v in sub[1:]]
                tensors = np.array([sym_outer(t, normal) for t in tangents]).T
                parts.append(combine(split_bubble_monomials(cell, sub, k - ell - 1), tensors))
    return _concat(parts, cell, k)


def piece_bubble_summand(cell: SplitCell, k: int) -> np.ndarray:
    """⊕_i B_k(div, T_i; S), each supported on one subcell."""
    parts = [embed_piece(cell, i, div_bubble_space(cell.sub_geometry[i], k, certify=False))
             for i in range(cell.d + 1)]
    return _concat(parts, cell, k)


def high_summands(cell: SplitCell, k: int) -> dict[str, np.ndarray]:
    """The summands of the split space of degree k, all at degree k."""
    return {
        'normal': normal_summand(cell, k),
        'phi': phi_summand(cell, k),
        'interior_nn': interior_nn_summand(cell, k),
        'interior_tn': interior_tn_summand(cell, k),
        'piece_bubbles': piece_bubble_summand(cell, k),
    }


def linear_summands(cell: SplitCell) -> dict[str, np.ndarray]:
    """λ_c^R P_0(T;S) ⊕ ⊕_m (λ_m^R P_0(T;S) ⊕ λ_m^R Φ^m(S))."""
    d, nsym = cell.d, num_sym(cell.d)
    identity = np.eye(nsym)
    hats = [split_bubble_monomials(cell, (m,), 0) for m in range(d + 2)]
    scale = cell.geometry.diameter ** 2
    phis = []
    for m in range(d + 1):
        f = IndexSet((m,), d)
        tensors = np.stack([phi.coeffs[:, 0, :] / scale for phi in phi_space(f, cell)], axis=-1)
        phis.append(combine(hats[m], tensors))
    return {
        'barycenter': combine(hats[d + 1], identity),
        'vertex': np.concatenate([combine(hats[m], identity) for m in range(d + 1)], axis=-1),
        'phi': _concat(phis, cell, 1),
    }


def _concat(parts: list[np.ndarray], cell: SplitCell, k: int) -> np.ndarray:
    if not parts:
        return np.zeros((cell.d + 1, num_bernstein(cell.d, k), num_sym(cell.d), 0))
    return np.concatenate(parts, axis=-1)


# ---------------------------------------------------------------- face test spaces

def face_frame(points: np.ndarray) -> np.ndarray:
    """
    Orthonormal tangent basis of a face, deterministic in the vertex order.

    :param points: Face vertices of shape (n+1, d) in the shared order.
    :type points: np.ndarray
    :return: Columns t_1..t_n of shape (d, n).
    :rtype: np.ndarray
    """
    q, r = np.linalg.qr((points[1:] - points[0]).T)
    return q * np.sign(np.diag(r))


@dataclass(frozen=True, eq=False)
class NDSpace:
    """
    ND_m(F) = P_m(F;R^n) ⊕ {q homogeneous of degree m+1: q·y = 0} in local coordinates y of F.
    """
    face: IndexSet
    order: int
    origin: np.ndarray
    frame: np.ndarray
    scale: float
    exponents: np.ndarray
    coeffs: np.ndarray

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    def local(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.origin) @ self.frame / self.scale

    def local_values(self, x: np.ndarray) -> np.ndarray:
        """Values in tangent coordinates, shape (npts, n, dim)."""
        y = self.local(x)
        monomials = np.prod(y[:, None, :] ** self.exponents[None, :, :], axis=2)
        return np.einsum('pj,jab->pab', monomials, self.coeffs)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Tangential vector fields in R^d, shape (npts, d, dim)."""
        return np.einsum('xa,pab->pxb', self.frame, self.local_values(x))

    def contraction_residual(self) -> float:
        """Largest coefficient of degree m+2 in q·y over the basis."""
        top = _contraction_matrix(self.frame.shape[1], self.order + 1)
        mask = self.exponents.sum(axis=1) == self.order + 1
        homogeneous = self.coeffs[mask].reshape(-1, self.dim)
        return float(np.abs(top @ homogeneous).max(initial=0.0))


def _monomials(n: int, degree: int) -> np.ndarray:
    return multi_indices(n - 1, degree)


def _contraction_matrix(n: int, degree: int) -> np.ndarray:
    """Map from homogeneous vector fields of the given degree to q·y, one degree higher."""
    source = _monomials(n, degree)
    target = {tuple(int(x) for x in e): r for r, e in enumerate(_monomials(n, degree + 1))}
    out = np.zeros((len(target), len(source) * n))
    for j, e in enumerate(source):
        for a in range(n):
            raised = e.copy()
            raised[a] += 1
            out[target[tuple(int(x) for x in raised)], j * n + a] = 1.0
    return out


def nd_space(points: np.ndarray, m: int, face: IndexSet | None = None) -> NDSpace:
    """
    First-kind Nédélec space of order m on a face.

    :param points: Face vertices of shape (n+1, d), n = d-1.
    :type points: np.ndarray
    :param m: Order, >= 0.
    :type m: int
    :param face: Labels of the face, kept for reporting.
    :type face: IndexSet
    :return: The space with an explicit monomial basis.
    :rtype: NDSpace
    """
    if m < 0:
        raise DomainError(f"Nédélec order must be >= 0, got {m}")
    points = np.asarray(points, dtype=float)
    n = points.shape[0] - 1
    exponents = np.vstack([_monomials(n, j) for j in range(m + 2)])
    index = {tuple(int(x) for x in e): j for j, e in enumerate(exponents)}
    columns = []
    for j in range(m + 1):
        for e in _monomials(n, j):
            for a in range(n):
                column = np.zeros((len(exponents), n))
                column[index[tuple(int(x) for x in e)], a] = 1.0
                columns.append(column)
    top = _monomials(n, m + 1)
    kernel = linalg.null_space(_contraction_matrix(n, m + 1), ncols=len(top) * n)
    for c in kernel.T:
        column = np.zeros((len(exponents), n))
        for j, e in enumerate(top):
            column[index[tuple(int(x) for x in e)]] = c[j * n:(j + 1) * n]
        columns.append(column)
    scale = max(np.linalg.norm(points[a] - points[b]) for a, b in combinations(range(n + 1), 2))
    return NDSpace(face=face, order=m, origin=points.mean(axis=0), frame=face_frame(points), scale=scale,
                   exponents=exponents, coeffs=np.stack(columns, axis=-1))


def face_rm_fields(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    RM(F) = tangential constants ⊕ skew(T^F) Π_F x, evaluated at points of the face.

    :param points: Face vertices of shape (n+1, d) in the shared order.
    :type points: np.ndarray
    :param x: Evaluation points of shape (npts, d).
    :type x: np.ndarray
    :return: Values of shape (npts, d, n + n(n-1)/2).
    :rtype: np.ndarray
    """
    frame = face_frame(points)
    n = frame.shape[1]
    scale = max(np.linalg.norm(points[a] - points[b]) for a, b in combinations(range(n + 1), 2))
    y = (np.atleast_2d(x) - points.mean(axis=0)) @ frame / scale
    fields = [np.broadcast_to(frame[:, a], (len(y), frame.shape[0])) for a in range(n)]
    for a, b in combinations(range(n), 2):
        fields.append(np.outer(y[:, b], frame[:, a]) - np.outer(y[:, a], frame[:, b]))
    return np.stack(fields, axis=-1)


def face_tangential_p1(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Tangential P_1(F;T^F) fields: (npts, d, n(n+1))."""
    frame = face_frame(points)
    n = frame.shape[1]
    scale = max(np.linalg.norm(points[a] - points[b]) for a, b in combinations(range(n + 1), 2))
    y = (np.atleast_2d(x) - points.mean(axis=0)) @ frame / scale
    scalars = np.hstack([np.ones((len(y), 1)), y])
    return np.einsum('pj,xa->pxja', scalars, frame).reshape(len(y), frame.shape[0], -1)


# ---------------------------------------------------------------- piecewise operators

def simplex_div_matrix(geometry: GeometryPack, p: int) -> np.ndarray:
    """Row-wise divergence on one simplex: (nβ*d, nα*nsym) for flat coefficients."""
    d, nsym = geometry.dim, num_sym(geometry.dim)
    size = num_bernstein(d, p) * nsym
    out = sym_div(np.eye(size).reshape(num_bernstein(d, p), nsym, size), p, geometry.grad_lambda)
    return out.reshape(-1, size)


def piecewise_div_matrix(cell: SplitCell, p: int) -> np.ndarray:
    """
    Divergence of piecewise symmetric tensors of degree p, subcell by subcell.

    :param cell: Split cell.
    :type cell: SplitCell
    :param p: Degree of the tensors, >= 1.
    :type p: int
    :return: Block-diagonal matrix mapping flat tensors to flat vectors of degree p-1.
    :rtype: np.ndarray
    """
    return block_diag(*(simplex_div_matrix(g, p) for g in cell.sub_geometry))


def piecewise_mass_matrix(cell: SplitCell, p: int, q: int | None = None, ncomp: int | None = None,
                          weights: np.ndarray | None = None) -> np.ndarray:
    """
    L² Gram matrix of piecewise fields of degrees p and q.

    Symmetric tensors are paired by the Frobenius product unless weights are given.

    :return: Matrix of shape (nflat_p, nflat_q).
    :rtype: np.ndarray
    """
    d = cell.d
    q = p if q is None else q
    ncomp = num_sym(d) if ncomp is None else ncomp
    if weights is None:
        weights = sym_weights(d) if ncomp == num_sym(d) else np.ones(ncomp)
    blocks = [np.kron(mixed_mass(d, p, q, g.volume), np.diag(weights)) for g in cell.sub_geometry]
    return block_diag(*blocks)


def rm_projector(cell: SplitCell, degree: int) -> np.ndarray:
    """
    L² projection of piecewise vector fields of the given degree onto RM(T).

    :param cell: Split cell.
    :type cell: SplitCell
    :param degree: Degree of the fields, >= 1.
    :type degree: int
    :return: Matrix Q with Q @ v the flat coefficients of Q_RM v.
    :rtype: np.ndarray
    """
    d = cell.d
    rigid = np.stack([elevate(piece, d, 1, degree) for piece in rm_pieces(cell)])
    basis = rigid.reshape(-1, rigid.shape[-1])
    mass = piecewise_mass_matrix(cell, degree, ncomp=d)
    gram = basis.T @ mass @ basis
    return basis @ np.linalg.solve(gram, basis.T @ mass)


def simplex_rm_projector(geometry: GeometryPack, degree: int) -> np.ndarray:
    """The same projection on a single simplex."""
    d = geometry.dim
    rigid = elevate(rm_basis(geometry), d, 1, degree)
    basis = rigid.reshape(-1, rigid.shape[-1])
    mass = np.kron(mass_matrix(d, degree, geometry.volume), np.eye(d))
    return basis @ np.linalg.solve(basis.T @ mass @ basis, basis.T @ mass)


def coarse_fit_residual(cell: SplitCell, fields: np.ndarray, degree: int, coarse_degree: int,
                        ncomp: int) -> float:
    """
    Relative distance of piecewise fields from coarse polynomials of a lower degree.

    :param fields: Flat piecewise coefficients of shape (nflat, n).
    :type fields: np.ndarray
    :return: Relative least-squares residual.
    :rtype: float
    """
    if fields.shape[1] == 0:
        return 0.0
    d = cell.d
    nalpha = num_bernstein(d, coarse_degree)
    coarse = np.einsum('ab,st->asbt', np.eye(nalpha), np.eye(ncomp)).reshape(nalpha, ncomp, -1)
    pieces = elevate_pieces(coarse_to_pieces(coarse, d, coarse_degree), d, coarse_degree, degree)
    _, residual = linalg.solve_least_squares(flat(pieces), fields)
    return residual
