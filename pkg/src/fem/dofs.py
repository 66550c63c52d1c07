"""
Degrees of freedom of the local stress spaces.

A DoF is a linear functional on piecewise coefficients; its row acts on the
flat layout of PiecewisePoly. Face DoFs use tests defined in the vertex order
shared by both cells of a face, so that the two sides agree up to the sign of
the outward normal.
"""
from dataclasses import dataclass
from enum import Enum
from math import factorial

import numpy as np
from scipy import linalg as sla

from src.fem import spaces
from src.fem.poly import bernstein_eval, mass_matrix, normal_map, num_bernstein, num_sym, sym_contract, sym_weights
from src.fem.quadrature import quad_rule
from src.geometry.frames import global_normal_frame
from src.geometry.mesh import SplitCell
from src.geometry.simplex import IndexSet, interior_subsimplices


class DoFKind(str, Enum):
    face_moment = 'face_moment'
    interior_moment = 'interior_moment'
    nn_moment = 'nn_moment'
    tn_moment = 'tn_moment'
    vertex_value = 'vertex_value'
    barycenter_value = 'barycenter_value'


@dataclass(frozen=True, eq=False)
class DoFFunctional:
    """
    One degree of freedom.

    `face` is the local coarse face (index of the opposite vertex) for DoFs
    shared with a neighbour and None for interior ones; `flips` tells whether
    the value changes sign when the normal of the face is reversed.
    """
    kind: DoFKind
    locus: IndexSet
    row: np.ndarray
    face: int | None = None
    flips: bool = False

    @property
    def shared(self) -> bool:
        return self.face is not None

    def __call__(self, coeffs: np.ndarray) -> float:
        return float(self.row @ np.asarray(coeffs).reshape(-1))


def natural_orders(d: int) -> tuple[tuple[int, ...], ...]:
    """Face vertex orders of a lone cell: increasing local labels."""
    return tuple(tuple(v for v in range(d + 1) if v != m) for m in range(d + 1))


def _embed(cell: SplitCell, piece: int, block: np.ndarray, p: int) -> np.ndarray:
    """(nt, nα, nsym) rows of one subcell -> (nt, nflat)."""
    d = cell.d
    out = np.zeros((block.shape[0], d + 1, num_bernstein(d, p), num_sym(d)))
    out[:, piece] = block
    return out.reshape(block.shape[0], -1)


def subsimplex_rows(cell: SplitCell, p: int, piece: int, labels, tests, degree: int) -> np.ndarray:
    """
    Mean-value moments over a subsimplex of T_piece.

    :param labels: Split labels of the subsimplex, in the order the tests use.
    :type labels: tuple
    :param tests: Callable (x, bary) -> weights of shape (npts, nsym, nt), bary in the order of labels.
    :type tests: Callable
    :param degree: Polynomial degree of the tests.
    :type degree: int
    :return: Rows of shape (nt, nflat).
    :rtype: np.ndarray
    """
    labels = tuple(labels)
    ell = len(labels) - 1
    rule = quad_rule(ell, p + degree)
    weights = rule.weights * factorial(ell)
    mu = cell.sub_bary(piece, labels, rule.points)
    x = cell.label_points(labels, rule.points)
    block = np.einsum('q,qa,qst->tas', weights, bernstein_eval(p, mu), tests(x, rule.points))
    return _embed(cell, piece, block, p)


def face_moments(cell: SplitCell, p: int, k: int, orders=None) -> list[DoFFunctional]:
    """
    ⨍_F (τ n) · q for q ∈ P_k(F; R^d), Bernstein basis of F in the shared order times e_j.
    """
    d = cell.d
    orders = natural_orders(d) if orders is None else orders
    dofs = []
    for m in range(d + 1):
        nmap = normal_map(cell.geometry.normals[m])

        def tests(x, bary, nmap=nmap):
            return np.einsum('qb,sj->qsbj', bernstein_eval(k, bary), nmap).reshape(len(x), nmap.shape[0], -1)

        rows = subsimplex_rows(cell, p, m, orders[m], tests, k)
        locus = IndexSet.of(orders[m], d)
        dofs += [DoFFunctional(DoFKind.face_moment, locus, row, face=m, flips=True) for row in rows]
    return dofs


def face_normal_moments(cell: SplitCell, p: int, orders=None) -> list[DoFFunctional]:
    """⨍_F (τ n)·(q n) for q ∈ P_1(F); invariant under normal reversal."""
    d = cell.d
    orders = natural_orders(d) if orders is None else orders
    dofs = []
    for m in range(d + 1):
        normal = cell.geometry.normals[m]
        weights = sym_contract(normal, normal)

        def tests(x, bary, weights=weights):
            return np.einsum('qb,s->qsb', bernstein_eval(1, bary), weights)

        rows = subsimplex_rows(cell, p, m, orders[m], tests, 1)
        locus = IndexSet.of(orders[m], d)
        dofs += [DoFFunctional(DoFKind.face_moment, locus, row, face=m, flips=False) for row in rows]
    return dofs


def face_rm_moments(cell: SplitCell, p: int, orders=None) -> list[DoFFunctional]:
    """⨍_F (τ n) · r for r ∈ RM(F), the tangential rigid motions of the face."""
    d = cell.d
    orders = natural_orders(d) if orders is None else orders
    dofs = []
    for m in range(d + 1):
        nmap = normal_map(cell.geometry.normals[m])
        points = cell.vertices[list(orders[m])]

        def tests(x, bary, nmap=nmap, points=points):
            return np.einsum('sj,qjt->qst', nmap, spaces.face_rm_fields(points, x))

        rows = subsimplex_rows(cell, p, m, orders[m], tests, 1)
        locus = IndexSet.of(orders[m], d)
        dofs += [DoFFunctional(DoFKind.face_moment, locus, row, face=m, flips=True) for row in rows]
    return dofs


def vertex_values(cell: SplitCell, p: int, orders=None) -> list[DoFFunctional]:
    """(τ n_F)(v) · e_j for every coarse face F and vertex v of F, evaluated from T_m."""
    d = cell.d
    orders = natural_orders(d) if orders is None else orders
    dofs = []
    for m in range(d + 1):
        nmap = normal_map(cell.geometry.normals[m])
        for v in orders[m]:
            basis = bernstein_eval(p, cell.sub_bary(m, (v,), np.ones((1, 1))))[0]
            block = np.einsum('a,sj->jas', basis, nmap)
            locus = IndexSet((v,), d)
            dofs += [DoFFunctional(DoFKind.vertex_value, locus, row, face=m, flips=True)
                     for row in _embed(cell, m, block, p)]
    return dofs


def barycenter_values(cell: SplitCell, p: int) -> list[DoFFunctional]:
    """τ(v_c) from T_0, one DoF per symmetric component."""
    d, nsym = cell.d, num_sym(cell.d)
    basis = bernstein_eval(p, cell.sub_bary(0, (cell.c,), np.ones((1, 1))))[0]
    block = np.einsum('a,st->tas', basis, np.eye(nsym))
    locus = IndexSet((cell.c,), d)
    return [DoFFunctional(DoFKind.barycenter_value, locus, row) for row in _embed(cell, 0, block, p)]


def l2_moments(cell: SplitCell, p: int, tests: np.ndarray, q: int, kind: DoFKind = DoFKind.interior_moment,
               locus: IndexSet | None = None) -> list[DoFFunctional]:
    """
    Exact L² moments (τ, η)_T / |T| against piecewise symmetric tests.

    :param cell: Split cell.
    :type cell: SplitCell
    :param p: Degree of the functions the rows act on.
    :type p: int
    :param tests: Piecewise tests of shape (d+1, nα_q, nsym, nt).
    :type tests: np.ndarray
    :param q: Degree of the tests.
    :type q: int
    :return: One interior DoF per test.
    :rtype: list[DoFFunctional]
    """
    d = cell.d
    locus = IndexSet(tuple(range(d + 2)), d) if locus is None else locus
    rows = np.zeros((tests.shape[-1], d + 1, num_bernstein(d, p), num_sym(d)))
    for i, geometry in enumerate(cell.sub_geometry):
        mass = mass_matrix(d, p, geometry.volume, q)
        rows[:, i] = np.einsum('ab,bst,s->tas', mass, tests[i], sym_weights(d))
    rows = rows.reshape(tests.shape[-1], int(np.prod(rows.shape[1:]))) / cell.volume
    return [DoFFunctional(kind, locus, row) for row in rows]


def coarse_moments(cell: SplitCell, p: int, m: int) -> list[DoFFunctional]:
    """Moments against P_m(T;S); nothing for m < 0."""
    if m < 0:
        return []
    return l2_moments(cell, p, spaces.coarse_poly_space(cell, m), m)


def orthonormal_moments(cell: SplitCell, p: int, basis: np.ndarray) -> list[DoFFunctional]:
    """Moments against an L²-orthonormalized version of the flat piecewise functions in basis."""
    if basis.shape[1] == 0:
        return []
    gram = basis.T @ spaces.piecewise_mass_matrix(cell, p) @ basis / cell.volume
    factor = sla.cholesky(gram, lower=False)
    tests = sla.solve_triangular(factor, basis.T, trans='T', lower=False).T
    return l2_moments(cell, p, spaces.unflat(tests, cell, p), p)


def nn_moments(cell: SplitCell, p: int, k: int) -> list[DoFFunctional]:
    """
    ⨍_f n_aᵀ τ n_b q for interior f ∋ c with ℓ <= k-1, q ∈ P_{k-ℓ-1}(f), a <= b.

    The normal frame of f is the global one, and τ is taken from the first subcell containing f.
    """
    d = cell.d
    dofs = []
    for ell in range(min(d - 1, k - 1) + 1):
        for f in interior_subsimplices(d, ell):
            normals = global_normal_frame(f, cell)
            weights = np.array([sym_contract(normals[a], normals[b])
                                for a in range(len(normals)) for b in range(a, len(normals))]).T
            degree = k - ell - 1

            def tests(x, bary, weights=weights, degree=degree):
                return np.einsum('qg,sw->qsgw', bernstein_eval(degree, bary), weights).reshape(len(x), len(weights), -1)

            piece = cell.pieces_containing(tuple(f))[0]
            rows = subsimplex_rows(cell, p, piece, tuple(f), tests, degree)
            dofs += [DoFFunctional(DoFKind.nn_moment, f, row) for row in rows]
    return dofs


def tn_moments(cell: SplitCell, p: int, k: int) -> list[DoFFunctional]:
    """⨍_F (τ|_{T_i} n_F) · q for interior faces F_ij and q ∈ ND_{k-2}(F)."""
    if k < 2:
        return []
    dofs = []
    for i, j, face, normal in cell.interior_faces:
        labels = tuple(face)
        nd = spaces.nd_space(cell.vertices[list(labels)], k - 2, face)
        nmap = normal_map(normal)

        def tests(x, bary, nd=nd, nmap=nmap):
            return np.einsum('sj,qjt->qst', nmap, nd(x))

        rows = subsimplex_rows(cell, p, i, labels, tests, k - 1)
        dofs += [DoFFunctional(DoFKind.tn_moment, face, row) for row in rows]
    return dofs


def piece_bubble_moments(cell: SplitCell, p: int, k: int) -> list[DoFFunctional]:
    """Moments against B_k(div, T_i; S) on every subcell."""
    dofs = []
    for i, geometry in enumerate(cell.sub_geometry):
        bubbles = spaces.embed_piece(cell, i, spaces.div_bubble_space(geometry, k, certify=False))
        locus = IndexSet(tuple(cell.sub_labels(i)), cell.d)
        dofs += l2_moments(cell, p, bubbles, k, locus=locus)
    return dofs


def rows_of(dofs: list[DoFFunctional]) -> np.ndarray:
    if not dofs:
        return np.zeros((0, 0))
    return np.vstack([dof.row for dof in dofs])
