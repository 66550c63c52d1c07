"""
Local H(div)-conforming symmetric stress elements on split cells.

An element is a set of generators (the span of its summands, possibly cut
down by defining constraints), a list of DoFs and the nodal basis dual to
them. Everything is represented as piecewise Bernstein coefficients at one
degree per family.
"""
import logging
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np
from scipy import linalg as sla

from src.conf.config import settings
from src.exceptions import CertificationError, ConstructionError, DomainError, RangeError, UnisolvenceError
from src.fem import dofs as dof_sets
from src.fem import linalg, spaces
from src.fem.dofs import DoFFunctional
from src.fem.poly import (PiecewisePoly, coarse_to_pieces, mass_matrix, normal_map, num_bernstein, num_sym, rm_basis,
                         sym_outer)
from src.fem.quadrature import quad_rule
from src.geometry.mesh import GeometryPack, SplitCell
from src.schemas import CertificateReport, DimensionReport, Family

logger = logging.getLogger(__name__)

VARIANTS = ('moment', 'nodal')
_CACHE_LIMIT = 1024
_cache: dict = {}


def representation_degree(family: Family, d: int, k: int) -> int:
    """Polynomial degree per subcell used to store the shape functions."""
    family = Family(family)
    if family.linear:
        return 1
    if family in (Family.high_phi_nn, Family.high_psi):
        return max(k, d + 1)
    if family == Family.rt_plus:
        return k + 1
    return k


def expected_dimension(family: Family, d: int, k: int) -> int:
    """
    Closed-form dimension of a family.

    :param family: Element family.
    :type family: Family
    :param d: Dimension.
    :type d: int
    :param k: Degree.
    :type k: int
    :return: The dimension of the local space.
    :rtype: int
    """
    family = Family(family)
    nsym = num_sym(d)
    if family == Family.linear_phi_split:
        return nsym * (2 * d + 1)
    if family == Family.linear_reduced:
        return d * d * (d + 1)
    if family == Family.linear_rm:
        return d * (d + 1) ** 2 // 2
    split = (d + 1) * comb(k + d - 1, k) * ((d + 1) * k + d) // 2
    if family == Family.high_phi_split:
        return split
    if family == Family.high_phi_nn:
        return split + nsym * nn_multipliers(d, k)
    if family in (Family.high_reduced, Family.high_psi):
        return nsym * (comb(k + d, d) + comb(k + d - 2, d - 2))
    return nsym * (comb(k + d, d) + comb(k + d - 1, d - 1))


def generator_dimension(family: Family, d: int, k: int) -> int:
    """Dimension of the span of the summands, before defining constraints."""
    family = Family(family)
    if family in (Family.linear_reduced, Family.linear_rm):
        return expected_dimension(Family.linear_phi_split, d, 1)
    return expected_dimension(family, d, k)


def check_admissible(family: Family, d: int, k: int, variant: str = 'moment') -> Family:
    family = Family(family)
    if d not in (2, 3):
        raise DomainError(f"elements are built for d in (2, 3), got {d}")
    if not family.admissible(k):
        raise DomainError(f"family {family.value} is not defined for k={k}")
    if variant not in VARIANTS:
        raise DomainError(f"unknown DoF variant {variant!r}")
    if variant == 'nodal' and family != Family.linear_phi_split:
        raise DomainError("the nodal DoF variant exists for linear-phi-split only")
    return family


# ---------------------------------------------------------------- Ext operators

def ext_nn(geometry: GeometryPack, bnn: np.ndarray, degree: int | None = None) -> np.ndarray:
    """
    Corrects nn face bubbles on one simplex so that their divergence is a rigid motion.

    Finds b_0 ∈ B_{d+1}(div, T; S) with div b_0 = (I - Q_RM) div b^nn and returns b^nn - b_0,
    which keeps every normal trace on ∂T.

    :param geometry: The simplex carrying the bubble.
    :type geometry: GeometryPack
    :param bnn: Coefficients of shape (nα, nsym) or (nα, nsym, n) at the given degree.
    :type bnn: np.ndarray
    :param degree: Degree of bnn, d+1 by default.
    :type degree: int
    :return: The extensions, same shape as bnn.
    :rtype: np.ndarray
    """
    d = geometry.dim
    degree = d + 1 if degree is None else degree
    bnn = np.asarray(bnn, dtype=float)
    batch = bnn.reshape(bnn.shape[0] * bnn.shape[1], -1)
    bubbles = spaces.div_bubble_space(geometry, degree, certify=False)
    bubbles = bubbles.reshape(-1, bubbles.shape[2])
    div = spaces.simplex_div_matrix(geometry, degree)
    target = div @ batch
    rhs = target - spaces.simplex_rm_projector(geometry, degree - 1) @ target
    image = div @ bubbles
    x, _ = linalg.solve_least_squares(image, rhs)
    residual = _relative(image @ x - rhs, target)
    if residual > settings.constraint_tol:
        raise RangeError(f"nn extension: least-squares residual {residual:.2e}")
    return (batch - bubbles @ x).reshape(bnn.shape)


def nn_multipliers(d: int, k: int) -> int:
    """
    Number of face multipliers q per interior face in Ext(b_F q n_F ⊗ n_F).

    All of P_1(F) for k < d. For k = d the constants are dropped: b_F n_F ⊗ n_F already has the
    trace of b_F^R n_F ⊗ n_F, which lies in the split space. For k > d the whole enrichment lies
    in the split space.
    """
    if k < d:
        return d
    return d - 1 if k == d else 0


def nn_enrichment(cell: SplitCell, k: int) -> np.ndarray:
    """
    Ext(b_F q n_F ⊗ n_F) for every interior face F_ij, extended on T_i and T_j separately.

    q runs over P_1(F) for k < d and over its mean-free part λ_v - λ_{v_0} for k = d.

    :return: Generators of shape (d+1, nα, nsym, d(d+1)/2 * nn_multipliers(d, k)) at degree d+1.
    :rtype: np.ndarray
    """
    d = cell.d
    parts = []
    if nn_multipliers(d, k) == 0:
        return np.zeros((d + 1, num_bernstein(d, d + 1), num_sym(d), 0))
    for i, j, face, normal in cell.interior_faces:
        scalars = spaces.split_bubble_monomials(cell, tuple(face), 1)
        if k == d:
            scalars = scalars[..., 1:] - scalars[..., :1]
        gens = spaces.combine(scalars, sym_outer(normal, normal)[:, None])
        for piece in (i, j):
            gens[piece] = ext_nn(cell.sub_geometry[piece], gens[piece], d + 1)
        parts.append(gens)
    return np.concatenate(parts, axis=-1)


def bubble_subspace(cell: SplitCell, k: int) -> np.ndarray:
    """
    Σ_{k,φ,nn}(T^R;S) ∩ H_0(div, T; S) at degree max(k, d+1).

    :return: Orthonormal flat basis of shape (nflat, nz).
    :rtype: np.ndarray
    """
    p = representation_degree(Family.high_phi_nn, cell.d, k)
    basis = linalg.column_basis(np.hstack(list(family_summands(Family.high_phi_nn, cell, k).values())))
    trace = spaces.coarse_boundary_trace_matrix(cell, p) @ basis
    return basis @ linalg.null_space(trace, ncols=basis.shape[1])


def bubble_div_rank(d: int, k: int) -> int:
    """Rank of div on the bubble subspace: dim P_{k-1}^{-1}(T^R;R^d) minus dim RM."""
    return d * (d + 1) * comb(k - 1 + d, d) - num_sym(d)


def ext_psi(cell: SplitCell, k: int, phi: np.ndarray, bubbles: np.ndarray | None = None) -> np.ndarray:
    """
    ψ = φ - b_0 with b_0 in the bubble subspace and div b_0 = (I - Q_RM) div φ.

    :param cell: Split cell.
    :type cell: SplitCell
    :param k: Degree, >= 2.
    :type k: int
    :param phi: Flat generators of shape (nflat, n) at degree max(k, d+1).
    :type phi: np.ndarray
    :param bubbles: A precomputed bubble subspace.
    :type bubbles: np.ndarray
    :return: Flat ψ generators of the same shape; ψ n = φ n on ∂T and div ψ ∈ RM(T).
    :rtype: np.ndarray
    """
    if k < 2:
        raise DomainError(f"ext_psi needs k >= 2, got {k}")
    d = cell.d
    p = representation_degree(Family.high_psi, d, k)
    bubbles = bubble_subspace(cell, k) if bubbles is None else bubbles
    div = spaces.piecewise_div_matrix(cell, p)
    image = div @ bubbles
    rank = linalg.numerical_rank(image)
    if rank != bubble_div_rank(d, k):
        raise CertificationError(f"div of the bubble subspace has rank {rank}, expected {bubble_div_rank(d, k)}")
    target = div @ phi
    rhs = target - spaces.rm_projector(cell, p - 1) @ target
    x, _ = linalg.solve_least_squares(image, rhs)
    residual = _relative(image @ x - rhs, target)
    if residual > settings.constraint_tol:
        raise RangeError(f"psi extension: least-squares residual {residual:.2e}")
    return phi - bubbles @ x


def _relative(defect: np.ndarray, reference: np.ndarray) -> float:
    scale = float(np.abs(reference).max(initial=0.0))
    if scale == 0.0:
        return float(np.abs(defect).max(initial=0.0))
    return float(np.abs(defect).max(initial=0.0)) / scale


# ---------------------------------------------------------------- families

def family_summands(family: Family, cell: SplitCell, k: int) -> dict[str, np.ndarray]:
    """
    The summands spanning a family, as flat generators at the representation degree.

    :param family: Element family.
    :type family: Family
    :param cell: Split cell.
    :type cell: SplitCell
    :param k: Degree.
    :type k: int
    :return: Summand name -> (nflat, n).
    :rtype: dict
    """
    family = Family(family)
    d = cell.d
    p = representation_degree(family, d, k)

    def lift(gens, degree):
        return spaces.flat(spaces.elevate_pieces(gens, d, degree, p))

    if family.linear:
        return {name: spaces.flat(gens) for name, gens in spaces.linear_summands(cell).items()}
    if family in (Family.high_phi_split, Family.high_phi_nn):
        summands = {name: lift(gens, k) for name, gens in spaces.high_summands(cell, k).items()}
        if family == Family.high_phi_nn:
            summands['nn'] = lift(nn_enrichment(cell, k), d + 1)
        return summands
    if family == Family.high_reduced:
        return {'coarse': lift(spaces.coarse_poly_space(cell, k), k), 'phi': lift(spaces.phi_summand(cell, k), k)}
    if family == Family.high_psi:
        return {'coarse': lift(spaces.coarse_poly_space(cell, k), k),
                'psi': ext_psi(cell, k, lift(spaces.phi_summand(cell, k), k))}
    bubbles = coarse_to_pieces(spaces.div_bubble_space(cell.geometry, k + 1), d, k + 1)
    return {'bubbles': lift(bubbles, k + 1), 'normal': lift(spaces.normal_summand(cell, k), k),
            'phi': lift(spaces.phi_summand(cell, k), k)}


def reduced_constraints(cell: SplitCell, p: int) -> np.ndarray:
    """Rows of τ ↦ (div τ, q)_T for q in P_1(T;R^d) ⊖ RM(T)."""
    d = cell.d
    tests = spaces.flat(spaces.coarse_vector_space(cell, 1))
    div = spaces.piecewise_div_matrix(cell, p)
    mass = spaces.piecewise_mass_matrix(cell, p - 1, 1, ncomp=d)
    moments = tests.T @ mass.T @ div
    rigid = rm_basis(cell.geometry)
    rigid = rigid.reshape(-1, rigid.shape[-1])
    gram = np.kron(mass_matrix(d, 1, cell.geometry.volume), np.eye(d))
    complement = linalg.null_space(rigid.T @ gram)
    return complement.T @ moments / cell.volume


def face_rm_constraints(cell: SplitCell, p: int, orders=None) -> np.ndarray:
    """Rows of τ ↦ ⨍_F (τ n)·q for q in P_1(F;T^F) ⊖ RM(F), on every coarse face."""
    d = cell.d
    orders = dof_sets.natural_orders(d) if orders is None else orders
    rows = []
    for m in range(d + 1):
        labels = orders[m]
        points = cell.vertices[list(labels)]
        nmap = normal_map(cell.geometry.normals[m])

        def tests(x, bary, points=points, nmap=nmap):
            return np.einsum('sj,qjt->qst', nmap, spaces.face_tangential_p1(points, x))

        moments = dof_sets.subsimplex_rows(cell, p, m, labels, tests, 1)
        rule = quad_rule(d - 1, 2)
        x = cell.label_points(labels, rule.points)
        linear = spaces.face_tangential_p1(points, x)
        rigid = spaces.face_rm_fields(points, x)
        coords, *_ = np.linalg.lstsq(linear.reshape(-1, linear.shape[2]), rigid.reshape(-1, rigid.shape[2]),
                                     rcond=None)
        gram = np.einsum('q,qjs,qjt->st', rule.weights, linear, linear)
        rows.append(linalg.null_space(coords.T @ gram).T @ moments)
    return np.vstack(rows)


def defining_constraints(family: Family, cell: SplitCell, p: int, orders=None) -> np.ndarray | None:
    if family == Family.linear_reduced:
        return reduced_constraints(cell, p)
    if family == Family.linear_rm:
        return np.vstack([reduced_constraints(cell, p), face_rm_constraints(cell, p, orders)])
    return None


def family_dofs(family: Family, cell: SplitCell, k: int, orders=None, variant: str = 'moment',
                bubbles: np.ndarray | None = None) -> list[DoFFunctional]:
    """
    The DoFs of a family in a fixed order: shared face DoFs first, then interior ones.
    """
    family = Family(family)
    p = representation_degree(family, cell.d, k)
    if family == Family.linear_phi_split:
        if variant == 'nodal':
            return dof_sets.vertex_values(cell, p, orders) + dof_sets.barycenter_values(cell, p)
        return dof_sets.face_moments(cell, p, 1, orders) + dof_sets.coarse_moments(cell, p, 0)
    if family == Family.linear_reduced:
        return dof_sets.face_moments(cell, p, 1, orders)
    if family == Family.linear_rm:
        return dof_sets.face_normal_moments(cell, p, orders) + dof_sets.face_rm_moments(cell, p, orders)
    faces = dof_sets.face_moments(cell, p, k, orders)
    if family == Family.high_phi_split:
        return (faces + dof_sets.nn_moments(cell, p, k) + dof_sets.tn_moments(cell, p, k)
                + dof_sets.piece_bubble_moments(cell, p, k))
    if family == Family.high_phi_nn:
        bubbles = bubble_subspace(cell, k) if bubbles is None else bubbles
        return faces + dof_sets.orthonormal_moments(cell, p, bubbles)
    if family in (Family.high_reduced, Family.high_psi):
        return faces + dof_sets.coarse_moments(cell, p, k - 2)
    return faces + dof_sets.coarse_moments(cell, p, k - 1)


# ---------------------------------------------------------------- element spaces

@dataclass(frozen=True, eq=False)
class ElementSpace:
    """
    A local element: orthonormal generators, DoFs, the DoF matrix and the nodal basis.

    Columns of `nodal` are the shape functions; dofs[a](nodal[:, b]) = δ_ab.
    """
    family: Family
    cell: SplitCell
    k: int
    degree: int
    variant: str
    generators: np.ndarray
    dofs: tuple[DoFFunctional, ...]
    vandermonde: np.ndarray
    nodal: np.ndarray
    summand_ranks: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.cell.d

    @property
    def dim(self) -> int:
        return self.nodal.shape[1]

    def shape_function(self, b: int) -> PiecewisePoly:
        return PiecewisePoly.from_flat(self.cell, self.degree, num_sym(self.d), self.nodal[:, b])

    def shape_functions(self) -> list[PiecewisePoly]:
        return [self.shape_function(b) for b in range(self.dim)]

    def face_dofs(self, m: int) -> list[int]:
        return [a for a, dof in enumerate(self.dofs) if dof.face == m]

    def interior_dofs(self) -> list[int]:
        return [a for a, dof in enumerate(self.dofs) if dof.face is None]

    def interpolate(self, coeffs: np.ndarray) -> np.ndarray:
        """DoF values of a piecewise field at the element degree."""
        return dof_sets.rows_of(list(self.dofs)) @ np.asarray(coeffs).reshape(-1)


def _signature(cell: SplitCell) -> bytes:
    edges = cell.coarse_vertices[1:] - cell.coarse_vertices[0]
    return np.round(edges, 12).tobytes()


def build_element(family: Family, cell: SplitCell, k: int, orders=None, variant: str = 'moment') -> ElementSpace:
    """
    Builds and certifies the element of a family on one split cell.

    :param family: Element family.
    :type family: Family
    :param cell: Split cell.
    :type cell: SplitCell
    :param k: Degree; 1 for the linear families.
    :type k: int
    :param orders: Per local face, the face labels in the order shared with the neighbour.
    :type orders: tuple
    :param variant: 'moment' or, for linear-phi-split, 'nodal'.
    :type variant: str
    :return: The element space.
    :rtype: ElementSpace
    """
    family = check_admissible(family, cell.d, k, variant)
    orders = dof_sets.natural_orders(cell.d) if orders is None else tuple(tuple(o) for o in orders)
    key = (family, k, variant, _signature(cell), orders)
    if settings.element_cache and key in _cache:
        return replace(_cache[key], cell=cell)
    space = _construct(family, cell, k, orders, variant)
    if settings.element_cache:
        if len(_cache) >= _CACHE_LIMIT:
            _cache.clear()
        _cache[key] = space
    return space


def clear_cache() -> None:
    _cache.clear()


def _construct(family: Family, cell: SplitCell, k: int, orders, variant: str) -> ElementSpace:
    d = cell.d
    p = representation_degree(family, d, k)
    summands = family_summands(family, cell, k)
    report = _direct_sum(family, d, k, summands)
    generators = linalg.column_basis(np.hstack(list(summands.values())))

    constraints = defining_constraints(family, cell, p, orders)
    if constraints is not None:
        generators = linalg.column_basis(generators @ linalg.null_space(constraints @ generators,
                                                                         ncols=generators.shape[1]))
        residual = float(np.abs(constraints @ generators).max(initial=0.0))
        if residual > settings.constraint_tol * max(1.0, float(np.abs(constraints).max())):
            raise ConstructionError(f"{family.value}: defining constraint residual {residual:.2e}")
    if family == Family.high_psi:
        div = spaces.piecewise_div_matrix(cell, p) @ generators
        residual = spaces.coarse_fit_residual(cell, div, p - 1, k - 1, d)
        if residual > settings.constraint_tol:
            raise ConstructionError(f"high-psi: divergence is not a coarse polynomial, residual {residual:.2e}")

    expected = expected_dimension(family, d, k)
    if generators.shape[1] != expected:
        raise CertificationError(f"{family.value}, d={d}, k={k}: constructed dimension {generators.shape[1]}, "
                                 f"expected {expected}")

    bubbles = bubble_subspace(cell, k) if family == Family.high_phi_nn else None
    dofs = family_dofs(family, cell, k, orders, variant, bubbles)
    vandermonde = dof_sets.rows_of(dofs) @ generators
    if vandermonde.shape[0] != vandermonde.shape[1]:
        raise UnisolvenceError(f"{family.value}: {vandermonde.shape[0]} DoFs for a space of dimension "
                               f"{vandermonde.shape[1]}")
    condition, smallest = linalg.condition_number(vandermonde)
    if not condition <= settings.cond_max:
        raise UnisolvenceError(f"{family.value}, d={d}, k={k}: DoF matrix condition {condition:.3e}")
    logger.debug("element %s d=%d k=%d: dim %d, cond %.3e, min singular value %.3e",
                 family.value, d, k, expected, condition, smallest)
    nodal = sla.solve(vandermonde.T, generators.T).T
    return ElementSpace(family=family, cell=cell, k=k, degree=p, variant=variant, generators=generators,
                        dofs=tuple(dofs), vandermonde=vandermonde, nodal=nodal,
                        summand_ranks={name: report[name] for name in summands})


def _direct_sum(family: Family, d: int, k: int, summands: dict) -> dict:
    ranks = {name: linalg.numerical_rank(gens) for name, gens in summands.items()}
    count = sum(gens.shape[1] for gens in summands.values())
    total = linalg.numerical_rank(np.hstack(list(summands.values())))
    expected = generator_dimension(family, d, k)
    if family == Family.high_phi_nn and nn_multipliers(d, k) < d:
        logger.info("high-phi-nn with k=%d: %d of %d nn multipliers per face outside the split space",
                    k, nn_multipliers(d, k), d)
    if total != count:
        raise CertificationError(f"{family.value}, d={d}, k={k}: summands are not direct ({count} generators, "
                                 f"rank {total})")
    if total != expected:
        raise CertificationError(f"{family.value}, d={d}, k={k}: summands span {total}, expected {expected}")
    return ranks


# ---------------------------------------------------------------- certificates

def direct_sum_certificate(family: Family, cell: SplitCell, k: int) -> DimensionReport:
    """Generator count, rank and closed-form dimension of the summands of a family."""
    family = check_admissible(family, cell.d, k)
    gens = np.hstack(list(family_summands(family, cell, k).values()))
    rank = linalg.numerical_rank(gens)
    return DimensionReport(family=family, d=cell.d, k=k, expected=generator_dimension(family, cell.d, k),
                           constructed=rank, generators=gens.shape[1], rank=rank)


def unisolvence_certificate(space: ElementSpace) -> CertificateReport:
    condition, smallest = linalg.condition_number(space.vandermonde)
    return CertificateReport(family=space.family, d=space.d, k=space.k, size=space.vandermonde.shape[0],
                             condition=condition, min_singular=smallest)


def conformity_residual(space: ElementSpace) -> float:
    """Largest normal jump of a shape function across the interior faces of T^R."""
    return max(space.shape_function(b).max_normal_jump() for b in range(space.dim))
