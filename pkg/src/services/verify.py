"""
Certification engine for the stress elements and the discrete pairs.

Every rank and dimension test is an exact integer comparison; tolerances enter
only through the relative singular-value thresholds of src.fem.linalg and the
residual bounds of the settings.
"""
import logging
from math import comb

import numpy as np
from scipy import linalg as sla
from scipy import sparse as sp

from src.conf.config import settings
from src.exceptions import CertificationError, DomainError, SolverError
from src.fem import dofs as dof_sets
from src.fem import linalg
from src.fem import spaces as local_spaces
from src.fem.elements import (build_element, bubble_subspace, bubble_div_rank, check_admissible, conformity_residual,
                              expected_dimension, ext_nn, ext_psi, family_summands,
                              representation_degree, unisolvence_certificate)
from src.fem.poly import bernstein_eval, elevate, mass_matrix, normal_map, num_sym, rm_basis, rm_pieces, sym_outer
from src.geometry.mesh import Mesh, SplitCell, two_cell_mesh, uniform_box_mesh
from src.schemas import (CheckResult, DimensionReport, DivVariant, Family, InfSupReport, Pair, RankReport,
                         ValidationReport)
from src.solver.assembly import face_coupling, face_measure, solve_hybrid
from src.solver.elasticity import manufactured_problem, solenoidal_displacement
from src.solver.postprocess import error_norms
from src.solver.spaces import (DisplacementSpace, GlobalSpace, broken_polynomial_space, displacement_space,
                               global_space, restricted_space)

logger = logging.getLogger(__name__)

BETA_ZERO = 1e-8
BOUNDED_RATIO = 1.5
ROBUST_FACTOR = 5.0

# stress family, displacement kind and the displacement degree as an offset from k (None: fixed degree 1)
PAIRS = {
    Pair.psi: (Family.high_psi, 'coarse', -1),
    Pair.reduced: (Family.high_reduced, 'coarse', -1),
    Pair.nn: (Family.high_phi_nn, 'split', -1),
    Pair.split: (Family.linear_phi_split, 'coarse', None),
    Pair.split_p0: (Family.linear_phi_split, 'split', 0),
    Pair.linear_reduced: (Family.linear_reduced, 'rm', None),
    Pair.rm: (Family.linear_rm, 'rm', None),
    Pair.plain: (None, 'coarse', -1),
}


def default_pair(family: Family) -> Pair:
    """The inf-sup pair a family is certified with."""
    family = Family(family)
    for pair, (candidate, _, _) in PAIRS.items():
        if candidate == family:
            return pair
    raise DomainError(f"no inf-sup pair is defined for {family.value}")


def default_variant(pair: Pair) -> DivVariant:
    return DivVariant.projected if Pair(pair) == Pair.reduced else DivVariant.exact


# ---------------------------------------------------------------- cells

def reference_cell(d: int) -> SplitCell:
    return SplitCell.from_vertices(np.vstack([np.zeros(d), np.eye(d)]))


def random_affine_cells(d: int, n: int, seed: int | None = None) -> list[SplitCell]:
    """
    Random affine images of the reference cell with bounded distortion.

    :param d: Dimension.
    :type d: int
    :param n: Number of cells.
    :type n: int
    :param seed: Seed of the generator, settings.random_seed by default.
    :type seed: int
    :return: The split cells.
    :rtype: list[SplitCell]
    """
    rng = np.random.default_rng(settings.random_seed if seed is None else seed)
    reference = np.vstack([np.zeros(d), np.eye(d)])
    cells = []
    while len(cells) < n:
        transform = np.eye(d) + 0.4 * rng.standard_normal((d, d))
        if abs(np.linalg.det(transform)) < 0.25 or np.linalg.cond(transform) > 10.0:
            continue
        shift = rng.uniform(-1.0, 1.0, d)
        cells.append(SplitCell.from_vertices(reference @ transform.T + shift))
    return cells


# ---------------------------------------------------------------- dimensions

def families_for(k: int) -> list[Family]:
    return [family for family in Family if family.admissible(k)]


def check_dimensions(d: int, k: int, cell: SplitCell | None = None, families=None) -> list[DimensionReport]:
    """
    Constructed dimensions of every family admissible at degree k against the closed forms.

    :param d: Dimension.
    :type d: int
    :param k: Degree.
    :type k: int
    :param cell: The cell to build on, the reference cell by default.
    :type cell: SplitCell
    :param families: Restrict to these families.
    :type families: Iterable[Family]
    :return: One report per family.
    :rtype: list[DimensionReport]
    """
    cell = reference_cell(d) if cell is None else cell
    reports = []
    for family in (families_for(k) if families is None else [Family(f) for f in families]):
        expected = expected_dimension(family, d, k)
        generators = sum(gens.shape[1] for gens in family_summands(family, cell, k).values())
        try:
            element = build_element(family, cell, k)
            constructed = element.dim
            rank = linalg.numerical_rank(element.generators)
        except CertificationError as err:
            logger.error("%s d=%d k=%d: %s", family.value, d, k, err)
            constructed, rank = -1, -1
        report = DimensionReport(family=family, d=d, k=k, expected=expected, constructed=constructed,
                                 generators=generators, rank=rank)
        logger.debug("dimension %s d=%d k=%d: expected %d, constructed %d", family.value, d, k, expected, constructed)
        reports.append(report)
    return reports


def formula_consistency(d: int) -> CheckResult:
    """The split formula at k=1 reproduces the dimension of the linear split element."""
    split = expected_dimension(Family.high_phi_split, d, 1)
    linear = num_sym(d) * (2 * d + 1)
    return CheckResult(name='formula-consistency', passed=split == linear,
                       detail=f'split formula at k=1: {split}, linear: {linear}', value=split)


# ---------------------------------------------------------------- divergence ranges

def _rm_moment_residual(image: np.ndarray, rigid: np.ndarray, mass: np.ndarray, volume: float) -> float:
    scale = max(float(np.abs(image).max(initial=0.0)), 1.0) * volume
    return float(np.abs(rigid.T @ mass @ image).max(initial=0.0)) / scale


def check_div_range(d: int, k: int, cell: SplitCell | None = None) -> list[RankReport]:
    """
    Rank of div on the bubbles B_k(div,T;S) and on the composite bubbles of T^R.

    Both images must be orthogonal to RM(T); the moment residuals are reported.
    """
    if k < 2:
        raise DomainError(f"div-range checks need k >= 2, got {k}")
    cell = reference_cell(d) if cell is None else cell
    geometry = cell.geometry
    nsym = num_sym(d)

    bubbles = local_spaces.div_bubble_space(geometry, k)
    bubbles = bubbles.reshape(-1, bubbles.shape[2])
    image = local_spaces.simplex_div_matrix(geometry, k) @ bubbles
    rigid = elevate(rm_basis(geometry), d, 1, k - 1).reshape(-1, nsym)
    mass = np.kron(mass_matrix(d, k - 1, geometry.volume), np.eye(d))
    coarse = RankReport(label='coarse-bubbles', d=d, k=k, rank=linalg.numerical_rank(image),
                        expected=d * comb(k - 1 + d, d) - nsym,
                        rm_residual=_rm_moment_residual(image, rigid, mass, geometry.volume))

    p = representation_degree(Family.high_phi_nn, d, k)
    split_bubbles = bubble_subspace(cell, k)
    image = local_spaces.piecewise_div_matrix(cell, p) @ split_bubbles
    rigid = np.stack([elevate(piece, d, 1, p - 1) for piece in rm_pieces(cell)]).reshape(-1, nsym)
    mass = local_spaces.piecewise_mass_matrix(cell, p - 1, ncomp=d)
    split = RankReport(label='split-bubbles', d=d, k=k, rank=linalg.numerical_rank(image),
                       expected=bubble_div_rank(d, k),
                       rm_residual=_rm_moment_residual(image, rigid, mass, geometry.volume))
    for report in (coarse, split):
        logger.debug("div range %s d=%d k=%d: rank %d, expected %d, RM residual %.2e",
                     report.label, d, k, report.rank, report.expected, report.rm_residual)
    return [coarse, split]


# ---------------------------------------------------------------- jump null spaces

def _normal_tests(k: int, normal: np.ndarray):
    nmap = normal_map(normal)

    def tests(x, bary):
        return np.einsum('qb,sj->qsbj', bernstein_eval(k, bary), nmap).reshape(len(x), nmap.shape[0], -1)

    return tests


def jump_rows(cell: SplitCell, k: int, pieces=None) -> np.ndarray:
    """
    Moments of [τ n] against P_k(F;R^d) over the interior faces of T^R, for τ ∈ P_k^{-1}(T^R;S).

    :param pieces: Restrict to the faces between these subcells.
    :type pieces: Iterable[int]
    :return: Rows acting on flat piecewise coefficients of degree k.
    :rtype: np.ndarray
    """
    keep = set(range(cell.d + 1) if pieces is None else pieces)
    rows = []
    for i, j, face, normal in cell.interior_faces:
        if i not in keep or j not in keep:
            continue
        tests = _normal_tests(k, normal)
        labels = tuple(face)
        rows.append(dof_sets.subsimplex_rows(cell, k, i, labels, tests, k)
                    - dof_sets.subsimplex_rows(cell, k, j, labels, tests, k))
    return np.vstack(rows)


def brute_force_intersection(cell: SplitCell, k: int) -> tuple[np.ndarray, int]:
    """
    H(div,T;S) ∩ P_k^{-1}(T^R;S) as the null space of the stacked jump moments.

    :param cell: Split cell.
    :type cell: SplitCell
    :param k: Degree, 0 <= k <= 3.
    :type k: int
    :return: Orthonormal basis (nflat, n) and its dimension.
    :rtype: tuple
    """
    if not 0 <= k <= 3:
        raise DomainError(f"brute-force intersections are computed for 0 <= k <= 3, got {k}")
    basis = linalg.null_space(jump_rows(cell, k))
    logger.debug("jump null space d=%d k=%d: dimension %d", cell.d, k, basis.shape[1])
    return basis, basis.shape[1]


def vertex_rigidity(cell: SplitCell, vertex: int) -> int:
    """
    Dimension of the piecewise constants on the subcells around a vertex that are normally
    continuous there and have τ n_F = 0 on the coarse faces through the vertex; zero when rigid.
    """
    d = cell.d
    pieces = [i for i in range(d + 1) if i != vertex]
    rows = [jump_rows(cell, 0, pieces)]
    for m in pieces:
        rows.append(dof_sets.subsimplex_rows(cell, 0, m, cell.coarse_face_labels(m),
                                             _normal_tests(0, cell.geometry.normals[m]), 0))
    nsym = num_sym(d)
    columns = np.concatenate([np.arange(i * nsym, (i + 1) * nsym) for i in pieces])
    return linalg.null_space(np.vstack(rows)[:, columns]).shape[1]


def check_rigidity(d: int, cell: SplitCell | None = None) -> list[CheckResult]:
    """Jump null spaces for k=0 and k=1, vertex rigidity and the linear bubbles λ_c^R P_0(T;S)."""
    cell = reference_cell(d) if cell is None else cell
    nsym = num_sym(d)
    results = []
    for k, expected in ((0, nsym), (1, nsym * (2 * d + 1))):
        _, dim = brute_force_intersection(cell, k)
        results.append(CheckResult(name=f'jump-nullspace-k{k}', passed=dim == expected,
                                   detail=f'dimension {dim}, expected {expected}', value=dim))
    free = [vertex_rigidity(cell, v) for v in range(d + 1)]
    results.append(CheckResult(name='vertex-rigidity', passed=not any(free),
                               detail=f'free dimensions per vertex {free}', value=max(free)))

    summands = local_spaces.linear_summands(cell)
    generators = linalg.column_basis(np.hstack([local_spaces.flat(gens) for gens in summands.values()]))
    trace = local_spaces.coarse_boundary_trace_matrix(cell, 1) @ generators
    bubbles = generators @ linalg.null_space(trace, ncols=generators.shape[1])
    barycenter = local_spaces.flat(summands['barycenter'])
    passed = bubbles.shape[1] == nsym and linalg.same_span(bubbles, barycenter)
    results.append(CheckResult(name='linear-bubbles', passed=passed,
                               detail=f'dimension {bubbles.shape[1]}, expected {nsym}', value=bubbles.shape[1]))
    return results


def conjecture_intersection(d: int, k: int) -> CheckResult:
    """Report-only comparison of the jump null space with the split dimension formula for k >= 2."""
    _, dim = brute_force_intersection(reference_cell(d), k)
    formula = expected_dimension(Family.high_phi_split, d, k)
    logger.info("jump null space d=%d k=%d: %d, split formula %d", d, k, dim, formula)
    return CheckResult(name=f'jump-nullspace-k{k}', passed=True,
                       detail=f'dimension {dim}, split formula {formula} (reported only)', value=dim)


# ---------------------------------------------------------------- Ext operators

def _relative_max(defect: np.ndarray, reference: np.ndarray) -> float:
    return float(np.abs(defect).max(initial=0.0)) / max(float(np.abs(reference).max(initial=0.0)), 1.0)


def check_ext(d: int, k: int, cell: SplitCell | None = None) -> list[CheckResult]:
    """
    Trace preservation and div ∈ RM for the nn and ψ extensions.
    """
    if k < 2:
        raise DomainError(f"Ext checks need k >= 2, got {k}")
    cell = reference_cell(d) if cell is None else cell
    trace_nn, rm_nn = 0.0, 0.0
    for i, j, face, normal in cell.interior_faces:
        scalars = local_spaces.split_bubble_monomials(cell, tuple(face), 1)
        gens = local_spaces.combine(scalars, sym_outer(normal, normal)[:, None])
        for piece in (i, j):
            geometry = cell.sub_geometry[piece]
            raw = gens[piece]
            extended = ext_nn(geometry, raw, d + 1)
            flat_raw, flat_ext = raw.reshape(-1, raw.shape[-1]), extended.reshape(-1, raw.shape[-1])
            trace = local_spaces.boundary_trace_matrix(geometry, d + 1)
            trace_nn = max(trace_nn, _relative_max(trace @ (flat_ext - flat_raw), flat_raw))
            div = local_spaces.simplex_div_matrix(geometry, d + 1) @ flat_ext
            rigid = local_spaces.simplex_rm_projector(geometry, d)
            rm_nn = max(rm_nn, _relative_max(div - rigid @ div, flat_raw))

    p = representation_degree(Family.high_psi, d, k)
    phi = local_spaces.flat(local_spaces.elevate_pieces(local_spaces.phi_summand(cell, k), d, k, p))
    psi = ext_psi(cell, k, phi)
    trace = local_spaces.coarse_boundary_trace_matrix(cell, p)
    trace_psi = _relative_max(trace @ (psi - phi), phi)
    div = local_spaces.piecewise_div_matrix(cell, p) @ psi
    rm_psi = _relative_max(div - local_spaces.rm_projector(cell, p - 1) @ div, phi)
    logger.debug("Ext d=%d k=%d: nn trace %.2e, nn rm %.2e, psi trace %.2e, psi rm %.2e",
                 d, k, trace_nn, rm_nn, trace_psi, rm_psi)
    return [
        CheckResult(name='ext-nn-trace', passed=trace_nn <= settings.trace_tol, value=trace_nn),
        CheckResult(name='ext-nn-div-rm', passed=rm_nn <= settings.rm_tol, value=rm_nn),
        CheckResult(name='ext-psi-trace', passed=trace_psi <= settings.trace_tol, value=trace_psi),
        CheckResult(name='ext-psi-div-rm', passed=rm_psi <= settings.rm_tol, value=rm_psi),
    ]


# ---------------------------------------------------------------- conformity

def _face_jumps(space: GlobalSpace, degree: int) -> list[np.ndarray]:
    """
    Per interior face, the mean-value moments of [τ n] against P_degree(F;R^d) for every global basis function.
    """
    mesh = space.mesh
    prolongation = space.prolongation.toarray()
    offsets = space.broken_offsets
    jumps = []
    for f in mesh.interior_faces:
        total = 0.0
        for c in mesh.face_cells[f]:
            m = int(np.flatnonzero(mesh.cell_faces[c] == f)[0])
            cell = mesh.split_cell(c)
            rows = face_coupling(cell, space.degree, degree, m, mesh.face_orders(c)[m]) / face_measure(cell, m)
            total = total + rows @ space.bases[c] @ prolongation[offsets[c]:offsets[c + 1]]
        jumps.append(total)
    return jumps


def check_conformity(family: Family, d: int, k: int, mesh: Mesh | None = None) -> CheckResult:
    """
    Largest normal jump of every global basis function across coarse and fine interior faces.

    :param family: Element family.
    :type family: Family
    :param d: Dimension.
    :type d: int
    :param k: Degree.
    :type k: int
    :param mesh: The mesh, two cells sharing a face by default.
    :type mesh: Mesh
    :return: The check with the largest jump as its value.
    :rtype: CheckResult
    """
    family = check_admissible(family, d, k)
    mesh = two_cell_mesh(d) if mesh is None else mesh
    space = global_space(mesh, family, k)
    scale = max(float(np.abs(space.prolongation).max()), 1.0)
    coarse = max((float(np.abs(jump).max(initial=0.0)) for jump in _face_jumps(space, space.degree)), default=0.0)
    fine = max(conformity_residual(element) for element in space.elements)
    worst = max(coarse / scale, fine)
    logger.debug("conformity %s d=%d k=%d: coarse jump %.2e, fine jump %.2e", family.value, d, k, coarse, fine)
    return CheckResult(name='conformity', passed=worst <= settings.jump_tol,
                       detail=f'coarse {coarse:.2e}, fine {fine:.2e}', value=worst)


def conforming_polynomial_space(mesh: Mesh, k: int) -> GlobalSpace:
    """
    P_k(T_h;S) ∩ H(div): the null space of the normal jumps of the discontinuous space.

    :param mesh: The mesh.
    :type mesh: Mesh
    :param k: Degree.
    :type k: int
    :return: The space, without any Φ enrichment.
    :rtype: GlobalSpace
    """
    broken = broken_polynomial_space(mesh, k)
    jumps = _face_jumps(broken, k)
    constraints = np.vstack(jumps) if jumps else np.zeros((0, broken.dim))
    basis = linalg.null_space(constraints, ncols=broken.dim)
    logger.debug("conforming P%d: %d of %d broken DoFs", k, basis.shape[1], broken.dim)
    return restricted_space(broken, basis)


# ---------------------------------------------------------------- inf-sup constants

def pair_spaces(mesh: Mesh, pair: Pair, k: int) -> tuple[GlobalSpace, DisplacementSpace]:
    """
    The stress and displacement spaces of an inf-sup pair.

    :param mesh: The mesh.
    :type mesh: Mesh
    :param pair: Pair name.
    :type pair: Pair
    :param k: Stress degree; the linear pairs always use 1.
    :type k: int
    :return: (stress, displacement).
    :rtype: tuple
    """
    pair = Pair(pair)
    family, kind, offset = PAIRS[pair]
    if k < pair.min_k:
        raise DomainError(f"pair {pair.value} needs k >= {pair.min_k}, got {k}")
    if family is not None and family.linear:
        k = 1
    if family is None:
        if k < 1:
            raise DomainError(f"the plain pair needs k >= 1, got {k}")
        stress = conforming_polynomial_space(mesh, k)
    else:
        stress = global_space(mesh, family, k)
    order = 1 if offset is None else k + offset
    return stress, displacement_space(mesh, kind, order)


def norm_matrices(stress: GlobalSpace, disp: DisplacementSpace) -> dict[str, np.ndarray]:
    """
    Dense Gram matrices of the pair: M (stress L²), D (div-div), B (div coupling) and Mv (displacement L²).
    """
    mesh = stress.mesh
    d = mesh.dim
    p, m = stress.degree, disp.degree
    mass, divdiv, coupling, vmass = [], [], [], []
    for c in range(mesh.num_cells):
        cell = mesh.split_cell(c)
        basis, vbasis = stress.bases[c], disp.bases[c]
        div = local_spaces.piecewise_div_matrix(cell, p) @ basis
        mass.append(basis.T @ local_spaces.piecewise_mass_matrix(cell, p) @ basis)
        divdiv.append(div.T @ local_spaces.piecewise_mass_matrix(cell, p - 1, ncomp=d) @ div)
        coupling.append(vbasis.T @ local_spaces.piecewise_mass_matrix(cell, m, p - 1, ncomp=d) @ div)
        vmass.append(vbasis.T @ local_spaces.piecewise_mass_matrix(cell, m, ncomp=d) @ vbasis)
    prolongation = stress.prolongation
    return {
        'M': (prolongation.T @ sp.block_diag(mass, format='csr') @ prolongation).toarray(),
        'D': (prolongation.T @ sp.block_diag(divdiv, format='csr') @ prolongation).toarray(),
        'B': (sp.block_diag(coupling, format='csr') @ prolongation).toarray(),
        'Mv': sla.block_diag(*vmass),
    }


def discrete_beta(stress: GlobalSpace, disp: DisplacementSpace,
                  variant: DivVariant = DivVariant.exact) -> tuple[float, np.ndarray]:
    """
    β_h from the smallest eigenvalue of B A^{-1} Bᵀ x = β² Mv x.

    A is M + D for the exact variant and M + Bᵀ Mv^{-1} B for the projected one; the
    projection onto the displacement space leaves B unchanged.

    :return: β_h and the eigenvector of the smallest eigenvalue.
    :rtype: tuple
    """
    matrices = norm_matrices(stress, disp)
    b, vmass = matrices['B'], matrices['Mv']
    if DivVariant(variant) == DivVariant.projected:
        a = matrices['M'] + b.T @ sla.solve(vmass, b, assume_a='pos')
    else:
        a = matrices['M'] + matrices['D']
    try:
        factor = sla.cho_factor(a)
    except sla.LinAlgError as err:
        raise SolverError(f"stress norm matrix of size {a.shape[0]} is not positive definite") from err
    schur = b @ sla.cho_solve(factor, b.T)
    values, vectors = sla.eigh((schur + schur.T) / 2, vmass)
    return float(np.sqrt(max(values[0], 0.0))), vectors[:, 0]


def infsup_constant(meshes: list[Mesh], pair: Pair, k: int, variant: DivVariant | None = None) -> InfSupReport:
    """
    Discrete inf-sup constants of a pair over a sequence of meshes.

    :param meshes: The mesh levels, coarse to fine.
    :type meshes: list[Mesh]
    :param pair: Pair name.
    :type pair: Pair
    :param k: Stress degree.
    :type k: int
    :param variant: exact or projected divergence; projected for the reduced pair by default.
    :type variant: DivVariant
    :return: β_h per level, the max/min ratio and the boundedness flag.
    :rtype: InfSupReport
    """
    pair = Pair(pair)
    variant = default_variant(pair) if variant is None else DivVariant(variant)
    betas, sizes, hs = [], [], []
    kernel = None
    for level, mesh in enumerate(meshes):
        stress, disp = pair_spaces(mesh, pair, k)
        beta, vector = discrete_beta(stress, disp, variant)
        logger.info("inf-sup %s level %d: h=%.4f, %d + %d DoFs, beta=%.6f",
                    pair.value, level, mesh.h, stress.dim, disp.dim, beta)
        betas.append(beta)
        sizes.append(stress.dim + disp.dim)
        hs.append(mesh.h)
        if beta < BETA_ZERO and kernel is None:
            kernel = vector.tolist()
            logger.warning("inf-sup %s level %d: beta=%.3e, the divergence is not onto", pair.value, level, beta)
    ratio = max(betas) / min(betas) if min(betas) > 0 else float('inf')
    bounded = ratio < BOUNDED_RATIO and kernel is None
    if not bounded:
        logger.warning("inf-sup %s: beta ratio %.3f over %d levels", pair.value, ratio, len(meshes))
    norms = 'H(div) x L2' if variant == DivVariant.exact else 'L2 + |Q div| x L2'
    return InfSupReport(pair=pair, variant=variant, norms=norms, sizes=sizes, h=hs, beta=betas, ratio=ratio,
                        bounded=bounded, kernel=kernel)


def divergence_rank_identity(mesh: Mesh) -> list[CheckResult]:
    """
    div Σ_{1,φ}(T_h^R;S) = P_0^{-1}(T_h^R;R^d), and the kernels of div and Q_{1,h} div agree.
    """
    d = mesh.dim
    stress = global_space(mesh, Family.linear_phi_split, 1)
    split = norm_matrices(stress, displacement_space(mesh, 'split', 0))['B']
    coarse = norm_matrices(stress, displacement_space(mesh, 'coarse', 1))['B']
    rank_split, rank_coarse = linalg.numerical_rank(split), linalg.numerical_rank(coarse)
    expected = d * (d + 1) * mesh.num_cells
    return [
        CheckResult(name='split-div-onto', passed=rank_split == expected,
                    detail=f'rank {rank_split}, expected {expected}', value=rank_split),
        CheckResult(name='projected-div-kernel', passed=rank_coarse == rank_split,
                    detail=f'rank of Q div {rank_coarse}, rank of div {rank_split}', value=rank_coarse),
    ]


# ---------------------------------------------------------------- robustness

def robustness_study(d: int, k: int, n: int, lambdas=(1.0, 1e4, 1e6)) -> tuple[dict, CheckResult]:
    """
    Stress errors of the hybrid method on a fixed box mesh for growing λ.

    The exact displacement is divergence free, so the exact stress is the same for every λ and a
    locking method shows up as errors growing with λ.

    :return: λ -> ‖σ - σ_h‖ and the check that they stay within a fixed factor.
    :rtype: tuple
    """
    mesh = uniform_box_mesh(d, n)
    errors = {}
    for lam in lambdas:
        problem = manufactured_problem(d, 1.0, lam, u=solenoidal_displacement)
        errors[lam] = error_norms(solve_hybrid(problem, mesh, k))['err_sigma_L2']
        logger.info("lambda=%.1e: stress error %.4e", lam, errors[lam])
    spread = max(errors.values()) / min(errors.values())
    return errors, CheckResult(name='lambda-robustness', passed=spread < ROBUST_FACTOR,
                               detail=f'max/min stress error {spread:.3f}', value=spread)


# ---------------------------------------------------------------- validation suite

def _dimension_check(report: DimensionReport) -> CheckResult:
    return CheckResult(name=f'dimension-{report.family.value}', passed=report.passed,
                       detail=f'expected {report.expected}, constructed {report.constructed}, rank {report.rank}',
                       value=report.constructed)


def _rank_check(report: RankReport) -> CheckResult:
    passed = report.passed and report.rm_residual <= settings.rm_tol
    return CheckResult(name=f'div-range-{report.label}', passed=passed,
                       detail=f'rank {report.rank}, expected {report.expected}, RM residual {report.rm_residual:.2e}',
                       value=report.rank)


def unisolvence_checks(family: Family, d: int, k: int, cells: list[SplitCell]) -> list[CheckResult]:
    results = []
    for r, cell in enumerate(cells):
        name = 'unisolvence-reference' if r == 0 else f'unisolvence-affine-{r}'
        try:
            report = unisolvence_certificate(build_element(family, cell, k))
        except CertificationError as err:
            results.append(CheckResult(name=name, passed=False, detail=str(err)))
            continue
        results.append(CheckResult(name=name, passed=report.condition < settings.cond_max,
                                   detail=f'size {report.size}, min singular value {report.min_singular:.3e}',
                                   value=report.condition))
    return results


def run_validation(d: int, k: int, family: Family, seed: int | None = None) -> ValidationReport:
    """
    The element certification suite of one family.

    :param d: Dimension.
    :type d: int
    :param k: Degree.
    :type k: int
    :param family: Element family.
    :type family: Family
    :param seed: Seed of the random affine cells.
    :type seed: int
    :return: All checks; the report passes when every check does.
    :rtype: ValidationReport
    """
    family = check_admissible(family, d, k)
    seed = settings.random_seed if seed is None else seed
    reference = reference_cell(d)
    checks = [_dimension_check(report) for report in check_dimensions(d, k, reference, [family])]
    checks.append(formula_consistency(d))
    checks += unisolvence_checks(family, d, k, [reference] + random_affine_cells(d, 5, seed))
    checks.append(check_conformity(family, d, k))
    checks += check_rigidity(d, reference)
    if k >= 2:
        checks += [_rank_check(report) for report in check_div_range(d, k, reference)]
        if family in (Family.high_phi_nn, Family.high_psi):
            checks += check_ext(d, k, reference)
    if family == Family.linear_phi_split:
        checks += divergence_rank_identity(uniform_box_mesh(d, 1))
    report = ValidationReport(d=d, k=k, family=family, seed=seed, checks=checks)
    for check in checks:
        log = logger.info if check.passed else logger.error
        log("%-28s %s %s", check.name, 'pass' if check.passed else 'FAIL', check.detail)
    return report
