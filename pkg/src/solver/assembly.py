"""
Assembly and solution of the mixed elasticity methods.

Local matrices are computed cell by cell in the local bases of the spaces and
collected into block-diagonal "broken" operators; the prolongation of the
stress space then produces the global matrices as Pᵀ K P. The hybridized
method keeps the stress discontinuous, eliminates (σ_T, u_T) element by element
and solves the condensed system for the face multipliers.
"""
import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import linalg as sla
from scipy import sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from src.conf.config import settings
from src.exceptions import DomainError, SolverError
from src.fem import dofs as dof_sets
from src.fem import linalg
from src.fem import spaces as local_spaces
from src.fem.poly import bernstein_eval, mixed_mass, normal_map, num_bernstein
from src.fem.quadrature import quad_rule
from src.geometry.mesh import Mesh, SplitCell
from src.schemas import Family, Method, Pair
from src.solver.elasticity import ElasticityProblem
from src.solver.spaces import DisplacementSpace, GlobalSpace, displacement_space, global_space

logger = logging.getLogger(__name__)

# stress family, displacement kind and displacement degree of the lowest-order pairs
LINEAR_PAIRS = {
    Pair.split: (Family.linear_phi_split, 'coarse', 1),
    Pair.split_p0: (Family.linear_phi_split, 'split', 0),
    Pair.linear_reduced: (Family.linear_reduced, 'rm', 1),
    Pair.rm: (Family.linear_rm, 'rm', 1),
}


def quadrature_degree(k: int) -> int:
    return 2 * k + settings.quad_extra


def face_measure(cell: SplitCell, m: int) -> float:
    """Measure of the coarse face opposite vertex m."""
    geometry = cell.geometry
    return cell.d * geometry.volume / geometry.heights[m]


# ---------------------------------------------------------------- local integrals

def tensor_mass(cell: SplitCell, p: int, weights: np.ndarray, q: int | None = None) -> np.ndarray:
    """Piecewise Gram matrix ∫ σᵀ W τ for a pointwise weight matrix W on symmetric storage."""
    d = cell.d
    q = p if q is None else q
    return sla.block_diag(*(np.kron(mixed_mass(d, p, q, g.volume), weights) for g in cell.sub_geometry))


def load_vector(cell: SplitCell, degree: int, fn, ncomp: int, qdeg: int) -> np.ndarray:
    """
    ∫_T fn · φ for every flat piecewise basis function φ of the given degree.

    :param fn: Callable mapping points (npts, d) to values (npts, ncomp).
    :type fn: Callable
    :return: Vector of length (d+1) * nα * ncomp.
    :rtype: np.ndarray
    """
    d = cell.d
    rule = quad_rule(d, qdeg)
    basis = bernstein_eval(degree, rule.points)
    out = np.zeros((d + 1, num_bernstein(d, degree), ncomp))
    for i, geometry in enumerate(cell.sub_geometry):
        values = fn(rule.points @ geometry.vertices)
        out[i] = np.einsum('q,qa,qs->as', rule.scaled_weights(geometry.volume), basis, values)
    return out.reshape(-1)


def boundary_load(cell: SplitCell, p: int, m: int, g, qdeg: int) -> np.ndarray:
    """⟨τ n, g⟩ over coarse face m with the outward normal, for every flat basis function τ of degree p."""
    nmap = normal_map(cell.geometry.normals[m])

    def tests(x, bary):
        return np.einsum('sj,qj->qs', nmap, g(x))[:, :, None]

    labels = cell.coarse_face_labels(m)
    rows = dof_sets.subsimplex_rows(cell, p, m, labels, tests, qdeg)
    return face_measure(cell, m) * rows[0]


def face_coupling(cell: SplitCell, p: int, k: int, m: int, order) -> np.ndarray:
    """
    ⟨τ n, μ⟩ over coarse face m for μ ∈ P_k(F;R^d), Bernstein in the given vertex order times e_j.

    :return: Matrix of shape (nμ, nflat).
    :rtype: np.ndarray
    """
    orders = list(dof_sets.natural_orders(cell.d))
    orders[m] = tuple(order)
    rows = dof_sets.rows_of([dof for dof in dof_sets.face_moments(cell, p, k, orders) if dof.face == m])
    return face_measure(cell, m) * rows


@dataclass(frozen=True, eq=False)
class LocalOperators:
    """Cell matrices in local bases: a (stress Gram), b (div coupling) and the load vectors."""
    a: np.ndarray
    b: np.ndarray
    rhs_sigma: np.ndarray
    rhs_u: np.ndarray


def local_operators(problem: ElasticityProblem, stress: GlobalSpace, disp: DisplacementSpace, c: int,
                    stabilize: bool = False, boundary: bool = True) -> LocalOperators:
    """
    Local matrices and loads of the mixed form on cell c.

    a(σ, τ) = (Aσ, τ) [+ (div σ, div τ)], b(τ, v) = (div τ, v), right-hand sides
    ⟨τ n, g⟩ [- (f, div τ)] and -(f, v).
    """
    mesh = stress.mesh
    d = mesh.dim
    cell = mesh.split_cell(c)
    p, m = stress.degree, disp.degree
    basis, vbasis = stress.bases[c], disp.bases[c]
    qdeg = quadrature_degree(max(stress.k, p))

    div = local_spaces.piecewise_div_matrix(cell, p) @ basis
    a = basis.T @ tensor_mass(cell, p, problem.compliance) @ basis
    b = vbasis.T @ local_spaces.piecewise_mass_matrix(cell, m, p - 1, ncomp=d) @ div
    rhs_sigma = np.zeros(basis.shape[1])
    if stabilize:
        a = a + div.T @ local_spaces.piecewise_mass_matrix(cell, p - 1, ncomp=d) @ div
        rhs_sigma -= div.T @ load_vector(cell, p - 1, problem.f, d, qdeg)
    if boundary and problem.g is not None:
        for face in range(d + 1):
            if mesh.boundary[mesh.cell_faces[c, face]]:
                rhs_sigma += basis.T @ boundary_load(cell, p, face, problem.g, qdeg)
    rhs_u = -vbasis.T @ load_vector(cell, m, problem.f, d, qdeg)
    return LocalOperators(a=a, b=b, rhs_sigma=rhs_sigma, rhs_u=rhs_u)


# ---------------------------------------------------------------- systems and solutions

@dataclass(frozen=True, eq=False)
class GlobalSystem:
    """
    A sparse linear system with its blocks.

    For saddle systems the unknowns are (σ, u); for the condensed hybrid system they are the multipliers.
    """
    matrix: sp.csr_matrix
    rhs: np.ndarray
    stress_dim: int
    disp_dim: int
    blocks: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class Solution:
    """
    Discrete stress, displacement and (for the hybrid method) face multipliers.

    `faces` lists the mesh faces carrying multipliers, in the order of `multipliers`.
    """
    method: Method
    problem: ElasticityProblem
    stress: GlobalSpace
    disp: DisplacementSpace
    sigma: np.ndarray
    u: np.ndarray
    k: int
    residual: float = 0.0
    min_pivot: float | None = None
    multipliers: np.ndarray | None = None
    faces: np.ndarray | None = None

    @property
    def mesh(self) -> Mesh:
        return self.stress.mesh

    @property
    def dofs(self) -> int:
        extra = 0 if self.multipliers is None else len(self.multipliers)
        return self.stress.dim + self.disp.dim + extra

    def stress_coefficients(self, c: int) -> np.ndarray:
        return self.stress.cell_coefficients(c, self.sigma)

    def displacement_coefficients(self, c: int) -> np.ndarray:
        return self.disp.cell_coefficients(c, self.u)

    def stress_field(self, c: int):
        return self.stress.field(c, self.sigma)

    def displacement_field(self, c: int):
        return self.disp.field(c, self.u)

    def multiplier(self, f: int) -> np.ndarray | None:
        """Multiplier coefficients (nα_F, d) on face f in its global vertex order; None on the boundary."""
        if self.multipliers is None:
            return None
        where = np.flatnonzero(self.faces == f)
        if where.size == 0:
            return None
        d = self.mesh.dim
        size = d * comb(self.k + d - 1, d - 1)
        return self.multipliers[where[0] * size:(where[0] + 1) * size].reshape(-1, d)


def _check_dims(problem: ElasticityProblem, mesh: Mesh) -> None:
    if problem.d != mesh.dim:
        raise DomainError(f"problem is {problem.d}d, mesh is {mesh.dim}d")


def assemble_mixed(problem: ElasticityProblem, stress: GlobalSpace, disp: DisplacementSpace,
                   stabilize: bool = False) -> GlobalSystem:
    """
    The conforming mixed system [[A, Bᵀ], [B, 0]] for any stress and displacement pair.

    :param problem: Elasticity data.
    :type problem: ElasticityProblem
    :param stress: H(div)-conforming stress space.
    :type stress: GlobalSpace
    :param disp: Discontinuous displacement space.
    :type disp: DisplacementSpace
    :param stabilize: Add Σ_T (div σ, div τ)_T and the matching load.
    :type stabilize: bool
    :return: The saddle system.
    :rtype: GlobalSystem
    """
    mesh = stress.mesh
    _check_dims(problem, mesh)
    local = [local_operators(problem, stress, disp, c, stabilize) for c in range(mesh.num_cells)]
    prolongation = stress.prolongation
    a = (prolongation.T @ sp.block_diag([op.a for op in local], format='csr') @ prolongation).tocsr()
    b = (sp.block_diag([op.b for op in local], format='csr') @ prolongation).tocsr()
    rhs_sigma = prolongation.T @ np.concatenate([op.rhs_sigma for op in local])
    rhs_u = np.concatenate([op.rhs_u for op in local])
    matrix = sp.bmat([[a, b.T], [b, None]], format='csr')
    logger.debug("mixed system: %d stress + %d displacement unknowns, %d nonzeros",
                 stress.dim, disp.dim, matrix.nnz)
    return GlobalSystem(matrix=matrix, rhs=np.concatenate([rhs_sigma, rhs_u]), stress_dim=stress.dim,
                        disp_dim=disp.dim, blocks={'A': a, 'B': b})


def assemble_stabilized(problem: ElasticityProblem, stress: GlobalSpace, disp: DisplacementSpace) -> GlobalSystem:
    """The stabilized method on the reduced space with P_{k-1}^{-1} displacements."""
    if stress.k < 2:
        raise DomainError(f"the stabilized method needs k >= 2, got {stress.k}")
    return assemble_mixed(problem, stress, disp, stabilize=True)


def solve_saddle(system: GlobalSystem) -> tuple[np.ndarray, float]:
    """Sparse LU solve of a saddle system; returns the solution and the relative residual."""
    try:
        solution = splu(system.matrix.tocsc()).solve(system.rhs)
    except RuntimeError as err:
        raise SolverError(f"singular saddle system of size {system.size}: {err}") from err
    scale = max(float(np.linalg.norm(system.rhs)), 1e-300)
    residual = float(np.linalg.norm(system.matrix @ solution - system.rhs)) / scale
    if not np.all(np.isfinite(solution)) or residual > 1e-6:
        raise SolverError(f"saddle solve failed: relative residual {residual:.2e}")
    return solution, residual


def solve_mixed(problem: ElasticityProblem, stress: GlobalSpace, disp: DisplacementSpace,
                method: Method = Method.linear_pair, stabilize: bool = False) -> Solution:
    system = assemble_mixed(problem, stress, disp, stabilize)
    solution, residual = solve_saddle(system)
    logger.info("%s solve: %d unknowns, residual %.2e", Method(method).value, system.size, residual)
    return Solution(method=Method(method), problem=problem, stress=stress, disp=disp,
                    sigma=solution[:stress.dim], u=solution[stress.dim:], k=stress.k, residual=residual)


def solve_stabilized(problem: ElasticityProblem, mesh: Mesh, k: int) -> Solution:
    """Σ_{k,φ}(T_h;S) × P_{k-1}^{-1}(T_h;R^d) with div-div stabilization."""
    stress = global_space(mesh, Family.high_reduced, k)
    disp = displacement_space(mesh, 'coarse', k - 1)
    system = assemble_stabilized(problem, stress, disp)
    solution, residual = solve_saddle(system)
    logger.info("stabilized solve: %d unknowns, residual %.2e", system.size, residual)
    return Solution(method=Method.stabilized, problem=problem, stress=stress, disp=disp,
                    sigma=solution[:stress.dim], u=solution[stress.dim:], k=k, residual=residual)


def solve_linear_pairs(problem: ElasticityProblem, mesh: Mesh, pair: Pair = Pair.split) -> Solution:
    """
    Mixed solve with one of the lowest-order pairs.

    :param pair: split (Σ_{1,φ}(T_h^R) × P_1^{-1}(T_h)), split-p0 (× P_0^{-1}(T_h^R)),
        linear-reduced (Σ_{1,φ}(T_h) × RM(T_h)) or rm (Σ_RM × RM(T_h)).
    :type pair: Pair
    """
    pair = Pair(pair)
    if pair not in LINEAR_PAIRS:
        raise DomainError(f"{pair.value} is not a lowest-order pair")
    family, kind, order = LINEAR_PAIRS[pair]
    stress = global_space(mesh, family, 1)
    disp = displacement_space(mesh, kind, order)
    return solve_mixed(problem, stress, disp, Method.linear_pair)


# ---------------------------------------------------------------- hybridization

@dataclass(frozen=True, eq=False)
class CondensedSystem(GlobalSystem):
    """The multiplier system with the element factors needed for back-substitution."""
    factors: tuple = ()
    couplings: tuple = ()
    loads: tuple = ()
    faces: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def _multiplier_layout(mesh: Mesh, k: int) -> tuple[np.ndarray, dict, int]:
    faces = mesh.interior_faces
    size = mesh.dim * comb(k + mesh.dim - 1, mesh.dim - 1)
    return faces, {int(f): r for r, f in enumerate(faces)}, size


def assemble_hybrid(problem: ElasticityProblem, stress: GlobalSpace, disp: DisplacementSpace) -> CondensedSystem:
    """
    Hybridized mixed method, condensed onto the face multipliers.

    The stress space must be discontinuous. Each element block [[A_T, B_Tᵀ], [B_T, 0]] is factorized
    and eliminated; c(τ, μ) = -Σ_T ⟨τ n_T, μ⟩ over interior faces couples the elements.

    :return: The SPD condensed system S λ = r together with the local factors.
    :rtype: CondensedSystem
    """
    if not stress.discontinuous:
        raise DomainError("hybridization needs a discontinuous stress space")
    if stress.k < 2:
        raise DomainError(f"the hybrid method needs k >= 2, got {stress.k}")
    mesh = stress.mesh
    _check_dims(problem, mesh)
    d, k = mesh.dim, stress.k
    faces, index, size = _multiplier_layout(mesh, k)
    total = len(faces) * size
    rows, cols, vals = [], [], []
    rhs = np.zeros(total)
    factors, couplings, loads = [], [], []
    for c in range(mesh.num_cells):
        cell = mesh.split_cell(c)
        op = local_operators(problem, stress, disp, c)
        nloc, nv = op.a.shape[0], op.b.shape[0]
        if linalg.numerical_rank(op.b) != nv:
            raise SolverError(f"cell {c}: divergence is not onto the local displacement space")
        block = np.block([[op.a, op.b.T], [op.b, np.zeros((nv, nv))]])
        try:
            factor = sla.lu_factor(block, check_finite=True)
        except (sla.LinAlgError, ValueError) as err:
            raise SolverError(f"cell {c}: singular element block") from err
        if np.min(np.abs(np.diag(factor[0]))) <= settings.rank_tol * np.abs(block).max():
            raise SolverError(f"cell {c}: singular element block")
        load = np.concatenate([op.rhs_sigma, op.rhs_u])

        dofs, columns = [], []
        orders = mesh.face_orders(c)
        for m in range(d + 1):
            f = int(mesh.cell_faces[c, m])
            if f not in index:
                continue
            coupling = -face_coupling(cell, stress.degree, k, m, orders[m]) @ stress.bases[c]
            columns.append(coupling.T)
            dofs.append(index[f] * size + np.arange(size))
        if columns:
            embed = np.vstack([np.hstack(columns), np.zeros((nv, sum(col.shape[1] for col in columns)))])
            dofs = np.concatenate(dofs)
        else:
            embed = np.zeros((nloc + nv, 0))
            dofs = np.zeros(0, dtype=np.int64)
        solved = sla.lu_solve(factor, embed)
        local_s = embed.T @ solved
        rhs[dofs] += embed.T @ sla.lu_solve(factor, load)
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        vals.append(local_s.reshape(-1))
        factors.append(factor)
        couplings.append((dofs, embed))
        loads.append(load)
    matrix = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(total, total)).tocsr()
    logger.debug("hybrid system: %d multipliers on %d interior faces", total, len(faces))
    return CondensedSystem(matrix=matrix, rhs=rhs, stress_dim=stress.dim, disp_dim=disp.dim,
                           factors=tuple(factors), couplings=tuple(couplings), loads=tuple(loads), faces=faces)


def banded_cholesky_solve(matrix: sp.spmatrix, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    """
    Solves an SPD system by Cholesky factorization of its reverse Cuthill-McKee band.

    :return: The solution and the smallest pivot of the factorization.
    :rtype: tuple
    :raises SolverError: when the matrix is not positive definite.
    """
    n = matrix.shape[0]
    if n == 0:
        return np.zeros(0), np.inf
    matrix = sp.csr_matrix(matrix)
    perm = reverse_cuthill_mckee(matrix, symmetric_mode=True)
    permuted = matrix[perm][:, perm].tocoo()
    upper = permuted.row <= permuted.col
    row, col, val = permuted.row[upper], permuted.col[upper], permuted.data[upper]
    bandwidth = int((col - row).max(initial=0))
    band = np.zeros((bandwidth + 1, n))
    np.add.at(band, (bandwidth + row - col, col), val)
    try:
        factor = sla.cholesky_banded(band, lower=False)
    except sla.LinAlgError as err:
        raise SolverError(f"condensed matrix of size {n} is not positive definite") from err
    min_pivot = float(np.min(factor[bandwidth]) ** 2)
    solution = np.empty(n)
    solution[perm] = sla.cho_solve_banded((factor, False), rhs[perm])
    logger.debug("banded Cholesky: size %d, bandwidth %d, smallest pivot %.3e", n, bandwidth, min_pivot)
    return solution, min_pivot


def solve_hybrid(problem: ElasticityProblem, mesh: Mesh, k: int) -> Solution:
    """
    Σ_{k,ψ}^{-1}(T_h;S) × P_{k-1}^{-1}(T_h;R^d) × P_k^{-1}(F̊_h;R^d), condensed and back-substituted.
    """
    stress = global_space(mesh, Family.high_psi, k, discontinuous=True)
    disp = displacement_space(mesh, 'coarse', k - 1)
    system = assemble_hybrid(problem, stress, disp)
    multipliers, min_pivot = banded_cholesky_solve(system.matrix, system.rhs)
    if min_pivot <= 0:
        raise SolverError(f"condensed matrix is not positive definite: smallest pivot {min_pivot:.3e}")
    sigma, u = back_substitute(system, multipliers)
    scale = max(float(np.linalg.norm(system.rhs)), 1e-300)
    residual = float(np.linalg.norm(system.matrix @ multipliers - system.rhs)) / scale if system.size else 0.0
    logger.info("hybrid solve: %d multipliers, smallest pivot %.3e, residual %.2e", system.size, min_pivot, residual)
    return Solution(method=Method.hybrid, problem=problem, stress=stress, disp=disp, sigma=sigma, u=u, k=k,
                    residual=residual, min_pivot=min_pivot, multipliers=multipliers, faces=system.faces)


def back_substitute(system: CondensedSystem, multipliers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Recovers the element unknowns (σ_T, u_T) = K_T^{-1}(r_T - E_T λ)."""
    sigma, u = [], []
    for factor, (dofs, embed), load in zip(system.factors, system.couplings, system.loads):
        local = sla.lu_solve(factor, load - embed @ multipliers[dofs])
        nv = system.disp_dim // len(system.factors)
        sigma.append(local[:-nv])
        u.append(local[-nv:])
    return np.concatenate(sigma), np.concatenate(u)


def solve(problem: ElasticityProblem, mesh: Mesh, method: Method, k: int, pair: Pair | None = None) -> Solution:
    """Dispatches to the solver of a method."""
    method = Method(method)
    if method == Method.stabilized:
        return solve_stabilized(problem, mesh, k)
    if method == Method.hybrid:
        return solve_hybrid(problem, mesh, k)
    return solve_linear_pairs(problem, mesh, Pair.split if pair is None else pair)
