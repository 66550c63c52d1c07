"""
Local displacement postprocessing and error norms of discrete solutions.
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.exceptions import DomainError, SolverError
from src.fem import spaces as local_spaces
from src.fem.poly import (bernstein_eval, coarse_to_pieces, elevate, evaluate, l2_project, mass_matrix, num_bernstein,
                          restrict, rm_basis, rm_pieces, sym_grad, sym_weights)
from src.fem.quadrature import quad_rule
from src.geometry.mesh import GeometryPack, Mesh
from src.schemas import Method
from src.solver.assembly import Solution, face_measure, tensor_mass
from src.solver.elasticity import ManufacturedSolution

logger = logging.getLogger(__name__)

POSTPROCESS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PostprocessedDisplacement:
    """u* ∈ P_{k+1}^{-1}(T_h;R^d) as coarse Bernstein coefficients (nα, d) per cell."""
    mesh: Mesh
    degree: int
    coeffs: tuple[np.ndarray, ...]

    def values(self, c: int, bary: np.ndarray) -> np.ndarray:
        return evaluate(self.coeffs[c], self.degree, bary)


def _vector_basis(n: int, degree: int, ncomp: int | None = None) -> np.ndarray:
    """Identity basis of P_degree on an n-simplex with ncomp components: (nα, ncomp, nα*ncomp)."""
    ncomp = n if ncomp is None else ncomp
    nalpha = num_bernstein(n, degree)
    return np.einsum('ab,st->asbt', np.eye(nalpha), np.eye(ncomp)).reshape(nalpha, ncomp, -1)


def epsilon_gram(geometry: GeometryPack, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """
    (ε(φ_a), ε(φ_b))_T on P_degree(T;R^d) and the strains of the basis.

    :return: The Gram matrix and ε of the basis as coefficients (nβ, nsym, nα*d) of degree degree-1.
    :rtype: tuple
    """
    d = geometry.dim
    strains = sym_grad(_vector_basis(d, degree), degree, geometry.grad_lambda)
    mass = mass_matrix(d, degree - 1, geometry.volume)
    gram = np.einsum('ab,asi,bsj,s->ij', mass, strains, strains, sym_weights(d))
    return gram, strains


def postprocess_displacement(solution: Solution) -> PostprocessedDisplacement:
    """
    Cell-wise u* with (ε(u*), ε(q))_T = (Aσ_h, ε(q))_T for q ∈ P_{k+1}(T;R^d)
    and (u*, r)_T = (u_h, r)_T for r ∈ RM(T).

    :param solution: A hybrid or stabilized solution.
    :type solution: Solution
    :return: The postprocessed displacement.
    :rtype: PostprocessedDisplacement
    """
    if solution.method not in (Method.hybrid, Method.stabilized):
        raise DomainError(f"postprocessing needs a hybrid or stabilized solution, got {solution.method.value}")
    mesh = solution.mesh
    d, k = mesh.dim, solution.k
    degree = k + 1
    p, m = solution.stress.degree, solution.disp.degree
    compliance = solution.problem.compliance
    out = []
    for c in range(mesh.num_cells):
        cell = mesh.split_cell(c)
        geometry = cell.geometry
        gram, strains = epsilon_gram(geometry, degree)
        tests = local_spaces.flat(coarse_to_pieces(strains, d, degree - 1))
        rhs = tests.T @ tensor_mass(cell, degree - 1, compliance, p) @ solution.stress_coefficients(c)

        rigid = rm_basis(geometry)
        constraint = np.einsum('ab,asi,bsj->ji', mass_matrix(d, degree, geometry.volume, 1),
                               _vector_basis(d, degree), rigid)
        rigid_pieces = rm_pieces(cell).reshape(-1, rigid.shape[-1])
        moments = rigid_pieces.T @ local_spaces.piecewise_mass_matrix(cell, 1, m, ncomp=d) @ \
            solution.displacement_coefficients(c)

        nr = constraint.shape[0]
        block = np.block([[gram, constraint.T], [constraint, np.zeros((nr, nr))]])
        load = np.concatenate([rhs, moments])
        x = np.linalg.solve(block, load)
        residual = np.linalg.norm(block @ x - load) / max(float(np.linalg.norm(load)), 1.0)
        if residual > POSTPROCESS_TOL:
            raise SolverError(f"cell {c}: postprocessing residual {residual:.2e}")
        out.append(x[:gram.shape[0]].reshape(-1, d))
    logger.debug("postprocessed displacement of degree %d on %d cells", degree, mesh.num_cells)
    return PostprocessedDisplacement(mesh=mesh, degree=degree, coeffs=tuple(out))


# ---------------------------------------------------------------- error norms

def _error_degree(solution: Solution) -> int:
    return 2 * (max(solution.k, solution.stress.degree) + 2)


def _piece_errors(solution: Solution, exact: ManufacturedSolution, qdeg: int) -> dict[str, float]:
    mesh = solution.mesh
    d = mesh.dim
    p, m = solution.stress.degree, solution.disp.degree
    rule = quad_rule(d, qdeg)
    sigma_basis, div_basis, u_basis = bernstein_eval(p, rule.points), bernstein_eval(p - 1, rule.points), \
        bernstein_eval(m, rule.points)
    weights = sym_weights(d)
    totals = {'sigma': 0.0, 'div': 0.0, 'u': 0.0}
    for c in range(mesh.num_cells):
        tau = solution.stress_field(c)
        div = tau.div()
        v = solution.displacement_field(c)
        for i, geometry in enumerate(tau.cell.sub_geometry):
            x = rule.points @ geometry.vertices
            w = rule.scaled_weights(geometry.volume)
            e_sigma = exact.sigma(x) - sigma_basis @ tau.coeffs[i]
            e_div = exact.div_sigma(x) - div_basis @ div.coeffs[i]
            e_u = exact.u(x) - u_basis @ v.coeffs[i]
            totals['sigma'] += float(w @ (e_sigma ** 2 @ weights))
            totals['div'] += float(w @ (e_div ** 2).sum(axis=1))
            totals['u'] += float(w @ (e_u ** 2).sum(axis=1))
    return totals


def postprocess_error(post: PostprocessedDisplacement, exact: ManufacturedSolution, qdeg: int) -> float:
    """‖ε_h(u - u*)‖ over the mesh."""
    mesh = post.mesh
    d = mesh.dim
    rule = quad_rule(d, qdeg)
    basis = bernstein_eval(post.degree - 1, rule.points)
    total = 0.0
    for c in range(mesh.num_cells):
        geometry = mesh.geometry(c)
        strain = sym_grad(post.coeffs[c], post.degree, geometry.grad_lambda)
        error = exact.strain(rule.points @ geometry.vertices) - basis @ strain
        total += float(rule.scaled_weights(geometry.volume) @ (error ** 2 @ sym_weights(d)))
    return float(np.sqrt(total))


def superconvergence_error(solution: Solution, exact: ManufacturedSolution, qdeg: int) -> float:
    """
    ‖Q_h^M u - u_h‖_{1,h} with v_0 = Q_{k-1,T}u - u_h and v_b = Q_{k,F}u - λ_h.

    ‖v‖²_{1,h} = Σ_T ‖ε(v_0)‖²_T + Σ_T h_T^{-1} ‖Q_{k,F}(v_0 - v_b)‖²_{∂T}.
    v_b vanishes on boundary faces.
    """
    if solution.method != Method.hybrid:
        raise DomainError("the discrete H1 norm needs the face multipliers of the hybrid method")
    mesh = solution.mesh
    d, k = mesh.dim, solution.k
    vector_basis = _vector_basis(d, k - 1)
    face_basis = _vector_basis(d - 1, k, d)
    face_rule = quad_rule(d - 1, qdeg)
    total = 0.0
    for c in range(mesh.num_cells):
        cell = mesh.split_cell(c)
        geometry = cell.geometry
        projected = l2_project(vector_basis, k - 1, geometry, exact.u, qdeg).reshape(-1, d)
        discrete = solution.u[solution.disp.cell_dofs(c)].reshape(-1, d)
        v0 = projected - discrete
        strain = sym_grad(v0, k - 1, geometry.grad_lambda)
        gram = mass_matrix(d, k - 2, geometry.volume)
        total += float(np.einsum('ab,as,bs,s->', gram, strain, strain, sym_weights(d)))
        orders = mesh.face_orders(c)
        for m in range(d + 1):
            f = int(mesh.cell_faces[c, m])
            order = orders[m]
            trace = elevate(restrict(v0, d, k - 1, order), d - 1, k - 1, k)
            area = face_measure(cell, m)
            if mesh.boundary[f]:
                vb = np.zeros_like(trace)
            else:
                face_geometry = _FaceGeometry(cell.vertices[list(order)], area)
                vb = _face_projection(face_basis, k, face_geometry, exact.u, face_rule) - solution.multiplier(f)
            diff = trace - vb
            total += float(np.einsum('ab,aj,bj->', mass_matrix(d - 1, k, area), diff, diff)) / geometry.diameter
    return float(np.sqrt(total))


@dataclass(frozen=True)
class _FaceGeometry:
    vertices: np.ndarray
    volume: float


def _face_projection(basis: np.ndarray, k: int, face: _FaceGeometry, fn, rule) -> np.ndarray:
    """Q_{k,F} fn in the Bernstein basis of the face vertices, as (nα_F, d)."""
    n = rule.dim
    d = basis.shape[1]
    gram = np.einsum('ab,asi,bsj->ij', mass_matrix(n, k, face.volume), basis, basis)
    values = fn(rule.points @ face.vertices)
    rhs = rule.integrate(np.einsum('ps,psi->pi', values, evaluate(basis, k, rule.points)), face.volume)
    return np.linalg.solve(gram, rhs).reshape(-1, d)


def error_norms(solution: Solution, exact: ManufacturedSolution | None = None,
                post: PostprocessedDisplacement | None = None) -> dict[str, float | None]:
    """
    Errors of a discrete solution against the exact one.

    :param solution: The discrete solution.
    :type solution: Solution
    :param exact: Exact solution; the problem's by default.
    :type exact: ManufacturedSolution
    :param post: Postprocessed displacement, if computed.
    :type post: PostprocessedDisplacement
    :return: err_sigma_L2, err_sigma_Hdiv, err_u_L2, err_super_1h (hybrid only), err_post_eps (with post).
    :rtype: dict
    """
    exact = solution.problem.exact if exact is None else exact
    if exact is None:
        raise DomainError("error norms need an exact solution")
    qdeg = _error_degree(solution)
    totals = _piece_errors(solution, exact, qdeg)
    errors = {
        'err_sigma_L2': float(np.sqrt(totals['sigma'])),
        'err_sigma_Hdiv': float(np.sqrt(totals['sigma'] + totals['div'])),
        'err_u_L2': float(np.sqrt(totals['u'])),
        'err_super_1h': superconvergence_error(solution, exact, qdeg) if solution.method == Method.hybrid else None,
        'err_post_eps': postprocess_error(post, exact, qdeg) if post is not None else None,
    }
    logger.debug("errors on %d cells: %s", solution.mesh.num_cells, errors)
    return errors

