import unittest

import numpy as np
import pytest
from scipy import sparse as sp

import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.exceptions import DomainError, SolverError
from src.fem.poly import frobenius, num_sym
from src.geometry.mesh import two_cell_mesh, uniform_box_mesh
from src.schemas import Family, Method, Pair
from src.solver.assembly import (banded_cholesky_solve, solve, solve_hybrid, solve_linear_pairs, solve_mixed,
                                 solve_stabilized)
from src.solver.elasticity import (ElasticityProblem, apply_compliance, apply_compliance_deviatoric,
                                   apply_elasticity, compliance_matrix, manufactured_problem,
                                   manufactured_solution, solenoidal_displacement, zero_load)
from src.solver.postprocess import error_norms, postprocess_displacement
from src.solver.spaces import displacement_space, global_space


def linear_displacement(x):
    return [x[0] + 2 * x[1], 3 * x[0] - x[1]]


class TestCompliance(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_forms_agree(self):
        for d in (2, 3):
            sigma = self.rng.normal(size=(4, num_sym(d)))
            np.testing.assert_allclose(apply_compliance(sigma, 1.3, 7.0), apply_compliance_deviatoric(sigma, 1.3, 7.0))

    def test_inverse_of_hooke(self):
        for d in (2, 3):
            strain = self.rng.normal(size=num_sym(d))
            np.testing.assert_allclose(apply_compliance(apply_elasticity(strain, 0.7, 3.0), 0.7, 3.0), strain)

    def test_matrix_matches_operator(self):
        for d in (2, 3):
            sigma, tau = self.rng.normal(size=(2, num_sym(d)))
            matrix = compliance_matrix(d, 2.0, 5.0)
            self.assertAlmostEqual(sigma @ matrix @ tau, frobenius(apply_compliance(sigma, 2.0, 5.0), tau, d))
            self.assertTrue(np.all(np.linalg.eigvalsh(matrix) > 0))

    def test_invalid_parameters(self):
        with self.assertRaises(DomainError):
            compliance_matrix(2, 0.0, 1.0)
        with self.assertRaises(DomainError):
            ElasticityProblem(d=2, mu=1.0, lam=-1.0, f=zero_load(2))


class TestManufactured(unittest.TestCase):

    def test_load_balances_divergence(self):
        exact = manufactured_solution(2, 1.0, 2.0)
        x = np.array([[0.3, 0.6], [0.1, 0.9]])
        np.testing.assert_allclose(exact.f(x), -exact.div_sigma(x))
        self.assertIsNone(exact.degree)

    def test_polynomial_displacement(self):
        problem = manufactured_problem(2, mu=1.0, lam=2.0, u=linear_displacement)
        self.assertEqual(problem.exact.degree, 1)
        x = np.array([[0.2, 0.4]])
        # ε = [[1, 2.5], [2.5, -1]], tr ε = 0
        np.testing.assert_allclose(problem.exact.sigma(x), [[2.0, 5.0, -2.0]])
        np.testing.assert_allclose(problem.f(x), 0.0, atol=1e-14)
        np.testing.assert_allclose(problem.g(x), [[1.0, 0.2]])

    def test_wrong_component_count(self):
        with self.assertRaises(DomainError):
            manufactured_solution(3, 1.0, 1.0, u=linear_displacement)

    def test_solenoidal_stress_does_not_depend_on_lambda(self):
        x = np.array([[0.3, 0.6, 0.2], [0.15, 0.8, 0.55], [0.0, 0.4, 0.7]])
        for d in (2, 3):
            soft, stiff = (manufactured_solution(d, 1.0, lam, u=solenoidal_displacement) for lam in (1.0, 1e6))
            points = x[:, :d]
            np.testing.assert_allclose(stiff.sigma(points), soft.sigma(points), atol=1e-6)
            np.testing.assert_allclose(soft.u(points[2:]), 0.0, atol=1e-14)


class TestSpaces(unittest.TestCase):

    def setUp(self):
        self.mesh = uniform_box_mesh(2, 2)

    def test_global_dimensions(self):
        self.assertEqual(global_space(self.mesh, Family.linear_phi_split, 1).dim, 16 * 4 + 8 * 3)
        self.assertEqual(global_space(self.mesh, Family.linear_rm, 1).dim, 16 * 3)
        self.assertEqual(global_space(self.mesh, Family.high_psi, 2).dim, 16 * 6 + 8 * 3)
        self.assertEqual(global_space(self.mesh, Family.high_psi, 2, discontinuous=True).dim, 8 * 21)

    def test_displacement_dimensions(self):
        self.assertEqual(displacement_space(self.mesh, 'coarse', 1).dim, 8 * 6)
        self.assertEqual(displacement_space(self.mesh, 'split', 0).dim, 8 * 6)
        self.assertEqual(displacement_space(self.mesh, 'rm').dim, 8 * 3)
        with self.assertRaises(DomainError):
            displacement_space(self.mesh, 'nodal')


class TestPatch(unittest.TestCase):
    """Linear displacements are reproduced exactly."""

    def setUp(self):
        self.mesh = uniform_box_mesh(2, 1)
        self.problem = manufactured_problem(2, mu=1.0, lam=2.0, u=linear_displacement)

    def _assert_exact(self, solution, post=None):
        errors = error_norms(solution, post=post)
        for key in ('err_sigma_L2', 'err_sigma_Hdiv', 'err_u_L2'):
            self.assertLess(errors[key], 1e-8, key)
        return errors

    def test_split_pair(self):
        solution = solve_linear_pairs(self.problem, self.mesh, Pair.split)
        self.assertLess(solution.residual, 1e-10)
        self._assert_exact(solution)

    def test_hybrid(self):
        solution = solve_hybrid(self.problem, self.mesh, 2)
        self.assertGreater(solution.min_pivot, 0.0)
        errors = self._assert_exact(solution, postprocess_displacement(solution))
        self.assertLess(errors['err_super_1h'], 1e-8)
        self.assertLess(errors['err_post_eps'], 1e-8)

    def test_stabilized(self):
        solution = solve_stabilized(self.problem, self.mesh, 2)
        errors = self._assert_exact(solution, postprocess_displacement(solution))
        self.assertIsNone(errors['err_super_1h'])
        self.assertLess(errors['err_post_eps'], 1e-8)


class TestSolvers(unittest.TestCase):

    def test_zero_data_gives_zero_solution(self):
        problem = ElasticityProblem(d=2, mu=1.0, lam=1.0, f=zero_load(2))
        solution = solve_linear_pairs(problem, uniform_box_mesh(2, 1), Pair.rm)
        np.testing.assert_allclose(solution.sigma, 0.0, atol=1e-14)
        np.testing.assert_allclose(solution.u, 0.0, atol=1e-14)
        with self.assertRaises(DomainError):
            error_norms(solution)

    def test_hybrid_matches_conforming_solve(self):
        mesh = two_cell_mesh(2)
        problem = manufactured_problem(2, mu=1.0, lam=1.0)
        hybrid = solve_hybrid(problem, mesh, 2)
        conforming = solve_mixed(problem, global_space(mesh, Family.high_psi, 2), displacement_space(mesh, 'coarse', 1))
        for c in range(mesh.num_cells):
            np.testing.assert_allclose(hybrid.stress_coefficients(c), conforming.stress_coefficients(c), atol=1e-9)
            np.testing.assert_allclose(hybrid.displacement_coefficients(c), conforming.displacement_coefficients(c),
                                       atol=1e-9)

    def test_multiplier_layout(self):
        mesh = two_cell_mesh(2)
        solution = solve_hybrid(manufactured_problem(2), mesh, 2)
        self.assertEqual(len(solution.multipliers), 6)
        self.assertEqual(solution.multiplier(int(mesh.interior_faces[0])).shape, (3, 2))
        self.assertIsNone(solution.multiplier(int(mesh.boundary_faces[0])))
        self.assertEqual(solution.dofs, solution.stress.dim + solution.disp.dim + 6)

    def test_dispatch_and_domain(self):
        mesh = uniform_box_mesh(2, 1)
        problem = manufactured_problem(2)
        self.assertEqual(solve(problem, mesh, Method.linear_pair, 1).method, Method.linear_pair)
        with self.assertRaises(DomainError):
            solve(problem, mesh, Method.hybrid, 1)
        with self.assertRaises(DomainError):
            solve_linear_pairs(problem, mesh, Pair.psi)
        with self.assertRaises(DomainError):
            solve_linear_pairs(manufactured_problem(3), mesh, Pair.rm)

    def test_postprocess_needs_high_order_solution(self):
        solution = solve_linear_pairs(manufactured_problem(2), uniform_box_mesh(2, 1), Pair.split)
        with self.assertRaises(DomainError):
            postprocess_displacement(solution)


class TestBandedCholesky(unittest.TestCase):

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(9)
        n = 30
        matrix = sp.random(n, n, density=0.1, random_state=4)
        matrix = (matrix @ matrix.T + 5 * sp.identity(n)).tocsr()
        rhs = rng.normal(size=n)
        solution, pivot = banded_cholesky_solve(matrix, rhs)
        np.testing.assert_allclose(solution, np.linalg.solve(matrix.toarray(), rhs), atol=1e-10)
        self.assertGreater(pivot, 0.0)

    def test_indefinite(self):
        with self.assertRaises(SolverError):
            banded_cholesky_solve(sp.diags([1.0, -1.0, 2.0]).tocsr(), np.ones(3))

    def test_empty(self):
        solution, pivot = banded_cholesky_solve(sp.csr_matrix((0, 0)), np.zeros(0))
        self.assertEqual(solution.size, 0)
        self.assertEqual(pivot, np.inf)


@pytest.mark.slow
class TestConvergence(unittest.TestCase):

    def setUp(self):
        self.problem = manufactured_problem(2, mu=1.0, lam=1.0)
        self.meshes = [uniform_box_mesh(2, n) for n in (4, 8)]

    def rate(self, errors, key):
        return np.log2(errors[0][key] / errors[1][key])

    def test_hybrid_rates(self):
        problem = manufactured_problem(2, mu=1.0, lam=1.0)
        errors = [error_norms(solve_hybrid(problem, uniform_box_mesh(2, n), 2)) for n in (2, 4)]
        rate = np.log2(errors[0]['err_sigma_L2'] / errors[1]['err_sigma_L2'])
        self.assertGreater(rate, 2.0)
        self.assertLess(errors[1]['err_super_1h'], errors[0]['err_super_1h'])

    def test_stabilized_hdiv_rate(self):
        errors = [error_norms(solve_stabilized(self.problem, mesh, 2)) for mesh in self.meshes]
        self.assertAlmostEqual(self.rate(errors, 'err_sigma_Hdiv'), 2.0, delta=0.3)

    def test_linear_pair_rates(self):
        for pair, expected in ((Pair.split, 2.0), (Pair.linear_reduced, 1.0), (Pair.rm, 1.0)):
            with self.subTest(pair=pair.value):
                errors = [error_norms(solve_linear_pairs(self.problem, mesh, pair)) for mesh in self.meshes]
                self.assertAlmostEqual(self.rate(errors, 'err_sigma_L2'), expected, delta=0.3)

    def test_superconvergence_and_postprocessing(self):
        errors = []
        for mesh in self.meshes:
            solution = solve_hybrid(self.problem, mesh, 2)
            errors.append(error_norms(solution, post=postprocess_displacement(solution)))
        self.assertAlmostEqual(self.rate(errors, 'err_sigma_L2'), 3.0, delta=0.3)
        self.assertGreater(self.rate(errors, 'err_super_1h'), 2.7)
        self.assertGreater(self.rate(errors, 'err_post_eps'), 2.7)


if __name__ == '__main__':
    unittest.main()
