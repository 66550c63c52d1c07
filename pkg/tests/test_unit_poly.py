import unittest
from math import factorial, prod

import numpy as np

import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.exceptions import DomainError
from src.fem.linalg import column_basis, condition_number, null_space, numerical_rank, same_span
from src.fem.poly import (BaryPoly, PiecewisePoly, bernstein_eval, elevate, evaluate, extend_face_poly, frobenius,
                          full_to_sym, mass_matrix, multi_indices, multiply, normal_map, num_bernstein, rm_basis,
                          split_hat, sym_outer, sym_to_full, sym_weights, trace_weights)
from src.fem.quadrature import quad_rule, simplex_measure
from src.geometry.mesh import SplitCell, geometry_pack
from src.geometry.simplex import IndexSet


class TestQuadrature(unittest.TestCase):

    def test_weights_sum_to_reference_volume(self):
        for d in (1, 2, 3):
            for degree in (0, 3, 6):
                rule = quad_rule(d, degree)
                self.assertAlmostEqual(rule.weights.sum(), 1.0 / factorial(d))
                np.testing.assert_allclose(rule.points.sum(axis=1), 1.0)

    def test_monomial_integrals(self):
        # ∫ λ^α over the reference simplex is α! / (|α| + d)!
        for d in (2, 3):
            for degree in range(6):
                rule = quad_rule(d, degree)
                for alpha in multi_indices(d, degree):
                    values = np.prod(rule.points ** alpha, axis=1)
                    exact = prod(factorial(int(a)) for a in alpha) / factorial(degree + d)
                    self.assertAlmostEqual(float(rule.weights @ values), exact, places=13)

    def test_scaled_integration(self):
        rule = quad_rule(2, 2)
        self.assertAlmostEqual(float(rule.integrate(np.ones(len(rule)), 0.3)), 0.3)

    def test_invalid_rules(self):
        with self.assertRaises(DomainError):
            quad_rule(5, 2)
        with self.assertRaises(DomainError):
            quad_rule(2, -1)

    def test_simplex_measure(self):
        self.assertAlmostEqual(simplex_measure(np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]])), 5.0)
        self.assertAlmostEqual(simplex_measure(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])), 0.5)
        self.assertEqual(simplex_measure(np.array([[1.0, 2.0]])), 1.0)


class TestBernstein(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.geometry = geometry_pack(np.array([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]]))
        self.points = self.rng.dirichlet(np.ones(3), size=12)

    def test_partition_of_unity(self):
        for k in range(5):
            np.testing.assert_allclose(bernstein_eval(k, self.points).sum(axis=1), 1.0)
            self.assertEqual(bernstein_eval(k, self.points).shape[1], num_bernstein(2, k))

    def test_elevation_keeps_values(self):
        coeffs = self.rng.normal(size=(num_bernstein(2, 2), 3))
        raised = elevate(coeffs, 2, 2, 5)
        np.testing.assert_allclose(evaluate(raised, 5, self.points), evaluate(coeffs, 2, self.points))
        with self.assertRaises(DomainError):
            elevate(coeffs, 2, 2, 1)

    def test_product(self):
        a = self.rng.normal(size=(num_bernstein(2, 2), 1))
        b = self.rng.normal(size=(num_bernstein(2, 3), 2))
        product = multiply(2, a, 2, b, 3)
        self.assertEqual(product.shape, (num_bernstein(2, 5), 1, 2))
        expected = evaluate(a, 2, self.points) * evaluate(b, 3, self.points)
        np.testing.assert_allclose(evaluate(product, 5, self.points)[:, 0, :], expected)

    def test_mass_matrix_against_quadrature(self):
        for d in (2, 3):
            for k, m in ((1, 1), (2, 3), (3, 2)):
                rule = quad_rule(d, k + m)
                left, right = bernstein_eval(k, rule.points), bernstein_eval(m, rule.points)
                volume = 0.37
                quadrature = left.T @ (rule.scaled_weights(volume)[:, None] * right)
                np.testing.assert_allclose(mass_matrix(d, k, volume, m), quadrature, atol=1e-14)

    def test_gradient_matches_finite_differences(self):
        poly = BaryPoly(3, self.rng.normal(size=num_bernstein(2, 3)), self.geometry)
        x = np.array([[0.5, 0.2]])
        grad = poly.grad().at_points(x)[0]
        step = 1e-6
        for p in range(2):
            shift = np.zeros(2)
            shift[p] = step
            fd = (poly.at_points(x + shift) - poly.at_points(x - shift))[0, 0] / (2 * step)
            self.assertAlmostEqual(grad[p], fd, places=6)

    def test_divergence_of_linear_tensor(self):
        nsym = 3
        values = self.rng.normal(size=nsym)
        coeffs = np.zeros((3, nsym))
        coeffs[1] = values
        div = BaryPoly(1, coeffs, self.geometry).div()
        np.testing.assert_allclose(div.coeffs[0], sym_to_full(values, 2) @ self.geometry.grad_lambda[1])

    def test_rigid_motions_have_no_strain(self):
        basis = rm_basis(self.geometry)
        self.assertEqual(basis.shape, (3, 2, 3))
        for j in range(basis.shape[2]):
            strain = BaryPoly(1, basis[:, :, j], self.geometry).sym_grad()
            np.testing.assert_allclose(strain.coeffs, 0.0, atol=1e-14)

    def test_face_extension_only_fixes_the_trace(self):
        edge = IndexSet.of((0, 1), 2)
        on_edge = np.array([[0.3, 0.7, 0.0], [1.0, 0.0, 0.0]])
        opposite = np.array([[0.0, 0.0, 1.0]])
        for k in (0, 1, 2):
            one = extend_face_poly(np.ones(num_bernstein(1, k)), k, edge, self.geometry)
            np.testing.assert_allclose(one(on_edge), 1.0)
            np.testing.assert_allclose(one(opposite), 1.0 if k == 0 else 0.0, atol=1e-14)


class TestSymmetricStorage(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(3)

    def test_storage_helpers(self):
        for d in (2, 3):
            a, b, n = self.rng.normal(size=(3, d))
            matrix = self.rng.normal(size=(d, d))
            matrix = matrix + matrix.T
            stored = full_to_sym(matrix)
            np.testing.assert_allclose(sym_to_full(stored, d), matrix)
            self.assertAlmostEqual(frobenius(sym_outer(a, b), stored, d), a @ matrix @ b)
            np.testing.assert_allclose(stored @ normal_map(n), matrix @ n)
            self.assertAlmostEqual(trace_weights(d) @ stored, np.trace(matrix))
            self.assertEqual(sym_weights(d).sum(), d * d)


class TestPiecewise(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.cell = SplitCell.from_vertices([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]])

    def test_split_hats_sum_to_one(self):
        total = split_hat(0, self.cell)
        for label in range(1, 4):
            total = total + split_hat(label, self.cell)
        np.testing.assert_allclose(total.coeffs, 1.0)
        self.assertAlmostEqual(split_hat(3, self.cell).at_points(self.cell.barycenter)[0, 0], 1.0)
        with self.assertRaises(DomainError):
            split_hat(4, self.cell)

    def test_coarse_polynomial_on_pieces(self):
        coarse = BaryPoly(2, self.rng.normal(size=(num_bernstein(2, 2), 3)), self.cell.geometry)
        pieces = PiecewisePoly.from_coarse(self.cell, coarse)
        x = self.cell.geometry.vertices.T @ self.rng.dirichlet(np.ones(3), size=10).T
        np.testing.assert_allclose(pieces.at_points(x.T), coarse.at_points(x.T))
        self.assertLess(pieces.max_normal_jump(), 1e-12)

    def test_integral_of_constant(self):
        one = PiecewisePoly(self.cell, 0, np.ones((3, 1, 1)))
        self.assertAlmostEqual(float(one.integrate()[0]), self.cell.volume)

    def test_shape_check(self):
        with self.assertRaises(DomainError):
            PiecewisePoly(self.cell, 1, np.ones((3, 2, 1)))


class TestLinalg(unittest.TestCase):

    def test_rank_and_kernel(self):
        matrix = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [1.0, 0.0, 1.0]])
        self.assertEqual(numerical_rank(matrix), 2)
        kernel = null_space(matrix)
        self.assertEqual(kernel.shape, (3, 1))
        np.testing.assert_allclose(matrix @ kernel, 0.0, atol=1e-12)
        self.assertEqual(column_basis(matrix).shape, (3, 2))
        self.assertEqual(null_space(np.zeros((0, 4)), ncols=4).shape, (4, 4))

    def test_same_span_and_condition(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        self.assertTrue(same_span(a, a @ np.array([[2.0, 1.0], [1.0, 1.0]])))
        self.assertFalse(same_span(a, np.eye(3)[:, 1:]))
        condition, smallest = condition_number(np.diag([4.0, 2.0]))
        self.assertAlmostEqual(condition, 2.0)
        self.assertAlmostEqual(smallest, 2.0)


if __name__ == '__main__':
    unittest.main()
