import unittest

import numpy as np

import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.exceptions import DomainError
from src.fem import spaces
from src.fem.dofs import DoFKind, rows_of
from src.fem.elements import (bubble_div_rank, build_element, check_admissible, clear_cache, conformity_residual,
                              direct_sum_certificate, expected_dimension, nn_enrichment, nn_multipliers,
                              reduced_constraints, representation_degree, unisolvence_certificate)
from src.fem.linalg import numerical_rank
from src.geometry.mesh import SplitCell
from src.schemas import Family


class TestDimensions(unittest.TestCase):

    def test_linear_dimensions(self):
        self.assertEqual(expected_dimension(Family.linear_phi_split, 2, 1), 15)
        self.assertEqual(expected_dimension(Family.linear_phi_split, 3, 1), 42)
        self.assertEqual(expected_dimension(Family.linear_reduced, 2, 1), 12)
        self.assertEqual(expected_dimension(Family.linear_reduced, 3, 1), 36)
        self.assertEqual(expected_dimension(Family.linear_rm, 2, 1), 9)
        self.assertEqual(expected_dimension(Family.linear_rm, 3, 1), 24)

    def test_high_dimensions(self):
        self.assertEqual(expected_dimension(Family.high_phi_split, 2, 2), 36)
        self.assertEqual(expected_dimension(Family.high_phi_nn, 2, 2), 39)
        self.assertEqual(expected_dimension(Family.high_phi_nn, 3, 2), 150)
        split = expected_dimension(Family.high_phi_split, 3, 3)
        self.assertEqual(expected_dimension(Family.high_phi_nn, 3, 3), split + 12)
        self.assertEqual(expected_dimension(Family.high_phi_nn, 2, 3), expected_dimension(Family.high_phi_split, 2, 3))
        self.assertEqual(expected_dimension(Family.high_psi, 2, 2), 21)
        self.assertEqual(expected_dimension(Family.high_reduced, 2, 2), 21)
        # the split formula at k=1 reproduces the linear split space
        self.assertEqual(expected_dimension(Family.high_phi_split, 3, 1), 42)
        self.assertEqual(expected_dimension(Family.rt_plus, 2, 1), 15)

    def test_representation_degree(self):
        self.assertEqual(representation_degree(Family.linear_rm, 3, 1), 1)
        self.assertEqual(representation_degree(Family.high_phi_split, 2, 3), 3)
        self.assertEqual(representation_degree(Family.high_psi, 2, 2), 3)
        self.assertEqual(representation_degree(Family.high_phi_nn, 3, 2), 4)
        self.assertEqual(representation_degree(Family.rt_plus, 2, 2), 3)

    def test_bubble_div_rank(self):
        self.assertEqual(bubble_div_rank(2, 2), 15)
        self.assertEqual(bubble_div_rank(3, 2), 42)

    def test_admissibility(self):
        with self.assertRaises(DomainError):
            check_admissible(Family.high_psi, 2, 1)
        with self.assertRaises(DomainError):
            check_admissible(Family.linear_rm, 2, 2)
        with self.assertRaises(DomainError):
            check_admissible(Family.linear_phi_split, 4, 1)
        with self.assertRaises(DomainError):
            check_admissible(Family.linear_rm, 2, 1, variant='nodal')
        with self.assertRaises(DomainError):
            check_admissible(Family.linear_phi_split, 2, 1, variant='lagrange')
        self.assertEqual(check_admissible('high-psi', 3, 2), Family.high_psi)


class TestLinearElements(unittest.TestCase):

    def setUp(self):
        self.cell = SplitCell.from_vertices([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]])

    def _check(self, space, dim):
        self.assertEqual(space.dim, dim)
        self.assertEqual(len(space.dofs), dim)
        duality = rows_of(list(space.dofs)) @ space.nodal
        np.testing.assert_allclose(duality, np.eye(dim), atol=1e-9)
        self.assertLess(conformity_residual(space), 1e-10)

    def test_linear_phi_split(self):
        space = build_element(Family.linear_phi_split, self.cell, 1)
        self._check(space, 15)
        self.assertEqual([len(space.face_dofs(m)) for m in range(3)], [4, 4, 4])
        self.assertEqual(len(space.interior_dofs()), 3)
        self.assertTrue(all(space.dofs[a].flips for a in space.face_dofs(0)))

    def test_nodal_variant(self):
        space = build_element(Family.linear_phi_split, self.cell, 1, variant='nodal')
        self._check(space, 15)
        kinds = {dof.kind for dof in space.dofs}
        self.assertEqual(kinds, {DoFKind.vertex_value, DoFKind.barycenter_value})

    def test_linear_reduced_satisfies_constraints(self):
        space = build_element(Family.linear_reduced, self.cell, 1)
        self._check(space, 12)
        residual = np.abs(reduced_constraints(self.cell, space.degree) @ space.nodal).max()
        self.assertLess(residual, 1e-9)

    def test_linear_rm(self):
        self._check(build_element(Family.linear_rm, self.cell, 1), 9)

    def test_three_dimensional(self):
        cell = SplitCell.from_vertices([[0.0, 0.0, 0.0], [1.0, 0.1, 0.0], [0.2, 1.1, 0.0], [0.1, 0.3, 0.9]])
        self._check(build_element(Family.linear_phi_split, cell, 1), 42)
        self._check(build_element(Family.linear_rm, cell, 1), 24)

    def test_interpolation_of_shape_functions(self):
        space = build_element(Family.linear_rm, self.cell, 1)
        for b in range(space.dim):
            expected = np.zeros(space.dim)
            expected[b] = 1.0
            np.testing.assert_allclose(space.interpolate(space.shape_function(b).coeffs), expected, atol=1e-9)

    def test_certificate(self):
        space = build_element(Family.linear_phi_split, self.cell, 1)
        report = unisolvence_certificate(space)
        self.assertEqual(report.size, 15)
        self.assertTrue(np.isfinite(report.condition))
        self.assertGreater(report.min_singular, 0.0)

    def test_cache_rebinds_cell(self):
        clear_cache()
        first = build_element(Family.linear_rm, self.cell, 1)
        moved = SplitCell.from_vertices(self.cell.coarse_vertices + np.array([2.0, -1.0]))
        second = build_element(Family.linear_rm, moved, 1)
        self.assertIs(second.cell, moved)
        np.testing.assert_allclose(second.nodal, first.nodal)


class TestHighElements(unittest.TestCase):

    def setUp(self):
        self.cell = SplitCell.from_vertices([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]])

    def test_dimensions_and_conformity(self):
        for family, dim in ((Family.high_phi_split, 36), (Family.high_phi_nn, 39), (Family.high_psi, 21),
                            (Family.high_reduced, 21), (Family.rt_plus, 3 * (6 + 3))):
            with self.subTest(family=family.value):
                space = build_element(family, self.cell, 2)
                self.assertEqual(space.dim, dim)
                np.testing.assert_allclose(rows_of(list(space.dofs)) @ space.nodal, np.eye(dim), atol=1e-8)
                self.assertLess(conformity_residual(space), 1e-9)

    def test_psi_divergence_is_coarse(self):
        space = build_element(Family.high_psi, self.cell, 2)
        div = spaces.piecewise_div_matrix(self.cell, space.degree) @ space.nodal
        residual = spaces.coarse_fit_residual(self.cell, div, space.degree - 1, 1, 2)
        self.assertLess(residual, 1e-9)

    def test_direct_sum(self):
        report = direct_sum_certificate(Family.high_phi_split, self.cell, 2)
        self.assertTrue(report.passed)
        self.assertEqual(report.generators, 36)

    def test_nn_constant_multipliers_lie_in_split_space(self):
        summands = spaces.high_summands(self.cell, 2).values()
        split = [spaces.flat(spaces.elevate_pieces(gens, 2, 2, 3)) for gens in summands]
        full = spaces.flat(nn_enrichment(self.cell, 1))
        self.assertEqual(full.shape[1], 6)
        self.assertEqual(numerical_rank(np.hstack(split + [full])), 39)
        self.assertEqual(nn_enrichment(self.cell, 2).shape[-1], 3 * nn_multipliers(2, 2))
        report = direct_sum_certificate(Family.high_phi_nn, self.cell, 2)
        self.assertTrue(report.passed)
        self.assertEqual(report.generators, 39)

    def test_nn_enrichment_is_empty_above_d(self):
        self.assertEqual(nn_enrichment(self.cell, 3).shape[-1], 0)
        report = direct_sum_certificate(Family.high_phi_nn, self.cell, 3)
        self.assertTrue(report.passed)
        self.assertEqual(report.rank, expected_dimension(Family.high_phi_split, 2, 3))

    def test_split_family_at_degree_one(self):
        space = build_element(Family.high_phi_split, self.cell, 1)
        self.assertEqual(space.dim, expected_dimension(Family.high_phi_split, 2, 1))
        self.assertEqual(space.dim, 15)
        self.assertTrue(direct_sum_certificate(Family.high_phi_split, self.cell, 1).passed)


if __name__ == '__main__':
    unittest.main()
