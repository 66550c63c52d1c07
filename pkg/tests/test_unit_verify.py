import unittest

import numpy as np
import pytest

import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.conf.config import settings
from src.exceptions import DomainError
from src.geometry.mesh import uniform_box_mesh
from src.schemas import DivVariant, Family, Pair
from src.services.verify import (BETA_ZERO, ROBUST_FACTOR, brute_force_intersection, check_conformity,
                                 check_dimensions, check_div_range, check_ext, check_rigidity, conjecture_intersection,
                                 default_pair, default_variant, divergence_rank_identity, formula_consistency,
                                 infsup_constant, pair_spaces, random_affine_cells, reference_cell,
                                 robustness_study, run_validation, vertex_rigidity)


class TestDefaults(unittest.TestCase):

    def test_pairs_and_variants(self):
        self.assertEqual(default_pair(Family.high_psi), Pair.psi)
        self.assertEqual(default_pair(Family.linear_rm), Pair.rm)
        self.assertEqual(default_pair(Family.linear_phi_split), Pair.split)
        self.assertEqual(default_variant(Pair.reduced), DivVariant.projected)
        self.assertEqual(default_variant(Pair.psi), DivVariant.exact)

    def test_random_cells_are_reproducible(self):
        first = random_affine_cells(2, 5, seed=3)
        second = random_affine_cells(2, 5, seed=3)
        self.assertEqual(len(first), 5)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.vertices, b.vertices)
            self.assertGreater(a.volume, 0.0)


class TestDimensionChecks(unittest.TestCase):

    def test_lowest_order_families(self):
        reports = check_dimensions(2, 1)
        self.assertEqual({report.family for report in reports},
                         {Family.linear_phi_split, Family.linear_reduced, Family.linear_rm, Family.high_phi_split,
                          Family.rt_plus})
        for report in reports:
            self.assertTrue(report.passed, report.family.value)

    def test_quadratic_families(self):
        reports = check_dimensions(2, 2, families=[Family.high_psi, Family.high_reduced])
        self.assertEqual([report.constructed for report in reports], [21, 21])

    def test_nn_family_counts_independent_multipliers(self):
        report, = check_dimensions(2, 2, families=[Family.high_phi_nn])
        self.assertTrue(report.passed)
        self.assertEqual((report.expected, report.constructed, report.generators), (39, 39, 39))

    def test_formula_consistency(self):
        self.assertTrue(formula_consistency(2).passed)
        self.assertEqual(formula_consistency(3).value, 42)


class TestDivergenceRanges(unittest.TestCase):

    def test_bubble_ranks(self):
        coarse, split = check_div_range(2, 2)
        self.assertEqual((coarse.rank, coarse.expected), (3, 3))
        self.assertTrue(split.passed)
        self.assertLess(coarse.rm_residual, settings.rm_tol)
        self.assertLess(split.rm_residual, settings.rm_tol)

    def test_needs_quadratic_degree(self):
        with self.assertRaises(DomainError):
            check_div_range(2, 1)


class TestJumpNullSpaces(unittest.TestCase):

    def setUp(self):
        self.cell = reference_cell(2)

    def test_piecewise_constants(self):
        _, dim = brute_force_intersection(self.cell, 0)
        self.assertEqual(dim, 3)

    def test_piecewise_linears(self):
        _, dim = brute_force_intersection(self.cell, 1)
        self.assertEqual(dim, 15)

    def test_degree_range(self):
        with self.assertRaises(DomainError):
            brute_force_intersection(self.cell, 4)

    def test_rigidity(self):
        self.assertEqual(vertex_rigidity(self.cell, 0), 0)
        for check in check_rigidity(2, self.cell):
            self.assertTrue(check.passed, check.name)

    def test_higher_degree_is_report_only(self):
        check = conjecture_intersection(2, 2)
        self.assertTrue(check.passed)
        self.assertGreater(check.value, 0)


class TestExtAndConformity(unittest.TestCase):

    def test_ext_operators(self):
        checks = check_ext(2, 2)
        self.assertEqual([check.name for check in checks],
                         ['ext-nn-trace', 'ext-nn-div-rm', 'ext-psi-trace', 'ext-psi-div-rm'])
        for check in checks:
            self.assertTrue(check.passed, check.name)

    def test_global_conformity(self):
        self.assertTrue(check_conformity(Family.linear_rm, 2, 1).passed)
        self.assertTrue(check_conformity(Family.high_psi, 2, 2, uniform_box_mesh(2, 1)).passed)


class TestInfSup(unittest.TestCase):

    def test_linear_pairs_use_degree_one(self):
        stress, disp = pair_spaces(uniform_box_mesh(2, 1), Pair.rm, 3)
        self.assertEqual(stress.k, 1)
        self.assertEqual(disp.kind, 'rm')

    def test_rm_pair_is_stable(self):
        report = infsup_constant([uniform_box_mesh(2, 1), uniform_box_mesh(2, 2)], Pair.rm, 1)
        self.assertEqual(len(report.beta), 2)
        self.assertTrue(all(beta > BETA_ZERO for beta in report.beta))
        self.assertIsNone(report.kernel)
        self.assertEqual(report.variant, DivVariant.exact)

    def test_divergence_identity(self):
        for check in divergence_rank_identity(uniform_box_mesh(2, 1)):
            self.assertTrue(check.passed, check.name)

    def test_pair_below_its_degree(self):
        with self.assertRaises(DomainError):
            pair_spaces(uniform_box_mesh(2, 1), Pair.psi, 1)

    def test_exact_and_projected_agree_on_surjectivity(self):
        meshes = [uniform_box_mesh(2, 1)]
        for pair, k in ((Pair.reduced, 2), (Pair.split_p0, 1), (Pair.linear_reduced, 1)):
            with self.subTest(pair=pair.value):
                exact = infsup_constant(meshes, pair, k, DivVariant.exact)
                projected = infsup_constant(meshes, pair, k, DivVariant.projected)
                self.assertEqual(exact.kernel is None, projected.kernel is None)

    def test_plain_pair_is_no_better_than_psi(self):
        meshes = [uniform_box_mesh(2, 2)]
        plain = infsup_constant(meshes, Pair.plain, 2, DivVariant.exact)
        psi = infsup_constant(meshes, Pair.psi, 2, DivVariant.exact)
        self.assertLessEqual(plain.beta[0], psi.beta[0] + 1e-10)


@pytest.mark.slow
class TestInfSupStudies(unittest.TestCase):

    def test_psi_pair_in_two_dimensions(self):
        for k in (2, 3):
            with self.subTest(k=k):
                report = infsup_constant([uniform_box_mesh(2, 2), uniform_box_mesh(2, 4)], Pair.psi, k)
                self.assertIsNone(report.kernel)
                self.assertTrue(report.bounded, report.beta)

    def test_psi_pair_in_three_dimensions(self):
        report = infsup_constant([uniform_box_mesh(3, 1), uniform_box_mesh(3, 2)], Pair.psi, 2)
        self.assertIsNone(report.kernel)
        self.assertTrue(all(beta > BETA_ZERO for beta in report.beta))

    def test_reduced_pair_with_projected_divergence(self):
        report = infsup_constant([uniform_box_mesh(2, 2), uniform_box_mesh(2, 4)], Pair.reduced, 2)
        self.assertEqual(report.variant, DivVariant.projected)
        self.assertIsNone(report.kernel)
        self.assertTrue(report.bounded, report.beta)

    def test_split_pair(self):
        report = infsup_constant([uniform_box_mesh(2, 2), uniform_box_mesh(2, 4)], Pair.split, 1)
        self.assertIsNone(report.kernel)
        self.assertTrue(report.bounded, report.beta)


class TestValidation(unittest.TestCase):

    def test_linear_split_suite(self):
        report = run_validation(2, 1, Family.linear_phi_split, seed=11)
        self.assertEqual(report.seed, 11)
        names = [check.name for check in report.checks]
        self.assertIn('conformity', names)
        self.assertIn('split-div-onto', names)
        self.assertIn('unisolvence-affine-5', names)
        self.assertTrue(report.passed, [check.name for check in report.checks if not check.passed])

    def test_inadmissible_family(self):
        with self.assertRaises(DomainError):
            run_validation(2, 1, Family.high_psi)


@pytest.mark.slow
class TestRobustness(unittest.TestCase):

    def test_nearly_incompressible(self):
        for n in (2, 4):
            with self.subTest(n=n):
                errors, check = robustness_study(2, 2, n)
                self.assertEqual(len(errors), 3)
                self.assertTrue(check.passed, check.detail)
                self.assertLess(errors[1e6], ROBUST_FACTOR * errors[1.0])


if __name__ == '__main__':
    unittest.main()
