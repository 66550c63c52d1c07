import tempfile
import unittest
from math import comb
from pathlib import Path

import numpy as np

import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.exceptions import ConformityError, DomainError, GeometryError
from src.geometry.frames import global_normal_frame, phi_space, qnf_trace_matrix, sym_decompose
from src.geometry.mesh import (SplitCell, barycentric_refine, build_mesh, geometry_pack, read_mesh,
                               two_cell_mesh, uniform_box_mesh, write_mesh)
from src.geometry.simplex import (IndexSet, complement_c, complement_star, count_subsimplices, interior_faces,
                                  interior_subsimplices, split_subsimplices, subsimplex_table, subsimplices)


class TestSimplex(unittest.TestCase):

    def test_index_set_prints_barycenter_as_c(self):
        self.assertEqual(str(IndexSet.of((2, 0, 3), 2)), '{0,2,c}')
        self.assertTrue(IndexSet((0, 3), 2).has_c)
        self.assertFalse(IndexSet((0, 1), 2).has_c)

    def test_index_set_rejects_bad_labels(self):
        with self.assertRaises(DomainError):
            IndexSet((1, 0), 2)
        with self.assertRaises(DomainError):
            IndexSet((0, 4), 2)
        with self.assertRaises(DomainError):
            IndexSet((), 2)

    def test_subsimplex_counts(self):
        for d in (2, 3):
            for ell in range(d + 1):
                self.assertEqual(len(subsimplices(d, ell)), comb(d + 1, ell + 1))
                self.assertEqual(count_subsimplices(d, ell), comb(d + 1, ell + 1))

    def test_split_subsimplices_exclude_coarse_cell(self):
        for d in (2, 3):
            cells = split_subsimplices(d, d)
            self.assertEqual(len(cells), d + 1)
            self.assertTrue(all(f.has_c for f in cells))
            # every lower-dimensional subset of {0..d,c} is a simplex of the split
            self.assertEqual(len(split_subsimplices(d, d - 1)), comb(d + 2, d))

    def test_interior_subsimplices_contain_barycenter(self):
        for d in (2, 3):
            for ell in range(d):
                interior = interior_subsimplices(d, ell)
                self.assertEqual(len(interior), comb(d + 1, ell))
                self.assertTrue(all(f.has_c and f.ell == ell for f in interior))

    def test_complements(self):
        f = IndexSet((0, 2), 3)
        self.assertEqual(complement_star(f).labels, (1, 3))
        self.assertEqual(complement_c(f).labels, (1, 3, 4))
        with self.assertRaises(DomainError):
            complement_star(IndexSet((0, 4), 3))

    def test_interior_faces_are_pairwise_intersections(self):
        for d in (2, 3):
            faces = interior_faces(d)
            self.assertEqual(len(faces), d * (d + 1) // 2)
            for (i, j), face in faces.items():
                self.assertNotIn(i, face)
                self.assertNotIn(j, face)
                self.assertTrue(face.has_c)
                self.assertEqual(face.ell, d - 1)

    def test_subsimplex_table(self):
        table = subsimplex_table(3)
        self.assertEqual([len(level) for level in table.levels], [4, 6, 4, 1])
        self.assertEqual(len(table.split_cells), 4)


class TestGeometry(unittest.TestCase):

    def setUp(self):
        self.vertices = np.array([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]])
        self.geometry = geometry_pack(self.vertices)

    def test_barycentric_gradients_and_normals(self):
        np.testing.assert_allclose(self.geometry.grad_lambda.sum(axis=0), 0.0, atol=1e-14)
        np.testing.assert_allclose(self.geometry.barycentric(self.vertices), np.eye(3), atol=1e-14)
        np.testing.assert_allclose(np.linalg.norm(self.geometry.normals, axis=1), 1.0)
        # the outward normal of face i points away from vertex i
        for i in range(3):
            face_point = self.vertices[(i + 1) % 3]
            self.assertGreater(self.geometry.normals[i] @ (face_point - self.vertices[i]), 0.0)

    def test_degenerate_simplex(self):
        with self.assertRaises(GeometryError):
            geometry_pack([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        with self.assertRaises(DomainError):
            geometry_pack([[0.0, 0.0], [1.0, 0.0]])

    def test_split_cell_subcells_fill_the_cell(self):
        cell = SplitCell.from_vertices(self.vertices)
        volumes = [g.volume for g in cell.sub_geometry]
        np.testing.assert_allclose(volumes, cell.volume / 3)
        np.testing.assert_allclose(cell.barycenter, self.vertices.mean(axis=0))

    def test_interior_face_normals_point_from_lower_subcell(self):
        cell = SplitCell.from_vertices(self.vertices)
        for i, j, face, normal in cell.interior_faces:
            self.assertLess(i, j)
            center_i = cell.sub_vertices(i).mean(axis=0)
            on_face = cell.vertices[list(face)].mean(axis=0)
            self.assertGreater(normal @ (on_face - center_i), 0.0)


class TestMesh(unittest.TestCase):

    def test_box_mesh_counts(self):
        mesh = uniform_box_mesh(2, 2)
        self.assertEqual(mesh.num_cells, 8)
        self.assertEqual(len(mesh.vertices), 9)
        self.assertEqual(mesh.num_faces, 16)
        self.assertEqual(len(mesh.boundary_faces), 8)
        self.assertAlmostEqual(mesh.volumes.sum(), 1.0)
        self.assertEqual(uniform_box_mesh(3, 1).num_cells, 6)

    def test_face_normals_point_to_larger_cell(self):
        mesh = uniform_box_mesh(2, 2)
        for f in mesh.interior_faces:
            a, b = mesh.face_cells[f]
            self.assertLess(a, b)
            center_a = mesh.cell_vertices(a).mean(axis=0)
            center_b = mesh.cell_vertices(b).mean(axis=0)
            self.assertGreater(mesh.face_normals[f] @ (center_b - center_a), 0.0)

    def test_shared_face_order_agrees(self):
        mesh = two_cell_mesh(3)
        f = mesh.interior_faces[0]
        ids = []
        for c in mesh.face_cells[f]:
            m = list(mesh.cell_faces[c]).index(f)
            ids.append([int(mesh.cells[c][v]) for v in mesh.face_vertex_order(c, m)])
        self.assertEqual(ids[0], ids[1])
        self.assertEqual(mesh.neighbor(0, list(mesh.cell_faces[0]).index(f)), 1)

    def test_nonconforming_meshes(self):
        vertices = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.2, -1.0]]
        with self.assertRaises(ConformityError):
            build_mesh(vertices, [[0, 1, 2], [1, 3, 2], [0, 1, 4], [1, 2, 4]])
        with self.assertRaises(GeometryError):
            build_mesh([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [[0, 1, 2]])
        with self.assertRaises(DomainError):
            build_mesh(vertices, [[0, 1, 1]])
        with self.assertRaises(DomainError):
            two_cell_mesh(4)

    def test_facet_inside_a_larger_facet(self):
        vertices = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [1.0, 0.0], [2.0, 0.0], [1.5, -1.0]]
        with self.assertRaises(ConformityError):
            build_mesh(vertices, [[0, 1, 2], [3, 4, 5]])
        apart = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [4.0, 0.0], [5.0, 0.0], [4.5, -1.0]]
        self.assertEqual(build_mesh(apart, [[0, 1, 2], [3, 4, 5]]).num_cells, 2)

    def test_barycentric_refine(self):
        mesh = uniform_box_mesh(2, 1)
        split = barycentric_refine(mesh)
        self.assertEqual(split.fine.num_cells, 3 * mesh.num_cells)
        self.assertEqual(len(split.interior_face_table), 3 * mesh.num_cells)
        for (t, i, j), f in split.interior_face_table.items():
            self.assertFalse(split.fine.boundary[f])
            self.assertEqual(set(split.fine.face_cells[f]), {split.fine_cell(t, i), split.fine_cell(t, j)})

    def test_mesh_file_round_trip(self):
        mesh = uniform_box_mesh(2, 2)
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / "mesh.txt"
            write_mesh(mesh, path)
            again = read_mesh(path)
        np.testing.assert_array_equal(again.cells, mesh.cells)
        np.testing.assert_allclose(again.vertices, mesh.vertices)

    def test_malformed_mesh_file(self):
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / "mesh.txt"
            path.write_text("2 3 1\n0 0\n1 0\n")
            with self.assertRaises(DomainError):
                read_mesh(path)


class TestFrames(unittest.TestCase):

    def setUp(self):
        self.cell = SplitCell.from_vertices([[0.0, 0.0, 0.0], [1.0, 0.1, 0.0], [0.2, 1.1, 0.0], [0.1, 0.3, 0.9]])

    def test_sym_decompose_dimensions(self):
        d = 3
        for ell in range(d + 1):
            for f in subsimplices(d, ell):
                split = sym_decompose(f, self.cell.geometry)
                expected = (ell * (ell + 1) // 2, (d - ell) * (d - ell + 1) // 2, ell * (d - ell))
                self.assertEqual(split.dims, expected)
                self.assertEqual(np.linalg.matrix_rank(split.stacked()), 6)

    def test_phi_space_size(self):
        for f in subsimplices(3, 0):
            self.assertEqual(len(phi_space(f, self.cell)), 3)
        for f in subsimplices(3, 2):
            self.assertEqual(len(phi_space(f, self.cell)), 0)

    def test_qnf_trace_matrix_is_invertible(self):
        d = 3
        for ell in range(d):
            for f in subsimplices(d, ell):
                matrix = qnf_trace_matrix(f, self.cell)
                self.assertEqual(matrix.shape, (d * (d - ell), d * (d - ell)))
                self.assertEqual(np.linalg.matrix_rank(matrix), d * (d - ell))

    def test_global_normal_frame_is_orthonormal(self):
        for f in interior_subsimplices(3, 1):
            normals = global_normal_frame(f, self.cell)
            self.assertEqual(normals.shape, (2, 3))
            np.testing.assert_allclose(normals @ normals.T, np.eye(2), atol=1e-12)
            tangent = self.cell.vertices[f.labels[1]] - self.cell.vertices[f.labels[0]]
            np.testing.assert_allclose(normals @ tangent, 0.0, atol=1e-12)


if __name__ == '__main__':
    unittest.main()
