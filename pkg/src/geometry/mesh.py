"""
Conforming simplicial meshes, their barycentric (Alfeld) refinement and the
per-cell split geometry used by the element constructions.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, permutations, product
from math import factorial
from pathlib import Path

import numpy as np

from src.conf.config import settings
from src.exceptions import ConformityError, DomainError, GeometryError
from src.geometry.simplex import IndexSet, interior_faces

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GeometryPack:
    vertices: np.ndarray
    barycenter: np.ndarray
    grad_lambda: np.ndarray
    normals: np.ndarray
    heights: np.ndarray
    volume: float
    diameter: float

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def points(self) -> np.ndarray:
        """Vertices followed by the barycenter, indexed by label."""
        return np.vstack([self.vertices, self.barycenter])

    def tangent(self, i: int, j: int) -> np.ndarray:
        """t_{i,j} = v_j - v_i, with label d+1 standing for the barycenter."""
        return self.points[j] - self.points[i]

    @cached_property
    def tangents(self) -> np.ndarray:
        pts = self.points
        return pts[None, :, :] - pts[:, None, :]

    def barycentric(self, x: np.ndarray) -> np.ndarray:
        """
        Barycentric coordinates of physical points.

        :param x: Points of shape (npts, d).
        :type x: np.ndarray
        :return: Coordinates of shape (npts, d+1).
        :rtype: np.ndarray
        """
        rest = (np.atleast_2d(x) - self.vertices[0]) @ self.grad_lambda[1:].T
        return np.hstack([1.0 - rest.sum(axis=1, keepdims=True), rest])


def geometry_pack(vertices: np.ndarray, tol: float | None = None) -> GeometryPack:
    """
    Computes barycentric gradients, unit outward face normals, heights and volume of a simplex.

    :param vertices: Vertex coordinates of shape (d+1, d).
    :type vertices: np.ndarray
    :param tol: Degeneracy tolerance relative to diameter**d.
    :type tol: float
    :return: The geometry of the cell.
    :rtype: GeometryPack
    """
    vertices = np.asarray(vertices, dtype=float)
    n, d = vertices.shape
    if n != d + 1:
        raise DomainError(f"a {d}-simplex needs {d + 1} vertices, got {n}")
    tol = settings.degeneracy_tol if tol is None else tol
    edges = vertices[1:] - vertices[0]
    volume = abs(np.linalg.det(edges)) / factorial(d)
    diameter = max(np.linalg.norm(vertices[a] - vertices[b]) for a, b in combinations(range(d + 1), 2))
    if volume <= tol * diameter ** d:
        raise GeometryError(f"degenerate simplex: volume {volume:.3e}, diameter {diameter:.3e}")
    grad_rest = np.linalg.inv(edges).T
    grad_lambda = np.vstack([-grad_rest.sum(axis=0), grad_rest])
    norms = np.linalg.norm(grad_lambda, axis=1)
    heights = 1.0 / norms
    normals = -grad_lambda * heights[:, None]
    return GeometryPack(vertices=vertices, barycenter=vertices.mean(axis=0), grad_lambda=grad_lambda,
                        normals=normals, heights=heights, volume=volume, diameter=diameter)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    cells: np.ndarray
    faces: np.ndarray
    face_cells: np.ndarray
    face_normals: np.ndarray
    boundary: np.ndarray
    cell_faces: np.ndarray
    cell_face_signs: np.ndarray
    volumes: np.ndarray
    diameters: np.ndarray

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def cell_vertices(self, c: int) -> np.ndarray:
        return self.vertices[self.cells[c]]

    def geometry(self, c: int) -> GeometryPack:
        return geometry_pack(self.cell_vertices(c))

    def split_cell(self, c: int) -> 'SplitCell':
        return SplitCell.from_vertices(self.cell_vertices(c))

    def face_vertex_order(self, c: int, m: int) -> tuple[int, ...]:
        """
        Local labels of face m of cell c sorted by global vertex id.

        :param c: Cell id.
        :type c: int
        :param m: Local index of the vertex opposite the face.
        :type m: int
        :return: The face labels in the global order shared by both incident cells.
        :rtype: tuple
        """
        labels = [v for v in range(self.dim + 1) if v != m]
        return tuple(sorted(labels, key=lambda v: self.cells[c][v]))

    def face_orders(self, c: int) -> tuple[tuple[int, ...], ...]:
        return tuple(self.face_vertex_order(c, m) for m in range(self.dim + 1))

    def neighbor(self, c: int, m: int) -> int:
        """The cell across local face m of cell c, -1 on the boundary."""
        f = self.cell_faces[c, m]
        a, b = self.face_cells[f]
        return b if a == c else a


def build_mesh(vertices, cells, tol: float | None = None) -> Mesh:
    """
    Validates a simplicial mesh and builds its face table with fixed global normals.

    The stored normal of a face is the outward normal of its incident cell with
    the smaller id, so it points from the smaller cell id to the larger one and
    outward on the boundary.

    :param vertices: Coordinates of shape (nv, d).
    :type vertices: array_like
    :param cells: Vertex ids of shape (nc, d+1).
    :type cells: array_like
    :param tol: Degeneracy tolerance.
    :type tol: float
    :return: The validated mesh.
    :rtype: Mesh
    """
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    if vertices.ndim != 2 or cells.ndim != 2:
        raise DomainError("vertices and cells must be 2d arrays")
    d = vertices.shape[1]
    if cells.shape[1] != d + 1:
        raise DomainError(f"cells of a {d}d mesh need {d + 1} vertices, got {cells.shape[1]}")
    if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
        raise DomainError("cell vertex index out of range")
    for c, cell in enumerate(cells):
        if len(set(cell.tolist())) != d + 1:
            raise DomainError(f"cell {c} repeats a vertex: {cell.tolist()}")

    packs = []
    for c in range(len(cells)):
        try:
            packs.append(geometry_pack(vertices[cells[c]], tol))
        except GeometryError as err:
            raise GeometryError(f"cell {c}: {err}") from err

    nc = len(cells)
    local = np.concatenate([np.delete(cells, i, axis=1) for i in range(d + 1)], axis=0)
    faces, inverse, counts = np.unique(np.sort(local, axis=1), axis=0, return_inverse=True, return_counts=True)
    inverse = np.asarray(inverse).reshape(-1)
    if np.any(counts > 2):
        bad = faces[np.flatnonzero(counts > 2)[0]].tolist()
        raise ConformityError(f"face {bad} is shared by more than two cells")
    cell_faces = inverse.reshape(d + 1, nc).T.copy()

    nf = len(faces)
    face_cells = np.full((nf, 2), -1, dtype=np.int64)
    face_normals = np.zeros((nf, d))
    cell_face_signs = np.zeros((nc, d + 1), dtype=np.int64)
    for c in range(nc):
        for i in range(d + 1):
            f = cell_faces[c, i]
            if face_cells[f, 0] < 0:
                face_cells[f, 0] = c
                face_normals[f] = packs[c].normals[i]
                cell_face_signs[c, i] = 1
            else:
                face_cells[f, 1] = c
                cell_face_signs[c, i] = -1
    boundary = face_cells[:, 1] < 0

    _check_boundary_overlap(vertices, faces, face_normals, boundary)

    mesh = Mesh(vertices=vertices, cells=cells, faces=faces, face_cells=face_cells, face_normals=face_normals,
                boundary=boundary, cell_faces=cell_faces, cell_face_signs=cell_face_signs,
                volumes=np.array([p.volume for p in packs]), diameters=np.array([p.diameter for p in packs]))
    logger.debug("mesh: d=%d, %d vertices, %d cells, %d faces (%d boundary)",
                 d, len(vertices), nc, nf, int(boundary.sum()))
    return mesh


def _check_boundary_overlap(vertices, faces, normals, boundary, tol: float = 1e-10):
    """Boundary facets lying on top of each other, with or without shared vertices."""
    bf = np.flatnonzero(boundary)
    points = vertices[faces[bf]]
    lo, hi = points.min(axis=1), points.max(axis=1)
    slack = tol * np.ptp(vertices, axis=0).max()
    for n, a in enumerate(bf[:-1]):
        rest = bf[n + 1:]
        near = np.all((lo[n + 1:] <= hi[n] + slack) & (hi[n + 1:] >= lo[n] - slack), axis=1)
        opposed = np.abs(normals[rest] @ normals[a] + 1.0) <= tol
        xa = vertices[faces[a]]
        for b in rest[near & opposed]:
            xb = vertices[faces[b]]
            scale = max(np.ptp(xa, axis=0).max(), np.ptp(xb, axis=0).max())
            if abs(normals[a] @ (xb[0] - xa[0])) > tol * scale:
                continue
            if _facet_overlaps(xa, xb) or _facet_overlaps(xb, xa):
                raise ConformityError(f"boundary faces {faces[a].tolist()} and {faces[b].tolist()} overlap: "
                                      f"cells do not meet in a common subsimplex")


def _facet_overlaps(xa: np.ndarray, xb: np.ndarray) -> bool:
    centroid = xb.mean(axis=0)
    samples = np.vstack([centroid, 0.9 * xb + 0.1 * centroid])
    edges = (xa[1:] - xa[0]).T
    coef, *_ = np.linalg.lstsq(edges, (samples - xa[0]).T, rcond=None)
    bary = np.vstack([1.0 - coef.sum(axis=0), coef])
    return bool(np.any(np.all(bary > 1e-9, axis=0)))


def uniform_box_mesh(d: int, n: int) -> Mesh:
    """
    Freudenthal/Kuhn triangulation of the unit box with n^d subcubes and d! simplices each.

    :param d: Dimension, 2 or 3.
    :type d: int
    :param n: Subdivisions per axis.
    :type n: int
    :return: The box mesh.
    :rtype: Mesh
    """
    if d not in (2, 3):
        raise DomainError(f"box meshes are available for d in (2, 3), got {d}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    shape = (n + 1,) * d
    grid = np.array(list(product(range(n + 1), repeat=d)), dtype=float)
    cells = []
    for base in product(range(n), repeat=d):
        for perm in permutations(range(d)):
            point = list(base)
            path = [np.ravel_multi_index(point, shape)]
            for axis in perm:
                point[axis] += 1
                path.append(np.ravel_multi_index(point, shape))
            cells.append(path)
    return build_mesh(grid / n, np.array(cells, dtype=np.int64))


def two_cell_mesh(d: int) -> Mesh:
    """Two simplices sharing one face, the smallest mesh with an interior face."""
    if d == 2:
        return build_mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [[0, 1, 2], [1, 3, 2]])
    if d == 3:
        return build_mesh([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.8, 0.7, 0.9]],
                          [[0, 1, 2, 3], [1, 2, 3, 4]])
    raise DomainError(f"two-cell meshes are available for d in (2, 3), got {d}")


def read_mesh(path) -> Mesh:
    """
    Reads the ASCII mesh format: header `dim nv nc`, nv coordinate lines, nc index lines.

    :param path: File path.
    :type path: str | Path
    :return: The validated mesh.
    :rtype: Mesh
    """
    lines = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    try:
        d, nv, nc = (int(token) for token in lines[0])
        vertices = np.array([[float(x) for x in line] for line in lines[1:1 + nv]])
        cells = np.array([[int(i) for i in line] for line in lines[1 + nv:1 + nv + nc]], dtype=np.int64)
    except (ValueError, IndexError) as err:
        raise DomainError(f"malformed mesh file {path}: {err}") from err
    if vertices.shape != (nv, d) or cells.shape != (nc, d + 1):
        raise DomainError(f"mesh file {path} does not match its header {d} {nv} {nc}")
    return build_mesh(vertices, cells)


def write_mesh(mesh: Mesh, path) -> None:
    rows = [f"{mesh.dim} {len(mesh.vertices)} {mesh.num_cells}"]
    rows += [' '.join(repr(float(x)) for x in v) for v in mesh.vertices]
    rows += [' '.join(str(int(i)) for i in cell) for cell in mesh.cells]
    Path(path).write_text('\n'.join(rows) + '\n')


@dataclass(frozen=True, eq=False)
class SplitCell:
    """
    One coarse cell T with its barycentric split T^R.

    Rows 0..d of `vertices` are the coarse vertices, row d+1 is the barycenter v_c.
    Subcell T_i carries the labels {0,...,d} without i, followed by c.
    """
    vertices: np.ndarray

    @classmethod
    def from_vertices(cls, coarse_vertices) -> 'SplitCell':
        coarse_vertices = np.asarray(coarse_vertices, dtype=float)
        geometry_pack(coarse_vertices)
        return cls(np.vstack([coarse_vertices, coarse_vertices.mean(axis=0)]))

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @property
    def c(self) -> int:
        return self.d + 1

    @property
    def coarse_vertices(self) -> np.ndarray:
        return self.vertices[:self.d + 1]

    @property
    def barycenter(self) -> np.ndarray:
        return self.vertices[self.d + 1]

    @cached_property
    def geometry(self) -> GeometryPack:
        return geometry_pack(self.coarse_vertices)

    @property
    def volume(self) -> float:
        return self.geometry.volume

    def sub_labels(self, i: int) -> tuple[int, ...]:
        return tuple(v for v in range(self.d + 2) if v != i)

    def sub_vertices(self, i: int) -> np.ndarray:
        return self.vertices[list(self.sub_labels(i))]

    @cached_property
    def sub_geometry(self) -> tuple[GeometryPack, ...]:
        return tuple(geometry_pack(self.sub_vertices(i)) for i in range(self.d + 1))

    def position(self, i: int, label: int) -> int:
        """Position of a label among the vertices of T_i."""
        if label == i:
            raise DomainError(f"label {label} is not a vertex of T_{label}")
        return label if label < i else label - 1

    def pieces_containing(self, labels) -> list[int]:
        """Subcells T_i that contain the given subsimplex of T^R."""
        return [i for i in range(self.d + 1) if i not in labels]

    def substitution(self, i: int) -> np.ndarray:
        """
        Coarse barycentric coordinates restricted to T_i: A[j, m] = λ_j(w_m) for the vertices w_m of T_i.

        :param i: Subcell index.
        :type i: int
        :return: Matrix of shape (d+1, d+1).
        :rtype: np.ndarray
        """
        return self._substitutions[i]

    @cached_property
    def _substitutions(self) -> tuple[np.ndarray, ...]:
        d = self.d
        result = []
        for i in range(d + 1):
            a = np.zeros((d + 1, d + 1))
            for m, label in enumerate(self.sub_labels(i)):
                if label == self.c:
                    a[:, m] = 1.0 / (d + 1)
                else:
                    a[label, m] = 1.0
            result.append(a)
        return tuple(result)

    def label_points(self, labels, bary: np.ndarray) -> np.ndarray:
        """Physical points from barycentric weights over a labelled subsimplex."""
        return np.asarray(bary) @ self.vertices[list(labels)]

    def sub_bary(self, i: int, labels, bary: np.ndarray) -> np.ndarray:
        """
        Barycentric coordinates in T_i of points given by weights over a subsimplex of T_i.

        :param i: Subcell index.
        :type i: int
        :param labels: Labels of a subsimplex of T_i.
        :type labels: Iterable[int]
        :param bary: Weights of shape (npts, len(labels)).
        :type bary: np.ndarray
        :return: Coordinates of shape (npts, d+1).
        :rtype: np.ndarray
        """
        bary = np.atleast_2d(bary)
        out = np.zeros((bary.shape[0], self.d + 1))
        for r, label in enumerate(labels):
            out[:, self.position(i, label)] = bary[:, r]
        return out

    @cached_property
    def interior_faces(self) -> tuple[tuple[int, int, IndexSet, np.ndarray], ...]:
        """
        Interior faces F_ij with unit normals oriented from T_i to T_j (i < j).
        """
        result = []
        for (i, j), face in interior_faces(self.d).items():
            normal = self.sub_geometry[i].normals[self.position(i, j)]
            result.append((i, j, face, normal))
        return tuple(result)

    def coarse_face_labels(self, m: int) -> tuple[int, ...]:
        return tuple(v for v in range(self.d + 1) if v != m)


@dataclass(frozen=True, eq=False)
class SplitMesh:
    coarse: Mesh
    fine: Mesh
    parent_cell: np.ndarray
    barycenters: np.ndarray
    interior_face_table: dict

    def cell(self, t: int) -> SplitCell:
        return self.coarse.split_cell(t)

    def fine_cell(self, t: int, i: int) -> int:
        return t * (self.coarse.dim + 1) + i


def barycentric_refine(mesh: Mesh) -> SplitMesh:
    """
    Splits every cell at its barycenter into d+1 subcells.

    :param mesh: A valid mesh.
    :type mesh: Mesh
    :return: The refinement with parent maps and the interior face table F_ij per coarse cell.
    :rtype: SplitMesh
    """
    d, nv, nc = mesh.dim, len(mesh.vertices), mesh.num_cells
    centers = np.array([mesh.cell_vertices(t).mean(axis=0) for t in range(nc)])
    vertices = np.vstack([mesh.vertices, centers])
    barycenters = nv + np.arange(nc)
    fine_cells, parent = [], []
    for t in range(nc):
        for i in range(d + 1):
            fine_cells.append([mesh.cells[t][m] for m in range(d + 1) if m != i] + [barycenters[t]])
            parent.append((t, i))
    fine = build_mesh(vertices, np.array(fine_cells, dtype=np.int64))
    lookup = {tuple(face.tolist()): f for f, face in enumerate(fine.faces)}
    table = {}
    for t in range(nc):
        for (i, j), face in interior_faces(d).items():
            ids = sorted(int(mesh.cells[t][v]) if v <= d else int(barycenters[t]) for v in face)
            table[(t, i, j)] = lookup[tuple(ids)]
    return SplitMesh(coarse=mesh, fine=fine, parent_cell=np.array(parent, dtype=np.int64),
                     barycenters=barycenters, interior_face_table=table)
