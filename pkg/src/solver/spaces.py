"""
Global finite element spaces over meshes.

A global space is stored as per-cell local bases (columns are piecewise
coefficient vectors on the split cell) plus a sparse prolongation from the
global coefficients to the concatenated local ones. Shared face DoFs get the
sign that turns the outward normal of the cell into the fixed face normal.
"""
import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import sparse as sp

from src.exceptions import DomainError
from src.fem import spaces as local_spaces
from src.fem.elements import ElementSpace, build_element, check_admissible, expected_dimension
from src.fem.poly import PiecewisePoly, num_bernstein, num_sym, rm_pieces
from src.geometry.mesh import Mesh
from src.schemas import Family

logger = logging.getLogger(__name__)

DISPLACEMENT_KINDS = ('coarse', 'split', 'rm')


def face_dimension(family: Family, d: int, k: int) -> int:
    """Number of DoFs a family attaches to one coarse face."""
    family = Family(family)
    if family in (Family.linear_phi_split, Family.linear_reduced):
        return d * d
    if family == Family.linear_rm:
        return d + d * (d - 1) // 2
    return d * comb(k + d - 1, d - 1)


@dataclass(frozen=True, eq=False)
class GlobalSpace:
    """
    A stress space on a mesh.

    `bases[c]` has shape (nflat, n_c); `prolongation` maps global coefficients to
    the concatenated local ones, cell by cell.
    """
    mesh: Mesh
    family: Family | None
    k: int
    degree: int
    bases: tuple[np.ndarray, ...]
    prolongation: sp.csr_matrix
    boundary_mask: np.ndarray
    cell_dofs: np.ndarray | None = None
    cell_signs: np.ndarray | None = None
    elements: tuple[ElementSpace, ...] = ()
    face_dim: int = 0
    interior_dim: int = 0
    discontinuous: bool = False
    offsets: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.mesh.dim

    @property
    def dim(self) -> int:
        return self.prolongation.shape[1]

    @property
    def ncomp(self) -> int:
        return num_sym(self.d)

    @property
    def broken_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([basis.shape[1] for basis in self.bases])])

    def local(self, c: int, coeffs: np.ndarray) -> np.ndarray:
        """Local basis coefficients of cell c from global coefficients."""
        start, stop = self.broken_offsets[c], self.broken_offsets[c + 1]
        return (self.prolongation[start:stop] @ np.asarray(coeffs)).reshape(-1)

    def cell_coefficients(self, c: int, coeffs: np.ndarray) -> np.ndarray:
        return self.bases[c] @ self.local(c, coeffs)

    def field(self, c: int, coeffs: np.ndarray) -> PiecewisePoly:
        return PiecewisePoly.from_flat(self.mesh.split_cell(c), self.degree, self.ncomp,
                                       self.cell_coefficients(c, coeffs))

    def basis_function(self, b: int) -> list[PiecewisePoly]:
        """The b-th global basis function, cell by cell."""
        unit = np.zeros(self.dim)
        unit[b] = 1.0
        return [self.field(c, unit) for c in range(self.mesh.num_cells)]

    def expected_dimension(self) -> int:
        """Closed-form total: entity counts times per-entity dimensions."""
        if self.family is None:
            return self.dim
        mesh = self.mesh
        if self.discontinuous:
            return mesh.num_cells * expected_dimension(self.family, self.d, self.k)
        return mesh.num_faces * face_dimension(self.family, self.d, self.k) + mesh.num_cells * self.interior_dim


def global_space(mesh: Mesh, family: Family, k: int, discontinuous: bool = False,
                 variant: str = 'moment') -> GlobalSpace:
    """
    Numbers the DoFs of an element family on a mesh.

    Face DoFs come first, face by face, followed by the interior DoFs of every cell.

    :param mesh: A conforming mesh.
    :type mesh: Mesh
    :param family: Element family.
    :type family: Family
    :param k: Degree.
    :type k: int
    :param discontinuous: Give every cell its own copy of the face DoFs.
    :type discontinuous: bool
    :param variant: DoF variant of the element.
    :type variant: str
    :return: The global space.
    :rtype: GlobalSpace
    """
    d = mesh.dim
    family = check_admissible(family, d, k, variant)
    elements = tuple(build_element(family, mesh.split_cell(c), k, mesh.face_orders(c), variant)
                     for c in range(mesh.num_cells))
    nloc = elements[0].dim
    face_dim = len(elements[0].face_dofs(0))
    interior_dim = nloc - (d + 1) * face_dim
    if face_dim != face_dimension(family, d, k):
        raise DomainError(f"{family.value}: {face_dim} DoFs per face, expected {face_dimension(family, d, k)}")

    nc, nf = mesh.num_cells, mesh.num_faces
    cell_dofs = np.empty((nc, nloc), dtype=np.int64)
    cell_signs = np.ones((nc, nloc))
    if discontinuous:
        cell_dofs[:] = np.arange(nc * nloc).reshape(nc, nloc)
        total = nc * nloc
        offsets = {'cells': 0}
        boundary_mask = np.zeros(total, dtype=bool)
        for c, element in enumerate(elements):
            for m in range(d + 1):
                if mesh.boundary[mesh.cell_faces[c, m]]:
                    boundary_mask[cell_dofs[c, element.face_dofs(m)]] = True
    else:
        cells_start = nf * face_dim
        total = cells_start + nc * interior_dim
        offsets = {'faces': 0, 'cells': cells_start}
        for c, element in enumerate(elements):
            for m in range(d + 1):
                f = mesh.cell_faces[c, m]
                local = element.face_dofs(m)
                cell_dofs[c, local] = f * face_dim + np.arange(face_dim)
                cell_signs[c, local] = [mesh.cell_face_signs[c, m] if element.dofs[a].flips else 1.0
                                        for a in local]
            cell_dofs[c, element.interior_dofs()] = cells_start + c * interior_dim + np.arange(interior_dim)
        boundary_mask = np.zeros(total, dtype=bool)
        for f in mesh.boundary_faces:
            boundary_mask[f * face_dim:(f + 1) * face_dim] = True

    rows = np.arange(nc * nloc)
    prolongation = sp.coo_matrix((cell_signs.reshape(-1), (rows, cell_dofs.reshape(-1))),
                                 shape=(nc * nloc, total)).tocsr()
    space = GlobalSpace(mesh=mesh, family=family, k=k, degree=elements[0].degree,
                        bases=tuple(element.nodal for element in elements), prolongation=prolongation,
                        boundary_mask=boundary_mask, cell_dofs=cell_dofs, cell_signs=cell_signs, elements=elements,
                        face_dim=face_dim, interior_dim=interior_dim, discontinuous=discontinuous, offsets=offsets)
    if space.dim != space.expected_dimension():
        raise DomainError(f"{family.value}: {space.dim} global DoFs, expected {space.expected_dimension()}")
    logger.debug("global space %s k=%d on %d cells: %d DoFs (%d per face, %d interior per cell)",
                 family.value, k, nc, total, face_dim, interior_dim)
    return space


def broken_polynomial_space(mesh: Mesh, k: int) -> GlobalSpace:
    """P_k^{-1}(T_h;S): coarse polynomials on every cell, no continuity."""
    cells = [mesh.split_cell(c) for c in range(mesh.num_cells)]
    bases = tuple(local_spaces.flat(local_spaces.coarse_poly_space(cell, k)) for cell in cells)
    total = sum(basis.shape[1] for basis in bases)
    return GlobalSpace(mesh=mesh, family=None, k=k, degree=k, bases=bases,
                       prolongation=sp.identity(total, format='csr'),
                       boundary_mask=np.zeros(total, dtype=bool), discontinuous=True)


def restricted_space(space: GlobalSpace, basis: np.ndarray) -> GlobalSpace:
    """The subspace spanned by the columns of basis, in the coefficients of space."""
    prolongation = sp.csr_matrix(space.prolongation @ basis)
    return GlobalSpace(mesh=space.mesh, family=space.family, k=space.k, degree=space.degree, bases=space.bases,
                       prolongation=prolongation, boundary_mask=np.zeros(basis.shape[1], dtype=bool),
                       discontinuous=False)


@dataclass(frozen=True, eq=False)
class DisplacementSpace:
    """
    A discontinuous vector space with cell-local bases in piecewise coefficients.

    kind 'coarse' is P_m^{-1}(T_h;R^d), 'split' is P_m^{-1}(T_h^R;R^d) and 'rm' is RM(T_h).
    """
    mesh: Mesh
    kind: str
    order: int
    degree: int
    bases: tuple[np.ndarray, ...]

    @property
    def d(self) -> int:
        return self.mesh.dim

    @property
    def nloc(self) -> int:
        return self.bases[0].shape[1]

    @property
    def dim(self) -> int:
        return self.mesh.num_cells * self.nloc

    def cell_dofs(self, c: int) -> np.ndarray:
        return np.arange(c * self.nloc, (c + 1) * self.nloc)

    def cell_coefficients(self, c: int, coeffs: np.ndarray) -> np.ndarray:
        return self.bases[c] @ np.asarray(coeffs)[self.cell_dofs(c)]

    def field(self, c: int, coeffs: np.ndarray) -> PiecewisePoly:
        return PiecewisePoly.from_flat(self.mesh.split_cell(c), self.degree, self.d, self.cell_coefficients(c, coeffs))


def displacement_space(mesh: Mesh, kind: str, order: int = 0) -> DisplacementSpace:
    """
    Builds a displacement space.

    :param mesh: The coarse mesh.
    :type mesh: Mesh
    :param kind: 'coarse', 'split' or 'rm'.
    :type kind: str
    :param order: Polynomial degree m; ignored for 'rm'.
    :type order: int
    :return: The space.
    :rtype: DisplacementSpace
    """
    if kind not in DISPLACEMENT_KINDS:
        raise DomainError(f"unknown displacement space {kind!r}")
    if kind != 'rm' and order < 0:
        raise DomainError(f"displacement degree must be >= 0, got {order}")
    d = mesh.dim
    bases = []
    for c in range(mesh.num_cells):
        cell = mesh.split_cell(c)
        if kind == 'coarse':
            bases.append(local_spaces.flat(local_spaces.coarse_vector_space(cell, order)))
        elif kind == 'split':
            bases.append(np.eye((d + 1) * num_bernstein(d, order) * d))
        else:
            rigid = rm_pieces(cell)
            bases.append(rigid.reshape(-1, rigid.shape[-1]))
    degree = 1 if kind == 'rm' else order
    return DisplacementSpace(mesh=mesh, kind=kind, order=1 if kind == 'rm' else order, degree=degree,
                             bases=tuple(bases))
