"""
Bernstein polynomial calculus on simplices and on barycentric splits.

Coefficient arrays put the Bernstein index first and value components second;
any further trailing axes are carried along untouched, so a batch of functions
is just one more axis. Multi-indices of a degree are ordered descending
lexicographically.
"""
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial, prod

import numpy as np
from scipy import linalg

from src.exceptions import DomainError
from src.fem.quadrature import quad_rule
from src.geometry.mesh import GeometryPack, SplitCell
from src.geometry.simplex import IndexSet


# ---------------------------------------------------------------- multi-indices

@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> np.ndarray:
    """
    All multi-indices of length n+1 and modulus k.

    :param n: Simplex dimension.
    :type n: int
    :param k: Polynomial degree.
    :type k: int
    :return: Integer array of shape (C(k+n, n), n+1).
    :rtype: np.ndarray
    """
    if n < 0 or k < 0:
        raise DomainError(f"need n >= 0 and k >= 0, got n={n}, k={k}")
    alphas = np.array(list(_compositions(k, n + 1)), dtype=np.int64).reshape(-1, n + 1)
    alphas.flags.writeable = False
    return alphas


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def num_bernstein(n: int, k: int) -> int:
    return comb(k + n, n) if k >= 0 else 0


@lru_cache(maxsize=None)
def _index_table(n: int, k: int) -> dict:
    return {tuple(int(x) for x in alpha): a for a, alpha in enumerate(multi_indices(n, k))}


def index_of(alpha, k: int | None = None) -> int:
    alpha = tuple(int(x) for x in alpha)
    return _index_table(len(alpha) - 1, sum(alpha) if k is None else k)[alpha]


def multinomial(alpha) -> int:
    alpha = [int(x) for x in alpha]
    return factorial(sum(alpha)) // prod(factorial(x) for x in alpha)


@lru_cache(maxsize=None)
def _multinomials(n: int, k: int) -> np.ndarray:
    return np.array([multinomial(alpha) for alpha in multi_indices(n, k)], dtype=float)


def bernstein_eval(k: int, bary: np.ndarray) -> np.ndarray:
    """
    Evaluates the degree-k Bernstein basis B_α = (k!/α!) λ^α.

    :param k: Degree.
    :type k: int
    :param bary: Barycentric points of shape (npts, n+1).
    :type bary: np.ndarray
    :return: Values of shape (npts, C(k+n, n)).
    :rtype: np.ndarray
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    n = bary.shape[1] - 1
    alphas = multi_indices(n, k)
    return _multinomials(n, k) * np.prod(bary[:, None, :] ** alphas[None, :, :], axis=2)


def evaluate(coeffs: np.ndarray, k: int, bary: np.ndarray) -> np.ndarray:
    """Values of shape (npts, *coeffs.shape[1:])."""
    return np.tensordot(bernstein_eval(k, bary), coeffs, axes=(1, 0))


@lru_cache(maxsize=None)
def _raise_one(n: int, k: int) -> np.ndarray:
    alphas = multi_indices(n, k + 1)
    out = np.zeros((len(alphas), num_bernstein(n, k)))
    for b, beta in enumerate(alphas):
        for j in range(n + 1):
            if beta[j] > 0:
                lower = beta.copy()
                lower[j] -= 1
                out[b, index_of(lower, k)] += beta[j] / (k + 1)
    return out


@lru_cache(maxsize=None)
def elevation_matrix(n: int, k: int, m: int) -> np.ndarray:
    """
    Exact degree elevation from k to m >= k: c_m = E @ c_k.

    :param n: Simplex dimension.
    :type n: int
    :param k: Source degree.
    :type k: int
    :param m: Target degree.
    :type m: int
    :return: Matrix of shape (C(m+n, n), C(k+n, n)).
    :rtype: np.ndarray
    """
    if m < k:
        raise DomainError(f"cannot elevate degree {k} to {m}")
    out = np.eye(num_bernstein(n, k))
    for step in range(k, m):
        out = _raise_one(n, step) @ out
    out.flags.writeable = False
    return out


def elevate(coeffs: np.ndarray, n: int, k: int, m: int) -> np.ndarray:
    if m == k:
        return coeffs
    return np.tensordot(elevation_matrix(n, k, m), coeffs, axes=(1, 0))


@lru_cache(maxsize=None)
def _product_table(n: int, k: int, m: int):
    ia, ib, ig, fac = [], [], [], []
    alphas, betas = multi_indices(n, k), multi_indices(n, m)
    for a, alpha in enumerate(alphas):
        for b, beta in enumerate(betas):
            gamma = alpha + beta
            ia.append(a)
            ib.append(b)
            ig.append(index_of(gamma, k + m))
            fac.append(multinomial(alpha) * multinomial(beta) / multinomial(gamma))
    return np.array(ia), np.array(ib), np.array(ig), np.array(fac)


def multiply(n: int, a: np.ndarray, k: int, b: np.ndarray, m: int) -> np.ndarray:
    """
    Product of Bernstein expansions: B^k_α B^m_β = C(k,α)C(m,β)/C(k+m,α+β) B^{k+m}_{α+β}.

    :param n: Simplex dimension.
    :type n: int
    :param a: Coefficients of shape (C(k+n,n), *sa).
    :type a: np.ndarray
    :param k: Degree of a.
    :type k: int
    :param b: Coefficients of shape (C(m+n,n), *sb).
    :type b: np.ndarray
    :param m: Degree of b.
    :type m: int
    :return: Coefficients of shape (C(k+m+n,n), *sa, *sb), the outer product of the trailing axes.
    :rtype: np.ndarray
    """
    ia, ib, ig, fac = _product_table(n, k, m)
    sa, sb = a.shape[1:], b.shape[1:]
    left = a.reshape(a.shape[0], -1)[ia]
    right = b.reshape(b.shape[0], -1)[ib]
    terms = fac[:, None, None] * left[:, :, None] * right[:, None, :]
    out = np.zeros((num_bernstein(n, k + m), left.shape[1], right.shape[1]))
    np.add.at(out, ig, terms)
    return out.reshape((out.shape[0],) + sa + sb)


@lru_cache(maxsize=None)
def bernstein_gram(n: int, k: int, m: int) -> np.ndarray:
    """
    ∫_T B^k_α B^m_β dx / |T| in closed form.

    :param n: Simplex dimension.
    :type n: int
    :param k: Degree of the rows.
    :type k: int
    :param m: Degree of the columns.
    :type m: int
    :return: Matrix of shape (C(k+n,n), C(m+n,n)).
    :rtype: np.ndarray
    """
    alphas, betas = multi_indices(n, k), multi_indices(n, m)
    out = np.empty((len(alphas), len(betas)))
    for a, alpha in enumerate(alphas):
        for b, beta in enumerate(betas):
            out[a, b] = multinomial(alpha) * multinomial(beta) / multinomial(alpha + beta)
    out /= comb(k + m + n, n)
    out.flags.writeable = False
    return out


def mixed_mass(n: int, k: int, m: int, volume: float) -> np.ndarray:
    """Gram matrix of the degree k and degree m Bernstein bases on a simplex of the given volume."""
    return volume * bernstein_gram(n, k, m)


def mass_matrix(n: int, k: int, volume: float, m: int | None = None) -> np.ndarray:
    return mixed_mass(n, k, k if m is None else m, volume)


def integrate_coeffs(coeffs: np.ndarray, n: int, k: int, volume: float) -> np.ndarray:
    """∫ B_α = |T| / C(k+n, n) for every α."""
    return volume * coeffs.sum(axis=0) / comb(k + n, n)


@lru_cache(maxsize=None)
def _raise_table(n: int, k: int) -> np.ndarray:
    # index of β + e_j in degree k for β of degree k-1
    lower = multi_indices(n, k - 1)
    out = np.empty((len(lower), n + 1), dtype=np.int64)
    for b, beta in enumerate(lower):
        for j in range(n + 1):
            up = beta.copy()
            up[j] += 1
            out[b, j] = index_of(up, k)
    return out


def derivative(coeffs: np.ndarray, k: int, grad_lambda: np.ndarray) -> np.ndarray:
    """
    Gradient of Bernstein expansions: D_β = k Σ_j c_{β+e_j} ∇λ_j.

    :param coeffs: Coefficients of shape (C(k+n,n), *rest).
    :type coeffs: np.ndarray
    :param k: Degree.
    :type k: int
    :param grad_lambda: Barycentric gradients of shape (n+1, dim).
    :type grad_lambda: np.ndarray
    :return: Coefficients of degree max(k-1, 0) and shape (nβ, *rest, dim).
    :rtype: np.ndarray
    """
    n = grad_lambda.shape[0] - 1
    if k == 0:
        return np.zeros((1,) + coeffs.shape[1:] + (grad_lambda.shape[1],))
    gathered = coeffs[_raise_table(n, k)]
    return k * np.einsum('bj...,jx->b...x', gathered, grad_lambda)


@lru_cache(maxsize=None)
def trace_indices(n: int, k: int, positions: tuple[int, ...]) -> np.ndarray:
    """
    Bernstein indices on T whose support lies in a subsimplex.

    :param n: Simplex dimension.
    :type n: int
    :param k: Degree.
    :type k: int
    :param positions: Increasing vertex positions spanning the subsimplex.
    :type positions: tuple
    :return: For each multi-index of the subsimplex (in its own order), the index on T.
    :rtype: np.ndarray
    """
    out = []
    for beta in multi_indices(len(positions) - 1, k):
        alpha = np.zeros(n + 1, dtype=np.int64)
        alpha[list(positions)] = beta
        out.append(index_of(alpha, k))
    return np.array(out, dtype=np.int64)


def restrict(coeffs: np.ndarray, n: int, k: int, positions) -> np.ndarray:
    return coeffs[trace_indices(n, k, tuple(positions))]


def extend(coeffs: np.ndarray, n: int, k: int, positions) -> np.ndarray:
    """Zero padding: the homogeneous barycentric extension of a face polynomial."""
    out = np.zeros((num_bernstein(n, k),) + coeffs.shape[1:])
    out[trace_indices(n, k, tuple(positions))] = coeffs
    return out


# ---------------------------------------------------------------- symmetric tensors

def num_sym(d: int) -> int:
    return d * (d + 1) // 2


@lru_cache(maxsize=None)
def sym_pairs(d: int) -> tuple[tuple[int, int], ...]:
    """Upper-triangle storage order, row-major."""
    return tuple((p, q) for p in range(d) for q in range(p, d))


@lru_cache(maxsize=None)
def sym_weights(d: int) -> np.ndarray:
    out = np.array([1.0 if p == q else 2.0 for p, q in sym_pairs(d)])
    out.flags.writeable = False
    return out


def sym_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sym(a ⊗ b) in storage."""
    return np.array([(a[p] * b[q] + a[q] * b[p]) / 2 for p, q in sym_pairs(len(a))])


def sym_to_full(values: np.ndarray, d: int) -> np.ndarray:
    values = np.asarray(values)
    out = np.zeros(values.shape[:-1] + (d, d))
    for s, (p, q) in enumerate(sym_pairs(d)):
        out[..., p, q] = values[..., s]
        out[..., q, p] = values[..., s]
    return out


def full_to_sym(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix)
    d = matrix.shape[-1]
    sym = (matrix + np.swapaxes(matrix, -1, -2)) / 2
    return np.stack([sym[..., p, q] for p, q in sym_pairs(d)], axis=-1)


def normal_map(normal: np.ndarray) -> np.ndarray:
    """
    N with (τ n)_p = Σ_s τ_s N[s, p] for τ in symmetric storage.

    :param normal: Vector of length d.
    :type normal: np.ndarray
    :return: Matrix of shape (d(d+1)/2, d).
    :rtype: np.ndarray
    """
    d = len(normal)
    out = np.zeros((num_sym(d), d))
    for s, (p, q) in enumerate(sym_pairs(d)):
        out[s, p] += normal[q]
        if p != q:
            out[s, q] += normal[p]
    return out


def sym_contract(q: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Weights w with qᵀ τ n = Σ_s w_s τ_s."""
    return normal_map(np.asarray(n, dtype=float)) @ np.asarray(q, dtype=float)


@lru_cache(maxsize=None)
def div_map(d: int) -> np.ndarray:
    """M with (div τ)_o = Σ_{s,x} ∂_x τ_s M[s, x, o]."""
    out = np.zeros((num_sym(d), d, d))
    for s, (p, q) in enumerate(sym_pairs(d)):
        out[s, q, p] += 1.0
        if p != q:
            out[s, p, q] += 1.0
    out.flags.writeable = False
    return out


def frobenius(a: np.ndarray, b: np.ndarray, d: int) -> np.ndarray:
    """a : b in symmetric storage along the last axis."""
    return np.sum(sym_weights(d) * a * b, axis=-1)


def trace_weights(d: int) -> np.ndarray:
    return np.array([1.0 if p == q else 0.0 for p, q in sym_pairs(d)])


def sym_div(coeffs: np.ndarray, k: int, grad_lambda: np.ndarray) -> np.ndarray:
    """Row-wise divergence: (nα, nsym, *rest) -> (nβ, d, *rest)."""
    d = grad_lambda.shape[1]
    jac = derivative(coeffs, k, grad_lambda)
    return np.einsum('bs...x,sxo->bo...', jac, div_map(d))


def sym_grad(coeffs: np.ndarray, k: int, grad_lambda: np.ndarray) -> np.ndarray:
    """ε(v) for vector coefficients (nα, d, *rest) -> (nβ, nsym, *rest)."""
    d = grad_lambda.shape[1]
    jac = derivative(coeffs, k, grad_lambda)
    jac = np.moveaxis(jac, -1, 2)
    return np.stack([(jac[:, p, q] + jac[:, q, p]) / 2 for p, q in sym_pairs(d)], axis=1)


def normal_trace(coeffs: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """τ n for coefficients (nα, nsym, *rest) -> (nα, d, *rest)."""
    return np.einsum('bs...,sp->bp...', coeffs, normal_map(normal))


# ---------------------------------------------------------------- polynomials on one simplex

@dataclass(frozen=True, eq=False)
class BaryPoly:
    """
    A polynomial on one simplex in the Bernstein basis of its barycentric coordinates.
    """
    degree: int
    coeffs: np.ndarray
    geometry: GeometryPack | None = None

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        object.__setattr__(self, 'coeffs', coeffs)
        if self.geometry is not None and coeffs.shape[0] != num_bernstein(self.geometry.dim, self.degree):
            raise DomainError(f"{coeffs.shape[0]} coefficients do not fit degree {self.degree} "
                              f"on a {self.geometry.dim}-simplex")

    @property
    def dim(self) -> int:
        if self.geometry is not None:
            return self.geometry.dim
        for n in range(0, 16):
            if num_bernstein(n, self.degree) == self.coeffs.shape[0]:
                return n
        raise DomainError("cannot infer the simplex dimension")

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[1]

    def _require_geometry(self) -> GeometryPack:
        if self.geometry is None:
            raise DomainError("operation needs the cell geometry")
        return self.geometry

    def __call__(self, bary: np.ndarray) -> np.ndarray:
        return evaluate(self.coeffs, self.degree, bary)

    def at_points(self, x: np.ndarray) -> np.ndarray:
        return self(self._require_geometry().barycentric(x))

    def __add__(self, other: 'BaryPoly') -> 'BaryPoly':
        m = max(self.degree, other.degree)
        return BaryPoly(m, self.elevate(m).coeffs + other.elevate(m).coeffs, self.geometry or other.geometry)

    def __sub__(self, other: 'BaryPoly') -> 'BaryPoly':
        return self + other.scale(-1.0)

    def scale(self, factor) -> 'BaryPoly':
        return BaryPoly(self.degree, self.coeffs * factor, self.geometry)

    def elevate(self, m: int) -> 'BaryPoly':
        return BaryPoly(m, elevate(self.coeffs, self.dim, self.degree, m), self.geometry)

    def __mul__(self, other: 'BaryPoly') -> 'BaryPoly':
        """Product; one factor must be scalar valued."""
        if self.ncomp != 1 and other.ncomp != 1:
            raise DomainError("only scalar-times-field products are supported")
        out = multiply(self.dim, self.coeffs, self.degree, other.coeffs, other.degree)
        return BaryPoly(self.degree + other.degree, out.reshape(out.shape[0], -1), self.geometry or other.geometry)

    def jacobian(self) -> 'BaryPoly':
        """Components ordered (component, direction)."""
        geometry = self._require_geometry()
        jac = derivative(self.coeffs, self.degree, geometry.grad_lambda)
        return BaryPoly(max(self.degree - 1, 0), jac.reshape(jac.shape[0], -1), geometry)

    def grad(self) -> 'BaryPoly':
        if self.ncomp != 1:
            raise DomainError("grad needs a scalar polynomial")
        return self.jacobian()

    def div(self) -> 'BaryPoly':
        geometry = self._require_geometry()
        d = geometry.dim
        if self.ncomp == num_sym(d):
            out = sym_div(self.coeffs, self.degree, geometry.grad_lambda)
        elif self.ncomp == d:
            jac = derivative(self.coeffs, self.degree, geometry.grad_lambda)
            out = np.trace(jac, axis1=1, axis2=2)[:, None]
        else:
            raise DomainError(f"div needs vector or symmetric-tensor values, got {self.ncomp} components")
        return BaryPoly(max(self.degree - 1, 0), out, geometry)

    def sym_grad(self) -> 'BaryPoly':
        geometry = self._require_geometry()
        if self.ncomp != geometry.dim:
            raise DomainError("sym_grad needs a vector polynomial")
        return BaryPoly(max(self.degree - 1, 0), sym_grad(self.coeffs, self.degree, geometry.grad_lambda), geometry)

    def trace(self, positions) -> 'BaryPoly':
        """Restriction to the subsimplex spanned by the given vertex positions."""
        positions = tuple(sorted(int(p) for p in positions))
        return BaryPoly(self.degree, restrict(self.coeffs, self.dim, self.degree, positions))

    def integrate(self) -> np.ndarray:
        return integrate_coeffs(self.coeffs, self.dim, self.degree, self._require_geometry().volume)


def bubble(f: IndexSet, geometry: GeometryPack) -> BaryPoly:
    """
    b_f = Π_{i∈f} λ_i on the simplex described by `geometry`.

    :param f: Vertex labels of a subsimplex (positions in the simplex).
    :type f: IndexSet
    :param geometry: The simplex.
    :type geometry: GeometryPack
    :return: A scalar polynomial of degree |f|.
    :rtype: BaryPoly
    """
    labels = tuple(f)
    if f.has_c or labels[-1] > geometry.dim:
        raise DomainError(f"{f} is not a subsimplex of a {geometry.dim}-simplex")
    return BaryPoly(len(labels), _monomial_coeffs(geometry.dim, labels), geometry)


def _monomial_coeffs(n: int, positions) -> np.ndarray:
    """Bernstein coefficients of Π_{j∈positions} λ_j = e!/|e|! B_e."""
    alpha = np.zeros(n + 1, dtype=np.int64)
    alpha[list(positions)] = 1
    k = int(alpha.sum())
    out = np.zeros(num_bernstein(n, k))
    out[index_of(alpha, k)] = 1.0 / factorial(k)
    return out


def extend_face_poly(coeffs: np.ndarray, k: int, f: IndexSet, geometry: GeometryPack) -> BaryPoly:
    """
    Extends a polynomial given in the Bernstein basis of f to T by barycentric substitution.

    Only the trace on f is determined. Off f the extension is the zero-padded Bernstein expansion,
    so the constant one becomes (Σ_{v∈f} λ_v)^k, which vanishes at the vertices opposite f for k ≥ 1
    and is one everywhere for k = 0.

    :param coeffs: Coefficients on f, shape (C(k+ℓ, ℓ), ...).
    :type coeffs: np.ndarray
    :param k: Degree.
    :type k: int
    :param f: The subsimplex, as vertex positions of T.
    :type f: IndexSet
    :param geometry: The simplex T.
    :type geometry: GeometryPack
    :return: The extension, whose trace on f reproduces the input.
    :rtype: BaryPoly
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != num_bernstein(f.ell, k):
        raise DomainError(f"{coeffs.shape[0]} coefficients do not fit degree {k} on {f}")
    return BaryPoly(k, extend(coeffs, geometry.dim, k, tuple(f)), geometry)


# ---------------------------------------------------------------- split cells

@lru_cache(maxsize=None)
def coarse_substitution(d: int, i: int, k: int) -> np.ndarray:
    """
    Coarse Bernstein functions restricted to subcell T_i: c_i = M @ c_T.

    The matrix only depends on labels: λ_j = Σ_m A[j, m] μ_m with the subcell
    coordinates μ, and the powers are expanded by exact Bernstein products.

    :param d: Dimension.
    :type d: int
    :param i: Subcell index.
    :type i: int
    :param k: Degree.
    :type k: int
    :return: Matrix of shape (C(k+d,d), C(k+d,d)).
    :rtype: np.ndarray
    """
    a = np.zeros((d + 1, d + 1))
    for m, label in enumerate(v for v in range(d + 2) if v != i):
        if label == d + 1:
            a[:, m] = 1.0 / (d + 1)
        else:
            a[label, m] = 1.0
    alphas = multi_indices(d, k)
    out = np.zeros((len(alphas), len(alphas)))
    for col, alpha in enumerate(alphas):
        poly, degree = np.ones(1), 0
        for j in range(d + 1):
            for _ in range(alpha[j]):
                poly = multiply(d, poly, degree, a[j], 1)
                degree += 1
        out[:, col] = multinomial(alpha) * poly
    out.flags.writeable = False
    return out


def coarse_bernstein(cell: SplitCell, k: int) -> np.ndarray:
    """
    The coarse degree-k Bernstein basis on T represented on the pieces of T^R.

    :param cell: Split cell.
    :type cell: SplitCell
    :param k: Degree.
    :type k: int
    :return: Array of shape (d+1, nα, nα): piece, piece Bernstein index, coarse Bernstein index.
    :rtype: np.ndarray
    """
    return np.stack([coarse_substitution(cell.d, i, k) for i in range(cell.d + 1)])


def coarse_to_pieces(coeffs: np.ndarray, d: int, k: int) -> np.ndarray:
    """Coarse coefficients (nα, *rest) -> piecewise coefficients (d+1, nα, *rest)."""
    return np.stack([np.tensordot(coarse_substitution(d, i, k), coeffs, axes=(1, 0)) for i in range(d + 1)])


def split_monomial(cell_d: int, labels, k_extra: int = 0) -> np.ndarray:
    """
    Piecewise coefficients of Π_{v∈labels} λ_v^R at degree |labels| + k_extra.

    :return: Array of shape (d+1, nα).
    """
    d = cell_d
    degree = len(labels)
    out = np.zeros((d + 1, num_bernstein(d, degree)))
    for i in range(d + 1):
        if i in labels:
            continue
        out[i] = _monomial_coeffs(d, [v if v < i else v - 1 for v in labels])
    if k_extra:
        out = np.stack([elevate(piece, d, degree, degree + k_extra) for piece in out])
    return out


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    """
    A function on T that is polynomial on every subcell of T^R.

    coeffs has shape (d+1, C(k+d, d), ncomp); flat index (i*nα + a)*ncomp + s.
    """
    cell: SplitCell
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim == 2:
            coeffs = coeffs[:, :, None]
        d = self.cell.d
        if coeffs.shape[:2] != (d + 1, num_bernstein(d, self.degree)):
            raise DomainError(f"piecewise coefficients of shape {coeffs.shape} do not fit degree {self.degree}")
        object.__setattr__(self, 'coeffs', coeffs)

    @classmethod
    def from_flat(cls, cell: SplitCell, degree: int, ncomp: int, vector: np.ndarray) -> 'PiecewisePoly':
        return cls(cell, degree, np.asarray(vector).reshape(cell.d + 1, num_bernstein(cell.d, degree), ncomp))

    @classmethod
    def from_coarse(cls, cell: SplitCell, poly: BaryPoly) -> 'PiecewisePoly':
        return cls(cell, poly.degree, coarse_to_pieces(poly.coeffs, cell.d, poly.degree))

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[2]

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def piece(self, i: int) -> BaryPoly:
        return BaryPoly(self.degree, self.coeffs[i], self.cell.sub_geometry[i])

    def evaluate(self, i: int, bary: np.ndarray) -> np.ndarray:
        return evaluate(self.coeffs[i], self.degree, bary)

    def at_points(self, x: np.ndarray) -> np.ndarray:
        """Values at physical points; points on shared faces take the lowest subcell."""
        x = np.atleast_2d(x)
        out = np.full((len(x), self.ncomp), np.nan)
        for i in reversed(range(self.cell.d + 1)):
            bary = self.cell.sub_geometry[i].barycentric(x)
            inside = np.all(bary >= -1e-12, axis=1)
            if np.any(inside):
                out[inside] = self.evaluate(i, bary[inside])
        return out

    def __add__(self, other: 'PiecewisePoly') -> 'PiecewisePoly':
        m = max(self.degree, other.degree)
        return PiecewisePoly(self.cell, m, self.elevate(m).coeffs + other.elevate(m).coeffs)

    def __sub__(self, other: 'PiecewisePoly') -> 'PiecewisePoly':
        return self + other.scale(-1.0)

    def scale(self, factor) -> 'PiecewisePoly':
        return PiecewisePoly(self.cell, self.degree, self.coeffs * factor)

    def elevate(self, m: int) -> 'PiecewisePoly':
        if m == self.degree:
            return self
        return PiecewisePoly(self.cell, m, np.stack([elevate(c, self.cell.d, self.degree, m) for c in self.coeffs]))

    def times(self, other: 'PiecewisePoly') -> 'PiecewisePoly':
        """Product with a scalar piecewise polynomial."""
        d = self.cell.d
        scalar, field = (other, self) if other.ncomp == 1 else (self, other)
        if scalar.ncomp != 1:
            raise DomainError("one factor must be scalar valued")
        out = np.stack([multiply(d, scalar.coeffs[i, :, 0], scalar.degree, field.coeffs[i], field.degree)
                        for i in range(d + 1)])
        return PiecewisePoly(self.cell, self.degree + other.degree, out)

    def tensor(self, value: np.ndarray) -> 'PiecewisePoly':
        """Scalar times a constant (or per-piece constant) value of shape (ncomp,) or (d+1, ncomp)."""
        value = np.asarray(value, dtype=float)
        if value.ndim == 1:
            value = np.broadcast_to(value, (self.cell.d + 1, len(value)))
        return PiecewisePoly(self.cell, self.degree, self.coeffs[:, :, :1] * value[:, None, :])

    def div(self) -> 'PiecewisePoly':
        d = self.cell.d
        out = []
        for i in range(d + 1):
            grad = self.cell.sub_geometry[i].grad_lambda
            if self.ncomp == num_sym(d):
                out.append(sym_div(self.coeffs[i], self.degree, grad))
            else:
                jac = derivative(self.coeffs[i], self.degree, grad)
                out.append(np.trace(jac, axis1=1, axis2=2)[:, None])
        return PiecewisePoly(self.cell, max(self.degree - 1, 0), np.stack(out))

    def sym_grad(self) -> 'PiecewisePoly':
        out = [sym_grad(self.coeffs[i], self.degree, self.cell.sub_geometry[i].grad_lambda)
               for i in range(self.cell.d + 1)]
        return PiecewisePoly(self.cell, max(self.degree - 1, 0), np.stack(out))

    def trace(self, i: int, labels) -> BaryPoly:
        """Restriction of piece i to the subsimplex of T_i with the given split labels."""
        positions = tuple(self.cell.position(i, v) for v in sorted(labels))
        return BaryPoly(self.degree, restrict(self.coeffs[i], self.cell.d, self.degree, positions))

    def normal_jump(self, i: int, j: int) -> np.ndarray:
        """
        Bernstein coefficients of [τ n] on F_ij with n oriented from T_i to T_j.

        :return: Array of shape (C(k+d-1, d-1), d).
        """
        for a, b, face, normal in self.cell.interior_faces:
            if (a, b) == (min(i, j), max(i, j)):
                left = normal_trace(self.trace(a, face).coeffs, normal)
                right = normal_trace(self.trace(b, face).coeffs, normal)
                return left - right
        raise DomainError(f"no interior face between T_{i} and T_{j}")

    def max_normal_jump(self) -> float:
        return max(float(np.abs(self.normal_jump(i, j)).max(initial=0.0)) for i, j, _, _ in self.cell.interior_faces)

    def integrate(self) -> np.ndarray:
        d = self.cell.d
        return sum(integrate_coeffs(self.coeffs[i], d, self.degree, self.cell.sub_geometry[i].volume)
                   for i in range(d + 1))


def split_hat(label: int, cell: SplitCell) -> PiecewisePoly:
    """
    The continuous piecewise-linear hat λ_label^R on T^R.

    :param label: A vertex label in {0,...,d} or d+1 for the barycenter.
    :type label: int
    :param cell: Split cell.
    :type cell: SplitCell
    :return: Scalar piecewise polynomial of degree 1.
    :rtype: PiecewisePoly
    """
    if not 0 <= label <= cell.d + 1:
        raise DomainError(f"label {label} out of range for d={cell.d}")
    return PiecewisePoly(cell, 1, split_monomial(cell.d, (label,)))


def split_bubble(f: IndexSet, cell: SplitCell) -> PiecewisePoly:
    """
    b_f^R = Π_{v∈f} λ_v^R; agrees with b_f on f but lives on the pieces T_i, i ∉ f.

    :param f: A subsimplex of T^R (labels may include the barycenter).
    :type f: IndexSet
    :param cell: Split cell.
    :type cell: SplitCell
    :return: Scalar piecewise polynomial of degree |f|.
    :rtype: PiecewisePoly
    """
    if f.dim != cell.d:
        raise DomainError(f"{f} lives in dimension {f.dim}, cell in {cell.d}")
    return PiecewisePoly(cell, len(f), split_monomial(cell.d, tuple(f)))


# ---------------------------------------------------------------- rigid motions and projections

def rm_basis(geometry: GeometryPack) -> np.ndarray:
    """
    Degree-one Bernstein coefficients of a basis of RM(T): translations, then rotations about the barycenter.

    :param geometry: The simplex.
    :type geometry: GeometryPack
    :return: Array of shape (d+1, d, d(d+1)/2).
    :rtype: np.ndarray
    """
    d = geometry.dim
    rel = geometry.vertices - geometry.barycenter
    scale = geometry.diameter
    columns = []
    for a in range(d):
        column = np.zeros((d + 1, d))
        column[:, a] = 1.0
        columns.append(column)
    for a in range(d):
        for b in range(a + 1, d):
            column = np.zeros((d + 1, d))
            column[:, a] = rel[:, b] / scale
            column[:, b] = -rel[:, a] / scale
            columns.append(column)
    return np.stack(columns, axis=-1)


def rm_pieces(cell: SplitCell) -> np.ndarray:
    """RM(T) on the pieces of T^R: (d+1, d+1, d, nrm) at degree one."""
    return coarse_to_pieces(rm_basis(cell.geometry), cell.d, 1)


def l2_project(basis: np.ndarray, degree: int, geometry: GeometryPack, values_fn, quad_degree: int) -> np.ndarray:
    """
    L² projection onto the span of polynomial basis functions.

    :param basis: Bernstein coefficients of shape (nα, ncomp, nbasis).
    :type basis: np.ndarray
    :param degree: Degree of the basis.
    :type degree: int
    :param geometry: The simplex.
    :type geometry: GeometryPack
    :param values_fn: Callable mapping physical points (npts, d) to values (npts, ncomp).
    :type values_fn: Callable
    :param quad_degree: Exactness degree for the right-hand side.
    :type quad_degree: int
    :return: Coefficients of the projection in the basis, shape (nbasis,).
    :rtype: np.ndarray
    """
    n = geometry.dim
    gram = np.einsum('ab,asi,bsj->ij', mass_matrix(n, degree, geometry.volume), basis, basis)
    rule = quad_rule(n, quad_degree)
    points = rule.points @ geometry.vertices
    rhs = rule.integrate(np.einsum('ps,psi->pi', values_fn(points), evaluate(basis, degree, rule.points)),
                         geometry.volume)
    return linalg.solve(gram, rhs, assume_a='pos')
