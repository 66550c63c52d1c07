"""
Linear elasticity data: Lamé parameters, the compliance tensor and manufactured solutions.

Stresses are stored in symmetric storage (upper triangle, row-major), so the
compliance acts on vectors of length d(d+1)/2.
"""
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy

from src.exceptions import DomainError
from src.fem.poly import num_sym, sym_pairs, sym_weights, trace_weights

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]


def compliance_matrix(d: int, mu: float, lam: float) -> np.ndarray:
    """
    Matrix C with (Aσ, τ) = σᵀ C τ pointwise, for σ, τ in symmetric storage.

    :param d: Dimension.
    :type d: int
    :param mu: Shear modulus, > 0.
    :type mu: float
    :param lam: Lamé parameter, >= 0.
    :type lam: float
    :return: Symmetric positive definite matrix of shape (nsym, nsym).
    :rtype: np.ndarray
    """
    if mu <= 0 or lam < 0:
        raise DomainError(f"need mu > 0 and lambda >= 0, got mu={mu}, lambda={lam}")
    t = trace_weights(d)
    return np.diag(sym_weights(d)) / (2 * mu) - lam / (2 * mu * (2 * mu + d * lam)) * np.outer(t, t)


def apply_compliance(sigma: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """Aσ = σ/(2μ) - λ/(2μ(2μ+dλ)) tr(σ) I, along the last axis."""
    sigma = np.asarray(sigma, dtype=float)
    d = _dim_of(sigma.shape[-1])
    t = trace_weights(d)
    trace = sigma @ t
    return sigma / (2 * mu) - lam / (2 * mu * (2 * mu + d * lam)) * trace[..., None] * t


def apply_compliance_deviatoric(sigma: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """The same operator written as dev(σ)/(2μ) + tr(σ) I / (d(2μ+dλ))."""
    sigma = np.asarray(sigma, dtype=float)
    d = _dim_of(sigma.shape[-1])
    t = trace_weights(d)
    trace = sigma @ t
    deviator = sigma - trace[..., None] * t / d
    return deviator / (2 * mu) + trace[..., None] * t / (d * (2 * mu + d * lam))


def apply_elasticity(strain: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """Hooke's law σ = 2με + λ tr(ε) I, the inverse of the compliance."""
    strain = np.asarray(strain, dtype=float)
    t = trace_weights(_dim_of(strain.shape[-1]))
    return 2 * mu * strain + lam * (strain @ t)[..., None] * t


def _dim_of(nsym: int) -> int:
    for d in (1, 2, 3, 4):
        if num_sym(d) == nsym:
            return d
    raise DomainError(f"{nsym} is not a symmetric storage size")


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form displacement with its strain, stress, stress divergence and load."""
    d: int
    u: Field
    strain: Field
    sigma: Field
    div_sigma: Field
    f: Field
    degree: int | None = None


@dataclass(frozen=True)
class ElasticityProblem:
    """
    -div σ = f, Aσ = ε(u) in Ω, u = g on ∂Ω.

    g is None for homogeneous displacement data.
    """
    d: int
    mu: float
    lam: float
    f: Field
    g: Field | None = None
    exact: ManufacturedSolution | None = None

    def __post_init__(self):
        if self.mu <= 0:
            raise DomainError(f"shear modulus must be positive, got {self.mu}")
        if self.lam < 0:
            raise DomainError(f"lambda must be nonnegative, got {self.lam}")

    @property
    def compliance(self) -> np.ndarray:
        return compliance_matrix(self.d, self.mu, self.lam)


def _lambdify(symbols, expressions) -> Field:
    """Vector-valued numpy callable on points of shape (npts, d)."""
    functions = [sympy.lambdify(symbols, expr, 'numpy') for expr in expressions]

    def evaluate(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        columns = [np.broadcast_to(np.asarray(fn(*x.T), dtype=float), (len(x),)) for fn in functions]
        return np.stack(columns, axis=-1)

    return evaluate


def manufactured_solution(d: int, mu: float, lam: float, u=None) -> ManufacturedSolution:
    """
    Derives strain, stress and load from a displacement by symbolic differentiation.

    :param d: Dimension.
    :type d: int
    :param mu: Shear modulus.
    :type mu: float
    :param lam: Lamé parameter.
    :type lam: float
    :param u: Callable mapping the coordinate symbols to d sympy expressions;
        sin(πx_1)⋯sin(πx_d) in every component by default.
    :type u: Callable
    :return: The manufactured solution.
    :rtype: ManufacturedSolution
    """
    x = sympy.symbols(f'x0:{d}', real=True)
    if u is None:
        bump = sympy.Integer(1)
        for xi in x:
            bump *= sympy.sin(sympy.pi * xi)
        displacement = [bump] * d
    else:
        displacement = [sympy.sympify(expr) for expr in u(x)]
    if len(displacement) != d:
        raise DomainError(f"displacement needs {d} components, got {len(displacement)}")
    grad = sympy.Matrix(d, d, lambda a, b: sympy.diff(displacement[a], x[b]))
    eps = (grad + grad.T) / 2
    stress = 2 * mu * eps + lam * eps.trace() * sympy.eye(d)
    div = [sum(sympy.diff(stress[a, b], x[b]) for b in range(d)) for a in range(d)]
    pairs = sym_pairs(d)
    degree = None
    if all(expr.is_polynomial(*x) for expr in displacement):
        degree = max(sympy.Poly(expr, *x).total_degree() if expr != 0 else 0 for expr in displacement)
    logger.debug("manufactured solution d=%d, polynomial degree %s", d, degree)
    return ManufacturedSolution(
        d=d,
        u=_lambdify(x, displacement),
        strain=_lambdify(x, [eps[p, q] for p, q in pairs]),
        sigma=_lambdify(x, [stress[p, q] for p, q in pairs]),
        div_sigma=_lambdify(x, div),
        f=_lambdify(x, [-expr for expr in div]),
        degree=degree,
    )


def manufactured_problem(d: int, mu: float = 1.0, lam: float = 1.0, u=None) -> ElasticityProblem:
    """
    Problem whose exact solution is the manufactured one; polynomial displacements carry boundary data.
    """
    exact = manufactured_solution(d, mu, lam, u)
    return ElasticityProblem(d=d, mu=mu, lam=lam, f=exact.f, g=None if u is None else exact.u, exact=exact)


def solenoidal_displacement(x) -> list:
    """
    (∂_y ψ, -∂_x ψ, 0, ...) with ψ = Π sin²(πx_i); divergence free and zero on the unit box boundary.

    Its stress 2με(u) does not depend on λ.
    """
    stream = sympy.Integer(1)
    for xi in x:
        stream *= sympy.sin(sympy.pi * xi) ** 2
    return [sympy.diff(stream, x[1]), -sympy.diff(stream, x[0])] + [sympy.Integer(0)] * (len(x) - 2)


def zero_load(d: int) -> Field:
    def load(x: np.ndarray) -> np.ndarray:
        return np.zeros((len(np.atleast_2d(x)), d))

    return load
