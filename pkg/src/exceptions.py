class AlfeldError(Exception):
    """Base class of every error raised by the package."""


class DomainError(AlfeldError, ValueError):
    """An argument lies outside the domain of an operation."""


class GeometryError(AlfeldError):
    """Degenerate or otherwise unusable geometry."""


class ConformityError(AlfeldError):
    """A mesh or a field violates conformity."""


class CertificationError(AlfeldError):
    """A rank, dimension or identity check failed."""


class ConstructionError(CertificationError):
    """A constructed space violates its defining constraints."""


class UnisolvenceError(CertificationError):
    """The DoF matrix of an element is singular or too ill-conditioned."""


class RangeError(CertificationError):
    """A least-squares solve inside an Ext operator left a residual."""


class SolverError(AlfeldError):
    """A global or local linear system could not be solved."""


class UsageError(AlfeldError):
    """Invalid configuration or command line."""
