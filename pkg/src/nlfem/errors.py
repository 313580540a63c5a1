"""Exception hierarchy shared by all nlfem modules."""


class NlfemError(Exception):
    """Base class for errors raised by nlfem."""


class InvalidArgumentError(NlfemError, ValueError):
    """An argument is outside the documented domain of an operation."""


class MeshValidationError(NlfemError):
    """A mesh violates conformity, labeling or layer constraints."""


class ConstructionError(MeshValidationError):
    """Grid construction produced an inverted or degenerate element."""


class SolverError(NlfemError):
    """The linear solver failed."""


class NonConvergenceError(SolverError):
    pass


class IndefiniteMatrixError(SolverError):
    """CG met a direction of non-positive curvature."""
