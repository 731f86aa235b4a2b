"""Exception hierarchy shared by all eitcone modules."""


class EITError(Exception):
    """Base class for errors raised by eitcone."""


class InvalidArgumentError(EITError, ValueError):
    """An argument is outside its admissible range."""


class EllipticityError(EITError, ValueError):
    """A conductivity is non-positive, non-finite or outside its bounds."""


class SolverError(EITError, RuntimeError):
    """A linear solve failed or did not reach the residual target."""


class BasisRankError(EITError, ValueError):
    """The boundary Gram matrix (or another middle matrix) is singular."""


class ConsistencyError(EITError, RuntimeError):
    """Two independent computations of the same quantity disagree."""


class PreconditionError(EITError, ValueError):
    """A contraction or smallness precondition of an estimate is violated."""


class DegeneratePairError(EITError, ValueError):
    """F(gamma) and F(gamma_dagger) coincide, so the cone ratios are undefined."""


class EstimationError(EITError, RuntimeError):
    """An iterative estimate did not converge."""


class ConfigError(EITError, ValueError):
    """A run configuration could not be parsed or resolved."""
