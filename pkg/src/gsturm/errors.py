"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract, so new failure modes
should subclass one of the categories below instead of raising bare
ValueErrors from deep inside the solvers.
"""


class GsturmError(Exception):
    """Base class for all solver errors."""


class ProblemSpecError(GsturmError):
    """Invalid problem definition or broken input invariant."""


class SolverError(GsturmError):
    """Numerical failure in the forward pipeline."""


class ResolutionError(SolverError):
    """Requested spectral parameter too large for the configured mesh."""


class PoleProximityError(SolverError):
    """Weyl matrix requested too close to an eigenvalue."""


class ContourError(SolverError):
    """Residue quadrature failed its self-consistency (doubling) test."""


class CountMismatchError(SolverError):
    """Eigenvalue search found the wrong number of roots in a window."""


class InconsistencyError(SolverError):
    """Mutually inconsistent spectral quantities (e.g. projector vs. roots)."""


class SDViolationError(GsturmError):
    """Input data fail the admissible-spectral-data class conditions."""


class IllConditionedError(GsturmError):
    """Truncated linear system too ill-conditioned to trust."""


class DiagonalityError(GsturmError):
    """Graph-mode reconstruction produced a non-diagonal potential."""


class GroupingError(GsturmError):
    """No admissible eigenvalue grouping exists for the given data."""
