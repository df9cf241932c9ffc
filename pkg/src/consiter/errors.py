"""Exception types shared across the package.

Solver non-convergence is deliberately *not* an exception: hitting an
iteration cap is a reported outcome (see the ``converged`` flags on solver
results), because partially converged iterates are first-class objects here —
their conservation properties are exactly what the audit tooling inspects.
"""


class ConsIterError(Exception):
    """Base class for all package-specific errors."""


class UnknownMethodName(ConsIterError, KeyError):
    """Lookup of a tableau / flux / solver name that is not in the catalog."""


class NotExplicit(ConsIterError):
    """An operation defined only for explicit tableaux got an implicit one."""


class SingularStageMatrix(ConsIterError):
    """I - zA (or I + muA) is singular or numerically unusable at this z."""


class NonphysicalState(ConsIterError):
    """Euler state with non-positive density or pressure."""


class ZeroDirection(ConsIterError):
    """Directional derivative requested along the zero vector."""


class SingularJacobian(ConsIterError):
    """Direct linear solve failed or left a large residual."""


class LinearSolveFailed(ConsIterError):
    """Inner linear solver broke down in a way that is not plain stagnation."""


class NoVVector(ConsIterError):
    """Step extraction requested for a tableau without a v-vector."""


class MissingTrace(ConsIterError):
    """An audit needs per-stage flux records that were not recorded."""


class NoReferenceSolution(ConsIterError):
    """An audit or study needs an exact solution the problem does not provide."""


class RankDeficient(ConsIterError):
    """Monomial Krylov basis numerically degenerate in coefficient recovery."""


class ZeroParameter(ConsIterError):
    """A parameter that must be nonzero (e.g. the system scaling a) is zero."""


class ConfigError(ConsIterError):
    """Malformed run configuration (bad key, missing section, wrong type)."""
