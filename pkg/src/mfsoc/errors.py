"""Exception types shared across the package.

The CLI maps these onto process exit codes, so solver code should raise the
most specific class that applies instead of bare ValueError/RuntimeError.
"""


class MfsocError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(MfsocError):
    """Problem-definition file is missing, malformed, or inconsistent."""


class NotSchurError(MfsocError):
    """A matrix required to have spectral radius < 1 does not."""


class NotStabilizingError(MfsocError):
    """A feedback gain fails to stabilize the closed loop it is applied to."""


class SingularInnerMatrixError(MfsocError):
    """R + B'VB is numerically singular, so the gain update is undefined."""


class MaxIterationsError(MfsocError):
    """Iteration budget exhausted before the convergence test was met.

    The partially filled report is attached as ``.report`` when available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class RankDeficientError(MfsocError):
    """A least-squares matrix lacks full column rank.

    ``rank`` carries the numerical rank, ``needed`` the column count.
    """

    def __init__(self, message, rank, needed):
        super().__init__(message)
        self.rank = rank
        self.needed = needed


class RankConditionError(MfsocError):
    """A data campaign fails the excitation rank conditions.

    ``report`` carries the offending rank diagnostic.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SimulationDivergedError(MfsocError):
    """A rollout produced non-finite states (behavior law not stabilizing)."""


class VerificationError(MfsocError):
    """Residual metrics exceeded the requested tolerance."""
