"""Exception hierarchy.

Each error carries the process exit code the command-line front end maps
it to.
"""


class OdtError(Exception):
    exit_code = 3


class ConfigError(OdtError):
    exit_code = 1


class NoMinimum(OdtError):
    """The potential has no bound minimum (no light, or gravity wins)."""

    exit_code = 2


class DegenerateHessian(OdtError):
    """Non-positive curvature at the reported minimum."""

    exit_code = 2


class BetaTooLarge(OdtError):
    """Truncation level at or above the escape level of the trap."""

    exit_code = 3


class ToleranceNotMet(OdtError):
    exit_code = 3


class StiffnessFailure(OdtError):
    exit_code = 3


class StateCollapse(OdtError):
    """Atom number fell below one or temperature became non-positive.

    ``trajectory`` holds every point computed before the collapse.
    """

    exit_code = 4

    def __init__(self, message, trajectory=()):
        super().__init__(message)
        self.trajectory = list(trajectory)
