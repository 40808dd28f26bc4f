"""Exception types shared across the package."""


class FlexloadError(Exception):
    """Base class for all package errors."""


class InvalidParam(FlexloadError):
    """A constructor argument is outside its admissible range."""


class NotInvertible(FlexloadError):
    """Gradient has a flat region; its inverse image is not unique."""


class ArityMismatch(FlexloadError):
    """Received message count does not match the neighbor set."""


class UnstablePlant(FlexloadError):
    """Discretized grid model has spectral radius >= 1."""


class DegenerateInputPath(FlexloadError):
    """C @ B == 0: the mismatch input is invisible to the output."""


class SimulationDiverged(FlexloadError):
    """Plant state became non-finite."""


class EstimatorDiverged(FlexloadError):
    """Observer state or covariance became non-finite."""


class Infeasible(FlexloadError):
    """Requested total deviation is outside the aggregate box."""


class TooLarge(FlexloadError):
    """Brute-force search requested for an instance it cannot handle."""


class DomainViolation(FlexloadError):
    """Point lies outside the box domain."""


class OracleRequired(FlexloadError):
    """Diagnostics need the critical gradient sets; solve the instance first."""


class ConfigError(FlexloadError):
    """Malformed or inconsistent scenario configuration."""


class DualNeedsStrictConvexity(ConfigError):
    """Dual baseline selected with a non-strictly-convex disutility family."""
