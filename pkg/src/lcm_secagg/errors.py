"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Vector or matrix shapes do not line up."""


class DegenerateNodes(ValueError):
    """Interpolation nodes are not pairwise distinct."""


class BadGroupIndex(IndexError):
    pass


class BadGroupSize(ValueError):
    pass


class BadPairOrder(ValueError):
    pass


class InfeasibleParams(ValueError):
    """A protocol parameter set violates a feasibility constraint.

    ``constraint`` names the violated rule (e.g. ``"server-collusion"``).
    """

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class InfeasibleResiliency(InfeasibleParams):
    """Straggler count too large: requires s < H/2."""

    def __init__(self, message, constraint="resiliency"):
        super().__init__(message, constraint)


class ChunkingError(ValueError):
    pass


class PlanInfeasible(RuntimeError):
    """No valid downlink plan exists (the failure table is outside the pattern space)."""


class PlanViolation(RuntimeError):
    """A server was asked to use a share it never received, or to use a dead link."""


class DecodeUnderdetermined(RuntimeError):
    pass


class InconsistentShares(RuntimeError):
    pass


class ThresholdExceeded(ValueError):
    pass


class TooLargeToEnumerate(RuntimeError):
    pass
