"""Exception hierarchy.

Every error raised on a precondition violation derives from ``BDPError`` and
``ValueError`` so callers can catch either.  Mathematically infeasible
calibrations are *not* errors; those come back as ``None`` from the scalar
calculators.
"""


class BDPError(ValueError):
    """Base class for all library errors."""


class InvalidModel(BDPError):
    pass


class InvalidParams(BDPError):
    pass


class InvalidConstant(InvalidParams):
    pass


class InvalidConfig(BDPError):
    pass


class CapExceeded(BDPError):
    """An exact enumeration would exceed the configured size cap."""


class CyclicGraph(BDPError):
    pass


class IndexOutOfRange(BDPError, IndexError):
    pass


class NotASeparator(BDPError):
    pass


class ZeroConditioningEvent(BDPError):
    pass


class EmptyCandidateSet(BDPError):
    pass


class NotErgodic(BDPError):
    pass


class NotReversible(BDPError):
    pass


class ChainTooShort(BDPError):
    pass


class EmptyRange(BDPError):
    pass


class EmptyDataset(BDPError):
    pass


class NoFeasibleSubset(BDPError):
    pass


class InfeasibleCalibration(BDPError):
    """No positive DP level achieves the requested BDP level."""
