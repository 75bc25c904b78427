"""Exception types raised across the package."""


class ChernLabError(Exception):
    """Base class for all package errors."""


class SingularMetric(ChernLabError):
    pass


class OutOfChart(ChernLabError):
    pass


class NotInOverlap(ChernLabError):
    pass


class ResolutionTooSmall(ChernLabError):
    pass


class EmptyRegion(ChernLabError):
    pass


class RadiusTooLarge(ChernLabError):
    pass


class OpenCurve(ChernLabError):
    pass


class ChartTear(ChernLabError):
    pass


class ZeroConformalFactor(ChernLabError):
    pass


class NotHarmonic(ChernLabError):
    pass


class Diverged(ChernLabError):
    pass


class StepTooLarge(ChernLabError):
    pass


class EmptySuite(ChernLabError):
    pass


class InsufficientRadii(ChernLabError):
    pass


class BoundaryIntersected(ChernLabError):
    pass


class NoFamily(ChernLabError):
    pass


class ZeroEnergyRegion(ChernLabError):
    pass


class EnergyBelowC0(ChernLabError):
    pass


class ResampleOutOfDomain(ChernLabError):
    pass


class AnnulusTooThin(ChernLabError):
    pass


class ConfigError(ChernLabError):
    pass


class AmbiguousPoints(ChernLabError, UserWarning):
    """Issued (not raised) when detected concentration points are merged."""


class DepthCapHit(ChernLabError, UserWarning):
    """Issued (not raised) when tree construction stops at its depth cap."""
