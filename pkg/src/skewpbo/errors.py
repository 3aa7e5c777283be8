"""Exception taxonomy shared across the package."""


class SkewPboError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(SkewPboError):
    pass


class NotPositiveDefinite(SkewPboError):
    pass


class InfeasibleStart(SkewPboError):
    pass


class IndexOutOfRange(SkewPboError):
    pass


class SelfDuel(SkewPboError):
    pass


class PreferenceOnInvalidPoint(SkewPboError):
    pass


class TooManyConstraints(SkewPboError):
    pass


class BoundNonPositive(SkewPboError):
    pass


class ZeroVariance(SkewPboError):
    pass


class TooFewSamples(SkewPboError):
    pass


class NoConvergence(SkewPboError):
    pass


class UnknownBenchmark(SkewPboError):
    pass


class OutOfBounds(SkewPboError):
    pass


class InvalidConfig(SkewPboError):
    pass


class SessionNotFound(SkewPboError):
    pass


class PendingProposalExists(SkewPboError):
    pass


class NoPendingProposal(SkewPboError):
    pass


class NonValidNotEnabled(SkewPboError):
    pass
