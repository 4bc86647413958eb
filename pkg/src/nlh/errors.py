"""Exception types raised by the library."""


class NLHError(Exception):
    """Base class for all library errors."""


class TruncationNotConverged(NLHError):
    pass


class OutsideAnalyticStrip(NLHError):
    pass


class ShiftOutOfMargin(NLHError):
    pass


class ZeroNotEquilibrium(NLHError):
    pass


class RootClusterUnresolved(NLHError):
    pass


class HypC4Violated(NLHError):
    pass


class DegenerateKappa2(NLHError):
    pass


class DegenerateCoefficient(NLHError):
    pass


class NewtonDiverged(NLHError):
    pass


class JacobianSingular(NLHError):
    pass


class FarFieldNotEquilibrium(NLHError):
    pass


class ContinuationStalled(NLHError):
    pass


class WindowNotPlateau(NLHError):
    pass


class ConfigError(NLHError):
    """Bad or inconsistent user configuration (CLI exit code 2)."""


class ResidualTooLarge(NLHError):
    """Strict mode: the profile does not solve the equation to tolerance."""
